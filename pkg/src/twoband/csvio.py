"""Deterministic CSV formatting shared by every serializer.

'.' decimal separator, ',' field separator, LF endings, 17 significant
digits: reruns of the same computation produce byte-identical files.
"""

from __future__ import annotations

import os
import tempfile

__all__ = ["fmt", "write_rows", "atomic_write"]


def fmt(v):
    """Render one value: 17 significant digits for floats."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_rows(stream, header, rows, comment=None):
    if comment:
        stream.write(f"# {comment}\n")
    stream.write(",".join(header) + "\n")
    for row in rows:
        stream.write(",".join(fmt(v) for v in row) + "\n")


def atomic_write(path, writer):
    """Write via a sibling temp file and rename into place."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as f:
            writer(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
