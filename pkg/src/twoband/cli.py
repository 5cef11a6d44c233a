"""Command-line front end.

Subcommands: ``trace``, ``phases``, ``bs-spectrum``, ``oracle-spectrum``,
``compare``, ``presets``.  A run is configured by a JSON document
(``--config``), with common fields overridable by flags; every command
is deterministic given its configuration and writes CSV atomically, so
reruns produce byte-identical output.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (the
failing error class is printed to standard error).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import bs as bsmod
from . import curve as cv
from . import oracle as orc
from . import phases as ph
from .csvio import atomic_write, fmt, write_rows
from .errors import ConfigError, MatchFailure, ToolkitError
from .presets import make_preset, preset_info, preset_names
from .symbol import Branch, Line, PauliSymbol, TorusX, TorusXXi

__all__ = ["main", "load_config", "run_command"]


# --- configuration -----------------------------------------------------------

_SCHEMA = {
    "symbol": {
        "preset": str, "params": dict, "p": list, "r": list,
        "domain": dict, "name": str,
    },
    "branch": str,
    "window": list,
    "h": (float, int, list),
    "order": int,
    "energies": list,
    "n_energies": int,
    "trace": {
        "ds": (float, int), "tol_level": (float, int, type(None)),
        "tol_close": (float, int, type(None)),
        "max_steps": (int, type(None)), "min_samples": int,
        "seed_hint": list,
    },
    "grid": {
        "n_init": int, "tol_interp": (float, int), "max_refine": int,
    },
    "plan": {
        "basis": str, "half_width": (float, int), "modes": int,
        "kx": (float, int),
    },
    "compare": {
        "mode": str, "count": int, "include_zero": bool,
    },
    "out": {"dir": str, "prefix": str},
}

_DOMAIN_KEYS = {"type": str, "period_x": (float, int), "period_xi": (float, int)}


def _check_keys(obj, schema, path):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path or 'config'} must be an object")
    for key, val in obj.items():
        if key not in schema:
            raise ConfigError(f"unknown key {path}{key!r}")
        spec = schema[key]
        if isinstance(spec, dict):
            _check_keys(val, spec, f"{path}{key}.")
        elif not isinstance(val, spec if isinstance(spec, tuple) else (spec,)):
            raise ConfigError(f"bad type for {path}{key!r}: {type(val).__name__}")


def load_config(path):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"malformed JSON in {path}: {err}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    _check_keys(cfg, _SCHEMA, "")
    sym = cfg.get("symbol", {})
    if "domain" in sym:
        _check_keys(sym["domain"], _DOMAIN_KEYS, "symbol.domain.")
    if "preset" in sym and sym["preset"] not in preset_names():
        raise ConfigError(
            f"unknown preset {sym['preset']!r}; known: {preset_names()}")
    if "preset" not in sym and "p" not in sym:
        raise ConfigError("symbol needs either 'preset' or inline 'p'")
    if "branch" in cfg and cfg["branch"] not in ("plus", "minus"):
        raise ConfigError(f"branch must be 'plus' or 'minus': {cfg['branch']!r}")
    if "window" in cfg:
        w = cfg["window"]
        if len(w) != 2 or not all(isinstance(v, (int, float)) for v in w):
            raise ConfigError("window must be [lo, hi]")
    if "order" in cfg and cfg["order"] not in (0, 1):
        raise ConfigError("order must be 0 or 1")
    mode = cfg.get("compare", {}).get("mode", "positive")
    if mode not in ("positive", "abs"):
        raise ConfigError(f"compare.mode must be 'positive' or 'abs': {mode!r}")
    return cfg


def _build_domain(spec):
    kind = spec.get("type", "line")
    if kind == "line":
        return Line()
    if kind == "torus_x":
        return TorusX(float(spec.get("period_x", 1.0)))
    if kind == "torus_xxi":
        return TorusXXi(float(spec.get("period_x", 1.0)),
                        float(spec.get("period_xi", 1.0)))
    raise ConfigError(f"unknown domain type {kind!r}")


def build_symbol(cfg):
    """Symbol plus its seeding hint and default branch from the config."""
    spec = cfg.get("symbol", {})
    hint = None
    branch = Branch.PLUS
    if "preset" in spec:
        info = preset_info(spec["preset"])
        try:
            sym = make_preset(spec["preset"], **spec.get("params", {}))
        except TypeError as err:
            raise ConfigError(f"bad preset params: {err}") from None
        hint = info.seed_hint
        branch = info.branch
    else:
        try:
            sym = PauliSymbol(
                p=tuple(spec["p"]),
                r=tuple(spec.get("r", ("0", "0", "0", "0"))),
                domain=_build_domain(spec.get("domain", {})),
                name=spec.get("name", "custom"))
        except (ValueError, ToolkitError) as err:
            raise ConfigError(f"bad inline symbol: {err}") from None
    if "branch" in cfg:
        branch = Branch.PLUS if cfg["branch"] == "plus" else Branch.MINUS
    if "seed_hint" in cfg.get("trace", {}):
        hint = tuple(cfg["trace"]["seed_hint"])
    return sym, branch, hint


def _trace_opts(cfg):
    t = cfg.get("trace", {})
    return cv.TraceOpts(
        ds=float(t.get("ds", 0.01)),
        tol_level=t.get("tol_level"),
        tol_close=t.get("tol_close"),
        max_steps=t.get("max_steps"),
        min_samples=int(t.get("min_samples", 128)),
    )


def _grid_opts(cfg):
    g = cfg.get("grid", {})
    return bsmod.GridOpts(
        n_init=int(g.get("n_init", 13)),
        tol_interp=float(g.get("tol_interp", 1e-8)),
        max_refine=int(g.get("max_refine", 10)),
    )


def _plan(cfg, sym, h):
    p = cfg.get("plan", {})
    on_torus = isinstance(sym.domain, (TorusX, TorusXXi))
    basis_kind = p.get("basis", "torus" if on_torus else "line")
    modes = int(p.get("modes", 256))
    if basis_kind == "line":
        basis = orc.FourierLine(float(p.get("half_width", 8.0)), modes)
    elif basis_kind == "torus":
        basis = orc.FourierTorus(modes)
    else:
        raise ConfigError(f"plan.basis must be 'line' or 'torus': {basis_kind!r}")
    try:
        return orc.QuantPlan(basis=basis, h=float(h), kx=float(p.get("kx", 0.0)))
    except ValueError as err:
        raise ConfigError(str(err)) from None


def _h_list(cfg):
    h = cfg.get("h", 0.1)
    hs = h if isinstance(h, list) else [h]
    if not hs or not all(isinstance(v, (int, float)) and v > 0 for v in hs):
        raise ConfigError(f"h must be a positive number or list: {h!r}")
    return [float(v) for v in hs]


def _energies(cfg):
    if "energies" in cfg:
        return [float(e) for e in cfg["energies"]]
    if "window" not in cfg:
        raise ConfigError("need 'energies' or 'window'")
    lo, hi = cfg["window"]
    n = int(cfg.get("n_energies", 9))
    return list(np.linspace(float(lo), float(hi), n))


def _window(cfg):
    if "window" not in cfg:
        raise ConfigError("this command needs 'window'")
    lo, hi = cfg["window"]
    return float(lo), float(hi)


def _out_path(cfg, out_dir, name):
    d = out_dir or cfg.get("out", {}).get("dir", ".")
    prefix = cfg.get("out", {}).get("prefix", "run")
    return os.path.join(d, f"{prefix}_{name}")


def _htag(h):
    return f"h{h:g}"


# --- commands ------------------------------------------------------------------

def cmd_trace(cfg, out_dir=None):
    """Trace one curve per requested energy; one CSV per curve."""
    sym, branch, hint = build_symbol(cfg)
    opts = _trace_opts(cfg)
    paths = []
    for i, E in enumerate(_energies(cfg)):
        curve = cv.trace(sym, branch, E, opts, hint=hint)
        path = _out_path(cfg, out_dir, f"trace_{i:03d}.csv")
        atomic_write(path, curve.write_csv)
        paths.append(path)
    return paths


def cmd_phases(cfg, out_dir=None):
    """Phase report rows over the energy grid (CSV plus JSON)."""
    sym, branch, hint = build_symbol(cfg)
    opts = _trace_opts(cfg)
    reports = []
    for E in _energies(cfg):
        curve = cv.trace(sym, branch, E, opts, hint=hint)
        reports.append(ph.assemble(sym, branch, curve))
    csv_path = _out_path(cfg, out_dir, "phases.csv")
    atomic_write(csv_path, lambda f: write_rows(
        f, ph.PhaseReport.CSV_HEADER, [r.csv_row() for r in reports]))
    json_path = _out_path(cfg, out_dir, "phases.json")
    atomic_write(json_path, lambda f: f.write(
        "[" + ",\n ".join(r.to_json() for r in reports) + "]\n"))
    return [csv_path, json_path]


def _build_action(cfg, sym, branch, hint, order):
    return bsmod.build_action(
        sym, branch, _window(cfg), _h_list(cfg)[0], order,
        _grid_opts(cfg), trace_opts=_trace_opts(cfg), hint=hint)


def cmd_bs_spectrum(cfg, out_dir=None):
    """Quantization-rule eigenvalue tables, one CSV per h."""
    sym, branch, hint = build_symbol(cfg)
    order = int(cfg.get("order", 1))
    action = _build_action(cfg, sym, branch, hint, order)
    paths = []
    for h in _h_list(cfg):
        table = bsmod.predict_spectrum(action, h)
        path = _out_path(cfg, out_dir, f"bs_{_htag(h)}.csv")
        atomic_write(path, table.write_csv)
        paths.append(path)
    return paths


def cmd_oracle_spectrum(cfg, out_dir=None):
    """Eigenvalues of the dense discretization, one CSV per h."""
    sym, _, _ = build_symbol(cfg)
    window = None
    if "window" in cfg:
        lo, hi = _window(cfg)
        window = (lo, hi)
    paths = []
    for h in _h_list(cfg):
        vals = orc.eigenvalues(orc.quantize(sym, _plan(cfg, sym, h)), window)
        path = _out_path(cfg, out_dir, f"oracle_{_htag(h)}.csv")
        atomic_write(path, lambda f, v=vals: write_rows(
            f, ("index", "value"), list(enumerate(v))))
        paths.append(path)
    return paths


def _pair_predictions(oracle_vals, preds0, preds1, ks1):
    """Nearest-neighbor pairing of oracle values with rule roots.

    A row matches when the nearest order-1 root lies within half the
    local oracle level spacing; rows that fail stay flagged (empty
    fields).  Two rows claiming one root is ambiguous.
    """
    rows = []
    claimed = {}
    o = np.asarray(oracle_vals)
    for i, v in enumerate(o):
        gaps = []
        if i > 0:
            gaps.append(o[i] - o[i - 1])
        if i + 1 < len(o):
            gaps.append(o[i + 1] - o[i])
        spacing = min(gaps) if gaps else math.inf
        if len(preds1) == 0:
            rows.append((None, None, None, float(v), None, None))
            continue
        j1 = int(np.argmin(np.abs(preds1 - v)))
        d1 = abs(float(preds1[j1] - v))
        if d1 >= 0.5 * spacing:
            rows.append((None, None, None, float(v), None, None))
            continue
        if j1 in claimed:
            raise MatchFailure(
                f"oracle values {claimed[j1]:.9g} and {v:.9g} both pair "
                f"with rule root {preds1[j1]:.9g}")
        claimed[j1] = float(v)
        j0 = int(np.argmin(np.abs(preds0 - v))) if len(preds0) else None
        d0 = abs(float(preds0[j0] - v)) if j0 is not None else None
        e0 = float(preds0[j0]) if j0 is not None else None
        rows.append((ks1[j1], e0, float(preds1[j1]), float(v), d0, d1))
    return rows


def _compare_one(cfg, sym, branch, hint, action, h):
    comp = cfg.get("compare", {})
    mode = comp.get("mode", "positive")
    count = comp.get("count")
    include_zero = bool(comp.get("include_zero", False))

    tab0 = bsmod.predict_spectrum(action, h, order=0)
    tab1 = bsmod.predict_spectrum(action, h, order=1)
    p0 = tab0.energies
    p1 = tab1.energies
    k1 = [r[0] for r in tab1.rows]

    lo, hi = _window(cfg)
    top = 1.05 * max(abs(lo), abs(hi))
    vals = orc.eigenvalues(orc.quantize(sym, _plan(cfg, sym, h)), (-top, top))

    if mode == "abs":
        # mirror rule roots; compare signed values against signed roots
        p0 = np.concatenate([-p0[::-1], ([0.0] if include_zero else []), p0])
        k1 = [-k for k in k1[::-1]] + ([0] if include_zero else []) + k1
        p1 = np.concatenate([-p1[::-1], ([0.0] if include_zero else []), p1])
        order_idx = np.argsort(np.abs(vals), kind="stable")
        vals = vals[order_idx[:count]] if count else vals
        vals = np.sort(vals)
    else:
        vals = vals[vals > 0]
        vals = np.sort(vals)[:count] if count else np.sort(vals)

    if count and len(vals) < count:
        raise MatchFailure(
            f"only {len(vals)} oracle eigenvalues available, need {count}; "
            f"widen the window")
    return _pair_predictions(vals, p0, p1, k1)


def cmd_compare(cfg, out_dir=None):
    """Merged rule-vs-oracle tables, one CSV per h."""
    sym, branch, hint = build_symbol(cfg)
    action = _build_action(cfg, sym, branch, hint, order=1)
    paths = []
    for h in _h_list(cfg):
        rows = _compare_one(cfg, sym, branch, hint, action, h)
        path = _out_path(cfg, out_dir, f"compare_{_htag(h)}.csv")
        header = ("k", "E_bs_order0", "E_bs_order1", "E_oracle",
                  "abs_d0", "abs_d1")
        atomic_write(path, lambda f, r=rows: write_rows(f, header, r))
        paths.append(path)
    return paths


def cmd_presets():
    lines = []
    for name in preset_names():
        info = preset_info(name)
        lines.append(f"{name}: {info.doc}")
        for pname, pdoc in sorted(info.params.items()):
            lines.append(f"  {pname}: {pdoc}")
        lines.append(f"  default branch: {info.branch}; "
                     f"seed hint: {info.seed_hint}")
    return "\n".join(lines)


# --- argument parsing ------------------------------------------------------------

def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="twoband",
        description="Quantization-rule spectra for 2x2 symbols, with a "
                    "dense-matrix cross-check.")
    sub = parser.add_subparsers(dest="command", required=True)
    names = ["trace", "phases", "bs-spectrum", "oracle-spectrum", "compare"]
    for name in names:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--preset", help="preset symbol name")
        p.add_argument("--h", help="comma-separated h values")
        p.add_argument("--order", type=int, choices=(0, 1))
        p.add_argument("--branch", choices=("plus", "minus"))
        p.add_argument("--window", help="energy window a:b")
    sub.add_parser("presets")
    return parser.parse_args(argv)


def _merge_flags(cfg, args):
    if args.preset:
        cfg["symbol"] = {"preset": args.preset}
    if args.h:
        try:
            cfg["h"] = [float(v) for v in args.h.split(",")]
        except ValueError:
            raise ConfigError(f"bad --h list: {args.h!r}") from None
    if args.order is not None:
        cfg["order"] = args.order
    if args.branch:
        cfg["branch"] = args.branch
    if args.window:
        try:
            lo, hi = args.window.split(":")
            cfg["window"] = [float(lo), float(hi)]
        except ValueError:
            raise ConfigError(f"bad --window (want a:b): {args.window!r}") from None
    return cfg


def run_command(command, cfg, out_dir=None):
    fn = {
        "trace": cmd_trace,
        "phases": cmd_phases,
        "bs-spectrum": cmd_bs_spectrum,
        "oracle-spectrum": cmd_oracle_spectrum,
        "compare": cmd_compare,
    }[command]
    return fn(cfg, out_dir)


def main(argv=None):
    args = _parse_args(argv if argv is not None else sys.argv[1:])
    if args.command == "presets":
        print(cmd_presets())
        return 0
    try:
        cfg = load_config(args.config) if args.config else {}
        _merge_flags(cfg, args)
        validate_config(cfg)
        paths = run_command(args.command, cfg, args.out)
    except ConfigError as err:
        print(f"ConfigError: {err}", file=sys.stderr)
        return 2
    except ToolkitError as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return 3
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
