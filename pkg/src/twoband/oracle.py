"""Direct quantization oracle: dense Hermitian matrices in a Fourier basis.

Each symbol component is split into supported ``a(x) * beta(xi)`` terms
with ``beta`` in {1, xi, xi^2, cos(2 pi xi), sin(2 pi xi)}.  ``beta``
acts diagonally on plane waves, ``a`` as a Fourier multiplication
matrix, and mixed terms are symmetrized, ``(A B + B A)/2`` -- exact Weyl
ordering for xi-linear terms, and all preset nonlinearities in xi carry
constant coefficients, so no ordering discrepancy arises there.

Line problems are periodized on ``[-L, L]`` with a smooth crossfade over
the outer tenth of the box, which keeps the Fourier coefficients of
non-periodic coefficients decaying fast; an a-posteriori check rejects
the plan if targeted eigenfunctions reach the blended zone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import expr as ex
from .errors import (ConvergenceFailure, PlanTooSmall, UnsupportedSymbol)
from .symbol import Line, TorusX, TorusXXi

__all__ = [
    "FourierLine", "FourierTorus", "QuantPlan", "HermitianMatrix",
    "quantize", "eigenvalues", "tm_bands", "BandTable",
]

_BOUNDARY_FRACTION = 0.1     # outer fraction of the box checked / blended
_DECAY_LIMIT = 1e-8


@dataclass(frozen=True)
class FourierLine:
    """Plane waves on [-L, L]; momentum grid ``xi_n = pi n h / L``."""

    half_width: float
    modes: int


@dataclass(frozen=True)
class FourierTorus:
    """Plane waves on the unit circle; ``xi_n = 2 pi n h + h kx``."""

    modes: int


@dataclass(frozen=True)
class QuantPlan:
    basis: FourierLine | FourierTorus
    h: float
    kx: float = 0.0

    def __post_init__(self):
        n = self.basis.modes
        if n < 64 or (n & (n - 1)) != 0:
            raise ValueError(f"modes must be a power of two >= 64, got {n}")
        if self.h <= 0:
            raise ValueError(f"h must be positive, got {self.h}")


@dataclass(frozen=True)
class HermitianMatrix:
    """Dense self-adjoint discretization (2 spin components x N modes)."""

    matrix: np.ndarray
    plan: QuantPlan
    name: str = ""

    def __post_init__(self):
        self.matrix.flags.writeable = False

    @property
    def dim(self):
        return self.matrix.shape[0]

    def hermiticity_residual(self):
        m = self.matrix
        scale = float(np.max(np.abs(m))) or 1.0
        return float(np.max(np.abs(m - m.conj().T))) / scale


# --- term extraction ----------------------------------------------------------

_BETAS = ("one", "xi", "xi2", "cos2pi", "sin2pi")


def _is_two_pi_linear(arg):
    """True if arg(xi) == 2*pi*xi numerically (x-free, linear, slope 2pi)."""
    if ex.depends_on(arg, "x") or not ex.depends_on(arg, "xi"):
        return False
    f = ex.scalar_fn(arg)
    try:
        v0, v1, vh, v2 = f(0.123, 0.0), f(0.123, 1.0), f(0.123, 0.5), f(0.123, 2.0)
    except Exception:
        return False
    return (abs(v0) < 1e-12 and abs(v1 - 2.0 * math.pi) < 1e-9
            and abs(vh - 0.5 * v1) < 1e-12 and abs(v2 - 2.0 * v1) < 1e-10)


def extract_terms(e):
    """Split an expression into ``a(x) * beta(xi)`` terms.

    Returns a list of (a: Expr, beta: str) pairs with beta one of
    {one, xi, xi2, cos2pi, sin2pi}.  Raises :class:`UnsupportedSymbol`
    for any other xi-dependence.
    """
    one = ex.Num(1.0)
    if not ex.depends_on(e, "xi"):
        return [(e, "one")]
    if isinstance(e, ex.Var):  # must be xi here
        return [(one, "xi")]
    if isinstance(e, ex.Neg):
        return [(ex.Neg(a), b) for a, b in extract_terms(e.arg)]
    if isinstance(e, ex.Call) and e.fn in ("cos", "sin") \
            and _is_two_pi_linear(e.args[0]):
        return [(one, "cos2pi" if e.fn == "cos" else "sin2pi")]
    if isinstance(e, ex.Bin):
        u, v = e.left, e.right
        if e.op == "+":
            return extract_terms(u) + extract_terms(v)
        if e.op == "-":
            return extract_terms(u) + [(ex.Neg(a), b)
                                       for a, b in extract_terms(v)]
        if e.op == "*":
            if not ex.depends_on(v, "xi"):
                return [(ex.Bin("*", a, v), b) for a, b in extract_terms(u)]
            if not ex.depends_on(u, "xi"):
                return [(ex.Bin("*", u, a), b) for a, b in extract_terms(v)]
            if u == ex.Var("xi") and v == ex.Var("xi"):
                return [(one, "xi2")]
        if e.op == "/" and not ex.depends_on(v, "xi"):
            return [(ex.Bin("/", a, v), b) for a, b in extract_terms(u)]
        if e.op == "^" and u == ex.Var("xi") and e.right == ex.Num(2.0):
            return [(one, "xi2")]
    raise UnsupportedSymbol(
        f"cannot split {ex.pretty(e)!r} into supported a(x)*beta(xi) terms")


def _beta_values(beta, xi_grid):
    if beta == "one":
        return np.ones_like(xi_grid)
    if beta == "xi":
        return xi_grid
    if beta == "xi2":
        return xi_grid * xi_grid
    if beta == "cos2pi":
        return np.cos(2.0 * math.pi * xi_grid)
    return np.sin(2.0 * math.pi * xi_grid)


# --- coefficient transforms ----------------------------------------------------

def _smoothstep(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0.0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
        b = np.where(s < 1.0, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
    return a / (a + b)


def _line_coefficient_samples(a_expr, L, M):
    """Samples of the coefficient on the box grid, smoothly periodized.

    The bulk ``x < L (1 - f)`` keeps a(x) exactly; over the outer tenth
    the value is crossfaded into the periodic image a(x - 2L), so the
    periodization is C-infinity and its Fourier coefficients decay fast.
    """
    xg = -L + (2.0 * L / M) * np.arange(M)
    fn = ex.array_fn(a_expr)
    vals = fn(xg, np.zeros_like(xg))
    lo = L * (1.0 - _BOUNDARY_FRACTION)
    seam = xg >= lo
    if np.any(seam):
        w = _smoothstep((xg[seam] - lo) / (L - lo))
        vals = vals.copy()
        vals[seam] = (1.0 - w) * vals[seam] + w * fn(xg[seam] - 2.0 * L,
                                                     np.zeros(int(seam.sum())))
    return vals


def _coefficient_fourier(sym, a_expr, basis, M):
    """Fourier coefficients of the (periodized) coefficient function."""
    if isinstance(basis, FourierLine):
        if isinstance(sym.domain, (TorusX, TorusXXi)):
            raise UnsupportedSymbol(
                "torus-periodic symbol quantized on a line plan")
        vals = _line_coefficient_samples(a_expr, basis.half_width, M)
        ahat = np.fft.fft(vals) / M
        ahat *= (-1.0) ** (np.arange(M) % 2)  # grid starts at -L
        return ahat
    xg = np.arange(M) / M  # unit period
    vals = ex.array_fn(a_expr)(xg, np.zeros_like(xg))
    return np.fft.fft(vals) / M


# --- assembly -------------------------------------------------------------------

def _xi_grid(plan):
    N = plan.basis.modes
    ns = np.arange(-N // 2, N // 2)
    if isinstance(plan.basis, FourierLine):
        return math.pi * ns * plan.h / plan.basis.half_width
    return 2.0 * math.pi * ns * plan.h + plan.h * plan.kx


def _component_matrix(sym, expr_val, plan, xi_grid, weight):
    """Matrix of weight * (expression), symmetrized per term."""
    N = plan.basis.modes
    M = 2 * N
    out = np.zeros((N, N), dtype=complex)
    if expr_val == ex.Num(0.0) or weight == 0.0:
        return out
    diffs = np.subtract.outer(np.arange(N), np.arange(N)) % M
    for a_expr, beta in extract_terms(expr_val):
        bv = _beta_values(beta, xi_grid)
        w = 0.5 * (bv[:, None] + bv[None, :])
        if not ex.depends_on(a_expr, "x"):
            aval = ex.scalar_fn(a_expr)(0.0, 0.0)
            out += (weight * aval) * np.diag(bv).astype(complex)
            continue
        ahat = _coefficient_fourier(sym, a_expr, plan.basis, M)
        out += weight * ahat[diffs] * w
    return out


def quantize(sym, plan):
    """Assemble the dense self-adjoint matrix of the full symbol.

    Both the principal and (h-weighted) first-order components enter.

    Raises :class:`UnsupportedSymbol` if any component fails the term
    split.
    """
    xi_grid = _xi_grid(plan)
    comps = []
    for p_e, r_e in zip(sym.p, sym.r):
        m = _component_matrix(sym, p_e, plan, xi_grid, 1.0)
        m += _component_matrix(sym, r_e, plan, xi_grid, plan.h)
        comps.append(m)
    m0, m1, m2, m3 = comps
    top = np.hstack([m0 + m3, m1 - 1j * m2])
    bot = np.hstack([m1 + 1j * m2, m0 - m3])
    h_full = np.vstack([top, bot])
    h_full = 0.5 * (h_full + h_full.conj().T)
    return HermitianMatrix(matrix=h_full, plan=plan, name=sym.name)


# --- eigenvalues ----------------------------------------------------------------

def _outer_components_line(vectors, basis):
    """Position-space amplitudes restricted to the outer tenth of the box."""
    N = basis.modes
    L = basis.half_width
    ns = np.arange(-N // 2, N // 2)
    xg = -L + (2.0 * L / N) * np.arange(N)
    outer = np.abs(xg) > (1.0 - _BOUNDARY_FRACTION) * L
    phases = np.exp(1j * math.pi * np.outer(xg[outer], ns) / L)
    up = phases @ vectors[:N]
    dn = phases @ vectors[N:]
    return np.vstack([up, dn]) / math.sqrt(N)  # rows normalized to unit total


def _outer_components_modes(vectors, N):
    """Coefficients restricted to the outer tenth of the mode grid."""
    ns = np.arange(-N // 2, N // 2)
    outer = np.abs(ns) > (1.0 - _BOUNDARY_FRACTION) * (N // 2)
    return np.vstack([vectors[:N][outer], vectors[N:][outer]])


def _boundary_mass(vals, vecs, outer_fn, cluster_tol=1e-8):
    """Boundary weight per state, disentangling degenerate clusters.

    Exactly degenerate bulk/seam pairs (e.g. chiral zero modes) come out
    of the eigensolver arbitrarily mixed; within each near-degenerate
    cluster the vectors are rotated to the eigenbasis of the
    boundary-weight form, which separates boundary artifacts from bulk
    states canonically.
    """
    amps = outer_fn(vecs)  # (n_outer, n_vec); unit-norm states
    mass = np.real(np.sum(np.abs(amps) ** 2, axis=0))
    n = len(vals)
    j = 0
    vecs = vecs.copy()
    while j < n:
        k = j + 1
        while k < n and vals[k] - vals[k - 1] < cluster_tol:
            k += 1
        if k - j > 1:
            block = amps[:, j:k]
            form = block.conj().T @ block
            w, u = np.linalg.eigh(form)
            vecs[:, j:k] = vecs[:, j:k] @ u
            mass[j:k] = np.maximum(w, 0.0)
        j = k
    return mass, vecs


_ARTIFACT_MASS = 0.5


def eigenvalues(hm, window=None, *, return_vectors=False):
    """All (or windowed) eigenvalues of the discretized operator, sorted.

    For windowed queries the targeted eigenvectors are validated.  States
    living almost entirely (> 50% weight) on the outer tenth of the grid
    are discretization artifacts -- the smooth periodization of a
    winding coefficient such as ``x`` or ``tanh(x)`` must recross zero at
    the seam, binding spurious states there -- and are dropped.  On line
    plans any *remaining* state with more than 1e-8 boundary weight means
    genuine leakage and raises :class:`PlanTooSmall`.  On torus plans the
    mode lattice is genuinely infinite and the cutoff only truncates it,
    so only states pinned to the cutoff (the same > 50% criterion, on the
    mode grid) are dropped; mild edge contamination -- orbit copies
    hybridized by shallow-gap tunneling -- is tolerated there.
    """
    try:
        vals, vecs = scipy.linalg.eigh(hm.matrix)
    except scipy.linalg.LinAlgError as err:
        raise ConvergenceFailure(str(err)) from None
    if window is None:
        return vals if not return_vectors else (vals, vecs)
    lo, hi = window
    sel = (vals >= lo) & (vals <= hi)
    vals, vecs = vals[sel], vecs[:, sel]
    if vals.size == 0:
        return vals if not return_vectors else (vals, vecs)
    basis = hm.plan.basis
    if isinstance(basis, FourierLine):
        mass, vecs = _boundary_mass(
            vals, vecs, lambda v: _outer_components_line(v, basis))
        keep = mass <= _ARTIFACT_MASS
        vals, vecs, mass = vals[keep], vecs[:, keep], mass[keep]
        if np.any(mass > _DECAY_LIMIT):
            j = int(np.argmax(mass))
            raise PlanTooSmall(
                f"eigenvector at E = {vals[j]:.6g} carries boundary weight "
                f"{mass[j]:.2e} (> {_DECAY_LIMIT}); enlarge the box or "
                f"raise the mode count")
        return vals if not return_vectors else (vals, vecs)
    mass, vecs = _boundary_mass(
        vals, vecs, lambda v: _outer_components_modes(v, basis.modes))
    keep = mass <= _ARTIFACT_MASS
    vals, vecs = vals[keep], vecs[:, keep]
    return vals if not return_vectors else (vals, vecs)


# --- band tables -----------------------------------------------------------------

@dataclass(frozen=True)
class BandTable:
    """Eigenvalues nearest zero per quasimomentum column."""

    kx_values: tuple
    bands: np.ndarray  # shape (n_kx, n_bands)

    def __post_init__(self):
        self.bands.flags.writeable = False

    def variation(self):
        """Largest spread of any band across the quasimomentum grid."""
        return float(np.max(self.bands.max(axis=0) - self.bands.min(axis=0)))

    def write_csv(self, stream):
        from .csvio import write_rows
        n = self.bands.shape[1]
        header = ("kx",) + tuple(f"E{j + 1}" for j in range(n))
        rows = [(kx,) + tuple(row) for kx, row in
                zip(self.kx_values, self.bands)]
        write_rows(stream, header, rows)


def tm_bands(variant, h, plan, *, kx_values=None, n_bands=6,
             window=(-1.0, 1.0), reference_energies=None):
    """Near-zero bands of the moire models as functions of quasimomentum.

    ``variant`` is "low" (linear dispersion; ``kx`` enters through the
    plan's momentum-grid offset) or "tight_binding" (no quasimomentum:
    a single column).  With ``reference_energies`` given, each column
    reports the eigenvalue nearest each reference (e.g. the roots of the
    quantization rule, isolating the loop-generated bands); otherwise the
    ``n_bands`` eigenvalues nearest zero are tracked.
    """
    from .presets import make_preset
    if variant == "low":
        sym = make_preset("timmel_mele_low", kx=0.0)
        if kx_values is None:
            kx_values = tuple(2.0 * math.pi * j / 8.0 for j in range(8))
    elif variant == "tight_binding":
        sym = make_preset("timmel_mele_tb")
        kx_values = (0.0,)
    else:
        raise ValueError(f"variant must be 'low' or 'tight_binding': {variant}")

    rows = []
    for kx in kx_values:
        p = QuantPlan(basis=plan.basis, h=h, kx=float(kx))
        vals = eigenvalues(quantize(sym, p), window)
        if reference_energies is not None:
            if vals.size == 0:
                raise PlanTooSmall(f"no eigenvalues in window {window}")
            picks = [vals[int(np.argmin(np.abs(vals - e)))]
                     for e in reference_energies]
            rows.append(np.asarray(picks))
            continue
        if vals.size < n_bands:
            raise PlanTooSmall(
                f"only {vals.size} eigenvalues in window {window}; "
                f"need {n_bands}")
        order = np.argsort(np.abs(vals))[:n_bands]
        rows.append(np.sort(vals[order]))
    return BandTable(kx_values=tuple(float(k) for k in kx_values),
                     bands=np.array(rows))
