"""Closed level-curve tracing and quadrature along the traced orbit.

The level set ``mu = E`` of a branch eigenvalue is traced by arc-length
RK4 steps along the normalized Hamilton field ``(d_xi mu, -d_x mu)``,
each step followed by a Newton projection back onto the level set.  A
first pass measures the loop's arc length (the crossing of a transversal
section through the seed is Newton-refined); a second pass resamples the
loop with an exactly uniform arc step.  Uniform closed-loop sampling
makes every loop quadrature a periodic rectangle sum, so actions,
periods and phase integrals converge spectrally in the step size.

On torus domains positions are tracked in the covering plane; closure is
tested modulo the lattice and a loop that closes with a nonzero lattice
displacement is reported as non-contractible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (CrossingOnCurve, DegenerateGradient, DomainError,
                     InconsistentRegion, NonContractible, NotClosed,
                     SeedNotFound)
from .symbol import Branch, TorusX, TorusXXi

__all__ = [
    "Region", "TraceOpts", "LevelCurve",
    "find_seed", "trace", "classify", "integrate_dt", "integrate_samples",
    "action_integral",
]

_GRAD_TOL = 1e-9       # |grad mu| below this is degenerate
_CROSS_TOL = 1e-10     # |P| below this counts as a crossing


class Region(Enum):
    """Whether the enclosed domain lies below (well) or above (barrier)
    the curve's energy."""

    WELL = "well"
    BARRIER = "barrier"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class TraceOpts:
    """Tracer knobs.

    ``tol_level`` defaults to ``1e-10 * max(1, |E|)``; ``tol_close`` to
    ``10 * ds``; ``max_steps`` to ``ceil(100 * scale / ds)`` with the
    scale guessed from the seed.  Orbits shorter than ``min_samples``
    steps are resampled proportionately.
    """

    ds: float = 0.01
    tol_level: float | None = None
    tol_close: float | None = None
    max_steps: int | None = None
    min_samples: int = 128


@dataclass(frozen=True)
class LevelCurve:
    """A traced closed orbit, sampled uniformly in arc length.

    The last sample repeats the first (with ``t = period``), so the
    arrays describe a closed polygon; on torus domains coordinates are
    unwrapped covering-plane values.  ``inv_speeds`` holds ``1/|grad mu|``
    and ``(txs, txis)`` the unit flow direction per sample; they turn
    loop integrals into spectrally convergent rectangle sums.
    """

    xs: np.ndarray
    xis: np.ndarray
    ts: np.ndarray
    inv_speeds: np.ndarray
    txs: np.ndarray
    txis: np.ndarray
    arc_step: float
    period: float
    energy: float
    branch: Branch
    region: Region
    min_gap: float    # min |P| over the samples
    min_grad: float   # min |grad mu|
    min_rho: float    # min sqrt(p1^2 + p2^2)

    def __post_init__(self):
        for a in (self.xs, self.xis, self.ts, self.inv_speeds,
                  self.txs, self.txis):
            a.flags.writeable = False

    def __len__(self):
        return len(self.xs)

    @property
    def samples(self):
        return np.column_stack([self.xs, self.xis, self.ts])

    def signed_area(self):
        """Shoelace area of the sample polygon (positive = counterclockwise)."""
        x, y = self.xs, self.xis
        return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))

    def arc_elements(self):
        """Arc length of each sample interval: chord times the circular
        correction 1 + phi^2/24 from the stored tangent turn angles.

        Insensitive to parametrization drift of the integrator, so
        trapezoid loop sums built on these elements stay fourth order.
        """
        return _arc_elements(self.xs, self.xis, self.txs, self.txis)

    def scale(self):
        return max(float(np.ptp(self.xs)), float(np.ptp(self.xis)))

    def write_csv(self, stream):
        """Columns t, x, xi; header comment records the orbit metadata."""
        from .csvio import fmt
        stream.write(f"# E={fmt(self.energy)} branch={self.branch} "
                     f"period_T={fmt(self.period)} region={self.region}\n")
        stream.write("t,x,xi\n")
        for t, x, xi in zip(self.ts, self.xs, self.xis):
            stream.write(f"{fmt(t)},{fmt(x)},{fmt(xi)}\n")


# --- pointwise probe ----------------------------------------------------------

class _Probe:
    __slots__ = ("mu", "gx", "gxi", "gnorm", "pnorm", "rho2")

    def __init__(self, sym, branch, x, xi):
        p0, p1, p2, p3 = sym.p_values(x, xi)
        pn2 = p1 * p1 + p2 * p2 + p3 * p3
        pn = math.sqrt(pn2)
        if pn < _CROSS_TOL:
            raise CrossingOnCurve(
                f"|P| = {pn:.2e} at ({x:.6g}, {xi:.6g})")
        grads = sym.p_grads(x, xi)
        (g0x, g0xi), (g1x, g1xi), (g2x, g2xi), (g3x, g3xi) = grads
        nx = (p1 * g1x + p2 * g2x + p3 * g3x) / pn
        nxi = (p1 * g1xi + p2 * g2xi + p3 * g3xi) / pn
        s = branch.sign
        self.mu = p0 + s * pn
        self.gx = g0x + s * nx
        self.gxi = g0xi + s * nxi
        self.gnorm = math.hypot(self.gx, self.gxi)
        self.pnorm = pn
        self.rho2 = p1 * p1 + p2 * p2


def _tangent(sym, branch, x, xi):
    """Unit Hamilton direction and inverse speed at a point."""
    pr = _Probe(sym, branch, x, xi)
    if pr.gnorm < _GRAD_TOL:
        raise DegenerateGradient(
            f"|grad mu| = {pr.gnorm:.2e} at ({x:.6g}, {xi:.6g})")
    inv = 1.0 / pr.gnorm
    return pr.gxi * inv, -pr.gx * inv, inv


def _newton_project(sym, branch, E, x, xi, tol):
    """Pull a point back onto the level set along grad mu."""
    for _ in range(8):
        pr = _Probe(sym, branch, x, xi)
        g = pr.mu - E
        if abs(g) < tol:
            return x, xi, pr
        if pr.gnorm < _GRAD_TOL:
            raise DegenerateGradient(
                f"|grad mu| = {pr.gnorm:.2e} during correction at "
                f"({x:.6g}, {xi:.6g})")
        scale = g / (pr.gnorm * pr.gnorm)
        x -= scale * pr.gx
        xi -= scale * pr.gxi
    raise DegenerateGradient(
        f"level-set correction stalled near ({x:.6g}, {xi:.6g})")


def rk4_step(sym, branch, E, x, xi, ds, tol):
    """One predictor-corrector step; returns (x, xi, dt, probe)."""
    vx1, vxi1, w1 = _tangent(sym, branch, x, xi)
    h = 0.5 * ds
    vx2, vxi2, w2 = _tangent(sym, branch, x + h * vx1, xi + h * vxi1)
    vx3, vxi3, w3 = _tangent(sym, branch, x + h * vx2, xi + h * vxi2)
    vx4, vxi4, w4 = _tangent(sym, branch, x + ds * vx3, xi + ds * vxi3)
    sixth = ds / 6.0
    xn = x + sixth * (vx1 + 2 * vx2 + 2 * vx3 + vx4)
    xin = xi + sixth * (vxi1 + 2 * vxi2 + 2 * vxi3 + vxi4)
    dt = sixth * (w1 + 2 * w2 + 2 * w3 + w4)
    xn, xin, pr = _newton_project(sym, branch, E, xn, xin, tol)
    return xn, xin, dt, pr


# --- seeding ------------------------------------------------------------------

def _scan_ray(sym, branch, E, points):
    """Look for sign changes of mu - E along sampled ray points."""
    vals = []
    for (x, xi) in points:
        try:
            p0, p1, p2, p3 = sym.p_values(x, xi)
            mu = p0 + branch.sign * math.sqrt(p1 * p1 + p2 * p2 + p3 * p3)
            vals.append(mu - E)
        except DomainError:
            vals.append(None)
    brackets = []
    for i in range(len(points) - 1):
        a, b = vals[i], vals[i + 1]
        if a is None or b is None:
            continue
        if a == 0.0:
            brackets.append((i, i))
        if (a < 0 < b) or (b < 0 < a):
            brackets.append((i, i + 1))
    return brackets


def _bisect_seed(sym, branch, E, pa, pb, tol_level):
    def g(t):
        x = pa[0] + t * (pb[0] - pa[0])
        xi = pa[1] + t * (pb[1] - pa[1])
        p0, p1, p2, p3 = sym.p_values(x, xi)
        return p0 + branch.sign * math.sqrt(p1 * p1 + p2 * p2 + p3 * p3) - E

    lo, hi = 0.0, 1.0
    glo = g(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) < tol_level or hi - lo < 1e-17:
            break
        if (glo < 0) == (gm < 0):
            lo, glo = mid, gm
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    return pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])


def find_seed(sym, branch, E, hint=None, *, span=10.0, n_scan=600,
              tol_level=None, axes=("x",)):
    """Locate one point of the level set near the hint.

    Scans the line ``xi = hint_xi`` over a bounded range (one period on
    torus domains), bisecting the bracket closest to the hint; with
    ``axes=("x", "xi")`` a vertical scan through the hint is also tried.
    Candidate seeds sitting on a branch crossing or a critical point of
    the branch are skipped.

    Raises :class:`SeedNotFound` when the bounded search exhausts.
    """
    if hint is None:
        hint = (0.0, 0.0)
    if tol_level is None:
        tol_level = 1e-10 * max(1.0, abs(E))
    hx, hxi = float(hint[0]), float(hint[1])
    dom = sym.domain

    rays = []
    on_torus_x = isinstance(dom, (TorusX, TorusXXi))
    span_x = dom.period_x if on_torus_x else span
    offs = np.linspace(-0.5 * span_x if on_torus_x else -span,
                       0.5 * span_x if on_torus_x else span, n_scan + 1)
    rays.append([(hx + o, hxi) for o in offs])
    if "xi" in axes:
        on_torus_xi = isinstance(dom, TorusXXi)
        span_xi = dom.period_xi if on_torus_xi else span
        offs_xi = np.linspace(-0.5 * span_xi if on_torus_xi else -span,
                              0.5 * span_xi if on_torus_xi else span,
                              n_scan + 1)
        rays.append([(hx, hxi + o) for o in offs_xi])

    for points in rays:
        brackets = _scan_ray(sym, branch, E, points)

        def key(br):
            i, j = br
            mx = 0.5 * (points[i][0] + points[j][0])
            mxi = 0.5 * (points[i][1] + points[j][1])
            return (mx - hx) ** 2 + (mxi - hxi) ** 2

        for i, j in sorted(brackets, key=key):
            try:
                if i == j:
                    x, xi = points[i]
                else:
                    x, xi = _bisect_seed(sym, branch, E, points[i], points[j],
                                         tol_level)
                pr = _Probe(sym, branch, x, xi)
            except (CrossingOnCurve, DomainError):
                continue
            if abs(pr.mu - E) < tol_level and pr.gnorm > _GRAD_TOL:
                return x, xi
    raise SeedNotFound(
        f"no admissible point with mu = {E} near {hint} (span {span})")


# --- tracing ------------------------------------------------------------------

def _lattice(dom):
    if isinstance(dom, TorusXXi):
        return dom.period_x, dom.period_xi
    if isinstance(dom, TorusX):
        return dom.period_x, None
    return None, None


def _measure_loop(sym, branch, E, x0, xi0, v0, ds, tol_level, tol_close,
                  max_steps, per_x, per_xi):
    """March until the transversal section through the seed is re-crossed.

    Returns the loop's arc length and the largest tangent turn angle per
    step; the fractional final step is refined by Newton iteration on
    the section coordinate.
    """
    x, xi = x0, xi0
    window = max(2.0 * ds, tol_close)
    sig_prev = None
    tx_prev, txi_prev = v0
    min_dot = 1.0
    for step in range(1, max_steps + 1):
        xn, xin, _, pr = rk4_step(sym, branch, E, x, xi, ds, tol_level)
        tx, txi = pr.gxi / pr.gnorm, -pr.gx / pr.gnorm
        min_dot = min(min_dot, tx * tx_prev + txi * txi_prev)
        tx_prev, txi_prev = tx, txi
        dx, dxi = xn - x0, xin - xi0
        kx = round(dx / per_x) if per_x else 0
        kxi = round(dxi / per_xi) if per_xi else 0
        rx = dx - (kx * per_x if per_x else 0.0)
        rxi = dxi - (kxi * per_xi if per_xi else 0.0)
        dist = math.hypot(rx, rxi)
        sig = rx * v0[0] + rxi * v0[1]

        if (step >= 3 and dist < window
                and sig_prev is not None and sig_prev < 0.0 <= sig):
            alpha = -sig_prev / (sig - sig_prev) if sig != sig_prev else 0.5
            # Newton-refine the crossing fraction along the flow
            ox = kx * per_x if per_x else 0.0
            oxi = kxi * per_xi if per_xi else 0.0
            px, pxi = x, xi
            for _ in range(3):
                if alpha > 1e-12:
                    px, pxi, _, _ = rk4_step(sym, branch, E, x, xi,
                                             alpha * ds, tol_level)
                else:
                    px, pxi = x, xi
                s = (px - x0 - ox) * v0[0] + (pxi - xi0 - oxi) * v0[1]
                vx, vxi, _ = _tangent(sym, branch, px, pxi)
                slope = ds * (vx * v0[0] + vxi * v0[1])
                if slope == 0.0:
                    break
                alpha -= s / slope
                alpha = min(max(alpha, 0.0), 1.5)
            miss = math.hypot(px - x0 - ox, pxi - xi0 - oxi)
            if miss >= tol_close:
                raise NotClosed(
                    f"section crossed but closure misses by {miss:.2e} "
                    f"(tol {tol_close:.2e})")
            if kx or kxi:
                raise NonContractible(
                    f"orbit closes with lattice displacement ({kx}, {kxi})")
            max_turn = math.acos(max(-1.0, min(1.0, min_dot)))
            return (step - 1 + alpha) * ds, max_turn
        # remember the section side only while near the seed; a fresh entry
        # into the window always passes through the 2*window annulus first,
        # so sig_prev is live whenever the closure test can fire
        sig_prev = sig if dist < 2.0 * window else None
        x, xi = xn, xin
    raise NotClosed(f"no closure after {max_steps} steps of ds = {ds}")


def trace(sym, branch, E, opts=None, *, seed=None, hint=None):
    """Trace the closed orbit of ``mu = E`` through the seed.

    Returns a :class:`LevelCurve` whose samples satisfy the level-set
    residual bound, ordered along the positive Hamilton flow, uniformly
    spaced in arc length, with the last sample equal to the first at
    ``t = period``.

    Raises
    ------
    NotClosed, NonContractible, DegenerateGradient, CrossingOnCurve
    """
    opts = opts or TraceOpts()
    if seed is None:
        seed = find_seed(sym, branch, E, hint, tol_level=opts.tol_level)
    ds = float(opts.ds)
    tol_level = opts.tol_level if opts.tol_level is not None \
        else 1e-10 * max(1.0, abs(E))
    tol_close = opts.tol_close if opts.tol_close is not None else 10.0 * ds

    x0, xi0, pr0 = _newton_project(sym, branch, E, seed[0], seed[1], tol_level)
    if pr0.gnorm < _GRAD_TOL:
        raise DegenerateGradient("seed sits on a critical point of the branch")
    v0 = (pr0.gxi / pr0.gnorm, -pr0.gx / pr0.gnorm)

    scale_guess = max(1.0, 2.0 * (abs(x0) + abs(xi0) + abs(E)))
    max_steps = opts.max_steps if opts.max_steps is not None \
        else math.ceil(100.0 * scale_guess / ds)
    per_x, per_xi = _lattice(sym.domain)

    # pass 1: measure the loop
    arc, max_turn = _measure_loop(sym, branch, E, x0, xi0, v0, ds, tol_level,
                                  tol_close, max_steps, per_x, per_xi)

    # pass 2: uniform resampling, even number of steps; tight turning
    # points (tip radius comparable to ds) demand proportionately more
    # samples to keep the arc-element quadrature accurate
    n_steps = max(int(round(arc / ds)), opts.min_samples, 8,
                  int(math.ceil((arc / ds) * (max_turn / 0.12))))
    n_steps += n_steps % 2
    ds2 = arc / n_steps
    xs = np.empty(n_steps + 1)
    xis = np.empty(n_steps + 1)
    ts = np.empty(n_steps + 1)
    invs = np.empty(n_steps + 1)
    txs = np.empty(n_steps + 1)
    txis = np.empty(n_steps + 1)
    xs[0], xis[0], ts[0] = x0, xi0, 0.0
    invs[0] = 1.0 / pr0.gnorm
    txs[0], txis[0] = v0
    min_gap, min_grad, min_rho2 = pr0.pnorm, pr0.gnorm, pr0.rho2
    x, xi, t = x0, xi0, 0.0
    for j in range(1, n_steps + 1):
        x, xi, dt, pr = rk4_step(sym, branch, E, x, xi, ds2, tol_level)
        t += dt
        xs[j], xis[j], ts[j] = x, xi, t
        invs[j] = 1.0 / pr.gnorm
        txs[j], txis[j] = pr.gxi * invs[j], -pr.gx * invs[j]
        min_gap = min(min_gap, pr.pnorm)
        min_grad = min(min_grad, pr.gnorm)
        min_rho2 = min(min_rho2, pr.rho2)

    # land on the seed: the residual gap is tiny after the pass-1 Newton
    # refinement and is absorbed into the final sample
    gap_x = x0 + (round((x - x0) / per_x) * per_x if per_x else 0.0) - x
    gap_xi = xi0 + (round((xi - xi0) / per_xi) * per_xi if per_xi else 0.0) - xi
    gap = math.hypot(gap_x, gap_xi)
    if gap >= tol_close:
        raise NotClosed(
            f"uniform resampling misses closure by {gap:.2e} "
            f"(tol {tol_close:.2e})")
    # snap the duplicate endpoint onto the seed; the closing interval's
    # true geometry enters the quadratures through its chord and tangents
    xs[-1], xis[-1] = x0, xi0
    invs[-1], txs[-1], txis[-1] = invs[0], txs[0], txis[0]
    w = _arc_elements(xs, xis, txs, txis)
    period = float(np.sum(0.5 * (invs[1:] + invs[:-1]) * w))
    ts[-1] = period

    curve = LevelCurve(
        xs=xs, xis=xis, ts=ts, inv_speeds=invs, txs=txs, txis=txis,
        arc_step=ds2, period=period, energy=E, branch=branch,
        region=Region.WELL,  # provisional; fixed below
        min_gap=min_gap, min_grad=min_grad,
        min_rho=math.sqrt(max(min_rho2, 0.0)),
    )
    region = classify(sym, curve)
    if region is Region.WELL:
        return curve
    return LevelCurve(
        xs=curve.xs.copy(), xis=curve.xis.copy(), ts=curve.ts.copy(),
        inv_speeds=curve.inv_speeds.copy(), txs=curve.txs.copy(),
        txis=curve.txis.copy(), arc_step=ds2, period=period,
        energy=E, branch=branch, region=region, min_gap=min_gap,
        min_grad=min_grad, min_rho=curve.min_rho,
    )


# --- classification -----------------------------------------------------------

def _inside_polygon(px, pxi, xs, xis):
    """Even-odd rule point-in-polygon test on the closed sample polygon."""
    x1, y1 = xs[:-1], xis[:-1]
    x2, y2 = xs[1:], xis[1:]
    cond = (y1 <= pxi) != (y2 <= pxi)
    with np.errstate(all="ignore"):
        xcross = x1 + (pxi - y1) * (x2 - x1) / (y2 - y1)
    hits = cond & (xcross > px)
    return bool(np.sum(hits) % 2)


def classify(sym, curve):
    """Decide well vs. barrier for a traced orbit.

    Probes an interior point (stepping from the first sample along the
    branch gradient, retrying with growing steps) and compares the branch
    value there with the curve energy; the result is cross-checked
    against the traversal orientation (well orbits run clockwise,
    barrier orbits counterclockwise).

    Raises :class:`InconsistentRegion` if the two tests disagree.
    """
    E = curve.energy
    x0, xi0 = float(curve.xs[0]), float(curve.xis[0])
    pr = _Probe(sym, curve.branch, x0, xi0)
    nx, nxi = pr.gx / pr.gnorm, pr.gxi / pr.gnorm
    ds = max(curve.arc_step, 1e-12)
    scale = curve.scale()

    interior = None
    step = 3.0 * ds
    while step <= max(scale / 4.0, 3.0 * ds):
        for sgn in (-1.0, +1.0):  # -grad first: well interiors lie downhill
            px, pxi = x0 + sgn * step * nx, xi0 + sgn * step * nxi
            if _inside_polygon(px, pxi, curve.xs, curve.xis):
                interior = (px, pxi)
                break
        if interior:
            break
        step *= 2.0
    if interior is None:
        raise InconsistentRegion("no interior probe point found")

    p0, p1, p2, p3 = sym.p_values(*interior)
    mu_int = p0 + curve.branch.sign * math.sqrt(p1 * p1 + p2 * p2 + p3 * p3)
    if mu_int == E:
        raise InconsistentRegion("interior probe landed on the level set")
    region = Region.WELL if mu_int < E else Region.BARRIER

    ccw = curve.signed_area() > 0.0
    orient_region = Region.BARRIER if ccw else Region.WELL
    if orient_region is not region:
        raise InconsistentRegion(
            f"interior test says {region}, orientation says {orient_region}")
    return region


# --- quadrature ---------------------------------------------------------------

def _arc_elements(xs, xis, txs, txis):
    c = np.hypot(np.diff(xs), np.diff(xis))
    dot = np.clip(txs[:-1] * txs[1:] + txis[:-1] * txis[1:], -1.0, 1.0)
    phi = np.arccos(dot)
    return c * (1.0 + phi * phi / 24.0)


def _loop_trapz(g, w, with_error):
    """Closed-loop trapezoid over arc elements, with a half-resolution
    error estimate."""
    fine = float(np.sum(0.5 * (g[1:] + g[:-1]) * w))
    if not with_error:
        return fine
    n = len(g) - 1  # even by construction
    g2 = g[::2]
    w2 = w[0::2] + w[1::2] if n % 2 == 0 else None
    if w2 is None:
        return fine, abs(fine) * 1e-6
    coarse = float(np.sum(0.5 * (g2[1:] + g2[:-1]) * w2))
    return fine, abs(fine - coarse)


def integrate_samples(curve, vals, *, with_error=False):
    """Flow-time loop integral of precomputed per-sample values.

    Trapezoid of ``f/|grad mu|`` over per-interval arc elements; fourth
    order in the sample spacing, insensitive to parametrization drift.
    """
    vals = np.asarray(vals, dtype=float)
    g = vals * curve.inv_speeds
    return _loop_trapz(g, curve.arc_elements(), with_error)


def integrate_dt(curve, f, *, with_error=False):
    """Integrate a pointwise field over flow time around the loop.

    ``f`` may be a callable ``f(x_array, xi_array) -> array`` or an
    expression tree.
    """
    if not callable(f):
        from . import expr as ex
        f = ex.array_fn(f)
    vals = np.asarray(f(curve.xs, curve.xis), dtype=float)
    return integrate_samples(curve, vals, with_error=with_error)


def action_integral(curve, *, with_error=False):
    """Loop action: the integral of xi dx in the stored (Hamilton-flow)
    sample order.  Positive for wells, negative for barriers."""
    g = curve.xis * curve.txs
    return _loop_trapz(g, curve.arc_elements(), with_error)
