"""Solving the quantization rule over an energy window.

For a well the rule reads ``S0(E) + h S1(E) = 2 pi k h`` (order 1), for a
barrier ``-S0(E) + h S1(E) = 2 pi k h``; both use the curve oriented
along the Hamilton flow.  :func:`build_action` samples ``S0`` (and ``S1``
at order 1) on an adaptive energy grid with cubic interpolation verified
by midpoint probes; :func:`predict_spectrum` then solves for every
integer ``k`` whose target lies in range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import curve as cv
from . import phases as ph
from .errors import NonMonotone, BuildError, NotClosed
from .curve import Region, TraceOpts
from .symbol import Branch

__all__ = ["GridOpts", "ActionFunction", "SpectrumTable",
           "build_action", "predict_spectrum"]

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GridOpts:
    n_init: int = 13
    tol_interp: float = 1e-8
    max_refine: int = 16


@dataclass(frozen=True)
class SpectrumTable:
    """Predicted eigenvalues: rows (k, E_pred, order, residual) sorted by
    energy; ``residual = |S_eff(E_pred) - 2 pi k h|``."""

    rows: tuple
    h: float
    branch: Branch
    window: tuple
    region: Region

    CSV_HEADER = ("k", "E_pred", "order", "residual")

    @property
    def energies(self):
        return np.array([r[1] for r in self.rows])

    def write_csv(self, stream):
        from .csvio import write_rows, fmt
        write_rows(stream, self.CSV_HEADER, self.rows,
                   comment=f"h={fmt(self.h)} branch={self.branch} "
                           f"window=[{fmt(self.window[0])},{fmt(self.window[1])}] "
                           f"region={self.region}")


@dataclass
class ActionFunction:
    """Cubic interpolant of the loop action (and its first correction).

    Immutable once built; safe to share between predictions at different
    values of the semiclassical parameter.
    """

    branch: Branch
    window: tuple
    order: int
    region: Region
    h: float
    energies: np.ndarray
    s0_values: np.ndarray
    s1_values: np.ndarray
    periods: np.ndarray
    _s0: CubicSpline = field(repr=False, default=None)
    _s1: CubicSpline = field(repr=False, default=None)

    def __post_init__(self):
        if self._s0 is None:
            self._s0 = CubicSpline(self.energies, self.s0_values)
            self._s1 = CubicSpline(self.energies, self.s1_values)

    def s0(self, E):
        return float(self._s0(E))

    def s1(self, E):
        return float(self._s1(E))

    def ds0_de(self, E):
        """Slope of the action; equals the orbit period for exact data."""
        return float(self._s0.derivative()(E))

    def s_eff(self, E, h=None, order=None):
        """Effective action entering the rule (sign flips for barriers)."""
        h = self.h if h is None else h
        order = self.order if order is None else order
        base = self.s0(E)
        if self.region is Region.BARRIER:
            base = -base
        if order >= 1:
            base += h * self.s1(E)
        return base

    def s_eff_slope(self, E, h=None, order=None):
        h = self.h if h is None else h
        order = self.order if order is None else order
        slope = float(self._s0.derivative()(E))
        if self.region is Region.BARRIER:
            slope = -slope
        if order >= 1:
            slope += h * float(self._s1.derivative()(E))
        return slope


def _trace_retry(sym, branch, E, opts, seed=None, hint=None):
    """Trace with two step-size retries for overly coarse requests."""
    ds = opts.ds
    last = None
    for k in range(3):
        try:
            o = TraceOpts(ds=ds, tol_level=opts.tol_level,
                          tol_close=opts.tol_close, max_steps=opts.max_steps,
                          min_samples=opts.min_samples)
            return cv.trace(sym, branch, E, o, seed=seed, hint=hint)
        except NotClosed as err:
            last = err
            ds /= 4.0
    raise last


def build_action(sym, branch, window, h, order, grid_opts=None, *,
                 trace_opts=None, hint=None):
    """Sample the action over the window on an adaptive grid.

    Every interval of the final grid is verified by an independently
    computed midpoint; intervals whose cubic estimate misses by more than
    ``tol_interp`` are bisected (up to ``max_refine`` rounds).

    Raises
    ------
    NonMonotone
        If the sampled action is not strictly monotone on the window.
    BuildError
        If refinement cannot reach the interpolation tolerance.
    """
    grid_opts = grid_opts or GridOpts()
    trace_opts = trace_opts or TraceOpts()
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError(f"empty window {window}")

    def compute(E, seed_hint):
        seed = None
        if seed_hint is not None:
            try:
                x, xi, _ = cv._newton_project(
                    sym, branch, E, seed_hint[0], seed_hint[1],
                    1e-10 * max(1.0, abs(E)))
                seed = (x, xi)
            except Exception:
                seed = None
        curve = _trace_retry(sym, branch, E, trace_opts, seed=seed, hint=hint)
        if order >= 1:
            rep = ph.assemble(sym, branch, curve)
            s0, s1 = rep.s0, rep.s1
        else:
            s0, s1 = cv.action_integral(curve), 0.0
        return {"s0": s0, "s1": s1, "T": curve.period,
                "seed": (float(curve.xs[0]), float(curve.xis[0])),
                "region": curve.region}

    # endpoints first: they fix the region, the step scale and the seeds
    cache = {}
    cache[lo] = compute(lo, None)
    cache[hi] = compute(hi, cache[lo]["seed"])
    region = cache[lo]["region"]
    if cache[hi]["region"] is not region:
        raise NonMonotone(f"region changes across the window {window}")

    grid = list(np.linspace(lo, hi, max(grid_opts.n_init, 3)))

    def value(E):
        if E not in cache:
            # continuation: seed from the nearest already computed energy
            nearest = min(cache, key=lambda e: abs(e - E))
            cache[E] = compute(E, cache[nearest]["seed"])
        return cache[E]

    for E in grid:
        value(E)

    for round_ in range(grid_opts.max_refine + 1):
        grid = sorted(grid)
        s0s = np.array([cache[E]["s0"] for E in grid])
        diffs = np.diff(s0s)
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise NonMonotone(
                "sampled action is not strictly monotone on the window")
        spl0 = CubicSpline(np.asarray(grid), s0s)
        spl1 = CubicSpline(np.asarray(grid),
                           np.array([cache[E]["s1"] for E in grid]))
        bad = []
        for a, b in zip(grid[:-1], grid[1:]):
            mid = 0.5 * (a + b)
            v = value(mid)
            err = abs(float(spl0(mid)) - v["s0"])
            if order >= 1:
                err = max(err, abs(float(spl1(mid)) - v["s1"]))
            if err >= grid_opts.tol_interp:
                bad.append(mid)
        if not bad:
            break
        if round_ == grid_opts.max_refine:
            raise BuildError(
                f"interpolation tolerance {grid_opts.tol_interp} not reached "
                f"after {grid_opts.max_refine} refinement rounds")
        grid.extend(bad)

    # final interpolant over every computed point (verified accuracy)
    energies = np.array(sorted(cache))
    return ActionFunction(
        branch=branch, window=(lo, hi), order=order, region=region, h=h,
        energies=energies,
        s0_values=np.array([cache[E]["s0"] for E in energies]),
        s1_values=np.array([cache[E]["s1"] for E in energies]),
        periods=np.array([cache[E]["T"] for E in energies]),
    )


def predict_spectrum(action, h=None, order=None):
    """Solve ``S_eff(E) = 2 pi k h`` for every representable integer k.

    Bisection bracketing (brentq) plus a Newton polish on the cubic
    interpolant; residuals are recorded per root.
    """
    h = action.h if h is None else float(h)
    order = action.order if order is None else order
    lo, hi = action.window
    sa, sb = action.s_eff(lo, h, order), action.s_eff(hi, h, order)
    smin, smax = min(sa, sb), max(sa, sb)

    k_lo = math.ceil(smin / (_TWO_PI * h) - 1e-12)
    k_hi = math.floor(smax / (_TWO_PI * h) + 1e-12)
    rows = []
    for k in range(k_lo, k_hi + 1):
        target = _TWO_PI * k * h
        if not (smin - 1e-15 <= target <= smax + 1e-15):
            continue

        def g(E):
            return action.s_eff(E, h, order) - target

        try:
            root = brentq(g, lo, hi, xtol=1e-14, rtol=8.9e-16)
        except ValueError:
            continue  # target touches the range boundary within rounding
        for _ in range(3):
            slope = action.s_eff_slope(root, h, order)
            if slope == 0.0:
                break
            step = g(root) / slope
            new = root - step
            if new < lo or new > hi:
                break
            root = new
        rows.append((k, float(root), order, abs(g(root))))

    rows.sort(key=lambda r: r[1])
    return SpectrumTable(rows=tuple(rows), h=h, branch=action.branch,
                         window=action.window, region=action.region)
