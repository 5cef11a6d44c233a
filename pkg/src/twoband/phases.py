"""Geometric phase corrections along a traced level curve.

Three loop integrals feed the first-order term of the quantization rule:

* the Berry phase, the holonomy of the eigenvector line bundle,
  integrated as ``+/- oint (1 - cos theta)/2 dphi`` with the azimuth
  unwrapped along the curve;
* the Rammal-Wilkinson phase, the curvature-density correction
  ``oint (+/- p0 + 3|P|) (sin theta / 4) {theta, phi} dt``;
* the first-order average ``oint <H1 e, e> dt``.

When the Pauli vector lies in a fixed plane along the curve the first
two corrections quantize: the Berry phase becomes pi times the winding
number of a planar image loop and the Rammal-Wilkinson phase vanishes.
:func:`assemble` detects that situation and switches to the quantized
branch automatically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import curve as cv
from .errors import (NotPlanar, OriginOnCurve, PoleOnCurve,
                     RoundingAmbiguous, UnwrapFailure)
from .symbol import POLE_RTOL, Branch, field_data, first_order_average
from .curve import Region

__all__ = [
    "PhaseReport", "berry_phase", "rw_phase", "h1_phase", "winding",
    "assemble", "mod_2pi_dist",
]

_TWO_PI = 2.0 * math.pi
_WIND_RESIDUAL_CAP = 0.05
_PLANAR_RTOL = 1e-8


def mod_2pi_dist(a, b=0.0):
    """Distance between two angles modulo 2*pi."""
    d = (a - b) % _TWO_PI
    return min(d, _TWO_PI - d)


@dataclass(frozen=True)
class PhaseReport:
    """All phase data for one (branch, energy) orbit.

    ``s1 = pi - i_h1 - theta_b - theta_rw``; when the quantized branch was
    used, ``theta_b`` is an integer multiple of pi and ``theta_rw`` is 0.
    ``error_estimates`` maps field names to Richardson error estimates.
    """

    energy: float
    branch: Branch
    s0: float
    theta_b: float
    theta_rw: float
    i_h1: float
    s1: float
    winding: int | None
    quantized: bool
    error_estimates: dict

    @property
    def s1_mod(self):
        """Representative of s1 modulo 2*pi (only exp(i*S1) matters)."""
        return self.s1 % _TWO_PI

    CSV_HEADER = ("E", "branch", "S0", "theta_B", "theta_RW", "I_H1", "S1",
                  "winding", "quantized")

    def csv_row(self):
        return (self.energy, str(self.branch), self.s0, self.theta_b,
                self.theta_rw, self.i_h1, self.s1, self.winding,
                self.quantized)

    def to_json(self):
        return json.dumps({
            "E": self.energy, "branch": str(self.branch), "S0": self.s0,
            "theta_B": self.theta_b, "theta_RW": self.theta_rw,
            "I_H1": self.i_h1, "S1": self.s1, "S1_mod": self.s1_mod,
            "winding": self.winding, "quantized": self.quantized,
            "error_estimates": self.error_estimates,
        }, sort_keys=True)


# --- shared sample geometry ---------------------------------------------------

def _curve_data(sym, curve, with_r=False, require_azimuth=True):
    data = field_data(sym, curve.xs, curve.xis, with_r=with_r)
    if require_azimuth:
        bad = data.rho2 < POLE_RTOL * data.norm ** 2
        if np.any(bad):
            j = int(np.argmax(bad))
            raise PoleOnCurve(
                f"azimuth undefined at sample {j}: "
                f"({curve.xs[j]:.6g}, {curve.xis[j]:.6g})")
    return data


def _wrap(d):
    return (d + math.pi) % _TWO_PI - math.pi


# --- Berry phase --------------------------------------------------------------

def _berry_refine(sym, branch, curve, xs, xis, phis, ws, tol_level):
    """Insert on-curve midpoints until adjacent azimuth gaps are < pi/2."""
    out_phi = [phis[0]]
    out_w = [ws[0]]
    for j in range(len(xs) - 1):
        seg = [(xs[j], xis[j], phis[j], ws[j]),
               (xs[j + 1], xis[j + 1], phis[j + 1], ws[j + 1])]
        stack = [(0, seg[0], seg[1])]
        # DFS keeping in-order output
        while stack:
            depth, a, b = stack.pop()
            if abs(_wrap(b[2] - a[2])) < 0.5 * math.pi:
                out_phi.append(b[2])
                out_w.append(b[3])
                continue
            if depth >= 24:
                raise UnwrapFailure(
                    f"azimuth jump {abs(_wrap(b[2] - a[2])):.3f} persists "
                    f"after refinement near ({a[0]:.6g}, {a[1]:.6g})")
            chord = 0.5 * math.hypot(b[0] - a[0], b[1] - a[1])
            xm, xim, _, _ = cv.rk4_step(sym, branch, curve.energy,
                                        a[0], a[1], chord, tol_level)
            dm = field_data(sym, np.asarray(xm), np.asarray(xim))
            if dm.rho2 < POLE_RTOL * dm.norm ** 2:
                raise PoleOnCurve(
                    f"azimuth undefined near ({xm:.6g}, {xim:.6g})")
            phim = math.atan2(float(dm.p2), float(dm.p1))
            wm = 0.5 * (1.0 - float(dm.cos_theta))
            mid = (xm, xim, phim, wm)
            stack.append((depth + 1, mid, b))
            stack.append((depth + 1, a, mid))
    return np.asarray(out_phi), np.asarray(out_w)


def _stieltjes(phis, ws):
    d = _wrap(np.diff(phis))
    return float(np.sum(0.5 * (ws[1:] + ws[:-1]) * d))


def berry_phase(sym, branch, curve, *, with_error=False):
    """Berry phase: ``+/- oint (1 - cos theta)/2 dphi`` in flow order.

    The azimuth is accumulated through wrapped increments; samples are
    refined (by short on-curve steps) until every increment is below
    pi/2.  On the tracer's uniform arc grid the weighted increment sum
    converges spectrally; the half-resolution sum gives the error
    estimate.

    Raises :class:`PoleOnCurve` where the azimuth is undefined and
    :class:`UnwrapFailure` if refinement cannot tame the increments.
    """
    data = _curve_data(sym, curve)
    phis = np.arctan2(data.p2, data.p1)
    ws = 0.5 * (1.0 - data.cos_theta)
    if np.any(np.abs(_wrap(np.diff(phis))) >= 0.5 * math.pi):
        tol_level = 1e-10 * max(1.0, abs(curve.energy))
        phis, ws = _berry_refine(sym, branch, curve, curve.xs, curve.xis,
                                 phis, ws, tol_level)
    fine = _stieltjes(phis, ws)
    coarse = _stieltjes(phis[::2], ws[::2])
    # both sums are O(ds^2) on the uniform grid: one Richardson level
    value = branch.sign * (fine + (fine - coarse) / 3.0)
    if with_error:
        return value, abs(fine - coarse) / 3.0
    return value


# --- Rammal-Wilkinson phase ---------------------------------------------------

def rw_phase(sym, branch, curve, *, with_error=False):
    """Curvature correction ``oint (+/- p0 + 3|P|)(sin t/4){t, phi} dt``."""
    data = _curve_data(sym, curve)
    vals = (branch.sign * data.p0 + 3.0 * data.norm) \
        * (data.sin_theta / 4.0) * data.br_theta_phi
    return cv.integrate_samples(curve, vals, with_error=with_error)


# --- first-order average ------------------------------------------------------

def h1_phase(sym, branch, curve, *, with_error=False):
    """Loop average of the first-order symbol: ``oint <H1 e, e> dt``."""
    data = _curve_data(sym, curve, with_r=True, require_azimuth=False)
    vals = first_order_average(data, branch)
    return cv.integrate_samples(curve, vals, with_error=with_error)


# --- winding number -----------------------------------------------------------

def _blessed_map(i, p1, p2, p3):
    if i == 1:
        return -p3 + 1j * p2
    if i == 2:
        return p1 - 1j * p3
    if i == 3:
        return p1 + 1j * p2
    raise ValueError(f"vanishing index must be 1, 2 or 3, got {i}")


def _rotated_map(C, p1, p2, p3):
    """Planar image after rotating the normal C onto the third axis."""
    c1, c2, c3 = C
    if abs(c3) >= 1.0 - 1e-12:
        return p1 + 1j * p2
    f = (1.0 - c3) / (c1 * c1 + c2 * c2)
    q1 = p1 * (c3 + c2 * c2 * f) - p2 * (c1 * c2 * f) - c1 * p3
    q2 = p2 * (c3 + c1 * c1 * f) - p1 * (c1 * c2 * f) - c2 * p3
    return q1 + 1j * q2


def fit_plane_normal(p1, p2, p3):
    """Best constant unit normal to the sampled Pauli vectors, or None.

    Least-squares via SVD; accepted when ``max |C.P| < 1e-8 max |P|``.
    The sign is canonicalized so the largest-magnitude component is
    positive.
    """
    mat = np.column_stack([p1, p2, p3])
    _, _, vt = np.linalg.svd(mat, full_matrices=False)
    C = vt[-1]
    k = int(np.argmax(np.abs(C)))
    if C[k] < 0:
        C = -C
    norms = np.sqrt(p1 * p1 + p2 * p2 + p3 * p3)
    if np.max(np.abs(mat @ C)) < _PLANAR_RTOL * np.max(norms):
        return tuple(float(c) for c in C)
    return None


def winding(sym, curve, plane="auto"):
    """Integer turning number of the planar image of the Pauli vector.

    The image loop is traversed with the curve oriented counterclockwise
    in phase space (well orbits, which flow clockwise, are reversed), so
    the reported integer is a purely geometric invariant of the loop.

    Parameters
    ----------
    plane : "auto" | 1 | 2 | 3 | (c1, c2, c3)
        "auto" fits the best constant normal; an integer i asserts
        p_i == 0 along the curve; a vector is an explicit unit normal
        (the components are then rotated so the normal becomes the third
        axis before forming the image).

    Raises
    ------
    NotPlanar, OriginOnCurve, RoundingAmbiguous
    """
    data = _curve_data(sym, curve, require_azimuth=False)
    p1, p2, p3 = data.p1, data.p2, data.p3
    norms = data.norm

    if plane == "auto":
        C = fit_plane_normal(p1, p2, p3)
        if C is None:
            raise NotPlanar("no constant normal fits the sampled Pauli vectors")
        q = _rotated_map(C, p1, p2, p3)
    elif isinstance(plane, int):
        comp = (p1, p2, p3)[plane - 1]
        if np.max(np.abs(comp)) >= _PLANAR_RTOL * np.max(norms):
            raise NotPlanar(f"p{plane} does not vanish along the curve")
        q = _blessed_map(plane, p1, p2, p3)
    else:
        C = np.asarray(plane, dtype=float)
        C = C / np.linalg.norm(C)
        if np.max(np.abs(p1 * C[0] + p2 * C[1] + p3 * C[2])) \
                >= _PLANAR_RTOL * np.max(norms):
            raise NotPlanar(f"C.P != 0 along the curve for C = {tuple(C)}")
        q = _rotated_map(tuple(C), p1, p2, p3)

    if curve.region is Region.WELL:
        q = q[::-1]  # traverse counterclockwise in phase space

    mags = np.abs(q)
    if np.min(mags) < 1e-9 * np.max(mags):
        j = int(np.argmin(mags))
        raise OriginOnCurve(f"|q| = {mags[j]:.2e} at sample {j}")
    total = float(np.sum(np.angle(q[1:] / q[:-1]))) / _TWO_PI
    w = round(total)
    if abs(total - w) >= _WIND_RESIDUAL_CAP:
        raise RoundingAmbiguous(
            f"accumulated turning {total:.4f} is not near an integer")
    return int(w)


# --- report assembly ----------------------------------------------------------

def _r_is_zero(sym):
    from .expr import Num
    return all(f == Num(0.0) for f in sym.r)


def assemble(sym, branch, curve):
    """Full :class:`PhaseReport` for one traced orbit.

    If a constant plane normal fits the Pauli vectors along the curve,
    the quantized branch is used: the Berry phase is (branch sign)*pi
    times the winding number and the Rammal-Wilkinson phase is zero.
    Otherwise both phases are computed from their loop integrals.
    """
    s0, s0_err = cv.action_integral(curve, with_error=True)
    if _r_is_zero(sym):
        i_h1, i_h1_err = 0.0, 0.0
    else:
        i_h1, i_h1_err = h1_phase(sym, branch, curve, with_error=True)

    wind = None
    quantized = False
    try:
        wind = winding(sym, curve, "auto")
        quantized = True
    except NotPlanar:
        pass

    if quantized:
        theta_b, theta_b_err = branch.sign * math.pi * wind, 0.0
        theta_rw, theta_rw_err = 0.0, 0.0
    else:
        theta_b, theta_b_err = berry_phase(sym, branch, curve, with_error=True)
        theta_rw, theta_rw_err = rw_phase(sym, branch, curve, with_error=True)

    s1 = math.pi - i_h1 - theta_b - theta_rw
    return PhaseReport(
        energy=curve.energy, branch=branch, s0=s0, theta_b=theta_b,
        theta_rw=theta_rw, i_h1=i_h1, s1=s1, winding=wind,
        quantized=quantized,
        error_estimates={
            "S0": s0_err, "theta_B": theta_b_err, "theta_RW": theta_rw_err,
            "I_H1": i_h1_err, "S1": i_h1_err + theta_b_err + theta_rw_err,
        },
    )
