"""Self-adjoint 2x2 symbols in Pauli form and their pointwise geometry.

A symbol is ``H ~ H0 + h*H1`` with ``H0 = sum_i p_i(x, xi) sigma_i`` and
``H1 = sum_i r_i(x, xi) sigma_i`` for real scalar fields ``p_i``, ``r_i``.
Writing ``P = (p1, p2, p3)``, the eigenvalue branches of ``H0`` are
``p0 +/- |P|``; they cross exactly where ``P`` vanishes.

All derived quantities (angles, eigenvectors, Poisson brackets) are
computed from the eight component fields, so azimuth branch cuts never
enter pointwise formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from types import SimpleNamespace

import numpy as np

from . import expr as ex
from .errors import CrossingError, PoleError

__all__ = [
    "Branch", "Line", "TorusX", "TorusXXi", "PauliSymbol",
    "pauli_norm", "eigenvalue", "spherical", "eigenvector",
    "subprincipal_integrand",
]

# azimuth is treated as undefined when p1^2+p2^2 < POLE_RTOL * |P|^2
POLE_RTOL = 1e-12
_PERIOD_TOL = 1e-10


class Branch(Enum):
    """Selects the upper (+|P|) or lower (-|P|) eigenvalue branch."""

    PLUS = "plus"
    MINUS = "minus"

    @property
    def sign(self):
        return 1.0 if self is Branch.PLUS else -1.0

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Line:
    """Unbounded phase plane (no periodicity)."""


@dataclass(frozen=True)
class TorusX:
    """Periodic in position only; momentum lives on the line."""

    period_x: float = 1.0


@dataclass(frozen=True)
class TorusXXi:
    """Periodic in both position and momentum."""

    period_x: float = 1.0
    period_xi: float = 1.0


Domain = Line | TorusX | TorusXXi

_ZERO = ex.Num(0.0)


def _as_expr(v):
    if isinstance(v, str):
        return ex.parse(v)
    if isinstance(v, (int, float)):
        return ex.Num(float(v))
    return v


def _scalar_grad_fn(f, partials):
    """Build a fast scalar gradient callable for one component."""
    if partials is not None:
        gx_fn = ex.scalar_fn(partials[0])
        gxi_fn = ex.scalar_fn(partials[1])
        return lambda x, xi: (gx_fn(x, xi), gxi_fn(x, xi))
    if isinstance(f, ex.Num):
        return lambda x, xi: (0.0, 0.0)
    if isinstance(f, ex.Var):
        if f.name == "x":
            return lambda x, xi: (1.0, 0.0)
        return lambda x, xi: (0.0, 1.0)
    fn = ex.scalar_fn(f)
    dep_x = ex.depends_on(f, "x")
    dep_xi = ex.depends_on(f, "xi")
    eps = ex._EPS_CBRT

    def g(x, xi):
        if dep_x:
            h = max(1.0, abs(x)) * eps
            d1 = (fn(x + h, xi) - fn(x - h, xi)) / (2.0 * h)
            d2 = (fn(x + h / 2, xi) - fn(x - h / 2, xi)) / h
            gx = (4.0 * d2 - d1) / 3.0
        else:
            gx = 0.0
        if dep_xi:
            h = max(1.0, abs(xi)) * eps
            d1 = (fn(x, xi + h) - fn(x, xi - h)) / (2.0 * h)
            d2 = (fn(x, xi + h / 2) - fn(x, xi - h / 2)) / h
            gxi = (4.0 * d2 - d1) / 3.0
        else:
            gxi = 0.0
        return gx, gxi

    return g


@dataclass(frozen=True)
class PauliSymbol:
    """The full symbol: four principal and four first-order components.

    Parameters
    ----------
    p : tuple of 4 expressions
        Principal components (p0, p1, p2, p3); strings are parsed.
    r : tuple of 4 expressions, optional
        First-order components, all default 0.
    domain : Line | TorusX | TorusXXi
    name : str
    p_partials : optional tuple of 4 entries
        Closed-form partials ``(dp_i/dx, dp_i/dxi)`` per component; any
        entry may be None, in which case central differences are used.
    """

    p: tuple
    r: tuple = (_ZERO, _ZERO, _ZERO, _ZERO)
    domain: Domain = field(default_factory=Line)
    name: str = "custom"
    p_partials: tuple = (None, None, None, None)

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(_as_expr(v) for v in self.p))
        object.__setattr__(self, "r", tuple(_as_expr(v) for v in self.r))
        pp = tuple(
            None if g is None else (_as_expr(g[0]), _as_expr(g[1]))
            for g in self.p_partials)
        object.__setattr__(self, "p_partials", pp)
        if len(self.p) != 4 or len(self.r) != 4:
            raise ValueError("need exactly four p and four r components")
        self._check_periodicity()
        # precompiled evaluators (hashing deep trees per call is too slow
        # for the tracer's inner loop)
        object.__setattr__(self, "_p_sfn", tuple(ex.scalar_fn(f) for f in self.p))
        object.__setattr__(self, "_p_afn", tuple(ex.array_fn(f) for f in self.p))
        object.__setattr__(self, "_r_sfn", tuple(ex.scalar_fn(f) for f in self.r))
        object.__setattr__(self, "_r_afn", tuple(ex.array_fn(f) for f in self.r))
        object.__setattr__(self, "_grad_sfn",
                           tuple(_scalar_grad_fn(f, g)
                                 for f, g in zip(self.p, pp)))

    def _check_periodicity(self):
        """Numerically verify each field is periodic on torus domains."""
        dom = self.domain
        if isinstance(dom, Line):
            return
        probes_x = np.linspace(-0.37, 1.91, 16)
        probes_xi = np.linspace(-1.13, 0.77, 16)
        shifts = [(dom.period_x, 0.0)]
        if isinstance(dom, TorusXXi):
            shifts.append((0.0, dom.period_xi))
        for f in self.p + self.r:
            fn = ex.array_fn(f)
            base = fn(probes_x, probes_xi)
            for dx, dxi in shifts:
                moved = fn(probes_x + dx, probes_xi + dxi)
                err = np.max(np.abs(moved - base))
                if err >= _PERIOD_TOL:
                    raise ValueError(
                        f"field {ex.pretty(f)!r} is not periodic on {dom} "
                        f"(deviation {err:.2e})")

    def p_values(self, x, xi):
        """Evaluate (p0, p1, p2, p3); works on scalars or arrays."""
        if type(x) is float or np.isscalar(x):
            return tuple(fn(x, xi) for fn in self._p_sfn)
        return tuple(fn(x, xi) for fn in self._p_afn)

    def r_values(self, x, xi):
        if type(x) is float or np.isscalar(x):
            return tuple(fn(x, xi) for fn in self._r_sfn)
        return tuple(fn(x, xi) for fn in self._r_afn)

    def p_grads(self, x, xi):
        """Gradients ((dp_i/dx, dp_i/dxi))_i, preferring registered partials."""
        if type(x) is float or np.isscalar(x):
            return [fn(x, xi) for fn in self._grad_sfn]
        out = []
        for f, partials in zip(self.p, self.p_partials):
            if partials is not None:
                out.append((ex.array_fn(partials[0])(x, xi),
                            ex.array_fn(partials[1])(x, xi)))
            else:
                out.append(ex.grad_arrays(f, x, xi))
        return out

    def negated(self):
        """Symbol with every component negated (spectrum reflects through 0)."""
        return PauliSymbol(
            p=tuple(ex.Neg(f) for f in self.p),
            r=tuple(ex.Neg(f) for f in self.r),
            domain=self.domain,
            name=f"neg_{self.name}",
        )


# --- pointwise operations ----------------------------------------------------

def pauli_norm(sym, x, xi):
    """|P| = sqrt(p1^2 + p2^2 + p3^2) >= 0."""
    _, p1, p2, p3 = sym.p_values(x, xi)
    return np.sqrt(p1 * p1 + p2 * p2 + p3 * p3) if not np.isscalar(p1) \
        else math.sqrt(p1 * p1 + p2 * p2 + p3 * p3)


def eigenvalue(sym, branch, x, xi):
    """Branch eigenvalue p0 +/- |P| of the principal symbol."""
    p0, p1, p2, p3 = sym.p_values(x, xi)
    n = p1 * p1 + p2 * p2 + p3 * p3
    n = np.sqrt(n) if not np.isscalar(n) else math.sqrt(n)
    return p0 + branch.sign * n


def spherical(sym, x, xi):
    """Polar/azimuthal angles of P: theta in [0, pi], phi in (-pi, pi].

    Conventions: theta = arccos(p3/|P|); phi = atan2(p2, p1), which places
    phi = 0 on the positive p1 axis and phi = pi on the negative one.

    Raises
    ------
    CrossingError
        If |P| = 0 (both angles undefined).
    PoleError
        If p1^2 + p2^2 < 1e-12 * |P|^2 (azimuth undefined at the poles).
    """
    _, p1, p2, p3 = sym.p_values(x, xi)
    norm2 = p1 * p1 + p2 * p2 + p3 * p3
    if norm2 == 0.0:
        raise CrossingError(f"P = 0 at ({x}, {xi})")
    rho2 = p1 * p1 + p2 * p2
    theta = math.acos(max(-1.0, min(1.0, p3 / math.sqrt(norm2))))
    if rho2 < POLE_RTOL * norm2:
        raise PoleError(f"azimuth undefined at ({x}, {xi}): p1^2+p2^2 ~ 0")
    return theta, math.atan2(p2, p1)


def eigenvector(sym, branch, x, xi):
    """Unit eigenvector of H0 for the chosen branch as a complex 2-vector.

    Uses the gauge u+ = (cos(t/2), e^{i phi} sin(t/2)),
    u- = (-e^{-i phi} sin(t/2), cos(t/2)); the azimuthal factor is
    computed as (p1 + i p2)/|p1 + i p2|, which is smooth across the
    phi branch cut.
    """
    _, p1, p2, p3 = sym.p_values(x, xi)
    norm2 = p1 * p1 + p2 * p2 + p3 * p3
    if norm2 == 0.0:
        raise CrossingError(f"P = 0 at ({x}, {xi})")
    rho2 = p1 * p1 + p2 * p2
    if rho2 < POLE_RTOL * norm2:
        raise PoleError(f"azimuth undefined at ({x}, {xi}): p1^2+p2^2 ~ 0")
    norm = math.sqrt(norm2)
    rho = math.sqrt(rho2)
    phase = complex(p1 / rho, p2 / rho)       # e^{i phi}
    c = math.sqrt(0.5 * (1.0 + p3 / norm))    # cos(theta/2)
    s = math.sqrt(0.5 * (1.0 - p3 / norm))    # sin(theta/2)
    if branch is Branch.PLUS:
        return np.array([c, phase * s], dtype=complex)
    return np.array([-s / phase, c], dtype=complex)


def hermitian_part(sym, x, xi, order=0):
    """Dense 2x2 matrix of H0 (order 0) or H1 (order 1) at a point."""
    vals = sym.p_values(x, xi) if order == 0 else sym.r_values(x, xi)
    a0, a1, a2, a3 = vals
    return np.array([[a0 + a3, a1 - 1j * a2],
                     [a1 + 1j * a2, a0 - a3]], dtype=complex)


# --- field bundle for curve integrals ----------------------------------------

def field_data(sym, x, xi, with_r=False):
    """Vectorized geometry of the symbol at an array of points.

    Returns a namespace with the component values, their gradients, the
    Pauli norm, the angle gradients obtained by the chain rule, and the
    Poisson brackets {theta, phi} and {lambda_pm, phi} (bracket convention
    {a, b} = a_xi b_x - a_x b_xi).

    ``theta_x``/``theta_xi`` and the azimuth gradient are NaN-free only
    where ``rho2 > 0``; callers must check ``rho2`` against their own pole
    tolerance before using azimuthal quantities.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    p0, p1, p2, p3 = sym.p_values(x, xi)
    grads = sym.p_grads(x, xi)
    (g0x, g0xi), (g1x, g1xi), (g2x, g2xi), (g3x, g3xi) = grads

    norm2 = p1 * p1 + p2 * p2 + p3 * p3
    norm = np.sqrt(norm2)
    rho2 = p1 * p1 + p2 * p2

    with np.errstate(all="ignore"):
        # |P| gradient
        nx = (p1 * g1x + p2 * g2x + p3 * g3x) / norm
        nxi = (p1 * g1xi + p2 * g2xi + p3 * g3xi) / norm
        # azimuth gradient (smooth; no branch cut)
        phi_x = (p1 * g2x - p2 * g1x) / rho2
        phi_xi = (p1 * g2xi - p2 * g1xi) / rho2
        # polar-angle gradient from theta = arccos(p3/|P|)
        rho = np.sqrt(rho2)
        theta_x = (p3 * nx - norm * g3x) / (norm * rho)
        theta_xi = (p3 * nxi - norm * g3xi) / (norm * rho)
        cos_theta = p3 / norm
        sin_theta = rho / norm

    out = SimpleNamespace(
        p0=p0, p1=p1, p2=p2, p3=p3,
        norm=norm, rho2=rho2,
        lam_plus_x=g0x + nx, lam_plus_xi=g0xi + nxi,
        lam_minus_x=g0x - nx, lam_minus_xi=g0xi - nxi,
        phi_x=phi_x, phi_xi=phi_xi,
        theta_x=theta_x, theta_xi=theta_xi,
        cos_theta=cos_theta, sin_theta=sin_theta,
        # {theta, phi} = theta_xi phi_x - theta_x phi_xi
        br_theta_phi=theta_xi * phi_x - theta_x * phi_xi,
    )
    if with_r:
        out.r0, out.r1, out.r2, out.r3 = sym.r_values(x, xi)
    return out


def _mu1_terms(data, branch):
    """The three closed-form subprincipal pieces at the bundle's points.

    Returns (curvature_part, connection_part) where the curvature part is
    the sum of the first and third pieces and the connection part is the
    Berry-connection piece.
    """
    s = branch.sign
    lam_x = data.lam_plus_x if branch is Branch.PLUS else data.lam_minus_x
    lam_xi = data.lam_plus_xi if branch is Branch.PLUS else data.lam_minus_xi
    br_lam_phi = lam_xi * data.phi_x - lam_x * data.phi_xi
    curvature = (s * data.p0 + 3.0 * data.norm) * (data.sin_theta / 4.0) \
        * data.br_theta_phi
    connection = s * (1.0 - data.cos_theta) / 2.0 * br_lam_phi
    return curvature, connection


def first_order_average(data, branch):
    """<H1 e, e> = r0 +/- sum_i r_i p_i / |P| at the bundle's points."""
    s = branch.sign
    proj = (data.r1 * data.p1 + data.r2 * data.p2 + data.r3 * data.p3) / data.norm
    return data.r0 + s * proj


def subprincipal_integrand(sym, branch, x, xi):
    """Full subprincipal integrand f1 at one point.

    f1 = [r0 +/- sum r_i p_i/|P|]
         + |P| (sin t / 2) {t, phi}
         +/- ((1 - cos t)/2) {lambda_pm, phi}
         + (+/- p0 + |P|) (sin t / 4) {t, phi}

    computed from the closed spherical-coordinate forms via the chain
    rule on the component gradients.

    Raises :class:`CrossingError` / :class:`PoleError` off the admissible
    set.
    """
    data = field_data(sym, np.asarray(x, float), np.asarray(xi, float),
                      with_r=True)
    norm2 = data.norm ** 2
    if np.any(norm2 == 0.0):
        raise CrossingError(f"P = 0 at ({x}, {xi})")
    if np.any(data.rho2 < POLE_RTOL * norm2):
        raise PoleError(f"azimuth undefined at ({x}, {xi})")
    curvature, connection = _mu1_terms(data, branch)
    value = first_order_average(data, branch) + curvature + connection
    return float(value) if value.ndim == 0 else value
