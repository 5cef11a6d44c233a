"""Named symbol presets.

Each preset builds a :class:`PauliSymbol` together with sensible defaults
for seeding the level-curve tracer.  Available presets:

``simple_dirac``
    Off-diagonal annihilation/creation pair; branches are +/- the phase
    plane radius, every level set a circle.
``jackiw_rebbi``
    Domain-wall mass ``m0*tanh(x)`` against a momentum off-diagonal; hosts
    a zero mode and a ladder of in-gap states.
``rw_example``
    Components (x, xi, x^2): the minimal model whose Berry and
    Rammal-Wilkinson corrections are both nonzero and energy dependent.
``timmel_mele_low`` / ``timmel_mele_tb``
    Moire-lattice models on the torus (low-energy and tight-binding
    dispersions); the lower branch carries a barrier-enclosing loop at
    zero energy.
``radial_dirac``
    Partial-wave radial Dirac operator with electric, anomalous-magnetic
    and scalar potentials; ``x`` plays the role of the radius r > 0.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import expr as ex
from .symbol import Branch, Line, PauliSymbol, TorusX, TorusXXi

__all__ = ["PresetInfo", "make_preset", "preset_info", "preset_names"]


@dataclass(frozen=True)
class PresetInfo:
    """Preset defaults consumed by the tracer and the CLI."""

    name: str
    doc: str
    params: dict
    seed_hint: tuple
    branch: Branch


def _num(v):
    return ex.Num(float(v))


_ZERO = ex.Num(0.0)
_ONE = ex.Num(1.0)
_NONE2 = (_ZERO, _ZERO)


def _simple_dirac():
    return PauliSymbol(
        p=("0", "xi", "x", "0"), name="simple_dirac",
        p_partials=(_NONE2, (_ZERO, _ONE), (_ONE, _ZERO), _NONE2))


def _jackiw_rebbi(m0=1.0):
    mass = ex.Bin("*", _num(m0), ex.parse("tanh(x)"))
    mass_dx = ex.Bin("*", _num(m0), ex.parse("1 - tanh(x)^2"))
    return PauliSymbol(
        p=(ex.Num(0.0), ex.parse("xi"), mass, ex.Num(0.0)),
        name="jackiw_rebbi",
        p_partials=(_NONE2, (_ZERO, _ONE), (mass_dx, _ZERO), _NONE2))


def _rw_example():
    return PauliSymbol(
        p=("0", "x", "xi", "x^2"), name="rw_example",
        p_partials=(_NONE2, (_ONE, _ZERO), (_ZERO, _ONE),
                    (ex.parse("2*x"), _ZERO)))


_TM_P0_DX = ex.parse("2*pi*sin(2*pi*x)")
_TM_P1_DX = ex.parse("-(2*pi*sqrt(3)*cos(2*pi*x))")


def _tm_principal(upsilon):
    return (ex.parse("1 - cos(2*pi*x)"),
            ex.parse("-(sqrt(3)*sin(2*pi*x))"),
            ex.Neg(upsilon),
            ex.Num(0.0))


def _timmel_mele_low(kx=0.0):
    r2 = ex.Neg(_num(kx))  # first-order quasimomentum coupling
    return PauliSymbol(
        p=_tm_principal(ex.parse("xi")),
        r=(ex.Num(0.0), ex.Num(0.0), r2, ex.Num(0.0)),
        domain=TorusX(1.0),
        name="timmel_mele_low",
        p_partials=((_TM_P0_DX, _ZERO), (_TM_P1_DX, _ZERO),
                    (_ZERO, ex.Num(-1.0)), _NONE2),
    )


def _timmel_mele_tb():
    return PauliSymbol(
        p=_tm_principal(ex.parse("2*cos(2*pi*xi) + 1")),
        domain=TorusXXi(1.0, 1.0),
        name="timmel_mele_tb",
        p_partials=((_TM_P0_DX, _ZERO), (_TM_P1_DX, _ZERO),
                    (_ZERO, ex.parse("4*pi*sin(2*pi*xi)")), _NONE2),
    )


def _radial_dirac(kappa=1.0, phi_el="0", phi_am="0", phi_sc="x", mass=1.0):
    p0 = ex.parse(phi_el) if isinstance(phi_el, str) else phi_el
    p1 = ex.Bin("+", ex.Bin("/", _num(kappa), ex.Var("x")), _as(phi_am))
    p3 = ex.Bin("+", _num(mass), _as(phi_sc))
    return PauliSymbol(p=(p0, p1, ex.Var("xi"), p3), name="radial_dirac")


def _as(v):
    return ex.parse(v) if isinstance(v, str) else v


_REGISTRY = {
    "simple_dirac": (_simple_dirac, PresetInfo(
        "simple_dirac",
        "circular level sets; exact spectrum at every order",
        {}, (0.0, 0.0), Branch.PLUS)),
    "jackiw_rebbi": (_jackiw_rebbi, PresetInfo(
        "jackiw_rebbi",
        "domain-wall mass m0*tanh(x); discrete states inside (-m0, m0)",
        {"m0": "gap half-width (default 1.0)"}, (0.0, 0.0), Branch.PLUS)),
    "rw_example": (_rw_example, PresetInfo(
        "rw_example",
        "components (x, xi, x^2); energy-dependent geometric phases",
        {}, (0.0, 0.0), Branch.PLUS)),
    "timmel_mele_low": (_timmel_mele_low, PresetInfo(
        "timmel_mele_low",
        "moire model, linear dispersion; kx enters at first order",
        {"kx": "quasimomentum (default 0.0)"}, (0.5, 0.0), Branch.MINUS)),
    "timmel_mele_tb": (_timmel_mele_tb, PresetInfo(
        "timmel_mele_tb",
        "moire model, cosine dispersion on the full torus",
        {}, (0.5, 0.5), Branch.MINUS)),
    "radial_dirac": (_radial_dirac, PresetInfo(
        "radial_dirac",
        "partial-wave radial Dirac symbol; x is the radius r > 0",
        {"kappa": "angular quantum number (default 1.0)",
         "phi_el": "electric potential expression (default '0')",
         "phi_am": "anomalous magnetic potential (default '0')",
         "phi_sc": "confining scalar potential (default 'x')",
         "mass": "rest mass (default 1.0)"}, (0.7, 0.0), Branch.PLUS)),
}


def preset_names():
    return sorted(_REGISTRY)


def preset_info(name):
    try:
        return _REGISTRY[name][1]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {preset_names()}") from None


def make_preset(name, **params):
    """Instantiate a preset symbol by name."""
    try:
        builder = _REGISTRY[name][0]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {preset_names()}") from None
    return builder(**params)
