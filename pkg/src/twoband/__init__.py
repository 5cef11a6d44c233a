"""Semiclassical quantization toolkit for self-adjoint 2x2 systems.

The package traces closed level curves of the symbol's eigenvalue
branches, evaluates the loop action and its geometric phase corrections
(Berry, Rammal-Wilkinson, first-order average), solves the resulting
quantization rule for eigenvalues, and cross-validates every prediction
against a dense Hermitian discretization of the same operator.
"""

from .errors import ToolkitError
from .symbol import Branch, Line, PauliSymbol, TorusX, TorusXXi
from .presets import make_preset, preset_names

__all__ = [
    "ToolkitError", "Branch", "Line", "TorusX", "TorusXXi", "PauliSymbol",
    "make_preset", "preset_names",
]

__version__ = "0.1.0"
