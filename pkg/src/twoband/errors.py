"""Exception hierarchy shared by all toolkit modules.

Every error raised on a numerical or input failure derives from
:class:`ToolkitError`, so callers (and the CLI) can distinguish toolkit
failures from programming errors.
"""


class ToolkitError(Exception):
    """Base class for all toolkit failures."""


# --- expression language ---------------------------------------------------

class ExprSyntaxError(ToolkitError):
    """Malformed expression text.

    Attributes
    ----------
    offset : int
        0-based byte offset of the first offending character (or of the
        end of input for truncated expressions).
    """

    def __init__(self, offset, message):
        self.offset = offset
        self.message = message
        super().__init__(f"at offset {offset}: {message}")


class UnknownIdentifierError(ExprSyntaxError):
    """Identifier that is neither a variable, a constant nor a function."""


class DomainError(ToolkitError):
    """Evaluation left the real domain (sqrt of a negative, log of a
    non-positive, division by zero, overflow)."""


# --- symbol geometry -------------------------------------------------------

class CrossingError(ToolkitError):
    """The Pauli vector vanishes: the eigenvalue branches cross here."""


class PoleError(ToolkitError):
    """p1^2 + p2^2 vanishes: the azimuthal angle is undefined here."""


# --- level-curve tracing ---------------------------------------------------

class SeedNotFound(ToolkitError):
    """Bounded search found no point of the level set."""


class NotClosed(ToolkitError):
    """Tracer exhausted its step budget without closing the loop."""


class NonContractible(NotClosed):
    """Orbit closed modulo the torus lattice with a nonzero displacement."""


class DegenerateGradient(ToolkitError):
    """|grad mu| fell below tolerance along the orbit."""


class CrossingOnCurve(CrossingError):
    """The traced orbit passes through (or too close to) a branch crossing."""


class PoleOnCurve(PoleError):
    """The traced orbit passes through a point where the azimuth is undefined."""


class InconsistentRegion(ToolkitError):
    """Interior probe and orientation disagree about well vs. barrier."""


# --- phase integrals -------------------------------------------------------

class UnwrapFailure(ToolkitError):
    """Azimuth jumps by >= pi between adjacent samples even after refinement."""


class NotPlanar(ToolkitError):
    """The Pauli vector does not lie in the requested (or any) fixed plane."""


class OriginOnCurve(ToolkitError):
    """The planar image curve passes through the origin; winding undefined."""


class RoundingAmbiguous(ToolkitError):
    """Accumulated turning differs from an integer by more than the residual cap."""


# --- quantization rule -----------------------------------------------------

class NonMonotone(ToolkitError):
    """The action is not strictly monotone over the requested window."""


class BuildError(ToolkitError):
    """Adaptive action grid failed to reach its interpolation tolerance."""


# --- direct quantization oracle --------------------------------------------

class UnsupportedSymbol(ToolkitError):
    """A symbol entry does not split into supported a(x)*beta(xi) terms."""


class PlanTooSmall(ToolkitError):
    """Targeted eigenfunctions carry too much weight near the grid boundary."""


class ConvergenceFailure(ToolkitError):
    """Dense eigensolver failed to converge."""


# --- CLI -------------------------------------------------------------------

class ConfigError(ToolkitError):
    """Invalid run configuration (schema violation, unknown key, bad value)."""


class MatchFailure(ToolkitError):
    """Eigenvalue pairing between prediction and oracle is ambiguous."""
