"""Exception types raised across the package."""


class LdgError(Exception):
    """Base class for all package errors."""


class DegenerateTop(LdgError):
    """Top eigenvalue gap too small for the nearest projection to be defined."""


class PerpendicularPair(LdgError):
    """Two projections are (nearly) perpendicular; no minimal rotation exists."""


class InvalidInput(LdgError, ValueError):
    """Input violates a documented precondition."""


class TooCoarse(LdgError, ValueError):
    """Grid/geometry combination leaves no usable interior."""


class EvenWinding(LdgError, ValueError):
    """Boundary winding is even, so the boundary loop is contractible."""


class SnapshotMismatch(LdgError, ValueError):
    """Snapshot file does not match the grid or mask it is loaded into."""


class StalledStep(LdgError):
    """Step size underflowed while trying to decrease the energy."""


class NonFinite(LdgError, FloatingPointError):
    """Energy or field became NaN/inf."""


class NoDefect(LdgError):
    """No cell is far enough from the projection manifold to be a defect core."""


class MultipleDefects(LdgError):
    """A second, well separated peak of distance-to-P was found."""


class CircleOutside(LdgError, ValueError):
    """Sampling circle leaves the interior of the domain."""


class DegenerateFit(LdgError, ValueError):
    """Too few or repeated samples for a least-squares line fit."""


class SolverDiverged(LdgError):
    """Linear solve did not reach the requested residual."""
