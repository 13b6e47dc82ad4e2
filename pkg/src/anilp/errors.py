"""Exception hierarchy shared by all anilp modules."""


class AnilpError(Exception):
    """Base class for all library errors."""


class NotExpansive(AnilpError):
    """Matrix has an eigenvalue of modulus <= 1."""


class Singular(AnilpError):
    """Matrix determinant is zero."""


class TruncationTooSmall(AnilpError):
    """Series truncation does not meet the requested tail bound."""


class PeriodTooSmall(AnilpError):
    """Filter tail mass outside the half-period exceeds tolerance."""


class AliasingRisk(AnilpError):
    """Dilated filter is not resolvable on the grid (Nyquist check failed)."""


class GridMismatch(AnilpError):
    """Operands live on different grids."""


class ScaleUnresolvable(AnilpError):
    """Requested scale range cannot be rasterized on the grid."""


class NotNested(AnilpError):
    """Nested cube family unavailable (dilation not diagonal integer)."""


class LatticeMisaligned(AnilpError):
    """Cube corners of the requested levels do not land on grid points."""


class CoverageGap(AnilpError):
    """Some nonzero frequency is covered by no frame band."""


class SpectrumUncovered(AnilpError):
    """Input field carries all its energy outside the covered bands."""


class ParameterInadmissible(AnilpError):
    """Parameters violate the admissibility range of the checked inequality."""


class ConfigInvalid(AnilpError):
    """Experiment configuration failed validation."""
