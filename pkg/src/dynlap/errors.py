"""Exception types shared across the package."""


class DynlapError(Exception):
    """Base class for all package-specific errors."""


class OutOfDomainError(DynlapError):
    """A point fell outside a non-periodic axis range."""


class IntegrationError(DynlapError):
    """Numerical blow-up or boundary excursion during flow integration."""


class CompositionError(DynlapError):
    """Flow maps with mismatched domains cannot be composed."""


class UlamError(DynlapError):
    """A test point left the image domain during transition-matrix assembly."""


class DimensionError(DynlapError):
    """Operands live on incompatible grids or have mismatched shapes."""


class GridTooCoarseError(DynlapError):
    """Stencil assembly needs at least three boxes along a non-periodic axis."""


class ConfigurationError(DynlapError):
    """Invalid run configuration, weights, or expression syntax."""


class EigensolverError(DynlapError):
    """Eigensolver failed to converge or to meet the residual tolerance."""


class ComplexSpectrumError(EigensolverError):
    """Leading eigenvalues acquired a non-negligible imaginary part."""


class DegenerateFieldError(DynlapError):
    """An operation that needs a non-constant field received a constant one."""


class TransportError(DynlapError):
    """A transported curve vertex left a non-periodic domain."""


class UnsupportedIsometryError(DynlapError):
    """Frame-change checks support whole-box translations along periodic axes only."""


class KernelResolutionError(DynlapError):
    """Smoothing radius is too small for the grid resolution."""


class RenderError(DynlapError):
    """Raster output cannot be produced."""
