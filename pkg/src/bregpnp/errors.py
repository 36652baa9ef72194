"""Exception types shared across the package."""


class BregpnpError(Exception):
    """Base class for library-specific failures."""


class DimensionError(BregpnpError, ValueError):
    """Kernel or image dimensions are incompatible."""


class ShapeMismatchError(BregpnpError, ValueError):
    """Two arrays that must share a shape do not."""


class DomainError(BregpnpError, ValueError):
    """Input lies outside the domain of a reference function or operator."""


class DualDomainError(DomainError):
    """Dual point lies outside the range of the reference-function gradient."""


class UnsupportedPairError(BregpnpError, ValueError):
    """No smoothness constant or proximal map exists for the combination."""


class StepError(BregpnpError, RuntimeError):
    """A mirror step left the dual domain with safeguarding disabled."""


class SafeguardExhaustedError(BregpnpError, RuntimeError):
    """Step-size halving hit its budget without restoring feasibility."""
