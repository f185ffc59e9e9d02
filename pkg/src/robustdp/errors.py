"""Exception types shared across the package."""


class RobustDPError(Exception):
    """Base class for all package errors."""


class NotInBody(RobustDPError):
    """A chord or chain was started from a point the oracle rejects."""


class Unbounded(RobustDPError):
    """No rejecting point was found within the oracle's outer radius."""


class BudgetExceeded(RobustDPError):
    """A brute-force enumeration would exceed its lattice-point budget."""


class IterationLimit(RobustDPError):
    """Isotropic rounding exceeded its volume-halving iteration bound."""


class RejectionBudgetExceeded(RobustDPError):
    """The perturb-round-reject stage ran out of retries."""


class SamplerFailure(RobustDPError):
    """A sampling subroutine failed; probability is folded into the caller's bound."""


class DegreeOverflow(RobustDPError):
    """A constraint times its localizer exceeds the basis degree."""


class NotPSD(RobustDPError):
    """A covariance argument is not positive semidefinite."""


class ConstraintUnverified(RobustDPError):
    """An operator failed the constraint checks required before use."""
