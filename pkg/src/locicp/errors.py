"""Exception types raised across the registration pipeline."""


class LocIcpError(Exception):
    """Base class for all errors raised by this package."""


class TooFewMatches(LocIcpError):
    """Fewer than six correspondences; the 6-DoF update is underdetermined."""

    def __init__(self, count, minimum=6):
        super().__init__(f"only {count} correspondences, need at least {minimum}")
        self.count = count


class DegenerateNeighborhood(LocIcpError):
    """Normal estimation failed because every neighborhood is (near) collinear."""


class NonFiniteUpdate(LocIcpError):
    """An ICP iteration produced a NaN or Inf pose update."""


class FrameMismatch(LocIcpError):
    """Two inputs that must share a coordinate frame do not."""

    def __init__(self, expected, got):
        super().__init__(f"frame mismatch: expected {expected!r}, got {got!r}")


class EmptySelection(LocIcpError):
    """Re-sampling found no pairs for a partially localizable direction."""


class IllConditioned(LocIcpError):
    """A re-sampled partial-constraint system could not be solved reliably."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class SingularKKT(LocIcpError):
    """The augmented constrained system is singular.

    This happens when a null direction of the Hessian is left without a
    constraint row. ``eigenvalue`` is the smallest eigenvalue of the Hessian
    restricted to the unconstrained subspace.
    """

    def __init__(self, eigenvalue, rank, size):
        super().__init__(
            f"augmented system has rank {rank} < {size}; "
            f"unconstrained Hessian eigenvalue {eigenvalue:.3e}"
        )
        self.eigenvalue = eigenvalue
        self.rank = rank


class EmptyScan(LocIcpError):
    """The simulated sensor sees no world points."""


class EmptyAssociation(LocIcpError):
    """No pose pairs could be associated between two trajectories."""
