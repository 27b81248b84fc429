"""Exception types shared across the package.

Every error raised on a bad input derives from FairsphereError so callers
(and the command line wrapper) can distinguish data problems from genuine
bugs. InvariantViolation is reserved for internal consistency failures,
such as the closed-form solution disagreeing with its brute-force check.
"""


class FairsphereError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(FairsphereError):
    """Vectors of different lengths were mixed, or a vector has a bad shape."""


class NonUnitInput(FairsphereError):
    """A vector that must be unit length is not, beyond tolerance."""


class ZeroVector(FairsphereError):
    """A vector with norm below 1e-12 cannot be normalized."""


class DegenerateSubspace(FairsphereError):
    """The prototype differences span nothing, so no subspace can be built."""


class UnknownReference(FairsphereError):
    """The requested reference group is not among the prototypes."""


class DuplicateGroup(FairsphereError):
    """The same group name appears more than once."""


class AntipodalCollapse(FairsphereError):
    """Prompt variants cancel each other, leaving no usable mean direction."""


class DegenerateInput(FairsphereError):
    """Component norms are outside the open domain the solver requires."""


class EmptyCell(FairsphereError):
    """A (class, group) cell has no sample, so its rate is undefined."""

    def __init__(self, class_name: str, group: str):
        self.class_name = class_name
        self.group = group
        super().__init__(f"no sample with true class {class_name!r} in group {group!r}")


class UndeclaredLabel(FairsphereError):
    """A sample or count carries a class or group outside the declared sets."""


class GroupAbsentFromCandidates(FairsphereError):
    """A declared group has no member in the retrieval candidate pool."""


class MTooLarge(FairsphereError):
    """The skew cutoff exceeds the number of candidates."""


class EmptyGeneration(FairsphereError):
    """A generation count table has a non-positive total."""


class MissingLabels(FairsphereError):
    """An embedding lacks the labels an evaluation task requires."""


class EmptyCandidates(FairsphereError):
    """Retrieval was asked to rank an empty candidate set."""


class DimensionTooSmall(FairsphereError):
    """The requested dimension cannot hold the planted directions."""


class MalformedHeader(FairsphereError):
    """A persisted file does not follow the documented layout."""


class DuplicateId(FairsphereError):
    """Two records in one embedding file share an id."""


class InvariantViolation(FairsphereError):
    """An internal consistency check failed; this indicates a bug."""
