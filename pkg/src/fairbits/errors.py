"""Exception types shared across the workbench."""


class FairbitsError(Exception):
    """Base class for all workbench errors."""


class UsageError(FairbitsError):
    """A documented precondition was violated by the caller."""


class CapacityError(FairbitsError):
    """The instance is too large for an exact brute-force oracle."""


class InfeasibleFamilyError(UsageError):
    """Instance-generator parameters violate a family constraint."""


class ProtocolFailure(FairbitsError):
    """An invariant that provably always holds was breached: a bug signal,
    never an expected runtime outcome."""


class ReplayError(FairbitsError):
    """A recorded transcript does not match the protocol's query sequence."""


class ParseError(FairbitsError):
    """Base class for text-format errors."""


class MalformedError(ParseError):
    """Input text does not follow the expected line structure."""


class VersionError(ParseError):
    """Input text declares an unsupported format version."""


class ShapeError(ParseError):
    """Field values are inconsistent (matrix shape, scale, kind constraints)."""
