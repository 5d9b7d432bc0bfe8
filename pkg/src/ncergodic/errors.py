"""Exception hierarchy shared by all modules."""


class NCErgodicError(Exception):
    """Base class for library errors."""


class StructuralError(NCErgodicError, ValueError):
    """Shapes or block structures do not match."""


class DomainError(NCErgodicError, ValueError):
    """An argument lies outside the domain of an operation."""


class HypothesisNotMet(NCErgodicError):
    """The hypothesis of a checked inequality does not hold.

    Distinct from a violation of the inequality itself: the check was
    not applicable to the given input.
    """


class NumericError(NCErgodicError, ArithmeticError):
    """A numerical procedure failed to produce a finite answer."""


class ResourceError(NCErgodicError, RuntimeError):
    """A computation was refused because it exceeds a size guard."""


class InvariantError(NCErgodicError, AssertionError):
    """A postcondition that must hold by construction was violated."""


class ConfigError(NCErgodicError, ValueError):
    """A scenario configuration is invalid."""
