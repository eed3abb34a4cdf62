"""
Exception types raised by the allocation toolkit.
"""
from typing import Any, Optional


class CapallocError(Exception):
    """Base class for every error raised by capalloc."""


class GappedSupport(CapallocError, ValueError):
    """A distribution claimed to have interval support has an interior zero."""


class DisjointSupports(CapallocError, ValueError):
    """Reweighting produced a zero total mass."""


class IndexMismatch(CapallocError, ValueError):
    """An allocation does not index exactly the edges of its graph."""


class TooLarge(CapallocError):
    """An exhaustive enumeration would exceed its guard."""


class NotATree(CapallocError, ValueError):
    """A tree-only routine received a graph with a cycle."""


class ZeroMass(CapallocError, ValueError):
    """A size-biased law was requested for a capacity no atom carries."""


class InconsistentLaws(CapallocError, ValueError):
    """Two vertex laws violate the edge-capacity consistency relation."""


class BracketFailure(CapallocError):
    """The bisection predicate does not change sign on the initial bracket."""


class ParseError(CapallocError, ValueError):
    """An input file could not be parsed or failed schema validation."""


class InvalidParams(CapallocError, ValueError):
    """Parameters violate a documented constraint."""


class InvariantViolation(CapallocError, AssertionError):
    """An invariant asserted during an iteration failed."""


class NoConvergence(CapallocError):
    """An iteration hit its sweep cap before reaching the tolerance."""

    def __init__(self, message: str, sweeps: int, last: Optional[Any] = None):
        super().__init__(message)
        self.sweeps = sweeps
        self.last = last
