"""Exception hierarchy shared across the package.

The CLI maps these onto its exit codes: usage/config problems -> 2,
domain errors (coverage, reachability, unreachable voltage) -> 3,
numerical failures -> 4.
"""


class RcdcmError(Exception):
    """Base class for all package errors."""


class NetlistError(RcdcmError):
    """Netlist syntax or semantic problem; carries a 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SingularNetworkError(RcdcmError):
    """The repaired network is still not solvable; reports the isolated node set."""

    def __init__(self, message, isolated_nodes=()):
        super().__init__(message)
        self.isolated_nodes = tuple(isolated_nodes)


class CoverageError(RcdcmError):
    """A requested capacitance lies outside the characterized grid."""


class VoltageNotReachedError(RcdcmError):
    """A voltage level is never crossed within the stored window."""


class NonSettlingError(RcdcmError):
    """A characterization transient failed to settle within the window budget."""


class ConvergenceError(RcdcmError):
    """Newton/fixed-point iteration failed; carries the simulation time."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class PreconditionError(RcdcmError):
    """A numerical precondition (step size, ordering, range) is violated."""
