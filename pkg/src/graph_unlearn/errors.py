"""Exception hierarchy.

Every error carries a stable ``exit_code`` so the CLI can map failures to
process exit status without string matching.
"""


class GraphUnlearnError(Exception):
    exit_code = 1


# graph-core
class OutOfRange(GraphUnlearnError, ValueError):
    exit_code = 10


class ShapeMismatch(GraphUnlearnError, ValueError):
    exit_code = 11


class NonFinite(GraphUnlearnError, ValueError):
    exit_code = 12


class InvalidRatio(GraphUnlearnError, ValueError):
    exit_code = 13


class KindMismatch(GraphUnlearnError, ValueError):
    exit_code = 14


class EmptyRequest(GraphUnlearnError, ValueError):
    exit_code = 15


class MissingTarget(GraphUnlearnError, KeyError):
    exit_code = 16

    def __str__(self):
        return Exception.__str__(self)


class InvalidProbability(GraphUnlearnError, ValueError):
    exit_code = 17


# gnn-engine
class MissingLabels(GraphUnlearnError, ValueError):
    exit_code = 20


class NoEdges(GraphUnlearnError, ValueError):
    exit_code = 21


# unlearn-suite
class InvalidK(GraphUnlearnError, ValueError):
    exit_code = 30


class CGDiverged(GraphUnlearnError, ArithmeticError):
    exit_code = 31


class WrongBackbone(GraphUnlearnError, ValueError):
    exit_code = 32


# adversary
class EmptySet(GraphUnlearnError, ValueError):
    exit_code = 40


class InsufficientCandidates(GraphUnlearnError, ValueError):
    exit_code = 41


# metrics
class LengthMismatch(GraphUnlearnError, ValueError):
    exit_code = 50


class SingleClass(GraphUnlearnError, ValueError):
    exit_code = 51


# harness
class ParseError(GraphUnlearnError, ValueError):
    exit_code = 60


class UnknownMethod(GraphUnlearnError, ValueError):
    exit_code = 61


class UnsupportedCombination(GraphUnlearnError, ValueError):
    exit_code = 62


class IoError(GraphUnlearnError, OSError):
    exit_code = 63


class StageError(GraphUnlearnError):
    """Wraps a failure with the pipeline stage it came from."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
