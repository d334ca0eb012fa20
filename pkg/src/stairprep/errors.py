"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes, so every failure raised by the library
belongs to one of three classes: bad arguments, numerical trouble, or a
capacity guard.
"""


class StairPrepError(Exception):
    """Base class for all library errors."""


class ArgumentError(StairPrepError, ValueError):
    """Invalid argument values or incompatible inputs."""


class DimensionError(ArgumentError):
    """Shape mismatch between tensors."""


class RankError(ArgumentError):
    """Tensor of the wrong order (e.g. a non-matrix passed to an SVD)."""


class StateError(ArgumentError):
    """An MPS that violates a precondition (e.g. not normalized)."""


class GateError(ArgumentError):
    """A gate that is not unitary."""


class NumericalError(StairPrepError, ArithmeticError):
    """Non-convergence or non-finite values in a numerical routine."""


class DegenerateProjectionError(NumericalError):
    """Unitary projection of a rank-deficient latent matrix is not unique."""


class OrthogonalityError(NumericalError):
    """Overlap too small for the log-fidelity loss to be defined."""


class CapacityError(StairPrepError):
    """Problem size above a hard guard (dense oracles)."""
