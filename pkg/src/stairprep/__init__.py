"""Synthesis of stair-like two-qubit circuits that prepare MPS target states.

Latent 4x4 matrices are projected onto unitaries by their SVD, and the
latents are trained by gradient descent on the negative log fidelity.
"""

from .circuit import (
    StairCircuit,
    append_identity_layer,
    apply_circuit_mps,
    apply_circuit_statevector,
    circuit_param_count,
    compression_ratio,
    gate_unitaries,
    init_first_layer,
)
from .mps import (
    MatrixProductState,
    average_entropy,
    bond_entropies,
    bond_entropy,
    mps_param_count,
    overlap,
    product_state,
    random_mps,
)
from .optimizer import TrainConfig, grow_and_train, loss_gradient, negative_log_fidelity, train_stage

__version__ = "0.1.0"

__all__ = [
    "StairCircuit",
    "append_identity_layer",
    "apply_circuit_mps",
    "apply_circuit_statevector",
    "circuit_param_count",
    "compression_ratio",
    "gate_unitaries",
    "init_first_layer",
    "MatrixProductState",
    "average_entropy",
    "bond_entropies",
    "bond_entropy",
    "mps_param_count",
    "overlap",
    "product_state",
    "random_mps",
    "TrainConfig",
    "grow_and_train",
    "loss_gradient",
    "negative_log_fidelity",
    "train_stage",
]
