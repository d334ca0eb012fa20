"""Training engine for stair circuits.

The loss is the negative log fidelity per qubit,
``F = -(1/N) ln |<target| U |psi0>|``. Gradients with respect to the latent
matrices of one layer are computed analytically:

1. The ket below the layer and the bra above it (the target pulled back
   through the inverse of the higher layers) are held as MPS.
2. Left and right environments of the staircase are contracted exactly,
   giving ``E_m = dz/dW_m`` for every gate ``W_m`` of the layer, where ``z``
   is the overlap.
3. ``dF/dW_m = -conj(E_m) / (N conj(z))`` is pulled back through the
   unitary projection of the latent matrix.

Layers are updated one at a time with Adam, bottom to top, once per epoch.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .circuit import (
    StairCircuit,
    append_identity_layer,
    apply_circuit_mps,
    apply_layer_adjoint_mps,
    apply_layer_mps,
    init_first_layer,
)
from .errors import ArgumentError, DegenerateProjectionError, NumericalError, OrthogonalityError
from .mps import MatrixProductState, bond_entropies, overlap, product_state
from .tensor_core import DTYPE, complex_normal, make_rng, projection_pullback

log = logging.getLogger(__name__)

OVERLAP_FLOOR = 1e-300


@dataclass
class TrainConfig:
    eta0: float = 1e-2
    lr_halvings: int = 2
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    epochs_per_stage: int = 1000
    window: int = 50
    rel_tol: float = 1e-5
    chi_evolve: int | None = None
    chi_bra: int | None = None
    cutoff: float = 0.0
    svd_broadening: float = 1e-12
    epsilon_new_layer: float = 0.01
    seed: int = 0
    entropy_every: int = 10

    def __post_init__(self):
        if self.optimizer not in ("adam", "gd"):
            raise ArgumentError(f"optimizer must be 'adam' or 'gd', got {self.optimizer!r}")
        for name in ("eta0", "rel_tol", "svd_broadening", "epsilon_new_layer", "eps_adam"):
            if not getattr(self, name) > 0:
                raise ArgumentError(f"{name} must be positive")
        if self.epochs_per_stage < 1 or self.window < 1 or self.entropy_every < 1:
            raise ArgumentError("epochs_per_stage, window and entropy_every must be >= 1")
        if self.cutoff < 0:
            raise ArgumentError("cutoff must be non-negative")
        for name in ("chi_evolve", "chi_bra"):
            value = getattr(self, name)
            if value is not None and value < 4:
                raise ArgumentError(f"{name} must be >= 4")

    def evolve_cap(self, n_layers: int, target: MatrixProductState) -> int:
        if self.chi_evolve is not None:
            return self.chi_evolve
        return max(4, min(4**n_layers, 2 * max(target.bond_dims)))

    def bra_cap(self, n_layers: int, target: MatrixProductState) -> int:
        if self.chi_bra is not None:
            return self.chi_bra
        return max(self.evolve_cap(n_layers, target), max(target.bond_dims))

    def learning_rate(self, t: int) -> float:
        """Step-halving schedule, restarted at every stage (``t`` counts from 0)."""
        return self.eta0 * 0.5 ** math.floor(self.lr_halvings * t / self.epochs_per_stage)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ArgumentError(f"unknown training keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, shape, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        real_shape = tuple(shape) + (2,)
        return cls(np.zeros(real_shape), np.zeros(real_shape), 0, beta1, beta2, eps)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, eta: float):
    """One bias-corrected Adam update; real and imaginary parts are separate parameters.

    ``grads`` follows the ``dL/dRe + i dL/dIm`` convention. Returns the new
    parameters and the new state; inputs are not modified.
    """
    p = np.ascontiguousarray(params, dtype=DTYPE).view(np.float64).reshape(state.m.shape)
    g = np.ascontiguousarray(grads, dtype=DTYPE).view(np.float64).reshape(state.m.shape)
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * g
    v = state.beta2 * state.v + (1 - state.beta2) * g * g
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    new = p - eta * m_hat / (np.sqrt(v_hat) + state.eps)
    new_params = np.ascontiguousarray(new).view(DTYPE).reshape(np.shape(params))
    return new_params, AdamState(m, v, t, state.beta1, state.beta2, state.eps)


@dataclass
class MetricsRecord:
    epoch: int
    n_layers: int
    loss: float
    avg_entropy: float
    entropies: np.ndarray
    truncation_error: float
    eta: float
    wall_ms: float


@dataclass
class StageSummary:
    n_layers: int
    epochs: int
    final_loss: float
    best_loss: float
    converged: bool


@dataclass
class TrainResult:
    circuit: StairCircuit
    log: list = field(default_factory=list)
    stages: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Loss


def loss_from_overlap(z: complex, n_sites: int) -> float:
    mod = abs(z)
    if not np.isfinite(mod):
        raise NumericalError("overlap is not finite")
    if mod < OVERLAP_FLOOR:
        raise OrthogonalityError(f"overlap modulus {mod:.3e} below {OVERLAP_FLOOR:.0e}; loss undefined")
    return max(0.0, -math.log(mod) / n_sites)


def negative_log_fidelity(
    target: MatrixProductState,
    c: StairCircuit,
    psi0: MatrixProductState,
    chi_evolve: int,
    cutoff: float = 0.0,
    *,
    replay=None,
    record=None,
) -> tuple[float, complex, float]:
    """``(F, overlap, truncation_error)`` for the circuit applied to ``psi0``."""
    if target.n_sites != c.n_sites:
        raise ArgumentError(f"target has {target.n_sites} sites, circuit {c.n_sites}")
    psi, err = apply_circuit_mps(c, psi0, chi_evolve, cutoff, replay=replay, record=record)
    z = overlap(target, psi)
    return loss_from_overlap(z, c.n_sites), z, err


# ---------------------------------------------------------------------------
# Environments and gradients


def layer_environments(ket: MatrixProductState, bra: MatrixProductState, unitaries: np.ndarray):
    """Derivatives ``E_m = d<bra|L|ket>/dW_m`` for every gate of one stair layer ``L``.

    Returns ``(E, z)`` where ``E`` has shape ``(N-1, 4, 4)`` and
    ``z = <bra|L|ket> = sum(E_m * W_m)`` for any ``m``. The staircase is
    contracted exactly, without truncation.
    """
    n = ket.n_sites
    ks = ket.tensors
    bs = [b.conj() for b in bra.tensors]
    gs = [u.reshape(2, 2, 2, 2) for u in unitaries]  # [o_m, o_m+1, i_m, i_m+1]
    wire = np.eye(2, dtype=DTYPE).reshape(1, 1, 2, 2)

    # Right environments R[m]: sites m+2.., gates m+1..; axes (bra, ket, gate-in, gate-out).
    rights = [None] * (n - 1)
    rights[n - 2] = wire
    for m in range(n - 2, 0, -1):
        t = np.tensordot(ks[m + 1], rights[m], axes=(2, 1))  # (a, i, b', p, q)
        t = np.tensordot(t, bs[m + 1], axes=([2, 4], [2, 1]))  # (a, i, p, b)
        t = np.tensordot(t, gs[m], axes=([1, 2], [3, 1]))  # (a, b, o, x)
        rights[m - 1] = t.transpose(1, 0, 3, 2)

    envs = np.empty((n - 1, 4, 4), dtype=DTYPE)
    left = wire  # (bra, ket, gate-out into site m, gate-in from ket site m)
    for m in range(n - 1):
        t1 = np.tensordot(left, ks[m], axes=([1, 3], [0, 1]))  # (b, x, c)
        t1 = np.tensordot(t1, bs[m], axes=(0, 0))  # (x, c, o, d)
        t2 = np.tensordot(ks[m + 1], rights[m], axes=(2, 1))  # (c, i, b', p, q)
        t2 = np.tensordot(t2, bs[m + 1], axes=([2, 4], [2, 1]))  # (c, i, p, d)
        e = np.tensordot(t1, t2, axes=([1, 3], [0, 3]))  # (x, o, i, p)
        envs[m] = e.transpose(1, 3, 0, 2).reshape(4, 4)
        if m < n - 2:
            t3 = np.tensordot(t1, gs[m], axes=([0, 2], [2, 0]))  # (c, d, o', i')
            left = t3.transpose(1, 0, 2, 3)
    z = complex(np.sum(envs[0] * unitaries[0]))
    return envs, z


def gradients_from_environments(envs, z, n_sites, latents, delta):
    """Latent gradients (``dF/dRe + i dF/dIm``) from layer environments."""
    loss_from_overlap(z, n_sites)
    grad_w = -np.conj(envs) / (n_sites * np.conj(z))
    out = np.empty_like(grad_w)
    for m in range(len(latents)):
        out[m] = projection_pullback(latents[m], grad_w[m], delta)
    if not np.all(np.isfinite(out)):
        bad = int(np.argwhere(~np.isfinite(out))[0][0])
        s = np.linalg.svd(latents[bad], compute_uv=False)
        gap = float(np.min(s[:, None] + s[None, :]))
        raise NumericalError(f"non-finite gradient at gate {bad}; smallest singular-value sum {gap:.3e}")
    return out


def _bra_stack(target, c, chi_bra, cutoff):
    bras = [None] * c.n_layers
    bras[-1] = target
    for layer in range(c.n_layers - 1, 0, -1):
        bras[layer - 1], _ = apply_layer_adjoint_mps(bras[layer], c.unitaries[layer], chi_bra, cutoff)
    return bras


def loss_gradient(
    target: MatrixProductState,
    c: StairCircuit,
    psi0: MatrixProductState,
    active_layer: int,
    chi_evolve: int,
    delta: float = 1e-12,
    cutoff: float = 0.0,
    chi_bra: int | None = None,
) -> np.ndarray:
    """Gradient of the loss w.r.t. the latents of ``active_layer``.

    Returns an ``(N-1, 4, 4)`` complex array whose real part is ``dF/dRe`` and
    imaginary part ``dF/dIm`` of each latent entry.
    """
    if not 0 <= active_layer < c.n_layers:
        raise ArgumentError(f"active layer {active_layer} out of range")
    chi_bra = chi_bra or max(chi_evolve, max(target.bond_dims))
    ket = psi0
    for layer in range(active_layer):
        ket, _ = apply_layer_mps(ket, c.unitaries[layer], chi_evolve, cutoff)
    bra = target
    for layer in range(c.n_layers - 1, active_layer, -1):
        bra, _ = apply_layer_adjoint_mps(bra, c.unitaries[layer], chi_bra, cutoff)
    envs, z = layer_environments(ket, bra, c.unitaries[active_layer])
    return gradients_from_environments(envs, z, c.n_sites, c.latents[active_layer], delta)


# ---------------------------------------------------------------------------
# Training


def _replace_with_full_rank(c: StairCircuit, layer: int, latents: np.ndarray, rng) -> StairCircuit:
    for _ in range(10):
        try:
            return c.replace_layer(layer, latents)
        except DegenerateProjectionError:
            latents = latents.copy()
            for m, g in enumerate(latents):
                s = np.linalg.svd(g, compute_uv=False)
                if s[-1] <= 1e-14 * s[0]:
                    latents[m] = g + 1e-6 * max(s[0], 1.0) * complex_normal(rng, g.shape)
    return c.replace_layer(layer, latents)


def _gd_step(params, grads, eta):
    return params - eta * grads


def train_stage(
    target: MatrixProductState,
    c: StairCircuit,
    psi0: MatrixProductState,
    config: TrainConfig,
    stage: int | None = None,
    *,
    epoch_offset: int = 0,
    on_epoch: Callable[[MetricsRecord], None] | None = None,
) -> tuple[StairCircuit, list[MetricsRecord], StageSummary]:
    """Optimize all layers of ``c`` for one stage.

    Each epoch sweeps the layers bottom to top; each layer gets one gradient
    step. Stops after ``config.epochs_per_stage`` epochs or once the loss
    changed by less than ``rel_tol`` (relative) over the last ``window``
    epochs. Adam moments start from zero at every stage.
    """
    n_layers = c.n_layers
    if stage is not None and stage != n_layers:
        raise ArgumentError(f"stage {stage} does not match circuit with {n_layers} layers")
    n = c.n_sites
    chi_evolve = config.evolve_cap(n_layers, target)
    chi_bra = config.bra_cap(n_layers, target)
    rng = make_rng(config.seed * 7919 + n_layers)
    adam = [AdamState.zeros(c.latents[0].shape, config.beta1, config.beta2, config.eps_adam) for _ in range(n_layers)]
    records: list[MetricsRecord] = []
    losses: list[float] = []
    converged = False
    for t in range(config.epochs_per_stage):
        start = time.perf_counter()
        eta = config.learning_rate(t)
        bras = _bra_stack(target, c, chi_bra, config.cutoff)
        ket, trunc = psi0, 0.0
        for layer in range(n_layers):
            envs, z = layer_environments(ket, bras[layer], c.unitaries[layer])
            grads = gradients_from_environments(envs, z, n, c.latents[layer], config.svd_broadening)
            if config.optimizer == "adam":
                new, adam[layer] = adam_step(adam[layer], c.latents[layer], grads, eta)
            else:
                new = _gd_step(c.latents[layer], grads, eta)
            c = _replace_with_full_rank(c, layer, new, rng)
            ket, err = apply_layer_mps(ket, c.unitaries[layer], chi_evolve, config.cutoff)
            trunc += err
        loss = loss_from_overlap(overlap(target, ket), n)
        entropies = bond_entropies(ket, check_norm=False)
        rec = MetricsRecord(
            epoch=epoch_offset + t + 1,
            n_layers=n_layers,
            loss=loss,
            avg_entropy=float(np.mean(entropies)),
            entropies=entropies,
            truncation_error=trunc,
            eta=eta,
            wall_ms=(time.perf_counter() - start) * 1e3,
        )
        records.append(rec)
        losses.append(loss)
        if on_epoch is not None:
            on_epoch(rec)
        if t % 50 == 0:
            log.info("n_L=%d epoch %d: F=%.6e S_avg=%.4f", n_layers, t + 1, loss, rec.avg_entropy)
        w = config.window
        if len(losses) > w and abs(losses[-1 - w] - loss) <= config.rel_tol * max(abs(loss), 1e-12):
            converged = True
            break
    summary = StageSummary(n_layers, len(records), losses[-1], min(losses), converged)
    return c, records, summary


def grow_and_train(
    target: MatrixProductState,
    n_layers: int,
    config: TrainConfig,
    psi0: MatrixProductState | None = None,
    *,
    on_epoch: Callable[[MetricsRecord], None] | None = None,
    on_stage: Callable[[StairCircuit, StageSummary], None] | None = None,
    initial: StairCircuit | None = None,
) -> TrainResult:
    """Layer-growth protocol: train one layer, then repeatedly append a
    near-identity layer and retrain all layers, until ``n_layers`` layers."""
    if n_layers < 1:
        raise ArgumentError("n_layers must be >= 1")
    n = target.n_sites
    psi0 = psi0 if psi0 is not None else product_state([0] * n)
    c = initial if initial is not None else init_first_layer(n, config.seed)
    result = TrainResult(c)
    epoch = 0
    while True:
        c, records, summary = train_stage(target, c, psi0, config, c.n_layers, epoch_offset=epoch, on_epoch=on_epoch)
        epoch += len(records)
        result.log.extend(records)
        result.stages.append(summary)
        result.circuit = c
        if on_stage is not None:
            on_stage(c, summary)
        if c.n_layers >= n_layers:
            break
        c = append_identity_layer(c, config.epsilon_new_layer, seed=config.seed * 1000 + c.n_layers + 1)
    return result
