"""Stair-like layered circuits of latent two-qubit gates.

Every layer holds ``N-1`` unconstrained 4x4 latent matrices, one per
neighbouring pair, applied in ascending order ``(0,1), (1,2), ..., (N-2,N-1)``.
The gate actually applied is the unitary projection of its latent matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError, CapacityError, DegenerateProjectionError, DimensionError
from .mps import MAX_DENSE_SITES, MatrixProductState, _apply_gate, canonicalize, mps_param_count
from .tensor_core import DTYPE, complex_normal, make_rng, project_to_unitary

LAYOUT = "stair-ascending"


@dataclass(frozen=True)
class LatentGate:
    matrix: np.ndarray
    site: int
    layer: int


@dataclass(frozen=True, eq=False)
class StairCircuit:
    """Immutable circuit: latent matrices per layer plus their projected unitaries.

    ``latents[l]`` and ``unitaries[l]`` are arrays of shape ``(N-1, 4, 4)``.
    Construct with :meth:`from_latents`, which projects every gate.
    """

    n_sites: int
    latents: tuple
    unitaries: tuple
    seed_history: tuple = ()

    @classmethod
    def from_latents(cls, n_sites: int, latents: Sequence[np.ndarray], seed_history=(), unitaries=None):
        if n_sites < 2:
            raise ArgumentError("circuit needs N >= 2")
        lat = []
        for layer, block in enumerate(latents):
            block = np.array(block, dtype=DTYPE)
            if block.shape != (n_sites - 1, 4, 4):
                raise DimensionError(f"layer {layer}: expected shape {(n_sites - 1, 4, 4)}, got {block.shape}")
            block.flags.writeable = False
            lat.append(block)
        if unitaries is None:
            unitaries = [None] * len(lat)
        units = []
        for layer, (block, cached) in enumerate(zip(lat, unitaries)):
            if cached is None:
                cached = project_layer(block, layer)
            cached = np.asarray(cached)
            cached.flags.writeable = False
            units.append(cached)
        return cls(n_sites, tuple(lat), tuple(units), tuple(seed_history))

    @property
    def n_layers(self) -> int:
        return len(self.latents)

    def gates(self, layer: int) -> list[LatentGate]:
        return [LatentGate(m, site, layer) for site, m in enumerate(self.latents[layer])]

    def replace_layer(self, layer: int, latents: np.ndarray) -> "StairCircuit":
        """New circuit with one layer's latents swapped; other caches are reused."""
        lat = list(self.latents)
        units = list(self.unitaries)
        lat[layer] = latents
        units[layer] = None
        return StairCircuit.from_latents(self.n_sites, lat, self.seed_history, units)


def project_layer(block: np.ndarray, layer: int = 0) -> np.ndarray:
    out = np.empty_like(block)
    for site, m in enumerate(block):
        try:
            out[site] = project_to_unitary(m)
        except DegenerateProjectionError as exc:
            raise DegenerateProjectionError(f"layer {layer}, site {site}: {exc}") from exc
    return out


def init_first_layer(n_sites: int, seed: int) -> StairCircuit:
    """One layer of latents with i.i.d. complex standard-normal entries."""
    if n_sites < 2:
        raise ArgumentError("circuit needs N >= 2")
    rng = make_rng(seed)
    block = complex_normal(rng, (n_sites - 1, 4, 4))
    return StairCircuit.from_latents(n_sites, [block], seed_history=(("init", int(seed)),))


def append_identity_layer(c: StairCircuit, epsilon: float = 0.01, seed: int = 0) -> StairCircuit:
    """Add a last layer of latents ``I + epsilon * R`` (R complex Gaussian)."""
    if not epsilon > 0:
        raise ArgumentError("epsilon must be positive")
    rng = make_rng(seed)
    block = np.eye(4, dtype=DTYPE)[None] + epsilon * complex_normal(rng, (c.n_sites - 1, 4, 4))
    history = c.seed_history + (("append", int(seed), float(epsilon)),)
    return StairCircuit.from_latents(
        c.n_sites, list(c.latents) + [block], history, list(c.unitaries) + [None]
    )


def identity_circuit(n_sites: int, n_layers: int = 1) -> StairCircuit:
    block = np.broadcast_to(np.eye(4, dtype=DTYPE), (n_sites - 1, 4, 4))
    return StairCircuit.from_latents(n_sites, [block] * n_layers)


def random_circuit(n_sites: int, n_layers: int, seed: int) -> StairCircuit:
    """All layers random (used for tests and oracle checks)."""
    rng = make_rng(seed)
    blocks = [complex_normal(rng, (n_sites - 1, 4, 4)) for _ in range(n_layers)]
    return StairCircuit.from_latents(n_sites, blocks, seed_history=(("random", int(seed)),))


def gate_unitaries(c: StairCircuit) -> list[np.ndarray]:
    """Projected unitaries, layer by layer, ascending site within a layer."""
    return [u for block in c.unitaries for u in block]


# ---------------------------------------------------------------------------
# Application


def apply_layer_mps(psi, unitaries, chi_max, cutoff=0.0, replay=None, record=None):
    """Apply one stair layer (ascending) to an MPS.

    ``replay`` is an iterator of kept ranks from an earlier pass; ``record``
    is a list that receives the kept ranks of this pass.
    """
    psi = canonicalize(psi, 0)
    total = 0.0
    for site, gate in enumerate(unitaries):
        keep = next(replay) if replay is not None else None
        psi, err, kept = _apply_gate(psi, gate, site, chi_max, cutoff, "right", keep)
        total += err
        if record is not None:
            record.append(kept)
    return psi, total


def apply_layer_adjoint_mps(psi, unitaries, chi_max, cutoff=0.0):
    """Apply the inverse of a stair layer: daggered gates in descending order."""
    n = psi.n_sites
    psi = canonicalize(psi, n - 1)
    total = 0.0
    for site in range(n - 2, -1, -1):
        psi, err, _ = _apply_gate(psi, unitaries[site].conj().T, site, chi_max, cutoff, "left")
        total += err
    return psi, total


def apply_circuit_mps(
    c: StairCircuit,
    psi0: MatrixProductState,
    chi_max: int,
    cutoff: float = 0.0,
    *,
    replay: Sequence[int] | None = None,
    record: list | None = None,
) -> tuple[MatrixProductState, float]:
    """Evolve ``psi0`` through all layers; returns the state and summed truncation error.

    Passing the ``record`` list from a previous call as ``replay`` repeats that
    pass with exactly the same number of kept singular values at every split.
    """
    if psi0.n_sites != c.n_sites:
        raise ArgumentError(f"state has {psi0.n_sites} sites, circuit {c.n_sites}")
    it = iter(replay) if replay is not None else None
    psi, total = psi0, 0.0
    for block in c.unitaries:
        psi, err = apply_layer_mps(psi, block, chi_max, cutoff, it, record)
        total += err
    return psi, total


def apply_gate_statevector(v: np.ndarray, gate: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    psi = v.reshape((2**site, 4, 2 ** (n_sites - site - 2)))
    return np.einsum("ab,xbz->xaz", gate, psi).reshape(-1)


def apply_circuit_statevector(c: StairCircuit, v: np.ndarray) -> np.ndarray:
    """Exact dense application in the same gate order as :func:`apply_circuit_mps`."""
    if c.n_sites > MAX_DENSE_SITES:
        raise CapacityError(f"dense application limited to N <= {MAX_DENSE_SITES}")
    v = np.asarray(v, dtype=DTYPE).reshape(-1)
    if v.size != 2**c.n_sites:
        raise DimensionError(f"vector length {v.size} != 2**{c.n_sites}")
    for block in c.unitaries:
        for site, gate in enumerate(block):
            v = apply_gate_statevector(v, gate, site, c.n_sites)
    return v


# ---------------------------------------------------------------------------
# Parameter accounting


def circuit_param_count(n_sites: int, n_layers: int) -> int:
    """Complex latent entries: 16 per gate, ``N-1`` gates per layer."""
    if n_sites < 2 or n_layers < 0:
        raise ArgumentError("need N >= 2 and n_layers >= 0")
    return 16 * (n_sites - 1) * n_layers


def compression_ratio(n_sites: int, chi: int, n_layers: int) -> tuple[float, float]:
    """``(r, r0)``: circuit/MPS parameter ratio, and the same ratio for one layer."""
    if n_layers < 0:
        raise ArgumentError("n_layers must be >= 0")
    r0 = circuit_param_count(n_sites, 1) / mps_param_count(n_sites, chi)
    return n_layers * r0, r0
