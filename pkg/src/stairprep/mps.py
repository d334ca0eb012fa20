"""Open-boundary matrix product states of qubits.

Site tensors carry axes ``(left, physical, right)`` with boundary bonds of
extent 1. States are immutable: every operation returns a new
:class:`MatrixProductState` and never writes into an existing one.

Bond ``n`` (``1 <= n <= N-1``) is the cut between sites ``n-1`` and ``n`` in
zero-based site numbering, i.e. ``n`` qubits sit on its left.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError, CapacityError, DimensionError, GateError, StateError
from .tensor_core import DTYPE, complex_normal, make_rng, truncated_svd

MAX_DENSE_SITES = 20
ENTROPY_FLOOR = 1e-15


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class MatrixProductState:
    """Chain of rank-3 tensors ``(chi_left, 2, chi_right)``.

    ``center`` is the orthogonality center when the state is known to be in
    mixed-canonical form, else ``None``. ``max_bond`` records the bond cap the
    state was produced with (informational).
    """

    tensors: tuple
    center: int | None = None
    max_bond: int | None = None

    def __post_init__(self):
        tensors = tuple(_frozen(np.array(t, dtype=DTYPE)) for t in self.tensors)
        object.__setattr__(self, "tensors", tensors)
        _validate(tensors, self.center)
        if self.max_bond is None:
            object.__setattr__(self, "max_bond", max(self.bond_dims, default=1))

    @classmethod
    def _trusted(cls, tensors, center, max_bond=None) -> "MatrixProductState":
        # Skips copying and validation; callers guarantee consistent shapes.
        obj = object.__new__(cls)
        tensors = tuple(_frozen(t) if t.flags.writeable else t for t in tensors)
        object.__setattr__(obj, "tensors", tensors)
        object.__setattr__(obj, "center", center)
        if max_bond is None:
            max_bond = max((t.shape[2] for t in tensors[:-1]), default=1)
        object.__setattr__(obj, "max_bond", max_bond)
        return obj

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        """Extents of the ``N-1`` internal bonds."""
        return [t.shape[2] for t in self.tensors[:-1]]

    def __len__(self) -> int:
        return len(self.tensors)


def _validate(tensors, center) -> None:
    if len(tensors) < 2:
        raise ArgumentError("an MPS needs at least two sites")
    for n, t in enumerate(tensors):
        if t.ndim != 3:
            raise DimensionError(f"site {n}: expected order-3 tensor, got shape {t.shape}")
        if t.shape[1] != 2:
            raise DimensionError(f"site {n}: physical extent must be 2, got {t.shape[1]}")
    if tensors[0].shape[0] != 1 or tensors[-1].shape[2] != 1:
        raise DimensionError("boundary bonds must have extent 1")
    for n in range(len(tensors) - 1):
        if tensors[n].shape[2] != tensors[n + 1].shape[0]:
            raise DimensionError(
                f"bond {n + 1}: right extent {tensors[n].shape[2]} != left extent {tensors[n + 1].shape[0]}"
            )
    if center is not None and not 0 <= center < len(tensors):
        raise ArgumentError(f"center {center} out of range")
    for n, t in enumerate(tensors):
        if not np.all(np.isfinite(t)):
            raise StateError(f"site {n} has non-finite entries")


# ---------------------------------------------------------------------------
# Constructors


def product_state(bits: Sequence[int]) -> MatrixProductState:
    """Computational-basis product state, e.g. ``[0, 0, ..., 0]``."""
    bits = [int(b) for b in bits]
    if len(bits) < 2:
        raise ArgumentError("product_state needs N >= 2")
    if any(b not in (0, 1) for b in bits):
        raise ArgumentError(f"bits must be 0 or 1, got {bits}")
    tensors = []
    for b in bits:
        t = np.zeros((1, 2, 1), dtype=DTYPE)
        t[0, b, 0] = 1.0
        tensors.append(t)
    return MatrixProductState._trusted(tensors, center=0, max_bond=1)


def ghz_mps(n_sites: int) -> MatrixProductState:
    """(|0...0> + |1...1>) / sqrt(2) with bond dimension 2."""
    if n_sites < 2:
        raise ArgumentError("ghz_mps needs N >= 2")
    tensors = []
    for n in range(n_sites):
        left = 1 if n == 0 else 2
        right = 1 if n == n_sites - 1 else 2
        t = np.zeros((left, 2, right), dtype=DTYPE)
        for s in (0, 1):
            t[min(s, left - 1), s, min(s, right - 1)] = 1.0
        tensors.append(t)
    tensors[0] = tensors[0] / np.sqrt(2)
    return MatrixProductState._trusted(tensors, center=0, max_bond=2)


RANDOM_ENSEMBLES = ("gaussian", "isometric")


def random_mps(n_sites: int, chi: int, seed: int, ensemble: str = "gaussian") -> MatrixProductState:
    """Normalized random MPS.

    Bond ``n`` has extent ``min(chi, 2**n, 2**(N-n))``. With ``"gaussian"``
    every entry is i.i.d. complex Gaussian. With ``"isometric"`` each site
    tensor is the Q factor of such a Gaussian matrix reshaped ``(2*left,
    right)``, i.e. a Haar-random left isometry; these states sit closer to
    the maximal mid-chain entropy ``ln chi``. The result is brought into
    canonical form with center at site 0.
    """
    if n_sites < 2:
        raise ArgumentError("random_mps needs N >= 2")
    if chi < 1:
        raise ArgumentError("chi must be >= 1")
    if ensemble not in RANDOM_ENSEMBLES:
        raise ArgumentError(f"ensemble must be one of {RANDOM_ENSEMBLES}, got {ensemble!r}")
    rng = make_rng(seed)
    dims = [1] + [_bond_cap(n, n_sites, chi) for n in range(1, n_sites)] + [1]
    tensors = []
    for n in range(n_sites):
        left, right = dims[n], dims[n + 1]
        g = complex_normal(rng, (left, 2, right))
        if ensemble == "isometric":
            q, r = np.linalg.qr(g.reshape(2 * left, right))
            d = np.diagonal(r)
            g = (q * np.where(d == 0, 1.0, d / np.abs(d))).reshape(left, 2, right)
        tensors.append(g)
    psi = MatrixProductState._trusted(tensors, center=None, max_bond=chi)
    return normalize(canonicalize(psi, 0))


def _bond_cap(n: int, n_sites: int, chi: int) -> int:
    cap = chi
    for k in (n, n_sites - n):
        if k < 63:
            cap = min(cap, 2**k)
    return cap


def from_statevector(v: np.ndarray, chi_max: int | None = None, cutoff: float = 0.0) -> MatrixProductState:
    """Successive-SVD decomposition of a dense ``2**N`` vector (center at N-1)."""
    v = np.asarray(v, dtype=DTYPE).reshape(-1)
    n_sites = int(round(np.log2(v.size)))
    if 2**n_sites != v.size or n_sites < 2:
        raise DimensionError(f"length {v.size} is not 2**N with N >= 2")
    if n_sites > MAX_DENSE_SITES:
        raise CapacityError(f"dense vectors limited to N <= {MAX_DENSE_SITES}")
    chi_max = chi_max or 2**n_sites
    tensors = []
    rest = v.reshape(1, -1)
    for n in range(n_sites - 1):
        left = rest.shape[0]
        m = rest.reshape(left * 2, -1)
        f = truncated_svd(m, chi_max, cutoff)
        tensors.append(f.u.reshape(left, 2, f.rank))
        rest = f.s[:, None] * f.vh
    tensors.append(rest.reshape(rest.shape[0], 2, 1))
    return MatrixProductState._trusted(tensors, center=n_sites - 1)


# ---------------------------------------------------------------------------
# Canonical forms


def _left_qr(a: np.ndarray, nxt: np.ndarray):
    l, d, r = a.shape
    q, rr = np.linalg.qr(a.reshape(l * d, r))
    k = q.shape[1]
    return q.reshape(l, d, k), np.tensordot(rr, nxt, axes=(1, 0))


def _right_lq(a: np.ndarray, prev: np.ndarray):
    l, d, r = a.shape
    q, rr = np.linalg.qr(a.reshape(l, d * r).conj().T)
    k = q.shape[1]
    return np.tensordot(prev, rr.conj().T, axes=(2, 0)), q.conj().T.reshape(k, d, r)


def canonicalize(psi: MatrixProductState, center: int) -> MatrixProductState:
    """Mixed-canonical form with orthogonality center at ``center``.

    Sites left of ``center`` become left isometries, sites right of it right
    isometries. The represented state is unchanged.
    """
    n_sites = psi.n_sites
    if not 0 <= center < n_sites:
        raise ArgumentError(f"center {center} out of range for N={n_sites}")
    tensors = list(psi.tensors)
    if psi.center is None:
        lo, hi = 0, n_sites - 1
    else:
        lo = hi = psi.center
    for n in range(lo, center):
        tensors[n], tensors[n + 1] = _left_qr(tensors[n], tensors[n + 1])
    for n in range(hi, center, -1):
        tensors[n - 1], tensors[n] = _right_lq(tensors[n], tensors[n - 1])
    return MatrixProductState._trusted(tensors, center=center, max_bond=psi.max_bond)


def norm(psi: MatrixProductState) -> float:
    if psi.center is not None:
        return float(np.linalg.norm(psi.tensors[psi.center]))
    return float(np.sqrt(abs(overlap(psi, psi))))


def normalize(psi: MatrixProductState) -> MatrixProductState:
    """Canonicalize (if needed) and rescale the center tensor to unit norm."""
    if psi.center is None:
        psi = canonicalize(psi, 0)
    nrm = norm(psi)
    if nrm == 0.0:
        raise StateError("cannot normalize the zero state")
    tensors = list(psi.tensors)
    tensors[psi.center] = tensors[psi.center] / nrm
    return MatrixProductState._trusted(tensors, center=psi.center, max_bond=psi.max_bond)


def scale(psi: MatrixProductState, factor: complex) -> MatrixProductState:
    """Multiply the state by a scalar (applied to the center or first site)."""
    k = psi.center if psi.center is not None else 0
    tensors = list(psi.tensors)
    tensors[k] = tensors[k] * factor
    return MatrixProductState._trusted(tensors, center=psi.center, max_bond=psi.max_bond)


# ---------------------------------------------------------------------------
# Contractions


def overlap(bra: MatrixProductState, ket: MatrixProductState) -> complex:
    """``<bra|ket>`` by a left-to-right transfer contraction."""
    if bra.n_sites != ket.n_sites:
        raise ArgumentError(f"site count mismatch: {bra.n_sites} vs {ket.n_sites}")
    env = np.ones((1, 1), dtype=DTYPE)
    for b, k in zip(bra.tensors, ket.tensors):
        # env[b, k] -> env[b', k']
        tmp = np.tensordot(env, k, axes=(1, 0))  # (b, s, k')
        env = np.tensordot(b.conj(), tmp, axes=([0, 1], [0, 1]))
    return complex(env[0, 0])


def to_statevector(psi: MatrixProductState) -> np.ndarray:
    """Dense amplitudes, site 0 as the most significant bit."""
    if psi.n_sites > MAX_DENSE_SITES:
        raise CapacityError(f"to_statevector limited to N <= {MAX_DENSE_SITES}, got {psi.n_sites}")
    v = psi.tensors[0].reshape(2, -1)
    for t in psi.tensors[1:]:
        l, d, r = t.shape
        v = (v @ t.reshape(l, d * r)).reshape(-1, r)
    return v.reshape(-1)


def schmidt_values(psi: MatrixProductState, n: int) -> np.ndarray:
    """Schmidt coefficients across bond ``n`` (unnormalized if psi is)."""
    if not 1 <= n < psi.n_sites:
        raise ArgumentError(f"bond index must be in 1..{psi.n_sites - 1}, got {n}")
    psi = canonicalize(psi, n - 1)
    a = psi.tensors[n - 1]
    l, d, r = a.shape
    return np.linalg.svd(a.reshape(l * d, r), compute_uv=False)


def _entropy(s: np.ndarray) -> float:
    p = s**2
    total = p.sum()
    if total == 0.0:
        return 0.0
    p = p / total
    p = p[p >= ENTROPY_FLOOR]
    return float(max(0.0, -np.sum(p * np.log(p))))


def _check_normalized(psi: MatrixProductState) -> None:
    nrm = norm(psi)
    if abs(nrm - 1.0) > 1e-6:
        raise StateError(f"state is not normalized (norm {nrm:.8f})")


def bond_entropy(psi: MatrixProductState, n: int) -> float:
    """Von Neumann entropy (natural log) of the bipartition at bond ``n``."""
    _check_normalized(psi)
    return _entropy(schmidt_values(psi, n))


def bond_entropies(psi: MatrixProductState, check_norm: bool = True) -> np.ndarray:
    """Entropies ``S_1 .. S_{N-1}`` from one right-to-left SVD sweep.

    Schmidt spectra are normalized before taking the entropy, so a slightly
    sub-normalized state (after truncation) can be profiled with
    ``check_norm=False``.
    """
    if check_norm:
        _check_normalized(psi)
    psi = canonicalize(psi, psi.n_sites - 1)
    tensors = list(psi.tensors)
    out = np.zeros(psi.n_sites - 1)
    for k in range(psi.n_sites - 1, 0, -1):
        a = tensors[k]
        l, d, r = a.shape
        u, s, vh = np.linalg.svd(a.reshape(l, d * r), full_matrices=False)
        out[k - 1] = _entropy(s)
        tensors[k] = vh.reshape(-1, d, r)
        tensors[k - 1] = np.tensordot(tensors[k - 1], u * s, axes=(2, 0))
    return out


def average_entropy(psi: MatrixProductState) -> float:
    """Mean of the bond entropies over all ``N-1`` bonds."""
    return float(np.mean(bond_entropies(psi)))


# ---------------------------------------------------------------------------
# Gate application


def is_unitary(m: np.ndarray, tol: float = 1e-10) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) <= tol


def _apply_gate(psi, gate, n, chi_max, cutoff, move="right", keep=None):
    """Apply a 4x4 gate on sites (n, n+1); returns (state, truncation error, kept rank)."""
    if psi.center not in (n, n + 1):
        psi = canonicalize(psi, n)
    a, b = psi.tensors[n], psi.tensors[n + 1]
    l, r = a.shape[0], b.shape[2]
    theta = np.tensordot(a, b, axes=(2, 0))  # (l, s1, s2, r)
    theta = np.tensordot(gate.reshape(2, 2, 2, 2), theta, axes=([2, 3], [1, 2]))  # (s1', s2', l, r)
    m = theta.transpose(2, 0, 1, 3).reshape(l * 2, 2 * r)
    f = truncated_svd(m, chi_max, cutoff, keep)
    k = f.rank
    tensors = list(psi.tensors)
    if move == "right":
        tensors[n] = f.u.reshape(l, 2, k)
        tensors[n + 1] = (f.s[:, None] * f.vh).reshape(k, 2, r)
        center = n + 1
    elif move == "left":
        tensors[n] = (f.u * f.s).reshape(l, 2, k)
        tensors[n + 1] = f.vh.reshape(k, 2, r)
        center = n
    else:
        raise ArgumentError(f"move must be 'left' or 'right', got {move!r}")
    out = MatrixProductState._trusted(tensors, center=center, max_bond=chi_max)
    return out, f.truncation_error, k


def apply_two_qubit_gate(
    psi: MatrixProductState,
    gate: np.ndarray,
    n: int,
    chi_max: int,
    cutoff: float = 0.0,
    move: str = "right",
) -> tuple[MatrixProductState, float]:
    """TEBD-style update of sites ``(n, n+1)`` with a 4x4 unitary.

    The gate's row/column index is ``2*s_n + s_{n+1}``. The pair is re-split
    by a truncated SVD; the orthogonality center ends on ``n+1`` for
    ``move="right"`` and on ``n`` for ``move="left"``. Kept singular values are
    not rescaled, so the discarded weight shows up as lost norm.
    """
    gate = np.asarray(gate, dtype=DTYPE)
    if gate.shape != (4, 4) or not is_unitary(gate):
        raise GateError("gate must be a 4x4 unitary (to 1e-10)")
    if not 0 <= n <= psi.n_sites - 2:
        raise ArgumentError(f"gate site must be in 0..{psi.n_sites - 2}, got {n}")
    out, err, _ = _apply_gate(psi, gate, n, chi_max, cutoff, move)
    return out, err


def mps_param_count(n_sites: int, chi: int) -> int:
    """Number of tensor entries of a uniform-bond MPS: ``4 chi + 2 (N-2) chi^2``."""
    if n_sites < 2 or chi < 1:
        raise ArgumentError("need N >= 2 and chi >= 1")
    return 4 * chi + 2 * (n_sites - 2) * chi * chi
