"""Heisenberg and XY open spin-1/2 chains: MPOs, exact diagonalization, DMRG.

Both chains use unit nearest-neighbour couplings of spin operators
``S = sigma / 2``::

    H_heisenberg = sum_n Sx Sx + Sy Sy + Sz Sz
    H_xy         = sum_n Sx Sx + Sy Sy
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ArgumentError, CapacityError, NumericalError
from .mps import MatrixProductState, canonicalize, normalize, random_mps
from .tensor_core import DTYPE, truncated_svd

log = logging.getLogger(__name__)

MODEL_KINDS = ("heisenberg", "xy")
MAX_ED_SITES = 14

SP = np.array([[0, 1], [0, 0]], dtype=DTYPE)
SM = np.array([[0, 0], [1, 0]], dtype=DTYPE)
SZ = np.array([[0.5, 0], [0, -0.5]], dtype=DTYPE)
SX = np.array([[0, 0.5], [0.5, 0]], dtype=DTYPE)
SY = np.array([[0, -0.5j], [0.5j, 0]], dtype=DTYPE)
ID2 = np.eye(2, dtype=DTYPE)


@dataclass(frozen=True)
class SpinChainModel:
    kind: str
    n_sites: int

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in MODEL_KINDS:
            raise ArgumentError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        object.__setattr__(self, "kind", kind)
        if self.n_sites < 2:
            raise ArgumentError("spin chain needs at least two sites")


@dataclass(frozen=True)
class MatrixProductOperator:
    """Site operators with axes ``(w_left, out, in, w_right)``."""

    tensors: tuple

    @property
    def n_sites(self) -> int:
        return len(self.tensors)


def build_mpo(model: SpinChainModel) -> MatrixProductOperator:
    """Lower-triangular MPO of bond width 5 (Heisenberg) or 4 (XY).

    ``Sx Sx + Sy Sy`` is written as ``(S+ S- + S- S+) / 2``.
    """
    if model.kind == "heisenberg":
        left_ops = [SP, SM, SZ]
        right_ops = [0.5 * SM, 0.5 * SP, SZ]
    else:
        left_ops = [SP, SM]
        right_ops = [0.5 * SM, 0.5 * SP]
    w = len(left_ops) + 2
    bulk = np.zeros((w, 2, 2, w), dtype=DTYPE)
    bulk[0, :, :, 0] = ID2
    bulk[w - 1, :, :, w - 1] = ID2
    for k, (a, b) in enumerate(zip(left_ops, right_ops), start=1):
        bulk[k, :, :, 0] = a
        bulk[w - 1, :, :, k] = b
    first = bulk[w - 1 : w]
    last = bulk[:, :, :, 0:1]
    n = model.n_sites
    tensors = (first,) + (bulk,) * (n - 2) + (last,)
    return MatrixProductOperator(tuple(np.array(t) for t in tensors))


def mpo_to_dense(mpo: MatrixProductOperator) -> np.ndarray:
    """Full ``2**N x 2**N`` matrix of an MPO (small N only)."""
    if mpo.n_sites > MAX_ED_SITES:
        raise CapacityError(f"dense MPO limited to N <= {MAX_ED_SITES}")
    op = mpo.tensors[0][0]  # (out, in, w)
    for t in mpo.tensors[1:]:
        # op (O, I, w) x t (w, o, i, w') -> (O, o, I, i, w')
        op = np.tensordot(op, t, axes=(2, 0)).transpose(0, 2, 1, 3, 4)
        d_out, d_o, d_in, d_i, w = op.shape
        op = op.reshape(d_out * d_o, d_in * d_i, w)
    return op[:, :, 0]


def hamiltonian_sparse(model: SpinChainModel) -> sp.csr_matrix:
    """Sparse Hamiltonian assembled from Kronecker products of bond terms."""
    n = model.n_sites
    pairs = [(SX, SX), (SY, SY)]
    if model.kind == "heisenberg":
        pairs.append((SZ, SZ))
    dim = 2**n
    h = sp.csr_matrix((dim, dim), dtype=DTYPE)
    for site in range(n - 1):
        for a, b in pairs:
            term = sp.kron(sp.identity(2**site, format="csr"), sp.kron(a, b, format="csr"), format="csr")
            term = sp.kron(term, sp.identity(2 ** (n - site - 2), format="csr"), format="csr")
            h = h + term
    return h.tocsr()


def exact_ground_state(model: SpinChainModel) -> tuple[float, np.ndarray]:
    """Lowest eigenpair by sparse Lanczos (ARPACK) for ``N <= 14``.

    The eigenvector is normalized with its largest-magnitude amplitude made
    real and positive.
    """
    if model.n_sites > MAX_ED_SITES:
        raise CapacityError(f"exact diagonalization limited to N <= {MAX_ED_SITES}")
    h = hamiltonian_sparse(model)
    if h.shape[0] <= 64:
        vals, vecs = np.linalg.eigh(h.toarray())
        energy, vec = vals[0], vecs[:, 0]
    else:
        h = h.real.tocsr()  # both chains are real in the computational basis
        v0 = np.ones(h.shape[0])
        vals, vecs = spla.eigsh(h, k=1, which="SA", v0=v0, tol=0)
        energy, vec = vals[0], vecs[:, 0].astype(DTYPE)
    vec = vec / np.linalg.norm(vec)
    k = int(np.argmax(np.abs(vec)))
    vec = vec * (abs(vec[k]) / vec[k])
    return float(energy), vec


# ---------------------------------------------------------------------------
# DMRG


def lanczos_ground(matvec, v0: np.ndarray, max_iter: int = 100, tol: float = 1e-12):
    """Lowest eigenpair of a Hermitian operator by Lanczos with full reorthogonalization.

    Returns ``(eigenvalue, eigenvector, residual_norm, iterations)``. The
    iteration stops when the Ritz residual drops below ``tol`` (relative to
    ``max(1, |eigenvalue|)``) or after ``max_iter`` Krylov vectors.
    """
    shape = v0.shape
    v = v0.reshape(-1).astype(DTYPE)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise NumericalError("Lanczos start vector is zero")
    basis = [v / nrm]
    alphas: list[float] = []
    betas: list[float] = []
    theta, y, resid = 0.0, np.array([1.0]), np.inf
    for j in range(max_iter):
        w = matvec(basis[j].reshape(shape)).reshape(-1)
        alpha = float(np.real(np.vdot(basis[j], w)))
        alphas.append(alpha)
        q = np.array(basis)
        w = w - q.T @ (q.conj() @ w)
        w = w - q.T @ (q.conj() @ w)
        beta = float(np.linalg.norm(w))
        evals, evecs = _tridiag_eigh(alphas, betas)
        theta, y = evals[0], evecs[:, 0]
        resid = beta * abs(y[-1])
        if not np.isfinite(theta):
            raise NumericalError("Lanczos produced a non-finite Ritz value")
        if resid < tol * max(1.0, abs(theta)) or beta < 1e-14:
            break
        betas.append(beta)
        basis.append(w / beta)
    vec = np.array(basis[: len(y)]).T @ y
    vec = vec / np.linalg.norm(vec)
    return float(theta), vec.reshape(shape), float(resid), len(alphas)


def _tridiag_eigh(alphas, betas):
    k = len(alphas)
    t = np.diag(alphas)
    if k > 1:
        off = np.array(betas[: k - 1])
        t = t + np.diag(off, 1) + np.diag(off, -1)
    return np.linalg.eigh(t)


def _left_env(env, a, w):
    # env (b, w, k) with b = bra bond, k = ket bond; a = ket site (k, s, k'); w = (w, o, i, w')
    t = np.tensordot(env, a, axes=(2, 0))  # (b, w, i, k')
    t = np.tensordot(t, w, axes=([1, 2], [0, 2]))  # (b, k', o, w')
    t = np.tensordot(a.conj(), t, axes=([0, 1], [0, 2]))  # (b', k', w')
    return t.transpose(0, 2, 1)


def _right_env(env, a, w):
    # env (b, w, k) on the right bond
    t = np.tensordot(a, env, axes=(2, 2))  # (k, i, b', w')
    t = np.tensordot(w, t, axes=([2, 3], [1, 3]))  # (w, o, k, b')
    t = np.tensordot(a.conj(), t, axes=([1, 2], [1, 3]))  # (b, w, k)
    return t


def _two_site_matvec(left, w1, w2, right):
    def matvec(theta):
        # theta (l, s1, s2, r)
        t = np.tensordot(left, theta, axes=(2, 0))  # (b, w, s1, s2, r)
        t = np.tensordot(t, w1, axes=([1, 2], [0, 2]))  # (b, s2, r, o1, w')
        t = np.tensordot(t, w2, axes=([1, 4], [2, 0]))  # (b, r, o1, o2, w'')
        t = np.tensordot(t, right, axes=([1, 4], [2, 1]))  # (b, o1, o2, b')
        return t

    return matvec


def mpo_expectation(psi: MatrixProductState, mpo: MatrixProductOperator) -> complex:
    """``<psi|H|psi>`` by transfer contraction."""
    env = np.ones((1, 1, 1), dtype=DTYPE)
    for a, w in zip(psi.tensors, mpo.tensors):
        env = _left_env(env, a, w)
    return complex(env[0, 0, 0])


@dataclass
class DmrgResult:
    energy: float
    psi: MatrixProductState
    sweeps_used: int
    converged: bool
    sweep_energies: list = field(default_factory=list)
    max_truncation_error: float = 0.0


def dmrg_ground_state(
    mpo: MatrixProductOperator,
    chi: int,
    max_sweeps: int = 10,
    energy_tol: float = 1e-10,
    *,
    lanczos_iters: int = 100,
    lanczos_tol: float = 1e-12,
    cutoff: float = 1e-14,
    seed: int = 0,
    initial: MatrixProductState | None = None,
) -> DmrgResult:
    """Two-site DMRG for the lowest eigenstate of an MPO.

    Each sweep goes left-to-right then right-to-left. The energy reported per
    sweep is the MPO expectation value of the normalized, truncated state at
    the end of the sweep; iteration stops once it changes by less than
    ``energy_tol``.
    """
    if chi < 1 or max_sweeps < 1:
        raise ArgumentError("need chi >= 1 and max_sweeps >= 1")
    n = mpo.n_sites
    if initial is None:
        initial = random_mps(n, chi, seed)
    psi = canonicalize(initial, 0)
    tensors = list(psi.tensors)
    ws = mpo.tensors

    rights: list = [None] * (n + 1)
    rights[n] = np.ones((1, 1, 1), dtype=DTYPE)
    for k in range(n - 1, 0, -1):
        rights[k] = _right_env(rights[k + 1], tensors[k], ws[k])
    lefts: list = [None] * (n + 1)
    lefts[0] = np.ones((1, 1, 1), dtype=DTYPE)

    def solve(k, sweep):
        theta = np.tensordot(tensors[k], tensors[k + 1], axes=(2, 0))
        matvec = _two_site_matvec(lefts[k], ws[k], ws[k + 1], rights[k + 2])
        energy, vec, resid, _ = lanczos_ground(matvec, theta, lanczos_iters, lanczos_tol)
        if not np.all(np.isfinite(vec)):
            raise NumericalError(f"local eigensolve failed at sweep {sweep}, sites ({k}, {k + 1})")
        l, _, _, r = vec.shape
        return truncated_svd(vec.reshape(l * 2, 2 * r), chi, cutoff), l, r

    energies: list[float] = []
    converged = False
    max_err = 0.0
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        for k in range(0, n - 1):
            f, l, r = solve(k, sweep)
            max_err = max(max_err, f.truncation_error)
            tensors[k] = f.u.reshape(l, 2, f.rank)
            tensors[k + 1] = (f.s[:, None] * f.vh).reshape(f.rank, 2, r)
            lefts[k + 1] = _left_env(lefts[k], tensors[k], ws[k])
        for k in range(n - 2, -1, -1):
            f, l, r = solve(k, sweep)
            max_err = max(max_err, f.truncation_error)
            tensors[k] = (f.u * f.s).reshape(l, 2, f.rank)
            tensors[k + 1] = f.vh.reshape(f.rank, 2, r)
            rights[k + 1] = _right_env(rights[k + 2], tensors[k + 1], ws[k + 1])
        psi = normalize(MatrixProductState._trusted(list(tensors), center=0, max_bond=chi))
        tensors = list(psi.tensors)
        energy = float(np.real(mpo_expectation(psi, mpo)))
        log.debug("dmrg sweep %d: E = %.14f", sweep, energy)
        energies.append(energy)
        if len(energies) > 1 and abs(energies[-1] - energies[-2]) < energy_tol:
            converged = True
            break
    return DmrgResult(energies[-1], psi, sweep, converged, energies, max_err)
