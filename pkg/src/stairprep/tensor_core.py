"""Dense complex tensor algebra.

Tensors are plain ``numpy.ndarray`` objects of dtype ``complex128`` (row-major).
This module adds the handful of operations the rest of the package needs on
top of numpy: axis-pair contraction with shape checks, full and truncated SVD,
the polar projection of a square matrix onto the unitary group together with
its reverse-mode derivative, and a central finite-difference gradient used as
an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    ArgumentError,
    DegenerateProjectionError,
    DimensionError,
    NumericalError,
    RankError,
)

DTYPE = np.complex128

# Smallest admissible ratio s_min / s_max for a latent matrix to project.
RANK_TOLERANCE = 1e-14


def as_tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Return ``data`` as a finite complex128 array, optionally reshaped."""
    arr = np.asarray(data, dtype=DTYPE)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise DimensionError(f"extents must be positive, got {shape}")
        if int(np.prod(shape)) != arr.size:
            raise DimensionError(f"cannot view {arr.size} entries as shape {shape}")
        arr = arr.reshape(shape)
    _check_finite(arr, "tensor")
    return arr


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite entries in {what}")


def contract(a: np.ndarray, b: np.ndarray, axis_pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """Contract ``a`` and ``b`` over the given ``(axis_of_a, axis_of_b)`` pairs.

    Free axes of ``a`` come first, followed by the free axes of ``b``, each in
    their original order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    axes_a = [int(i) % a.ndim if a.ndim else int(i) for i, _ in axis_pairs]
    axes_b = [int(j) % b.ndim if b.ndim else int(j) for _, j in axis_pairs]
    for i, j in zip(axes_a, axes_b):
        if i >= a.ndim or j >= b.ndim:
            raise DimensionError(f"axis pair ({i}, {j}) out of range for orders {a.ndim}, {b.ndim}")
        if a.shape[i] != b.shape[j]:
            raise DimensionError(
                f"cannot contract axis {i} (extent {a.shape[i]}) with axis {j} (extent {b.shape[j]})"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


@dataclass(frozen=True)
class SvdFactors:
    """``m ~= u @ diag(s) @ vh`` with ``s`` descending."""

    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray
    truncation_error: float = 0.0

    @property
    def rank(self) -> int:
        return len(self.s)

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.vh


def svd(m: np.ndarray) -> SvdFactors:
    """Thin SVD of a matrix.

    Uses LAPACK ``gesdd`` and falls back to the slower but more robust
    ``gesvd`` driver when the former fails to converge.
    """
    m = np.asarray(m, dtype=DTYPE)
    if m.ndim != 2:
        raise RankError(f"svd expects a matrix, got order {m.ndim}")
    _check_finite(m, "svd input")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            u, s, vh = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"SVD did not converge for {m.shape} matrix with norm {np.linalg.norm(m):.6e}"
            ) from exc
    return SvdFactors(u, s, vh, 0.0)


def truncated_svd(m: np.ndarray, chi_max: int, cutoff: float = 0.0, keep: int | None = None) -> SvdFactors:
    """SVD keeping at most ``chi_max`` values with ``s_i >= cutoff * s_0``.

    At least one singular value is always kept. ``keep`` overrides the
    decision with a fixed count (clipped to the available rank); this is how
    a recorded forward pass is replayed with identical truncation.
    """
    if chi_max is None or int(chi_max) < 1:
        raise ArgumentError(f"chi_max must be a positive integer, got {chi_max}")
    if cutoff < 0:
        raise ArgumentError(f"cutoff must be non-negative, got {cutoff}")
    full = svd(m)
    s = full.s
    if keep is None:
        n_keep = int(np.count_nonzero(s >= cutoff * s[0])) if s.size else 0
        n_keep = max(1, min(int(chi_max), n_keep, s.size))
    else:
        n_keep = max(1, min(int(keep), s.size))
    discarded = s[n_keep:]
    err = float(np.dot(discarded, discarded))
    return SvdFactors(full.u[:, :n_keep], s[:n_keep], full.vh[:n_keep, :], err)


def project_to_unitary(latent: np.ndarray) -> np.ndarray:
    """Closest unitary ``U @ Vh`` to a square matrix in the trace sense.

    The result maximizes ``Re Tr(latent^dagger Q)`` over unitary ``Q``. Raises
    :class:`DegenerateProjectionError` when ``latent`` is numerically rank
    deficient, because the maximizer is then not unique.
    """
    latent = np.asarray(latent, dtype=DTYPE)
    if latent.ndim != 2 or latent.shape[0] != latent.shape[1]:
        raise RankError(f"projection expects a square matrix, got shape {latent.shape}")
    f = svd(latent)
    if f.s[0] == 0.0 or f.s[-1] <= RANK_TOLERANCE * f.s[0]:
        raise DegenerateProjectionError(
            f"latent matrix is rank deficient (singular values {f.s[0]:.3e} .. {f.s[-1]:.3e})"
        )
    return f.u @ f.vh


def projection_pullback(latent: np.ndarray, grad_unitary: np.ndarray, delta: float = 1e-12) -> np.ndarray:
    """Pull a gradient on ``W = U Vh`` back to the latent matrix.

    Gradients use the convention ``g = dL/dRe + i dL/dIm``, so that
    ``dL = Re Tr(g^dagger dX)``. With ``latent = U diag(s) Vh`` and
    ``B = U^dagger g_W V`` the latent gradient is ``U C Vh`` where
    ``C_ij = (B_ij - conj(B_ji)) / (s_i + s_j)``. The denominators are
    Lorentzian-broadened with ``delta``.
    """
    f = svd(latent)
    u, s, vh = f.u, f.s, f.vh
    b = u.conj().T @ np.asarray(grad_unitary, dtype=DTYPE) @ vh.conj().T
    denom = s[:, None] + s[None, :]
    inv = denom / (denom**2 + delta**2)
    c = (b - b.conj().T) * inv
    return u @ c @ vh


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random ``n x n`` unitary (QR of a complex Gaussian, phases fixed)."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Entries with real and imaginary parts i.i.d. standard normal."""
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def make_rng(seed: int) -> np.random.Generator:
    """Seeded counter-based (Philox) generator."""
    return np.random.Generator(np.random.Philox(int(seed)))


def finite_difference_gradient(
    loss: Callable[[np.ndarray], float], point: np.ndarray, h: float = 1e-5
) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of a real loss w.r.t. real and imaginary parts."""
    if not h > 0:
        raise ArgumentError(f"step must be positive, got {h}")
    point = np.array(point, dtype=DTYPE)
    d_re = np.zeros(point.shape)
    d_im = np.zeros(point.shape)

    def evaluate(x):
        val = float(loss(x))
        if not np.isfinite(val):
            raise NumericalError("loss is not finite during finite differencing")
        return val

    evaluate(point)
    for idx in np.ndindex(point.shape):
        for out, step in ((d_re, h), (d_im, 1j * h)):
            plus = point.copy()
            plus[idx] += step
            minus = point.copy()
            minus[idx] -= step
            out[idx] = (evaluate(plus) - evaluate(minus)) / (2 * h)
    return d_re, d_im
