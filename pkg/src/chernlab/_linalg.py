"""Batched dense linear algebra for per-site matrix operations.

Everything operates on stacked arrays of shape (..., n, n) so that the whole
grid is processed in one call.
"""

from __future__ import annotations

import numpy as np

# Pade-13 coefficients for expm, as in Higham (2005) / scipy.linalg.expm
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
    33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a 13/13 Pade approximant."""
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[-1]
    norm = np.abs(a).sum(axis=-2).max(axis=-1)  # 1-norm per matrix
    max_norm = float(norm.max()) if norm.size else 0.0
    squarings = max(0, int(np.ceil(np.log2(max_norm / _THETA13))) if max_norm > _THETA13 else 0)
    a = a / (2.0 ** squarings)

    ident = np.broadcast_to(np.eye(n, dtype=np.complex128), a.shape)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    b = _PADE13
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(squarings):
        r = r @ r
    return r


def expm_hermitian_phase(h: np.ndarray, scale: complex) -> np.ndarray:
    """exp(scale * h) for Hermitian h via eigendecomposition."""
    w, v = np.linalg.eigh(h)
    phases = np.exp(scale * w)
    return np.einsum("...ik,...k,...jk->...ij", v, phases, v.conj())


def polar_unitary(m: np.ndarray) -> np.ndarray:
    """Unitary factor of the polar decomposition, batched via SVD."""
    u, _, vh = np.linalg.svd(m)
    return u @ vh


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def spectral_round_projection(h: np.ndarray, rank: int) -> tuple[np.ndarray, float]:
    """Projection onto the top-``rank`` eigenspace of a Hermitian field.

    Returns the projection and the minimal spectral gap between the kept and
    discarded eigenvalues across all sites (infinite if nothing is discarded).
    """
    w, v = np.linalg.eigh(h)  # ascending eigenvalues
    n = h.shape[-1]
    if not 0 <= rank <= n:
        raise ValueError(f"rank {rank} out of range for block dimension {n}")
    if rank == 0:
        return np.zeros_like(h), float("inf")
    if rank == n:
        return np.broadcast_to(np.eye(n, dtype=np.complex128), h.shape).copy(), float("inf")
    gap = float((w[..., n - rank] - w[..., n - rank - 1]).min())
    vecs = v[..., n - rank:]
    p = vecs @ dagger(vecs)
    return p, gap
