"""Exterior-power (compound) matrices, Gram matrices, norms and spectral radii.

Multi-indices are increasing tuples ``I = (i_1 < ... < i_k)`` in
lexicographic order, i.e. the order of :func:`itertools.combinations`. Forms,
metrics and cocycles all use this one ordering.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from .errors import NumericError, ValidationError

__all__ = [
    "multi_indices",
    "combo_array",
    "compound",
    "operator_norm",
    "spectral_radius",
    "check_gram",
    "induced_gram_power",
    "psd_sqrt",
    "psd_inv_sqrt",
]


@lru_cache(maxsize=None)
def multi_indices(n, k):
    if not 0 <= k <= n:
        raise ValidationError(f"degree k={k} out of range for n={n}")
    return tuple(combinations(range(n), k))


@lru_cache(maxsize=None)
def combo_array(n, k):
    arr = np.array(multi_indices(n, k), dtype=np.int64).reshape(comb(n, k), k)
    arr.setflags(write=False)
    return arr


def compound(M, k):
    """k-th compound matrix: entry (I, J) is the minor on rows I, columns J.

    Works on a single square matrix or a stack ``(..., n, n)``; real or
    complex.
    """
    M = np.asarray(M)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValidationError(f"compound needs square matrices, got shape {M.shape}")
    n = M.shape[-1]
    idx = combo_array(n, k)
    C = idx.shape[0]
    if k == 0:
        return np.ones(M.shape[:-2] + (1, 1), dtype=np.result_type(M.dtype, float))
    if k == 1:
        return M.astype(np.result_type(M.dtype, float), copy=True)
    rows = idx[:, None, :, None]
    cols = idx[None, :, None, :]
    sub = M[..., rows, cols]  # (..., C, C, k, k)
    out = np.linalg.det(sub)
    return out.reshape(M.shape[:-2] + (C, C))


def operator_norm(M):
    """Largest singular value."""
    M = np.asarray(M)
    if not np.all(np.isfinite(M)):
        raise NumericError("operator_norm: non-finite entries")
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, ord=2))


def spectral_radius(M):
    M = np.asarray(M, dtype=complex if np.iscomplexobj(M) else float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"spectral_radius needs a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericError("spectral_radius: non-finite entries")
    if M.size == 0:
        return 0.0
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigenvalue computation failed: {exc}") from None
    return float(np.max(np.abs(ev)))


def check_gram(G, sym_tol=1e-12, psd_tol=1e-10):
    """Validate symmetry and positive semi-definiteness; return G as an array."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValidationError(f"Gram matrix must be square, got {G.shape}")
    scale = max(1.0, float(np.max(np.abs(G)))) if G.size else 1.0
    if np.max(np.abs(G - G.T), initial=0.0) > sym_tol * scale:
        raise ValidationError("Gram matrix is not symmetric")
    if G.size and np.min(np.linalg.eigvalsh(G)) < -psd_tol * scale:
        raise ValidationError("Gram matrix is not positive semi-definite")
    return G


def induced_gram_power(G, k):
    """Gram matrix of the induced inner product on k-vectors (determinants of pairings)."""
    G = check_gram(G)
    return compound(G, k)


def psd_sqrt(G):
    w, V = np.linalg.eigh(G)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def psd_inv_sqrt(G):
    w, V = np.linalg.eigh(G)
    if np.min(w) <= 0:
        raise NumericError("matrix is not positive definite")
    return (V / np.sqrt(w)) @ V.T
