"""Dense small-matrix utilities: vec/Kronecker/commutation operators and
spectral diagnostics (stable rank, numerical rank).

Matrices are plain ``numpy.ndarray`` objects of dtype float64.  Functions that
accept a single matrix validate shape and finiteness; batched helpers accept
stacks of shape ``(..., m, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, SizeCapError

SIZE_CAP = 4096
DEFAULT_RANK_TOL = 1e-8
DEFAULT_LN_EPS = 1e-5

_EPS = np.finfo(np.float64).eps


def as_matrix(x, name="matrix"):
    """Return ``x`` as a finite float64 2-D array or raise :class:`InputError`."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InputError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} has non-finite entries")
    return a


def _check_cap(rows, cols, cap):
    if rows > cap or cols > cap:
        raise SizeCapError(f"{rows}x{cols} exceeds size cap {cap}x{cap}")


def vec_op(X):
    """Column-stack ``X``: entry ``i * rows + t`` of the result is ``X[t, i]``."""
    X = as_matrix(X, "X")
    return X.T.reshape(-1).copy()


def unvec(v, rows, cols):
    """Inverse of :func:`vec_op`."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (rows * cols,):
        raise InputError(f"expected vector of length {rows * cols}, got shape {v.shape}")
    return v.reshape(cols, rows).T.copy()


def kron(A, B, cap=SIZE_CAP):
    """Kronecker product; block ``(i, j)`` of the result is ``A[i, j] * B``."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    rows, cols = A.shape[0] * B.shape[0], A.shape[1] * B.shape[1]
    _check_cap(rows, cols, cap)
    out = A[:, None, :, None] * B[None, :, None, :]
    return out.reshape(rows, cols)


def commutation_matrix(m, n, cap=SIZE_CAP):
    """The ``mn x mn`` permutation ``K`` with ``K @ vec(A) == vec(A.T)`` for
    every ``m x n`` matrix ``A``."""
    if m < 1 or n < 1:
        raise InputError(f"commutation matrix needs m, n >= 1, got ({m}, {n})")
    _check_cap(m * n, m * n, cap)
    i, j = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    K = np.zeros((m * n, m * n))
    # vec(A)[j*m + i] = A[i, j] = vec(A.T)[i*n + j]
    K[(i * n + j).ravel(), (j * m + i).ravel()] = 1.0
    return K


def _round_robin(p):
    """Pairings for a cyclic tournament on ``p`` players (``p`` even).

    Each of the ``p - 1`` rounds covers every index exactly once, so the
    rotations inside a round act on disjoint rows and can be applied together.
    """
    players = list(range(p))
    rounds = []
    for _ in range(p - 1):
        half = p // 2
        rounds.append((np.array(players[:half]), np.array(players[half:][::-1])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_singular_values(a, tol=None, max_sweeps=60):
    """Singular values of a matrix or a stack of matrices, non-increasing.

    One-sided (Hestenes) Jacobi: the ``min(m, n)`` rows or columns are rotated
    pairwise until mutually orthogonal; their norms are the singular values.
    Works on arrays of shape ``(..., m, n)``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2:
        raise InputError(f"expected at least 2 dimensions, got shape {a.shape}")
    m, n = a.shape[-2:]
    V = a.copy() if m <= n else np.swapaxes(a, -1, -2).copy()
    p, q = V.shape[-2:]
    if tol is None:
        tol = _EPS * max(q, 1)
    # power-of-two rescaling keeps squared norms in range and is exact
    peak = np.max(np.abs(V), axis=(-2, -1), keepdims=True) if V.size else np.ones(V.shape[:-2] + (1, 1))
    scale = np.ldexp(1.0, np.frexp(np.where(peak > 0, peak, 1.0))[1])
    V /= scale
    scale = scale[..., 0]
    if p == 1:
        return np.sqrt(np.sum(V * V, axis=-1)) * scale
    if p % 2:
        V = np.concatenate([V, np.zeros(V.shape[:-2] + (1, q))], axis=-2)
    rounds = _round_robin(V.shape[-2])
    for _ in range(max_sweeps):
        rotated = False
        for I, J in rounds:
            vi = V[..., I, :]
            vj = V[..., J, :]
            alpha = np.sum(vi * vi, axis=-1)
            beta = np.sum(vj * vj, axis=-1)
            gamma = np.sum(vi * vj, axis=-1)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not np.any(active):
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            with np.errstate(over="ignore"):
                # |zeta| = inf means a negligible coupling: t = 0, no rotation
                zeta = (beta - alpha) / (2.0 * g)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = c[..., None]
            s = s[..., None]
            V[..., I, :] = c * vi - s * vj
            V[..., J, :] = s * vi + c * vj
        if not rotated:
            break
    sv = np.sqrt(np.sum(V * V, axis=-1))[..., :p]
    return -np.sort(-sv, axis=-1) * scale


@dataclass(frozen=True)
class SpectralSummary:
    singular_values: np.ndarray
    frobenius_sq: float
    spectral_sq: float
    algebraic_rank: int
    effective_rank: float
    tolerance: float

    @property
    def stable_rank(self):
        return self.effective_rank


def spectral_summary(X, tol_rel=DEFAULT_RANK_TOL):
    """Singular values, norms, numerical rank and effective (stable) rank.

    ``effective_rank = frobenius_sq / spectral_sq`` with both norms taken from
    the computed singular values; it is defined as 0 for the zero matrix.
    ``algebraic_rank`` counts singular values above ``tol_rel * sigma_max``.
    """
    if not tol_rel > 0:
        raise InputError(f"tol_rel must be positive, got {tol_rel}")
    X = as_matrix(X, "X")
    sv = jacobi_singular_values(X)
    sq = sv * sv
    frob = float(np.sum(sq))
    spec = float(sq[0])
    if spec == 0.0:
        return SpectralSummary(sv, 0.0, 0.0, 0, 0.0, tol_rel)
    rank = int(np.count_nonzero(sv > tol_rel * sv[0]))
    return SpectralSummary(sv, frob, spec, rank, frob / spec, tol_rel)


def effective_rank(X):
    return spectral_summary(X).effective_rank


def numerical_rank(X, tol_rel=DEFAULT_RANK_TOL):
    return spectral_summary(X, tol_rel).algebraic_rank


def effective_ranks(stack):
    """Effective rank of every matrix in a ``(..., m, n)`` stack (0 for zero matrices)."""
    stack = np.asarray(stack, dtype=np.float64)
    if not np.all(np.isfinite(stack)):
        raise InputError("stack has non-finite entries")
    sv = jacobi_singular_values(stack)
    sq = sv * sv
    top = sq[..., 0]
    total = np.sum(sq, axis=-1)
    safe = np.where(top > 0, top, 1.0)
    return np.where(top > 0, total / safe, 0.0)


def layer_norm_row(x, eps=DEFAULT_LN_EPS):
    """Normalize along the last axis: ``(x - mean) / sqrt(var + eps)``.

    Population variance, no learnable gain or bias.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 1:
        raise InputError("layer_norm_row needs at least one element")
    mu = np.mean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    return xc / np.sqrt(var + eps)
