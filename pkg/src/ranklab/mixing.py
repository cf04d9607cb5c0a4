"""Token-mixing operators.

* :func:`block_transpose`: exchange block ``(i, j)`` with ``(j, i)`` on the
  ``T x T`` grid of ``1 x d`` row blocks (parameter free).
* :func:`rankmixer_mix`: residual block transpose followed by per-token layer
  norm.  :func:`block_transpose_operator` gives the same map as the explicit
  ``(K_{T,T} kron I_d)`` matrix acting on ``vec(X.T)``.
* :func:`full_mix`: learnable ``TD x TD`` operator with identity residual.

All functions accept a single ``T x D`` matrix or a stack ``(..., T, D)``.
Note ``vec(X.T)`` under column stacking is the row-major flattening of ``X``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .linalg import DEFAULT_LN_EPS, commutation_matrix, kron, layer_norm_row


@dataclass(frozen=True)
class MixingConfig:
    T: int
    D: int

    def __post_init__(self):
        if self.T < 1 or self.D < 1:
            raise ConfigError(f"T and D must be >= 1, got T={self.T}, D={self.D}")
        if self.D % self.T:
            raise ConfigError(f"D={self.D} is not divisible into T={self.T} blocks")

    @property
    def d(self):
        return self.D // self.T

    @property
    def N(self):
        return self.T * self.D

    @classmethod
    def for_matrix(cls, X):
        X = np.asarray(X)
        return cls(X.shape[-2], X.shape[-1])


def _resolve(X, cfg):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim < 2:
        raise ConfigError(f"expected a T x D matrix, got shape {X.shape}")
    if cfg is None:
        cfg = MixingConfig.for_matrix(X)
    if X.shape[-2:] != (cfg.T, cfg.D):
        raise ConfigError(f"matrix shape {X.shape[-2:]} does not match T={cfg.T}, D={cfg.D}")
    return X, cfg


def block_transpose(X, cfg=None):
    X, cfg = _resolve(X, cfg)
    lead = X.shape[:-2]
    grid = X.reshape(lead + (cfg.T, cfg.T, cfg.d))
    return np.swapaxes(grid, -3, -2).reshape(X.shape).copy()


def rankmixer_mix(X, cfg=None, eps=DEFAULT_LN_EPS):
    X, cfg = _resolve(X, cfg)
    return layer_norm_row(X + block_transpose(X, cfg), eps)


def block_transpose_operator(cfg):
    """``K_{T,T} kron I_d``: the ``TD x TD`` permutation equal to block transpose
    on ``vec(X.T)``.  Materialized densely, so ``O(T^4 d^2)`` memory."""
    return kron(commutation_matrix(cfg.T, cfg.T), np.eye(cfg.d))


def rankmixer_mix_kron(X, cfg=None, eps=DEFAULT_LN_EPS, return_pre_ln=False):
    """Same result as :func:`rankmixer_mix`, computed through the dense operator."""
    X, cfg = _resolve(X, cfg)
    x = X.reshape(X.shape[:-2] + (cfg.N,))
    P = block_transpose_operator(cfg)
    pre = (x @ P.T + x).reshape(X.shape)
    out = layer_norm_row(pre, eps)
    return (out, pre) if return_pre_ln else out


def full_mix(X, W, eps=DEFAULT_LN_EPS):
    """``LN((W + I) vec(X.T))`` reshaped back to ``T x D``, LN per token row."""
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if X.ndim < 2:
        raise ConfigError(f"expected a T x D matrix, got shape {X.shape}")
    N = X.shape[-2] * X.shape[-1]
    if W.shape != (N, N):
        raise ConfigError(f"mixing matrix must be {N}x{N}, got {W.shape}")
    x = X.reshape(X.shape[:-2] + (N,))
    # W x + x rather than (W + I) x: keeps the permutation case bit-exact.
    v = x @ W.T + x
    return layer_norm_row(v.reshape(X.shape), eps)
