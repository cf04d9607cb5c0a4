"""Activations and the two per-token feed-forward variants.

``standard_pffn`` is the two-layer ``phi(x A) B`` network (optionally with an
identity residual); ``glu_pffn`` is the gated form
``(gelu(x W1) * (x W2)) W3 + x Wr``.  Both accept one token vector of length
``D`` or any stack of rows ``(..., D)``; rows are processed independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_K = 0.044715

ACTIVATIONS = ("gelu", "relu")


def gelu(x):
    """Tanh approximation of GELU."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_K * x**3)))


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def activation_eval(x, kind):
    if kind == "gelu":
        return gelu(x)
    if kind == "relu":
        return relu(x)
    raise ConfigError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


@dataclass
class StdFfnParams:
    A: np.ndarray  # D x m
    B: np.ndarray  # m x D
    activation: str = "gelu"
    use_residual: bool = False

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.B = np.asarray(self.B, dtype=np.float64)
        if self.A.ndim != 2 or self.B.ndim != 2 or self.A.shape[1] != self.B.shape[0]:
            raise ConfigError(f"A {self.A.shape} and B {self.B.shape} do not conform")
        if self.use_residual and self.A.shape[0] != self.B.shape[1]:
            raise ConfigError("residual needs B to map back to the input width")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def D(self):
        return self.A.shape[0]

    @property
    def hidden(self):
        return self.A.shape[1]


@dataclass
class GluFfnParams:
    W1: np.ndarray  # D x rD
    W2: np.ndarray  # D x rD
    W3: np.ndarray  # rD x D
    Wr: np.ndarray  # D x D

    def __post_init__(self):
        for name in ("W1", "W2", "W3", "Wr"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        D, h = self.W1.shape
        if (self.W2.shape != (D, h) or self.W3.shape != (h, D)
                or self.Wr.shape != (D, D)):
            raise ConfigError(
                f"GLU shapes do not conform: W1 {self.W1.shape}, W2 {self.W2.shape}, "
                f"W3 {self.W3.shape}, Wr {self.Wr.shape}")

    @property
    def D(self):
        return self.W1.shape[0]

    @property
    def hidden(self):
        return self.W1.shape[1]

    @property
    def r(self):
        return self.hidden / self.D


def _rows(M, D):
    M = np.asarray(M, dtype=np.float64)
    if M.shape[-1] != D:
        raise ConfigError(f"input width {M.shape[-1]} does not match D={D}")
    return M


def standard_pffn(M, p):
    M = _rows(M, p.D)
    out = activation_eval(M @ p.A, p.activation) @ p.B
    if p.use_residual:
        out = out + M
    return out


def glu_pffn(M, p):
    M = _rows(M, p.D)
    return (gelu(M @ p.W1) * (M @ p.W2)) @ p.W3 + M @ p.Wr
