"""Central-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ProbeError
from .autodiff import Tensor


@dataclass
class GradCheckReport:
    max_rel_err: float
    checked: int
    tol: float
    h: float
    worst: tuple | None = None  # (parameter name, flat index)
    errors: dict = field(default_factory=dict)  # name -> max rel err

    @property
    def passed(self):
        return self.max_rel_err < self.tol


def _evaluate(f, arrays, single):
    tensors = {k: Tensor(v) for k, v in arrays.items()}
    out = f(tensors["theta"]) if single else f(tensors)
    value = float(out.value)
    if not np.isfinite(value):
        raise ProbeError(f"function value {value} is not finite")
    return value


def grad_check(f, params, h=1e-3, tol=1e-4, probes=None, seed=0):
    """Compare analytic partials of ``f`` against ``(f(p+h) - f(p-h)) / 2h``.

    ``params`` is an array (``f`` then receives a single :class:`Tensor`) or a
    mapping of name to array (``f`` receives a dict of tensors).  ``f`` must
    return a scalar tensor.  With ``probes=None`` every entry is checked;
    otherwise ``probes`` entries are sampled uniformly over all parameters.
    Relative error uses the denominator ``max(|analytic|, |numeric|, 1e-8)``.
    """
    single = not isinstance(params, dict)
    arrays = {"theta": np.array(params, dtype=np.float64)} if single else {
        k: np.array(v, dtype=np.float64) for k, v in params.items()}

    leaves = {k: Tensor(v.copy(), requires_grad=True) for k, v in arrays.items()}
    out = f(leaves["theta"]) if single else f(leaves)
    if not np.isfinite(out.value).all():
        raise ProbeError("function value is not finite at the probe point")
    out.backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.value))
                for k, t in leaves.items()}

    names = list(arrays)
    sizes = np.array([arrays[k].size for k in names])
    if probes is None:
        picks = [(k, i) for k in names for i in range(arrays[k].size)]
    else:
        rng = np.random.default_rng(seed)
        flat = rng.choice(int(sizes.sum()), size=min(probes, int(sizes.sum())), replace=False)
        bounds = np.cumsum(sizes)
        picks = []
        for j in np.sort(flat):
            slot = int(np.searchsorted(bounds, j, side="right"))
            offset = j - (bounds[slot - 1] if slot else 0)
            picks.append((names[slot], int(offset)))

    report = GradCheckReport(0.0, 0, tol, h)
    for name, i in picks:
        base = arrays[name].reshape(-1)
        orig = base[i]
        base[i] = orig + h
        fp = _evaluate(f, arrays, single)
        base[i] = orig - h
        fm = _evaluate(f, arrays, single)
        base[i] = orig
        numeric = (fp - fm) / (2.0 * h)
        a = float(analytic[name].reshape(-1)[i])
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        report.checked += 1
        report.errors[name] = max(report.errors.get(name, 0.0), err)
        if report.worst is None or err > report.max_rel_err:
            report.max_rel_err = err
            report.worst = (name, i)
    return report
