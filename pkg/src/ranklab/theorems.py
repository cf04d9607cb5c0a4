"""Monte Carlo verification of the rank claims about token mixing and FFNs.

Each ``verify_*`` function draws independent trials (trial ``i`` uses the RNG
stream ``default_rng([seed, i])``), checks the claim against an independently
computed oracle and returns a :class:`TheoremReport`.

``exact_violations`` counts failures of statements that are exact
mathematics (the rank-1 homogeneity barrier, the block-transpose rank bound,
outer-product reachability, block-span unreachability).  Statistical claims
are summarized in ``stats`` and judged by the named ``checks``.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .ffn import GluFfnParams, StdFfnParams, gelu, glu_pffn, relu, standard_pffn
from .iohelpers import atomic_write_text
from .linalg import effective_rank, kron, numerical_rank, spectral_summary
from .mixing import MixingConfig, block_transpose

REPORT_SCHEMA = "rsl-report-1"
LIFTING_WIDTH_CONSTANT = 8  # C in m >= C k ln D
RANK_TOL = 1e-8

THEOREMS = ("mixing-bounds", "ffn-collapse", "reachability", "glu-lifting", "glu-gain")


@dataclass
class TheoremReport:
    theorem: str
    seed: int
    config: dict
    trials: int
    assumption_hits: int = 0
    violations: int = 0
    exact_violations: int = 0
    witness: dict | None = None
    stats: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.violations <= self.assumption_hits <= self.trials:
            raise ValueError("need 0 <= violations <= assumption_hits <= trials")

    @property
    def passed(self):
        return self.exact_violations == 0 and all(self.checks.values())

    def to_document(self):
        doc = {"schema": REPORT_SCHEMA}
        doc.update(asdict(self))
        doc["passed"] = self.passed
        return doc

    def summary_line(self):
        status = "PASS" if self.passed else "FAIL"
        checks = ", ".join(f"{k}={'ok' if v else 'FAILED'}" for k, v in self.checks.items())
        return (f"{status} {self.theorem}: trials={self.trials} hits={self.assumption_hits} "
                f"violations={self.violations} exact_violations={self.exact_violations}"
                + (f" [{checks}]" if checks else ""))


def save_report(path, report):
    atomic_write_text(path, json.dumps(report.to_document(), indent=2, sort_keys=True) + "\n")


def _workers():
    try:
        n = int(os.environ.get("RSL_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _run_trials(fn, seed, trials):
    """Results of ``fn(rng, i)`` for every trial, in trial order."""
    rngs = [np.random.default_rng([seed, i]) for i in range(trials)]
    workers = min(_workers(), trials)
    if workers <= 1:
        return [fn(rng, i) for i, rng in enumerate(rngs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, rngs, range(trials)))


def _matrix(a):
    return np.asarray(a).tolist()


def _quantiles(values, qs=(0.05, 0.25, 0.5, 0.75, 0.95)):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return {}
    return {f"q{int(round(q * 100)):02d}": float(np.quantile(values, q)) for q in qs}


def _low_rank(rng, rows, cols, rank):
    return rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, cols))


def mixing_trial(X, T, d, rank_r, incoherence_tol):
    """Evaluate one matrix: hypotheses, erank bounds and the rank bound."""
    cfg = MixingConfig(T, T * d)
    Y = block_transpose(X, cfg)
    M = X + Y
    sx, sy, sm = spectral_summary(X), spectral_summary(Y), spectral_summary(M)
    k, mu = sx.effective_rank, sy.effective_rank
    inner = float(np.sum(X * Y)) / math.sqrt(sx.frobenius_sq * sy.frobenius_sq)
    spec_ratio = sm.spectral_sq / max(sx.spectral_sq, sy.spectral_sq)
    hit = abs(inner) < incoherence_tol and abs(spec_ratio - 1.0) <= incoherence_tol
    lower = 2.0 * k * mu / (math.sqrt(k) + math.sqrt(mu)) ** 2
    upper = 2.0 * (k + mu)
    bound_ok = lower <= sm.effective_rank <= upper
    rank_cap = min(T, rank_r * d)
    return {
        "hit": hit,
        "bound_ok": bound_ok,
        "rank_ok": sy.algebraic_rank <= rank_cap,
        "rank_y": sy.algebraic_rank,
        "k": k, "mu": mu, "erank_m": sm.effective_rank,
        "lower": lower, "upper": upper,
        "inner": inner, "spec_ratio": spec_ratio,
    }


def verify_mixing_bounds(trials=500, T=8, d=4, rank_r=2, incoherence_tol=0.05, seed=0):
    """Block-transpose mixing: rank(Y) <= min(T, r d) always; on trials where
    ``<X, Y>_F ~ 0`` and ``||X+Y||_2^2 ~ max(||X||_2^2, ||Y||_2^2)``, check
    ``2 k mu / (sqrt k + sqrt mu)^2 <= erank(X + Y) <= 2 (k + mu)``."""
    if rank_r < 1 or rank_r > min(T, T * d):
        raise ConfigError(f"rank_r={rank_r} must lie in [1, min(T, D)]")

    def one(rng, i):
        X = _low_rank(rng, T, T * d, rank_r)
        return X, mixing_trial(X, T, d, rank_r, incoherence_tol)

    results = _run_trials(one, seed, trials)
    report = TheoremReport("mixing-bounds", seed,
                           {"T": T, "d": d, "rank_r": rank_r, "incoherence_tol": incoherence_tol},
                           trials)
    ratios = []
    for X, res in results:
        if not res["rank_ok"]:
            report.exact_violations += 1
            report.witness = report.witness or {"kind": "rank_bound", "X": _matrix(X), "rank_y": res["rank_y"]}
        if res["hit"]:
            report.assumption_hits += 1
            ratios.append(res["erank_m"] / res["upper"])
            if not res["bound_ok"]:
                report.violations += 1
                report.witness = report.witness or {"kind": "erank_bounds", "X": _matrix(X),
                                                    "erank_m": res["erank_m"],
                                                    "lower": res["lower"], "upper": res["upper"]}
    hits = [r for _, r in results if r["hit"]]
    report.stats = {
        "hit_rate": report.assumption_hits / trials,
        "rank_bound_violations": report.exact_violations,
        "erank_x_mean": float(np.mean([r["k"] for _, r in results])),
        "erank_m_mean": float(np.mean([r["erank_m"] for _, r in results])),
        "erank_m_over_upper_on_hits": _quantiles(ratios),
        "lower_margin_on_hits_min": (float(min(r["erank_m"] - r["lower"] for r in hits))
                                     if hits else None),
    }
    report.checks = {"hit_rate_positive": report.assumption_hits > 0,
                     "gated_bounds_hold": report.violations == 0}
    return report


def homogeneity_decomposition(c, v, A, B, activation=relu):
    """Closed form ``c+ w+^T + c- w-^T`` of ``phi(c v^T A) B`` for a
    positively homogeneous ``phi``."""
    u = v @ A
    w_plus = activation(u) @ B
    w_minus = activation(-u) @ B
    return np.outer(np.maximum(c, 0.0), w_plus) + np.outer(np.maximum(-c, 0.0), w_minus)


def verify_ffn_collapse(trials=500, T=8, D=6, m=5, seed=0, prob_T=32, prob_D=16, prob_k=4, prob_m=None):
    """Standard FFN ``relu(X A) B`` on rank-1 inputs has rank <= 2 (<= 1 for
    same-sign coefficients); a generic low-rank branch reports the
    distribution of ``erank(F(X)) / erank(X)``."""
    if min(T, D, m) < 2:
        raise ConfigError("T, D and m must be >= 2")
    prob_m = prob_m or prob_D
    sd = 1.0 / math.sqrt(D)

    def one(rng, i):
        same_sign = i % 2 == 0
        c = rng.standard_normal(T)
        if same_sign:
            c = np.abs(c) * (1.0 if rng.random() < 0.5 else -1.0)
        v = rng.standard_normal(D)
        A = rng.normal(0.0, sd, (D, m))
        B = rng.normal(0.0, sd, (m, D))
        X = np.outer(c, v)
        F = standard_pffn(X, StdFfnParams(A, B, activation="relu", use_residual=False))
        oracle = homogeneity_decomposition(c, v, A, B)
        scale = max(np.max(np.abs(F)), 1e-300)
        sf = spectral_summary(F, RANK_TOL)
        cap = 1 if same_sign else 2
        ok = (sf.algebraic_rank <= cap and sf.effective_rank <= cap + 1e-9
              and np.max(np.abs(F - oracle)) <= 1e-10 * scale)
        # generic low-rank branch
        Xg = rng.standard_normal((prob_T, prob_k)) @ rng.standard_normal((prob_k, prob_D))
        Ag = rng.normal(0.0, 1.0 / math.sqrt(prob_D), (prob_D, prob_m))
        Bg = rng.normal(0.0, 1.0 / math.sqrt(prob_D), (prob_m, prob_D))
        Fg = relu(Xg @ Ag) @ Bg
        ratio = effective_rank(Fg) / effective_rank(Xg)
        return {"ok": ok, "same_sign": same_sign, "rank": sf.algebraic_rank,
                "ratio": ratio, "c": c, "v": v, "A": A, "B": B}

    results = _run_trials(one, seed, trials)
    report = TheoremReport("ffn-collapse", seed,
                           {"T": T, "D": D, "m": m, "activation": "relu",
                            "prob_T": prob_T, "prob_D": prob_D, "prob_k": prob_k, "prob_m": prob_m},
                           trials, assumption_hits=trials)
    for res in results:
        if not res["ok"]:
            report.violations += 1
            report.witness = report.witness or {k: _matrix(res[k]) for k in ("c", "v", "A", "B")}
    report.exact_violations = report.violations
    ratios = np.array([r["ratio"] for r in results])
    report.stats = {
        "max_rank_same_sign": int(max(r["rank"] for r in results if r["same_sign"])),
        "max_rank_mixed_sign": int(max((r["rank"] for r in results if not r["same_sign"]), default=0)),
        "erank_ratio": _quantiles(ratios),
        "erank_ratio_below_one_rate": float(np.mean(ratios < 1.0)),
    }
    return report


def block_mixing_map(x, d_star):
    """Matrix of the linear map ``W -> (W kron I_{d*}) x`` over row-major ``vec(W)``."""
    N = x.size
    K = N // d_star
    cols = []
    for idx in range(K * K):
        E = np.zeros((K, K))
        E.flat[idx] = 1.0
        cols.append(kron(E, np.eye(d_star)) @ x)
    return np.stack(cols, axis=1)


def verify_reachability(N=24, d_star=2, trials=200, seed=0):
    """Full mixing (``d* = 1``) reaches any target via an outer-product ``W``;
    block mixing with ``d* > 1`` cannot produce block components outside the
    span of the input blocks.  The planted orthogonal mass must equal the best
    least-squares residual over all ``K x K`` weights."""
    if d_star < 2 or N % d_star:
        raise ConfigError(f"d_star={d_star} must be >= 2 and divide N={N}")
    K = N // d_star

    def one(rng, i):
        x = rng.standard_normal(N)
        z = rng.standard_normal(N)
        W = np.outer(z - x, x) / (x @ x)
        reach = float(np.linalg.norm((np.eye(N) + W) @ x - z) / np.linalg.norm(z))

        # blocks confined to a random proper subspace of R^{d*}
        dim = int(rng.integers(1, d_star))
        Q, _ = np.linalg.qr(rng.standard_normal((d_star, d_star)))
        span, perp = Q[:, :dim], Q[:, dim:]
        blocks = (span @ rng.standard_normal((dim, K))).T
        xb = blocks.reshape(-1)
        inside = (span @ rng.standard_normal((dim, K))).T
        outside = (perp @ rng.standard_normal((d_star - dim, K))).T
        g = float(rng.uniform(0.5, 2.0))
        outside *= g / np.linalg.norm(outside)
        target = (inside + outside).reshape(-1)
        Phi = block_mixing_map(xb, d_star)
        w, *_ = np.linalg.lstsq(Phi, target, rcond=None)
        residual = float(np.linalg.norm(Phi @ w - target))
        return {"reach": reach, "residual": residual, "planted": g, "dim": dim,
                "x": x, "z": z, "xb": xb, "target": target}

    results = _run_trials(one, seed, trials)
    report = TheoremReport("reachability", seed, {"N": N, "d_star": d_star, "K": K}, trials,
                           assumption_hits=trials)
    for res in results:
        ok_reach = res["reach"] <= 1e-10
        ok_gap = abs(res["residual"] - res["planted"]) <= 1e-8
        if not (ok_reach and ok_gap):
            report.violations += 1
            report.witness = report.witness or {
                "kind": "reach" if not ok_reach else "gap",
                **{k: _matrix(res[k]) for k in ("x", "z", "xb", "target")},
                "planted": res["planted"], "residual": res["residual"]}
    report.exact_violations = report.violations
    report.stats = {
        "max_reach_residual": max(r["reach"] for r in results),
        "max_gap_error": max(abs(r["residual"] - r["planted"]) for r in results),
        "min_planted": min(r["planted"] for r in results),
    }
    return report


def lifting_width(k, D, constant=LIFTING_WIDTH_CONSTANT):
    return math.ceil(constant * k * math.log(D))


def _glu_random(rng, D, m):
    sd = 1.0 / math.sqrt(D)
    return (rng.normal(0.0, sd, (D, m)), rng.normal(0.0, sd, (D, m)),
            rng.normal(0.0, sd, (m, D)), rng.normal(0.0, sd, (D, D)))


def _latent_input(rng, T, D, k, row_energy):
    """``S V^T`` with orthonormal ``V`` and expected squared row norm ``row_energy``."""
    S = rng.standard_normal((T, k)) * math.sqrt(row_energy / k)
    V, _ = np.linalg.qr(rng.standard_normal((D, k)))
    return S @ V.T


def verify_lifting(trials=200, T=16, D=32, k=2, m=None, seed=0, min_rate=0.95, row_energy=None):
    """Gated product ``gelu(X A) * (X C)`` on rank-k inputs has rank
    ``>= min(D, k(k+1)/2)``; also records ``erank(G(X)) - erank(X)`` for the
    full gated block with random readout and residual map.

    ``row_energy`` (default ``D``, the squared row norm of a layer-normed
    token) sets the input scale; the gate is quadratic, so its share of the
    output grows with it.
    """
    m = m or lifting_width(k, D)
    row_energy = float(row_energy or D)
    q = k * (k + 1) // 2
    if m < lifting_width(k, D):
        raise ConfigError(f"m={m} is below the width requirement {lifting_width(k, D)}")
    if T < q:
        raise ConfigError(f"T={T} must be >= k(k+1)/2 = {q}")
    target = min(D, q)

    def one(rng, i):
        X = _latent_input(rng, T, D, k, row_energy)
        A, C, B, R = _glu_random(rng, D, m)
        H = gelu(X @ A) * (X @ C)
        rank_h = numerical_rank(H, RANK_TOL)
        G = glu_pffn(X, GluFfnParams(A, C, B, R))
        margin = effective_rank(G) - effective_rank(X)
        return {"rank": rank_h, "margin": margin, "X": X}

    results = _run_trials(one, seed, trials)
    report = TheoremReport("glu-lifting", seed,
                           {"T": T, "D": D, "k": k, "m": m, "width_constant": LIFTING_WIDTH_CONSTANT,
                            "rank_tol": RANK_TOL, "required": target, "min_rate": min_rate,
                            "row_energy": row_energy},
                           trials, assumption_hits=trials)
    for res in results:
        if res["rank"] < target:
            report.violations += 1
            report.witness = report.witness or {"X": _matrix(res["X"]), "rank": res["rank"]}
    margins = np.array([r["margin"] for r in results])
    rate = 1.0 - report.violations / trials
    report.stats = {
        "lifting_rate": rate,
        "rank_min": int(min(r["rank"] for r in results)),
        "erank_margin": _quantiles(margins),
        "erank_margin_positive_rate": float(np.mean(margins > 0)),
    }
    report.checks = {"lifting_rate": rate >= min_rate,
                     "median_margin_positive": float(np.median(margins)) > 0}
    return report


def verify_glu_erank_gain(trials=500, T=16, D=12, k=3, r=3, seed=0, row_energy=None):
    """Compare ``erank(G(X))``, ``erank(F(X))`` and ``erank(X)`` on shared
    rank-k inputs (``F`` = relu FFN, ``G`` = gated FFN with residual map, both
    of hidden width ``r D``)."""
    m = r * D
    row_energy = float(row_energy or D)

    def one(rng, i):
        X = _latent_input(rng, T, D, k, row_energy)
        A, C, B, R = _glu_random(rng, D, m)
        F = relu(X @ A) @ B
        G = glu_pffn(X, GluFfnParams(A, C, B, R))
        return effective_rank(X), effective_rank(F), effective_rank(G)

    values = np.array(_run_trials(one, seed, trials))
    ex, ef, eg = values.T
    gain = eg - ef
    report = TheoremReport("glu-gain", seed, {"T": T, "D": D, "k": k, "r": r, "row_energy": row_energy}, trials,
                           assumption_hits=trials)
    report.stats = {
        "erank_x_mean": float(ex.mean()), "erank_f_mean": float(ef.mean()),
        "erank_g_mean": float(eg.mean()),
        "gain_g_over_f": _quantiles(gain),
        "delta_g_over_x": _quantiles(eg - ex),
    }
    report.checks = {"median_gain_positive": float(np.median(gain)) > 0}
    return report


def run_theorem(name, seed=0, trials=None):
    """Run one named check (see :data:`THEOREMS`) at its default configuration."""
    kwargs = {"seed": seed}
    if trials is not None:
        kwargs["trials"] = trials
    if name == "mixing-bounds":
        return [verify_mixing_bounds(**kwargs)]
    if name == "ffn-collapse":
        return [verify_ffn_collapse(**kwargs)]
    if name == "reachability":
        return [verify_reachability(**kwargs)]
    if name == "glu-lifting":
        return [verify_lifting(k=k, **kwargs) for k in (2, 3)]
    if name == "glu-gain":
        return [verify_glu_erank_gain(**kwargs)]
    raise ConfigError(f"unknown theorem {name!r}; expected one of {THEOREMS} or 'all'")
