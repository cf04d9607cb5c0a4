import json
import math

import numpy as np
import pytest

from ranklab.errors import ConfigError
from ranklab.ffn import GluFfnParams, StdFfnParams, glu_pffn, relu, standard_pffn
from ranklab.linalg import effective_rank, numerical_rank
from ranklab.mixing import MixingConfig, block_transpose
from ranklab.theorems import (THEOREMS, TheoremReport, block_mixing_map, homogeneity_decomposition,
                              lifting_width, mixing_trial, run_theorem, save_report, verify_ffn_collapse,
                              verify_glu_erank_gain, verify_lifting, verify_mixing_bounds,
                              verify_reachability)


def test_block_exchange_hand_example():
    X = np.array([[1.0, 0, 0, 1], [2, 0, 0, 2]])
    Y = block_transpose(X, MixingConfig(2, 4))
    np.testing.assert_array_equal(Y, [[1, 0, 2, 0], [0, 1, 0, 2]])
    res = mixing_trial(X, 2, 2, 1, 0.05)
    assert res["rank_y"] == 2 and res["rank_ok"]


def test_block_symmetric_input_is_not_a_hit():
    X = np.array([[1.0, 2.0], [2.0, 1.0]])
    res = mixing_trial(X, 2, 1, 2, 0.05)
    assert not res["hit"]
    assert res["inner"] == pytest.approx(1.0)
    assert res["erank_m"] == pytest.approx(res["k"], rel=1e-12)


def _rand_ffn(seed, D=6, m=5):
    rng = np.random.default_rng(seed)
    return rng.normal(0, D ** -0.5, (D, m)), rng.normal(0, D ** -0.5, (m, D)), rng.standard_normal(D)


@pytest.mark.parametrize("seed", range(5))
def test_same_sign_rank_one_collapses_to_rank_one(seed):
    A, B, v = _rand_ffn(seed)
    X = np.outer([1.0, 2.0, 3.0], v)
    F = standard_pffn(X, StdFfnParams(A, B, activation="relu"))
    assert numerical_rank(F, 1e-8) == 1


@pytest.mark.parametrize("seed", range(5))
def test_mixed_sign_matches_decomposition(seed):
    A, B, v = _rand_ffn(seed)
    c = np.array([1.0, -1.0])
    F = relu(np.outer(c, v) @ A) @ B
    oracle = homogeneity_decomposition(c, v, A, B)
    assert np.max(np.abs(F - oracle)) <= 1e-10
    assert numerical_rank(F, 1e-8) <= 2


def test_outer_product_hand_example():
    x, z = np.array([1.0, 0.0]), np.array([3.0, 4.0])
    W = np.outer(z - x, x) / (x @ x)
    np.testing.assert_array_equal(W, [[2, 0], [4, 0]])
    np.testing.assert_array_equal((np.eye(2) + W) @ x, z)
    assert not np.any(np.outer(x - x, x))


def test_block_span_residual_hand_example():
    xb = np.array([1.0, 0, 1, 0])
    target = np.array([0.0, 1, 0, 0])
    Phi = block_mixing_map(xb, 2)
    w, *_ = np.linalg.lstsq(Phi, target, rcond=None)
    assert np.linalg.norm(Phi @ w - target) == pytest.approx(1.0, abs=1e-12)


def test_block_mixing_map_matches_kron():
    rng = np.random.default_rng(3)
    x, W = rng.standard_normal(6), rng.standard_normal((3, 3))
    np.testing.assert_allclose(block_mixing_map(x, 2) @ W.reshape(-1), np.kron(W, np.eye(2)) @ x, atol=1e-14)


def test_lifting_width():
    assert lifting_width(2, 32) == 56 == math.ceil(16 * math.log(32))
    with pytest.raises(ConfigError):
        verify_lifting(trials=2, k=2, m=10)


def test_lifting_trivial_rank_one():
    rep = verify_lifting(trials=20, k=1, seed=0)
    assert rep.config["required"] == 1 and rep.stats["rank_min"] >= 1 and rep.violations == 0


def test_lifting_small_dimension_bound():
    rep = verify_lifting(trials=30, T=16, D=12, k=3, seed=1)
    assert rep.config["required"] == 6 and rep.stats["lifting_rate"] >= 0.95


def test_glu_identity_reduction():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((16, 12))
    z = np.zeros((12, 36))
    G = glu_pffn(X, GluFfnParams(z, z, z.T, np.eye(12)))
    assert effective_rank(G) == effective_rank(X)


def test_rank_one_same_sign_glu_versus_relu():
    rng = np.random.default_rng(5)
    D = 12
    X = np.outer(np.abs(rng.standard_normal(16)) + 0.1, rng.standard_normal(D)) * math.sqrt(D)
    W1, W2, W3, Wr = (rng.normal(0, D ** -0.5, s) for s in [(D, 36), (D, 36), (36, D), (D, D)])
    assert effective_rank(relu(X @ W1) @ W3) <= 1 + 1e-9
    assert effective_rank(glu_pffn(X, GluFfnParams(W1, W2, W3, Wr))) >= 1


def test_report_invariants():
    with pytest.raises(ValueError):
        TheoremReport("x", 0, {}, trials=3, assumption_hits=1, violations=2)
    with pytest.raises(ValueError):
        TheoremReport("x", 0, {}, trials=3, assumption_hits=4)
    rep = TheoremReport("x", 0, {}, trials=3, assumption_hits=3, checks={"a": True})
    assert rep.passed and rep.summary_line().startswith("PASS x")


@pytest.mark.parametrize("fn,kw", [
    (verify_mixing_bounds, {"trials": 60}),
    (verify_ffn_collapse, {"trials": 40}),
    (verify_reachability, {"trials": 30}),
    (verify_glu_erank_gain, {"trials": 40}),
])
def test_exact_branches_and_reproducibility(fn, kw, monkeypatch):
    a = fn(seed=11, **kw)
    monkeypatch.setenv("RSL_THREADS", "1")
    b = fn(seed=11, **kw)
    assert a.exact_violations == 0
    assert a.violations <= a.assumption_hits <= a.trials
    assert json.dumps(a.to_document(), sort_keys=True) == json.dumps(b.to_document(), sort_keys=True)


def test_reachability_requires_block_size():
    with pytest.raises(ConfigError):
        verify_reachability(N=6, d_star=4)
    with pytest.raises(ConfigError):
        verify_reachability(d_star=1)


def test_run_theorem_names_and_report_file(tmp_path):
    assert set(THEOREMS) == {"mixing-bounds", "ffn-collapse", "reachability", "glu-lifting", "glu-gain"}
    with pytest.raises(ConfigError):
        run_theorem("nope")
    reps = run_theorem("glu-lifting", seed=2, trials=10)
    assert [r.config["k"] for r in reps] == [2, 3]
    path = tmp_path / "r.json"
    save_report(path, reps[0])
    doc = json.loads(path.read_text())
    assert doc["schema"] == "rsl-report-1" and doc["theorem"] == "glu-lifting"
    for key in ("seed", "config", "trials", "assumption_hits", "violations", "witness", "stats", "passed"):
        assert key in doc
