# Effective rank as a spectral-mass measure, and what block-transpose mixing
# does to it.  Run: python demos/01_effective_rank_basics.py
import numpy as np

from ranklab.linalg import effective_rank, numerical_rank, spectral_summary
from ranklab.mixing import MixingConfig, block_transpose, rankmixer_mix, rankmixer_mix_kron

rng = np.random.default_rng(0)

# orthogonal rows: every direction carries the same mass
print("erank(I_6)            =", effective_rank(np.eye(6)))
# all rows parallel: one direction carries everything
print("erank(rank-1)         =", effective_rank(np.outer(rng.standard_normal(6), rng.standard_normal(12))))

# the measure ignores overall scale, unlike most norms
X = rng.standard_normal((6, 12))
print("erank(X), erank(1e3 X) =", effective_rank(X), effective_rank(1e3 * X))

# a full-rank matrix can still be spectrally concentrated
spike = X + 20 * np.outer(rng.standard_normal(6), rng.standard_normal(12))
s = spectral_summary(spike)
print(f"spiked X: algebraic rank {s.algebraic_rank}, effective rank {s.effective_rank:.3f}")

# block transpose on a T x D token matrix with d = D / T
cfg = MixingConfig(T=2, D=4)
X = np.array([[1.0, 0, 0, 1], [2, 0, 0, 2]])
print("\nX =\n", X)
print("block_transpose(X) =\n", block_transpose(X, cfg))
print("rank X ->", numerical_rank(X), " rank Y ->", numerical_rank(block_transpose(X, cfg)))

# the same mixing written as a dense permutation acting on the flattened tokens
cfg = MixingConfig(T=6, D=12)
X = rng.standard_normal((6, 12))
direct = rankmixer_mix(X, cfg)
dense = rankmixer_mix_kron(X, cfg)
print("\ndirect vs dense-operator mixing, max diff:", np.max(np.abs(direct - dense)))

# low-rank tokens: mixing spreads mass across new directions
L = rng.standard_normal((6, 1)) @ rng.standard_normal((1, 12)) + 0.05 * rng.standard_normal((6, 12))
print(f"erank before mixing {effective_rank(L):.3f}, after {effective_rank(rankmixer_mix(L, cfg)):.3f}")
