# A relu FFN cannot lift a rank-1 token matrix past rank 2.  A gated FFN can,
# because the product of two projections creates degree-2 features.
# Run: python demos/02_ffn_collapse_and_glu_lifting.py
import math

import numpy as np

from ranklab.ffn import GluFfnParams, StdFfnParams, gelu, glu_pffn, standard_pffn
from ranklab.linalg import effective_rank, numerical_rank
from ranklab.theorems import homogeneity_decomposition, lifting_width, verify_glu_erank_gain, verify_lifting

rng = np.random.default_rng(1)
T, D, m = 8, 6, 5
A = rng.normal(0, D ** -0.5, (D, m))
B = rng.normal(0, D ** -0.5, (m, D))
v = rng.standard_normal(D)

for c in (np.abs(rng.standard_normal(T)), rng.standard_normal(T)):
    X = np.outer(c, v)
    F = standard_pffn(X, StdFfnParams(A, B, activation="relu"))
    gap = np.max(np.abs(F - homogeneity_decomposition(c, v, A, B)))
    kind = "same-sign" if np.all(c > 0) else "mixed-sign"
    print(f"{kind:10s} c: rank F(X) = {numerical_rank(F)}, closed-form gap {gap:.1e}")

# gated block on rank-k inputs, latent coordinates S and orthonormal V
T, D, k = 16, 32, 3
m = lifting_width(k, D)
S = rng.standard_normal((T, k)) * math.sqrt(D / k)
V, _ = np.linalg.qr(rng.standard_normal((D, k)))
X = S @ V.T
W1, W2 = rng.normal(0, D ** -0.5, (D, m)), rng.normal(0, D ** -0.5, (D, m))
W3, Wr = rng.normal(0, D ** -0.5, (m, D)), rng.normal(0, D ** -0.5, (D, D))
H = gelu(X @ W1) * (X @ W2)
print(f"\nrank X = {numerical_rank(X)}, rank of gated product = {numerical_rank(H)} "
      f"(needs >= {k * (k + 1) // 2}), width m = {m}")
G = glu_pffn(X, GluFfnParams(W1, W2, W3, Wr))
# algebraic rank always grows, effective rank only on typical draws
print(f"erank X = {effective_rank(X):.3f}, erank G(X) = {effective_rank(G):.3f} on this draw")

for rep in verify_lifting(trials=100, k=k), verify_glu_erank_gain(trials=100):
    print(rep.summary_line())
lift = verify_lifting(trials=100, k=k)
print("median erank G(X) - erank X over 100 draws:", round(lift.stats["erank_margin"]["q50"], 3))
