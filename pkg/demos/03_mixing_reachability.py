# Full learnable mixing can send any token vector anywhere; mixing whole
# blocks with a small K x K matrix cannot leave the span of the input blocks.
# Run: python demos/03_mixing_reachability.py
import numpy as np

from ranklab.theorems import block_mixing_map, verify_mixing_bounds, verify_reachability

rng = np.random.default_rng(2)

x, z = rng.standard_normal(12), rng.standard_normal(12)
W = np.outer(z - x, x) / (x @ x)
print("full mixing residual |(I + W) x - z| =", np.linalg.norm((np.eye(12) + W) @ x - z))

# blocks of size 2, all parallel to e1; try to reach e2 in the first output block
xb = np.tile([1.0, 0.0], 3)
target = np.zeros(6)
target[1] = 1.0
Phi = block_mixing_map(xb, 2)
w, *_ = np.linalg.lstsq(Phi, target, rcond=None)
print("best block-mixing residual       =", np.linalg.norm(Phi @ w - target))

print()
print(verify_reachability(trials=100).summary_line())

# how often random low-rank inputs meet the incoherence assumptions
rep = verify_mixing_bounds(trials=300)
print(rep.summary_line())
print("hit rate", rep.stats["hit_rate"], " mean erank X -> X+Y:",
      round(rep.stats["erank_x_mean"], 3), "->", round(rep.stats["erank_m_mean"], 3))
