# Train both variants briefly on synthetic click data and trace the mean
# effective rank through the stages.  Writes CSV and SVG next to this file
# under demo_out/.  Run: python demos/04_toy_training_traces.py  (about 15 s)
import os

from ranklab.model import VARIANTS, ModelConfig, init_model
from ranklab.plot import render_svg
from ranklab.spectra import aggregate_csv, aggregate_trace, oscillation_profile, parse_aggregate_csv, trace_ranks
from ranklab.training.data import SyntheticSpec, generate_synthetic, split_dataset
from ranklab.training.fit import TrainConfig, fit

out_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), "demo_out")
os.makedirs(out_dir, exist_ok=True)

ds = generate_synthetic(SyntheticSpec(seed=0), 20000)
_, _, test = split_dataset(ds, 0)
print(f"{len(ds)} records, positive rate {ds.labels.mean():.3f}")

aggs = {}
for variant in VARIANTS:
    cfg = ModelConfig(variant=variant, seed=0)
    params, history = fit(init_model(cfg), ds, TrainConfig(epochs=8, seed=0))
    print(f"\n{variant}: logloss {history[0].train_logloss:.3f} -> {history[-1].train_logloss:.3f}, "
          f"valid AUC {history[-1].valid_auc:.4f}")
    aggs[variant] = aggregate_trace(trace_ranks(params, fields=test.fields[:1000]), cfg.T, cfg.D)
    for a in aggs[variant]:
        print(f"  {a.stage:9s} mean {a.mean:.3f}  std {a.std:.3f}")
    prof = oscillation_profile([a.mean for a in aggs[variant]])
    print("  up at mixing, down at FFN: score", prof.pattern_score)

text = aggregate_csv(aggs)
with open(os.path.join(out_dir, "aggregate.csv"), "w") as fh:
    fh.write(text)
with open(os.path.join(out_dir, "stages.svg"), "w") as fh:
    fh.write(render_svg(parse_aggregate_csv(text)))
print("\nwrote", out_dir)
