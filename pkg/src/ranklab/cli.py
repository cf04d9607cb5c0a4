"""Command-line front end: ``rsl <subcommand> ...``.

Exit codes: 0 success, 1 usage or input error, 2 an exact theorem check
recorded violations, 3 numeric abort (non-finite values).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import NumericOverflowError, RankLabError
from .iohelpers import atomic_write_text
from .model import VARIANTS, ModelConfig, init_model, load_checkpoint, param_count, save_checkpoint
from .plot import render_svg
from .spectra import aggregate_csv, aggregate_trace, parse_aggregate_csv, trace_csv, trace_ranks
from .theorems import THEOREMS, run_theorem, save_report
from .training.data import SyntheticSpec, generate_synthetic, read_dataset, split_dataset, write_dataset
from .training.fit import TrainConfig, fit

CONFIG_SCHEMA = "rsl-config-1"
EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("ranklab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _model_flags(p, with_variant=True):
    g = p.add_argument_group("model")
    if with_variant:
        g.add_argument("--variant", choices=VARIANTS)
    g.add_argument("--T", type=int)
    g.add_argument("--D", type=int)
    g.add_argument("--L", type=int, dest="num_blocks")
    g.add_argument("--r", type=int, dest="expansion")
    g.add_argument("--m", type=int, dest="ffn_hidden")
    g.add_argument("--n-fields", type=int, dest="n_fields")
    g.add_argument("--embed-dim", type=int, dest="embed_dim")
    g.add_argument("--vocab", type=int, dest="vocab_sizes")
    g.add_argument("--no-ffn-residual", action="store_false", dest="ffn_residual", default=None)


_MODEL_KEYS = ("variant", "T", "D", "num_blocks", "expansion", "ffn_hidden", "n_fields",
               "embed_dim", "vocab_sizes", "ffn_residual")
_TRAIN_KEYS = ("batch_size", "epochs", "lr", "patience")


def _read_config(path):
    if path is None:
        return {}, {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != CONFIG_SCHEMA:
        raise UsageError(f"config {path} must be a JSON object with schema {CONFIG_SCHEMA!r}")
    unknown = set(doc) - {"schema", "model", "train"}
    if unknown:
        raise UsageError(f"config {path}: unknown sections {sorted(unknown)}")
    return dict(doc.get("model", {})), dict(doc.get("train", {}))


def _overrides(args, keys):
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _build_model_config(base, args, dataset=None):
    data = dict(base)
    data.update(_overrides(args, _MODEL_KEYS))
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if dataset is not None:
        data.setdefault("n_fields", dataset.n_fields)
        data.setdefault("vocab_sizes", list(dataset.vocab_sizes()))
    return ModelConfig.from_dict(data)


def cmd_gen_data(args):
    spec = SyntheticSpec(n_fields=args.n_fields, vocab_sizes=args.vocab, latent_rank=args.latent_rank,
                         temperature=args.temperature, prior=args.prior, seed=args.seed)
    ds = generate_synthetic(spec, args.count)
    write_dataset(args.out, ds)
    print(f"wrote {len(ds)} records ({ds.labels.mean():.4f} positive) to {args.out}")
    return EXIT_OK


def cmd_train(args):
    model_cfg, train_cfg = _read_config(args.config)
    ds = read_dataset(args.data)
    cfg = _build_model_config(model_cfg, args, ds)
    train_cfg.update(_overrides(args, _TRAIN_KEYS))
    train_cfg["seed"] = cfg.seed
    tc = TrainConfig.from_dict(train_cfg)
    params, history = fit(init_model(cfg), ds, tc)
    save_checkpoint(args.out, params)
    lines = ["epoch,train_logloss,valid_logloss,valid_auc"]
    lines += [f"{h.epoch},{h.train_logloss:.9g},{h.valid_logloss:.9g},{h.valid_auc:.9g}" for h in history]
    atomic_write_text(args.history, "\n".join(lines) + "\n")
    last = history[-1]
    print(f"{cfg.variant}: {len(history) - 1} epochs, train logloss "
          f"{history[0].train_logloss:.4f} -> {min(h.train_logloss for h in history):.4f}, "
          f"final valid auc {last.valid_auc:.4f}")
    return EXIT_OK


def _trace_models(args):
    if args.checkpoint:
        if args.variant:
            raise UsageError("use either --checkpoint or --variant, not both")
        return [load_checkpoint(path) for path in args.checkpoint]
    if not args.variant:
        raise UsageError("trace needs --checkpoint or --variant")
    model_cfg, _ = _read_config(args.config)
    ds = read_dataset(args.data) if args.data else None
    models = []
    for variant in args.variant:
        base = dict(model_cfg, variant=variant)
        ns = argparse.Namespace(**{**vars(args), "variant": None})
        models.append(init_model(_build_model_config(base, ns, ds)))
    return models


def cmd_trace(args):
    models = _trace_models(args)
    cfg0 = models[0].config
    if args.data:
        ds = read_dataset(args.data)
        _, _, test = split_dataset(ds, args.split_seed)
        fields = (test if len(test) else ds).fields[:args.samples]
    else:
        spec = SyntheticSpec(n_fields=cfg0.n_fields, vocab_sizes=min(cfg0.vocab_sizes), seed=args.split_seed)
        fields = generate_synthetic(spec, args.samples).fields
    names = []
    for p in models:
        name = p.config.variant
        while name in names:
            name += "'"
        names.append(name)
    multi = len(models) > 1
    trace_text, aggs = [], {}
    for name, p in zip(names, models):
        tr = trace_ranks(p, fields=fields)
        text = trace_csv(tr, variant=name if multi else None)
        trace_text.append(text if not trace_text else text.split("\n", 1)[1])
        aggs[name] = aggregate_trace(tr, p.config.T, p.config.D)
        means = " ".join(f"{a.stage}={a.mean:.4f}" for a in aggs[name])
        print(f"{name}: {means}")
    atomic_write_text(args.out_trace, "".join(trace_text))
    agg_text = aggregate_csv(aggs) if multi else aggregate_csv(aggs[names[0]])
    atomic_write_text(args.out_aggregate, agg_text)
    if args.plot:
        series = parse_aggregate_csv(agg_text)
        if not multi:
            series = {names[0]: series[""]}
        atomic_write_text(args.plot, render_svg(series))
    return EXIT_OK


def cmd_plot(args):
    try:
        with open(args.aggregate) as fh:
            series = parse_aggregate_csv(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read {args.aggregate}: {exc}") from exc
    atomic_write_text(args.out, render_svg(series))
    return EXIT_OK


def cmd_verify(args):
    names = THEOREMS if args.theorem == "all" else (args.theorem,)
    exact = 0
    for name in names:
        for report in run_theorem(name, seed=args.seed, trials=args.trials):
            print(report.summary_line())
            if args.out_dir:
                suffix = f"-k{report.config['k']}" if name == "glu-lifting" else ""
                save_report(os.path.join(args.out_dir, f"{name}{suffix}.json"), report)
            exact += report.exact_violations
    return EXIT_VIOLATION if exact else EXIT_OK


def cmd_paramcount(args):
    model_cfg, _ = _read_config(args.config)
    data = dict(model_cfg)
    data.update(_overrides(args, _MODEL_KEYS))
    T = data.get("T", ModelConfig.T)
    data.setdefault("n_fields", max(ModelConfig.n_fields, T))
    cfg = ModelConfig.from_dict(data)
    table = param_count(cfg)
    width = max(len(k) for k in table)
    print(f"{'component':<{width}}  count")
    for key, value in table.items():
        print(f"{key:<{width}}  {value}")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="rsl", description="Effective-rank lab for token-mixing recommenders.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-data", help="write a synthetic click-through dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=50000)
    p.add_argument("--n-fields", type=int, default=SyntheticSpec.n_fields)
    p.add_argument("--vocab", type=int, default=SyntheticSpec.vocab_sizes)
    p.add_argument("--latent-rank", type=int, default=SyntheticSpec.latent_rank)
    p.add_argument("--temperature", type=float, default=SyntheticSpec.temperature)
    p.add_argument("--prior", type=float, default=SyntheticSpec.prior)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", required=True, help="per-epoch CSV path")
    p.add_argument("--seed", type=int)
    _model_flags(p)
    g = p.add_argument_group("optimizer")
    g.add_argument("--batch-size", type=int, dest="batch_size")
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--patience", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("trace", help="stage-wise effective-rank traces")
    p.add_argument("--checkpoint", action="append")
    p.add_argument("--variant", action="append", choices=VARIANTS,
                   help="fresh initialization instead of a checkpoint (repeatable)")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--data", help="dataset file; its test split is traced")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out-trace", required=True)
    p.add_argument("--out-aggregate", required=True)
    p.add_argument("--plot", help="optional SVG of per-stage means")
    _model_flags(p, with_variant=False)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("plot", help="SVG line plot from an aggregate CSV")
    p.add_argument("aggregate")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("verify", help="Monte Carlo theorem checks")
    p.add_argument("--theorem", default="all", choices=("all",) + THEOREMS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("paramcount", help="parameter count per component")
    p.add_argument("--config")
    _model_flags(p)
    p.set_defaults(func=cmd_paramcount)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rsl {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericOverflowError as exc:
        print(f"rsl {args.command}: numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (RankLabError, OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"rsl {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
