"""Stage-wise effective-rank traces, their aggregates and the oscillation score.

A trace table holds one row per sample and one column per representation
stage (``embedding, mix_1, ffn_1, ...``).  Aggregation reduces each column to
its mean, population standard deviation and a histogram over fixed bins of
width 0.25 on ``[0, min(T, D)]``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError
from .model import RankTrace, forward_batch, trace_from_activations

BIN_WIDTH = 0.25
TRACE_HEADER = ("stage", "sample_id", "erank")
AGGREGATE_HEADER = ("stage", "mean", "std", "bin_lo", "bin_hi", "count")


def trace_ranks(params, fields=None, X0=None, chunk=1024):
    """Per-sample effective rank at every stage, as a ``RankTrace``.

    Pass either categorical ``fields`` (B, n_fields) or token matrices ``X0``
    (B, T, D).  Rows are independent forward passes, processed in chunks of
    ``chunk`` (results agree across chunk sizes up to rounding).
    """
    if (fields is None) == (X0 is None):
        raise ConfigError("pass exactly one of fields or X0")
    batch = np.asarray(fields if X0 is None else X0)
    if X0 is not None and batch.ndim == 2:
        batch = batch[None]
    if len(batch) == 0:
        raise InputError("trace batch is empty")
    labels = params.config.stage_labels()
    parts = []
    for start in range(0, len(batch), chunk):
        piece = batch[start:start + chunk]
        kw = {"X0": piece} if X0 is not None else {"fields": piece}
        _, acts = forward_batch(params, **kw)
        parts.append(trace_from_activations(acts, labels).values)
    values = np.concatenate(parts, axis=0)
    return RankTrace(tuple(labels), values)


def bin_edges(T, D):
    top = min(T, D)
    n = int(round(top / BIN_WIDTH))
    return np.arange(n + 1) * BIN_WIDTH


@dataclass(frozen=True)
class StageAggregate:
    stage: str
    mean: float
    std: float
    edges: np.ndarray
    counts: np.ndarray


def aggregate_trace(trace, T, D):
    """Mean, population std and fixed-bin histogram of every stage column."""
    values = np.asarray(trace.values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise InputError("aggregate needs a non-empty (samples, stages) table")
    edges = bin_edges(T, D)
    out = []
    for j, label in enumerate(trace.labels):
        col = values[:, j]
        # values within float slack of the top edge fall into the last bin
        idx = np.clip(np.floor(col / BIN_WIDTH).astype(np.int64), 0, len(edges) - 2)
        counts = np.bincount(idx, minlength=len(edges) - 1)
        out.append(StageAggregate(label, float(np.mean(col)), float(np.std(col)), edges, counts))
    return out


@dataclass(frozen=True)
class OscillationProfile:
    mix_deltas: tuple
    ffn_deltas: tuple
    pattern_score: float


def oscillation_profile(means):
    """Signs of the stage-to-stage changes of the mean effective rank.

    ``means`` has ``2L + 1`` entries.  The score is the fraction of deltas that
    match the expected pattern (mixing strictly up, FFN strictly down).

    >>> oscillation_profile([5, 7, 6, 8, 7]).pattern_score
    1.0
    """
    means = [float(m) for m in means]
    if len(means) < 3 or len(means) % 2 == 0:
        raise InputError(f"need 2L+1 >= 3 stage means, got {len(means)}")
    deltas = np.diff(means)
    mix = tuple(float(x) for x in deltas[0::2])
    ffn = tuple(float(x) for x in deltas[1::2])
    hits = sum(d > 0 for d in mix) + sum(d < 0 for d in ffn)
    return OscillationProfile(mix, ffn, hits / len(deltas))


def _num(x):
    return f"{x:.9g}"


def trace_csv(trace, variant=None):
    out = io.StringIO()
    lead = ["variant"] if variant is not None else []
    out.write(",".join(lead + list(TRACE_HEADER)) + "\n")
    pre = [variant] if variant is not None else []
    for j, label in enumerate(trace.labels):
        for i, v in enumerate(trace.values[:, j]):
            out.write(",".join(pre + [label, str(i), _num(v)]) + "\n")
    return out.getvalue()


def aggregate_csv(aggregates, variant=None):
    """CSV text for one or several variants.

    ``aggregates`` is a list of ``StageAggregate`` (optionally tagged with
    ``variant``) or a mapping ``{variant_name: [StageAggregate, ...]}``.
    """
    if isinstance(aggregates, dict):
        groups = list(aggregates.items())
        with_variant = True
    else:
        groups = [(variant, aggregates)]
        with_variant = variant is not None
    out = io.StringIO()
    out.write(",".join((["variant"] if with_variant else []) + list(AGGREGATE_HEADER)) + "\n")
    for name, aggs in groups:
        pre = [name] if with_variant else []
        for a in aggs:
            for lo, hi, c in zip(a.edges[:-1], a.edges[1:], a.counts):
                row = [a.stage, _num(a.mean), _num(a.std), _num(lo), _num(hi), str(int(c))]
                out.write(",".join(pre + row) + "\n")
    return out.getvalue()


def parse_aggregate_csv(text):
    """Per-variant ordered ``[(stage, mean), ...]`` from aggregate CSV text.

    Files without a variant column map to the single key ``""``.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InputError("empty aggregate CSV")
    header = tuple(rows[0])
    if header == AGGREGATE_HEADER:
        offset = 0
    elif header == ("variant",) + AGGREGATE_HEADER:
        offset = 1
    else:
        raise InputError(f"unexpected aggregate CSV header {','.join(header)!r}")
    series = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise InputError(f"line {lineno}: expected {len(header)} columns, got {len(row)}")
        name = row[0] if offset else ""
        stage = row[offset]
        try:
            mean = float(row[offset + 1])
            [float(x) for x in row[offset + 2:offset + 5]]
            int(row[offset + 5])
        except ValueError as exc:
            raise InputError(f"line {lineno}: non-numeric value") from exc
        if not np.isfinite(mean):
            raise InputError(f"line {lineno}: non-finite mean")
        points = series.setdefault(name, [])
        if points and points[-1][0] == stage:
            continue
        if any(s == stage for s, _ in points):
            raise InputError(f"line {lineno}: stage {stage!r} repeated out of order")
        points.append((stage, mean))
    if not series:
        raise InputError("aggregate CSV has no rows")
    return series
