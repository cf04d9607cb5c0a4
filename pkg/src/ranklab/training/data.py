"""Synthetic click-through data with a hidden low-rank pairwise score.

Every categorical value of every field owns a latent vector; a record's score
is a weighted sum of inner products over all field pairs, standardized to unit
variance.  Labels are Bernoulli draws of ``sigmoid(score / temperature + bias)``
where ``bias`` is calibrated so the expected positive rate equals the prior.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from .autodiff import sigmoid

DATA_HEADER = "rsl-data-1"
_CALIBRATION_DRAWS = 20000


@dataclass(frozen=True)
class SyntheticSpec:
    n_fields: int = 12
    vocab_sizes: tuple = 10
    latent_rank: int = 4
    temperature: float = 0.4
    prior: float = 0.25
    seed: int = 0

    def __post_init__(self):
        vocab = self.vocab_sizes
        if isinstance(vocab, (int, np.integer)):
            vocab = (int(vocab),) * self.n_fields
        object.__setattr__(self, "vocab_sizes", tuple(int(v) for v in vocab))
        if self.n_fields < 2:
            raise ConfigError("need at least two fields for pairwise interactions")
        if len(self.vocab_sizes) != self.n_fields or min(self.vocab_sizes) < 2:
            raise ConfigError(f"need {self.n_fields} vocab sizes >= 2, got {self.vocab_sizes}")
        if not 0.0 < self.prior < 1.0:
            raise ConfigError(f"prior must lie in (0, 1), got {self.prior}")
        if self.latent_rank < 1 or not self.temperature > 0:
            raise ConfigError("latent_rank must be >= 1 and temperature > 0")


@dataclass
class Dataset:
    fields: np.ndarray  # (count, n_fields) int64
    labels: np.ndarray  # (count,) int64 in {0, 1}
    scores: np.ndarray | None = None  # hidden standardized score, generator only

    def __len__(self):
        return len(self.labels)

    @property
    def n_fields(self):
        return self.fields.shape[1]

    def subset(self, index):
        scores = None if self.scores is None else self.scores[index]
        return Dataset(self.fields[index], self.labels[index], scores)

    def vocab_sizes(self):
        return tuple(int(v) + 1 for v in self.fields.max(axis=0))


class _HiddenScore:
    def __init__(self, spec, rng):
        self.latents = [rng.normal(0.0, np.sqrt(1.0 / spec.latent_rank), size=(v, spec.latent_rank))
                        for v in spec.vocab_sizes]
        n = spec.n_fields
        self.pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        self.weights = rng.normal(size=len(self.pairs))
        # each pair term has variance 1 / latent_rank
        self.scale = np.sqrt(np.sum(self.weights**2) / spec.latent_rank)

    def __call__(self, fields):
        z = [lat[fields[:, i]] for i, lat in enumerate(self.latents)]
        score = np.zeros(len(fields))
        for w, (i, j) in zip(self.weights, self.pairs):
            score += w * np.sum(z[i] * z[j], axis=1)
        return score / self.scale


def _calibrate_bias(logits, prior):
    lo, hi = -30.0, 30.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.mean(sigmoid(logits + mid)) < prior:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _draw_fields(spec, rng, count):
    return np.stack([rng.integers(0, v, size=count) for v in spec.vocab_sizes], axis=1).astype(np.int64)


def generate_synthetic(spec, count):
    """Draw ``count`` labelled records; identical ``(spec, count)`` give identical data."""
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    latent_ss, calib_ss, sample_ss = np.random.SeedSequence(spec.seed).spawn(3)
    score = _HiddenScore(spec, np.random.default_rng(latent_ss))
    calib = _draw_fields(spec, np.random.default_rng(calib_ss), _CALIBRATION_DRAWS)
    bias = _calibrate_bias(score(calib) / spec.temperature, spec.prior)
    rng = np.random.default_rng(sample_ss)
    fields = _draw_fields(spec, rng, count)
    s = score(fields)
    p = sigmoid(s / spec.temperature + bias)
    labels = (rng.random(count) < p).astype(np.int64)
    return Dataset(fields, labels, s)


def format_dataset(ds):
    out = io.StringIO()
    out.write(f"{DATA_HEADER},n_fields={ds.n_fields}\n")
    for label, row in zip(ds.labels, ds.fields):
        out.write(f"{int(label)}," + ",".join(str(int(v)) for v in row) + "\n")
    return out.getvalue()


def write_dataset(path, ds):
    from ..iohelpers import atomic_write_text

    atomic_write_text(path, format_dataset(ds))


def parse_dataset(text):
    lines = text.splitlines()
    if not lines:
        raise DataError("empty dataset document")
    head = lines[0].split(",")
    if len(head) != 2 or head[0] != DATA_HEADER or not head[1].startswith("n_fields="):
        raise DataError(f"bad dataset header {lines[0]!r}")
    try:
        n = int(head[1][len("n_fields="):])
    except ValueError as exc:
        raise DataError(f"bad dataset header {lines[0]!r}") from exc
    labels, fields = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != n + 1:
            raise DataError(f"line {lineno}: expected {n + 1} values, got {len(parts)}")
        try:
            values = [int(p) for p in parts]
        except ValueError as exc:
            raise DataError(f"line {lineno}: non-integer value") from exc
        if values[0] not in (0, 1) or min(values[1:]) < 0:
            raise DataError(f"line {lineno}: label must be 0/1 and indices non-negative")
        labels.append(values[0])
        fields.append(values[1:])
    if not labels:
        raise DataError("dataset has no records")
    return Dataset(np.array(fields, dtype=np.int64), np.array(labels, dtype=np.int64))


def read_dataset(path):
    with open(path) as fh:
        return parse_dataset(fh.read())


def split_dataset(ds, seed, fractions=(0.8, 0.1, 0.1)):
    """Deterministic train/valid/test split by a seeded permutation."""
    n = len(ds)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_valid = int(round(fractions[1] * n))
    return (ds.subset(order[:n_train]), ds.subset(order[n_train:n_train + n_valid]),
            ds.subset(order[n_train + n_valid:]))
