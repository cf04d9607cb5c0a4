"""RankMixer / RankElastor models: configuration, parameters, forward pass,
parameter counting and checkpoints.

Both variants share tokenization and the prediction head.  Each of the ``L``
blocks applies a token-mixing stage and then a per-token FFN stage:

=============  ===================================  ==============================
variant        mixing                               per-token FFN
=============  ===================================  ==============================
rankmixer      ``LN(X + block_transpose(X))``       ``gelu(x A) B + x``
rankelastor    ``LN((W + I) vec(X.T))``             ``(gelu(x W1) * (x W2)) W3 + x Wr``
=============  ===================================  ==============================

Parameters live in :class:`ModelParams` as a flat ordered mapping of name to
array; per-token FFN weights are stacked along a leading token axis.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ffn as ffn_ops
from .errors import ConfigError, DataError, NumericOverflowError
from .iohelpers import atomic_write_text
from .linalg import DEFAULT_LN_EPS, effective_ranks
from .training import autodiff as ad

VARIANTS = ("rankmixer", "rankelastor")
CHECKPOINT_SCHEMA = "rsl-ckpt-1"


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "rankelastor"
    n_fields: int = 12
    embed_dim: int = 8
    T: int = 6
    D: int = 12
    num_blocks: int = 2
    ffn_hidden: int | None = None  # rankmixer hidden width m; None means D
    expansion: int = 3  # rankelastor GLU ratio r
    vocab_sizes: tuple = 10  # one int for all fields, or one per field
    seed: int = 0
    ffn_residual: bool = True  # identity residual around the rankmixer FFN
    ln_eps: float = DEFAULT_LN_EPS

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        vocab = self.vocab_sizes
        if isinstance(vocab, (int, np.integer)):
            vocab = (int(vocab),) * self.n_fields
        vocab = tuple(int(v) for v in vocab)
        object.__setattr__(self, "vocab_sizes", vocab)
        if self.ffn_hidden is None:
            object.__setattr__(self, "ffn_hidden", self.D)
        for name in ("n_fields", "embed_dim", "T", "D", "num_blocks", "ffn_hidden", "expansion"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if len(vocab) != self.n_fields or min(vocab) < 1:
            raise ConfigError(f"need {self.n_fields} positive vocab sizes, got {vocab}")
        if self.n_fields < self.T:
            raise ConfigError(f"{self.n_fields} fields cannot fill {self.T} tokens")
        if self.variant == "rankmixer" and self.D % self.T:
            raise ConfigError(f"rankmixer needs D divisible by T, got D={self.D}, T={self.T}")

    @property
    def L(self):
        return self.num_blocks

    @property
    def r(self):
        return self.expansion

    @property
    def m(self):
        return self.ffn_hidden

    @property
    def d(self):
        return self.D // self.T

    def groups(self):
        """Field indices per token, assigned round-robin by field index."""
        return [list(range(g, self.n_fields, self.T)) for g in range(self.T)]

    def stage_labels(self):
        labels = ["embedding"]
        for l in range(1, self.num_blocks + 1):
            labels += [f"mix_{l}", f"ffn_{l}"]
        return labels

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return ModelConfig.from_dict(data)

    def to_dict(self):
        data = asdict(self)
        data["vocab_sizes"] = list(self.vocab_sizes)
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data.pop("schema", None)
        if "vocab_sizes" in data and isinstance(data["vocab_sizes"], list):
            data["vocab_sizes"] = tuple(data["vocab_sizes"])
        known = cls.__dataclass_fields__
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)


def param_shapes(cfg):
    """Ordered ``name -> (shape, fan_in)`` for every tensor of the model."""
    T, D, k, N = cfg.T, cfg.D, cfg.embed_dim, cfg.T * cfg.D
    shapes = {}
    for i, vocab in enumerate(cfg.vocab_sizes):
        shapes[f"emb.{i}"] = ((vocab, k), k)
    for g, members in enumerate(cfg.groups()):
        width = len(members) * k
        shapes[f"tok.{g}"] = ((width, D), width)
    for l in range(cfg.num_blocks):
        if cfg.variant == "rankelastor":
            h = cfg.expansion * D
            shapes[f"mix.{l}"] = ((N, N), N)
            shapes[f"ffn.{l}.W1"] = ((T, D, h), D)
            shapes[f"ffn.{l}.W2"] = ((T, D, h), D)
            shapes[f"ffn.{l}.W3"] = ((T, h, D), h)
            shapes[f"ffn.{l}.Wr"] = ((T, D, D), D)
        else:
            shapes[f"ffn.{l}.A"] = ((T, D, cfg.m), D)
            shapes[f"ffn.{l}.B"] = ((T, cfg.m, D), cfg.m)
    shapes["head.w"] = ((N,), N)
    shapes["head.b"] = ((1,), None)
    return shapes


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def copy(self):
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def size(self):
        return int(np.sum([v.size for v in self.tensors.values()]))

    def ffn_params(self, block, token):
        """Per-token FFN weights as a :mod:`ranklab.ffn` parameter record (0-based)."""
        t = self.tensors
        if self.config.variant == "rankelastor":
            return ffn_ops.GluFfnParams(*(t[f"ffn.{block}.{n}"][token] for n in ("W1", "W2", "W3", "Wr")))
        return ffn_ops.StdFfnParams(t[f"ffn.{block}.A"][token], t[f"ffn.{block}.B"][token],
                                    activation="gelu", use_residual=self.config.ffn_residual)

    def bytes_digest(self):
        import hashlib

        h = hashlib.sha256()
        for name, value in self.tensors.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(value).tobytes())
        return h.hexdigest()


def init_model(cfg):
    """Gaussian init with variance ``1 / fan_in``; the head bias starts at 0."""
    rng = np.random.default_rng(cfg.seed)
    tensors = {}
    for name, (shape, fan_in) in param_shapes(cfg).items():
        if fan_in is None:
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=shape)
    return ModelParams(cfg, tensors)


def param_count(cfg):
    """Exact parameter counts per component, from closed-form expressions."""
    T, D, k, L = cfg.T, cfg.D, cfg.embed_dim, cfg.num_blocks
    N = T * D
    embedding = k * sum(cfg.vocab_sizes)
    tokenizer = sum(len(g) * k * D for g in cfg.groups())
    if cfg.variant == "rankelastor":
        mixing_per_block = N * N
        ffn_per_token = (3 * cfg.expansion + 1) * D * D
    else:
        mixing_per_block = 0
        ffn_per_token = 2 * cfg.m * D
    head = N + 1
    table = {
        "embedding": embedding,
        "tokenizer": tokenizer,
        "mixing_per_block": mixing_per_block,
        "mixing": L * mixing_per_block,
        "ffn_per_token": ffn_per_token,
        "ffn": L * T * ffn_per_token,
        "head": head,
    }
    table["total"] = embedding + tokenizer + table["mixing"] + table["ffn"] + head
    return table


def _check_fields(fields, cfg):
    fields = np.asarray(fields)
    if fields.ndim == 1:
        fields = fields[None, :]
    if fields.ndim != 2 or fields.shape[1] != cfg.n_fields:
        raise DataError(f"expected records of {cfg.n_fields} fields, got shape {fields.shape}")
    if not np.issubdtype(fields.dtype, np.integer):
        raise DataError("field indices must be integers")
    vocab = np.asarray(cfg.vocab_sizes)
    bad = (fields < 0) | (fields >= vocab[None, :])
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataError(f"record {row}: index {fields[row, col]} out of vocab for field {col}")
    return fields


def _tokenize(tensors, cfg, fields):
    tokens = []
    for g, members in enumerate(cfg.groups()):
        parts = [ad.gather(tensors[f"emb.{i}"], fields[:, i]) for i in members]
        emb = parts[0] if len(parts) == 1 else ad.concat(parts, axis=-1)
        tokens.append(ad.reshape(emb @ tensors[f"tok.{g}"], (-1, 1, cfg.D)))
    return ad.concat(tokens, axis=1)


def tokenize(fields, params):
    """Token matrix ``X0`` (``T x D``) for one record, or ``(B, T, D)`` for many."""
    cfg = params.config
    single = np.ndim(fields) == 1
    fields = _check_fields(fields, cfg)
    tensors = {k: ad.Tensor(v) for k, v in params.tensors.items()}
    X0 = _tokenize(tensors, cfg, fields).value
    return X0[0] if single else X0


def _block_transpose(X, cfg):
    B = X.shape[0]
    grid = ad.reshape(X, (B, cfg.T, cfg.T, cfg.d))
    return ad.reshape(ad.swapaxes(grid, 1, 2), (B, cfg.T, cfg.D))


def _check_finite(t, stage):
    if not np.all(np.isfinite(t.value)):
        raise NumericOverflowError(stage)


def forward_tensors(tensors, cfg, fields=None, X0=None):
    """Forward pass on autodiff tensors.

    Returns ``(logits, stages)`` where ``stages`` is a list of
    ``(label, Tensor[B, T, D])`` in trace order.  Pass either integer
    ``fields`` (``B x n_fields``) or a precomputed ``X0`` tensor.
    """
    if X0 is None:
        X0 = _tokenize(tensors, cfg, fields)
    X = X0
    _check_finite(X, "embedding")
    stages = [("embedding", X)]
    B, T, D, N = X.shape[0], cfg.T, cfg.D, cfg.T * cfg.D
    for l in range(cfg.num_blocks):
        if cfg.variant == "rankelastor":
            x = ad.reshape(X, (B, N))
            v = x @ ad.swapaxes(tensors[f"mix.{l}"], 0, 1) + x
            M = ad.layer_norm(ad.reshape(v, (B, T, D)), cfg.ln_eps)
        else:
            M = ad.layer_norm(X + _block_transpose(X, cfg), cfg.ln_eps)
        _check_finite(M, f"mix_{l + 1}")
        stages.append((f"mix_{l + 1}", M))
        if cfg.variant == "rankelastor":
            gate = ad.gelu(ad.token_matmul(M, tensors[f"ffn.{l}.W1"]))
            lin = ad.token_matmul(M, tensors[f"ffn.{l}.W2"])
            X = (ad.token_matmul(gate * lin, tensors[f"ffn.{l}.W3"])
                 + ad.token_matmul(M, tensors[f"ffn.{l}.Wr"]))
        else:
            H = ad.gelu(ad.token_matmul(M, tensors[f"ffn.{l}.A"]))
            X = ad.token_matmul(H, tensors[f"ffn.{l}.B"])
            if cfg.ffn_residual:
                X = X + M
        _check_finite(X, f"ffn_{l + 1}")
        stages.append((f"ffn_{l + 1}", X))
    flat = ad.reshape(X, (B, N)) @ ad.reshape(tensors["head.w"], (N, 1))
    logits = ad.reshape(flat, (B,)) + tensors["head.b"]
    _check_finite(logits, "head")
    return logits, stages


@dataclass
class RankTrace:
    """Per-sample effective rank at every stage: ``values[sample, stage]``."""

    labels: tuple
    values: np.ndarray

    @property
    def stages(self):
        return [(label, self.values[:, j]) for j, label in enumerate(self.labels)]

    def __len__(self):
        return len(self.labels)


def forward_batch(params, fields=None, X0=None):
    """Inference on many records: ``(logits[B], {stage: activations[B, T, D]})``."""
    cfg = params.config
    tensors = {k: ad.Tensor(v) for k, v in params.tensors.items()}
    if X0 is not None:
        X0 = np.asarray(X0, dtype=np.float64)
        X0 = ad.Tensor(X0[None] if X0.ndim == 2 else X0)
    else:
        fields = _check_fields(fields, cfg)
    logits, stages = forward_tensors(tensors, cfg, fields=fields, X0=X0)
    return logits.value, {label: t.value for label, t in stages}


def trace_from_activations(activations, labels):
    values = np.stack([effective_ranks(activations[label]) for label in labels], axis=1)
    return RankTrace(tuple(labels), values)


def forward_trace(X0, params, cfg=None):
    """One sample: ``(logit, RankTrace, activations)`` with ``2L + 1`` stages."""
    cfg = cfg or params.config
    if cfg != params.config:
        raise ConfigError("config does not match the parameters")
    logits, acts = forward_batch(params, X0=X0)
    labels = cfg.stage_labels()
    trace = trace_from_activations(acts, labels)
    return float(logits[0]), trace, {k: v[0] for k, v in acts.items()}


def predict_proba(params, fields, batch_size=4096):
    fields = np.asarray(fields)
    out = [ad.sigmoid(forward_batch(params, fields[i:i + batch_size])[0])
           for i in range(0, len(fields), batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


def checkpoint_document(params):
    cfg = params.config
    return {
        "schema": CHECKPOINT_SCHEMA,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "tensors": [
            {"name": name, "shape": list(v.shape), "values": v.reshape(-1).tolist()}
            for name, v in params.tensors.items()
        ],
    }


def save_checkpoint(path, params):
    atomic_write_text(path, json.dumps(checkpoint_document(params)) + "\n")


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    return params_from_document(doc)


def params_from_document(doc):
    if doc.get("schema") != CHECKPOINT_SCHEMA:
        raise ConfigError(f"not a {CHECKPOINT_SCHEMA} document: schema={doc.get('schema')!r}")
    cfg = ModelConfig.from_dict(doc["config"])
    expected = param_shapes(cfg)
    tensors = {}
    for entry in doc["tensors"]:
        shape = tuple(entry["shape"])
        name = entry["name"]
        if name not in expected or expected[name][0] != shape:
            raise ConfigError(f"tensor {name!r} with shape {shape} does not fit the config")
        tensors[name] = np.array(entry["values"], dtype=np.float64).reshape(shape)
    if set(tensors) != set(expected):
        raise ConfigError(f"missing tensors: {sorted(set(expected) - set(tensors))}")
    return ModelParams(cfg, {name: tensors[name] for name in expected})
