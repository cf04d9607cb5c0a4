"""Mini-batch Adam on binary cross-entropy with early stopping."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, NumericOverflowError, UndefinedMetricError
from ..model import ModelParams, forward_tensors, predict_proba
from . import autodiff as ad
from .data import split_dataset
from .metrics import evaluate_metrics, log_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    epochs: int = 30
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 2
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, epochs and patience must be >= 1")
        if self.lr < 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ConfigError("invalid optimizer hyper-parameters")

    @classmethod
    def from_dict(cls, data):
        data = {k: v for k, v in data.items() if k != "schema"}
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_logloss: float
    valid_logloss: float
    valid_auc: float  # nan when the validation split has a single class


class Adam:
    def __init__(self, params, tc):
        self.tc = tc
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        tc = self.tc
        self.step_count += 1
        c1 = 1.0 - tc.beta1**self.step_count
        c2 = 1.0 - tc.beta2**self.step_count
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= tc.beta1
            m += (1.0 - tc.beta1) * g
            v *= tc.beta2
            v += (1.0 - tc.beta2) * g * g
            params[name] -= tc.lr * (m / c1) / (np.sqrt(v / c2) + tc.eps)


def loss_and_grads(params, fields, labels):
    leaves = {k: ad.Tensor(v, requires_grad=True) for k, v in params.tensors.items()}
    logits, _ = forward_tensors(leaves, params.config, fields=fields)
    loss = ad.bce_with_logits(logits, labels)
    loss.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.value)) for k, t in leaves.items()}
    return float(loss.value), grads


def _metrics(params, ds):
    p = predict_proba(params, ds.fields)
    try:
        return evaluate_metrics(p, ds.labels)
    except UndefinedMetricError as exc:
        return float("nan"), exc.logloss


def fit(params, dataset, tc=TrainConfig()):
    """Train a copy of ``params``; returns ``(best-validation params, history)``.

    ``history[0]`` describes the initial parameters (epoch 0).  Training stops
    after ``tc.patience`` epochs without validation-loss improvement or at
    ``tc.epochs``.
    """
    if len(dataset) < 1:
        raise ConfigError("dataset is empty")
    train, valid, _ = split_dataset(dataset, tc.seed)
    if len(train) == 0:
        raise ConfigError("training split is empty")
    if len(valid) == 0:
        valid = train
    current = params.copy()
    opt = Adam(current.tensors, tc)
    rng = np.random.default_rng(tc.seed)

    def record(epoch):
        tr_loss = log_loss(predict_proba(current, train.fields), train.labels)
        auc, va_loss = _metrics(current, valid)
        return EpochRecord(epoch, tr_loss, va_loss, auc)

    history = [record(0)]
    best = (history[0].valid_logloss, current.copy(), 0)
    stale = 0
    for epoch in range(1, tc.epochs + 1):
        order = rng.permutation(len(train)) if tc.shuffle else np.arange(len(train))
        for step, start in enumerate(range(0, len(train), tc.batch_size)):
            idx = order[start:start + tc.batch_size]
            try:
                loss, grads = loss_and_grads(current, train.fields[idx], train.labels[idx])
            except NumericOverflowError as exc:
                raise NumericOverflowError(f"epoch {epoch} step {step} ({exc.stage})") from exc
            if not np.isfinite(loss):
                raise NumericOverflowError(f"epoch {epoch} step {step} (loss)")
            opt.step(current.tensors, grads)
        history.append(record(epoch))
        log.debug("epoch %d: %s", epoch, history[-1])
        if history[-1].valid_logloss < best[0]:
            best = (history[-1].valid_logloss, current.copy(), epoch)
            stale = 0
        else:
            stale += 1
            if stale >= tc.patience:
                break
    return ModelParams(params.config, best[1].tensors), history
