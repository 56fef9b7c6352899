"""Optimization: AdamW with decoupled weight decay, minibatch training with
early stopping on validation NRMSE, and the multi-head caption classifier.

Training is bit-reproducible under fixed seeds: parameter initialization is
driven by the model seed, epoch shuffling by a separate shuffle seed (so
ablations can share initializations), and all arithmetic is deterministic.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .captions import Caption
from .metrics import nrmse_hourly
from .model import Row, Surrogate, save_checkpoint
from .nn import Linear, clip_gradients
from .schema import CATEGORICAL, AttributeSchema
from .textenc import TextEncoder
from .tokenizer import Vocabulary
from .validation import ContractViolation, require


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, checkpoint_path: Optional[str] = None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    weight_decay: float = 0.01
    max_epochs: int = 200
    patience: int = 10
    clip_norm: float = 1.0
    seed: int = 0
    shuffle_seed: Optional[int] = None  # defaults to seed + 1

    def __post_init__(self):
        require(self.patience >= 1, "patience must be at least 1")
        require(self.max_epochs >= 1, "max_epochs must be at least 1")

    @property
    def effective_shuffle_seed(self) -> int:
        return self.seed + 1 if self.shuffle_seed is None else self.shuffle_seed


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_nrmse: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_nrmse: float = float("inf")
    wall_time_s: float = 0.0
    parameter_checksum: str = ""
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def content_hash(self) -> str:
        """Hash of the deterministic fields (wall time excluded)."""
        doc = asdict(self)
        doc.pop("wall_time_s")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


class AdamW:
    """Decoupled-weight-decay Adam with bias-corrected moments."""

    def __init__(self, params: dict[str, Tensor], config: TrainConfig):
        self.params = params
        self.config = config
        self.step_count = 0
        self.m = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in params.items()}

    def step(self) -> None:
        cfg = self.config
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - cfg.beta1 ** t
        bc2 = 1.0 - cfg.beta2 ** t
        for name, p in self.params.items():
            grad = p.grad
            if grad is None:
                grad = np.zeros_like(p.data)
            if not np.all(np.isfinite(grad)):
                raise TrainingDiverged(f"non-finite gradient in parameter block "
                                       f"{name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * grad
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * grad * grad
            update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
            p.data = p.data - cfg.learning_rate * (update + cfg.weight_decay * p.data)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def adamw_step(params: dict[str, Tensor], optimizer: AdamW) -> None:
    """Single optimizer step over ``params`` (must be the optimizer's own)."""
    require(params is optimizer.params, "optimizer owns a different parameter set")
    optimizer.step()


def _snapshot(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {n: p.data.copy() for n, p in params.items()}


def _restore(params: dict[str, Tensor], snap: Mapping[str, np.ndarray]) -> None:
    for n, p in params.items():
        p.data = snap[n].copy()


def fit_target_standardization(model: Surrogate, rows: Sequence[Row]) -> None:
    y = np.concatenate([r.target for r in rows])
    model.y_mean = float(y.mean())
    model.y_std = float(y.std()) or 1.0


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def evaluate_nrmse(model: Surrogate, rows: Sequence[Row], batch_size: int = 64) -> float:
    preds, targets = [], []
    for start in range(0, len(rows), batch_size):
        chunk = rows[start:start + batch_size]
        preds.append(model.predict_rows(chunk))
        targets.append(np.stack([r.target for r in chunk]))
    return nrmse_hourly(np.concatenate(preds), np.concatenate(targets))


def train_surrogate(model: Surrogate, train_rows: Sequence[Row],
                    val_rows: Sequence[Row], config: TrainConfig,
                    diverged_checkpoint_path: Optional[str] = None,
                    log=None) -> TrainReport:
    """Minimize per-timestep MSE; return the report, leaving the model at
    its best-validation parameters."""
    require(len(train_rows) > 0 and len(val_rows) > 0, "empty train or val split")
    train_ids = {r.system_id for r in train_rows if r.system_id}
    val_ids = {r.system_id for r in val_rows if r.system_id}
    require(not (train_ids & val_ids), "train and val share system ids")

    fit_target_standardization(model, train_rows)
    params = model.params()
    optimizer = AdamW(params, config)
    report = TrainReport(config=asdict(config))
    best = _snapshot(params)
    epochs_since_best = 0
    started = time.perf_counter()

    for epoch in range(config.max_epochs):
        rng = np.random.default_rng(
            (config.effective_shuffle_seed, epoch))
        epoch_losses = []
        for batch_idx in _batches(len(train_rows), config.batch_size, rng):
            rows = [train_rows[i] for i in batch_idx]
            target = ad.tensor(model.standardize_targets(rows))
            optimizer.zero_grad()
            with Tape() as tape:
                pred = model.forward_rows(rows)
                loss = ad.mse_mean(pred, target)
                ad.backward(loss, tape)
            value = loss.item()
            if not np.isfinite(value):
                _restore(params, best)
                path = None
                if diverged_checkpoint_path is not None:
                    save_checkpoint(diverged_checkpoint_path, model,
                                    meta={"diverged_epoch": epoch})
                    path = str(diverged_checkpoint_path)
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch}", path)
            epoch_losses.append(value)
            clip_gradients(params, config.clip_norm)
            optimizer.step()

        val = evaluate_nrmse(model, val_rows)
        report.train_loss.append(float(np.mean(epoch_losses)))
        report.val_nrmse.append(val)
        if log:
            log(f"epoch {epoch:3d}  loss {report.train_loss[-1]:.5f}  "
                f"val NRMSE {val:.4f}")
        if val < report.best_val_nrmse:
            report.best_val_nrmse = val
            report.best_epoch = epoch
            best = _snapshot(params)
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                break

    _restore(params, best)
    report.wall_time_s = time.perf_counter() - started
    report.parameter_checksum = model.parameter_checksum()
    return report


# ---------------------------------------------------------------------------
# caption attribute classifier (shared text encoder + one head per attribute)

class AttributeClassifierModel:
    def __init__(self, schema: AttributeSchema, vocab: Vocabulary,
                 attributes: Sequence[str], token_dim: int = 24,
                 hidden: int = 48, embed_dim: int = 64, seed: int = 0):
        self.schema = schema
        self.vocab = vocab
        rng = np.random.default_rng(seed)
        self.encoder = TextEncoder(rng, len(vocab), token_dim, hidden, embed_dim,
                                   name="clf_text")
        self.heads: dict[str, Linear] = {}
        self.categories: dict[str, tuple[str, ...]] = {}
        self.skipped: list[str] = []
        for name in attributes:
            spec = schema.spec(name)
            require(spec.kind == CATEGORICAL,
                    f"classifier heads need categorical attributes, got {name!r}")
            if len(spec.categories) < 2:
                self.skipped.append(name)
                continue
            self.heads[name] = Linear(rng, embed_dim, len(spec.categories),
                                      f"clf_head.{name}")
            self.categories[name] = tuple(spec.categories)

    def params(self) -> dict[str, Tensor]:
        out = self.encoder.params()
        for head in self.heads.values():
            out.update(head.params())
        return out

    def logits(self, token_batch: Sequence[Sequence[int]]) -> dict[str, Tensor]:
        z = self.encoder.encode_batch(token_batch)
        return {name: head(z) for name, head in self.heads.items()}

    def predict(self, captions: Sequence[Caption], batch_size: int = 64)\
            -> dict[str, list[str]]:
        out: dict[str, list[str]] = {name: [] for name in self.heads}
        for start in range(0, len(captions), batch_size):
            chunk = captions[start:start + batch_size]
            tokens = [self.vocab.encode(c.text) for c in chunk]
            for name, logit in self.logits(tokens).items():
                winners = logit.data.argmax(axis=1)
                out[name].extend(self.categories[name][i] for i in winners)
        return out

    def accuracy(self, captions: Sequence[Caption],
                 labels: Sequence[Mapping]) -> dict[str, float]:
        """Per-attribute accuracy of predictions against true attribute values."""
        predictions = self.predict(captions)
        out = {}
        for name, preds in predictions.items():
            truth = [row[name] for row in labels]
            out[name] = float(np.mean([p == t for p, t in zip(preds, truth)]))
        return out


def train_attribute_classifier(captions: Sequence[Caption],
                               labels: Sequence[Mapping],
                               schema: AttributeSchema, vocab: Vocabulary,
                               attributes: Sequence[str],
                               config: TrainConfig,
                               val_fraction: float = 0.15,
                               log=None) -> tuple[AttributeClassifierModel,
                                                  dict[str, float]]:
    """Cross-entropy over all heads with early stopping on held-out accuracy."""
    require(len(captions) == len(labels) and len(captions) > 0,
            "captions and labels must align and be nonempty")
    model = AttributeClassifierModel(schema, vocab, attributes, seed=config.seed)
    require(len(model.heads) > 0, "no multi-category attributes to classify")

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(captions))
    n_val = max(1, int(len(captions) * val_fraction))
    val_idx, train_idx = order[:n_val], order[n_val:]

    tokens = [vocab.encode(c.text) for c in captions]
    label_ids = {
        name: np.array([model.categories[name].index(row[name]) for row in labels])
        for name in model.heads
    }

    params = model.params()
    optimizer = AdamW(params, config)
    best_acc = -1.0
    best = _snapshot(params)
    stale = 0
    for epoch in range(config.max_epochs):
        shuffle_rng = np.random.default_rng((config.effective_shuffle_seed, epoch))
        for batch in _batches(len(train_idx), config.batch_size, shuffle_rng):
            idx = train_idx[batch]
            token_batch = [tokens[i] for i in idx]
            optimizer.zero_grad()
            with Tape() as tape:
                logits = model.logits(token_batch)
                loss = None
                for name, logit in logits.items():
                    term = ad.softmax_cross_entropy(logit, label_ids[name][idx])
                    loss = term if loss is None else ad.add(loss, term)
                ad.backward(loss, tape)
            if not np.isfinite(loss.item()):
                raise TrainingDiverged(f"classifier loss non-finite at epoch {epoch}")
            clip_gradients(params, config.clip_norm)
            optimizer.step()

        val_caps = [captions[i] for i in val_idx]
        val_labels = [labels[i] for i in val_idx]
        acc = float(np.mean(list(model.accuracy(val_caps, val_labels).values())))
        if log:
            log(f"classifier epoch {epoch:3d}  held-out accuracy {acc:.4f}")
        if acc > best_acc:
            best_acc = acc
            best = _snapshot(params)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    _restore(params, best)
    val_caps = [captions[i] for i in val_idx]
    val_labels = [labels[i] for i in val_idx]
    return model, model.accuracy(val_caps, val_labels)
