"""Distributional classifiers over document embeddings.

Two model families, both trained from scratch on ingested feature vectors:

- ``EmbedMlpClassifier``: one independent two-layer head per label block.
- ``HdlnClassifier``: a shared global flow (two hidden layers, the second fed
  the raw input again by concatenation) with five local two-layer heads and
  one global head emitting all 21 logits; trained on the mean of the local
  and global objectives, served as a beta-blend of the two outputs.

The objective treats the binary block at weight 1 and averages the four
fine-grained blocks; all-zero fine-grained targets (non-lonely posts)
contribute nothing.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .nn import (
    AdamWState,
    DenseLayer,
    LrSchedule,
    NumericsError,
    adamw_step,
    blockwise_softmax_xent,
    glorot_uniform,
    lr_at_step,
    relu,
    softmax,
)
from .schema import LabelSchema, PostLabelSet, default_schema
from .seeding import substream
from .validation import check_beta, check_features, targets_matrix

__all__ = [
    "TrainConfig",
    "HdlnPrediction",
    "EmbedMlpClassifier",
    "HdlnClassifier",
    "hdl_objective",
    "hdln_loss",
    "blend",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"HDLCKPT\x00"
CHECKPOINT_VERSION = 1


def _block_weights(schema: LabelSchema) -> np.ndarray:
    n_fine = len(schema.fine_grained_blocks)
    return np.array([1.0] + [1.0 / n_fine] * n_fine, dtype=np.float64)


def _blockwise_softmax(logits: np.ndarray, block_sizes: Sequence[int]) -> np.ndarray:
    # Served distributions normalize in float64 so each block sums to 1 tightly.
    z = np.asarray(logits, dtype=np.float64)
    out = np.empty_like(z)
    start = 0
    for size in block_sizes:
        out[:, start : start + size] = softmax(z[:, start : start + size], axis=1)
        start += size
    return out


def hdl_objective(
    targets,
    preds,
    schema: Optional[LabelSchema] = None,
) -> float:
    """The hierarchical distributional objective over predicted distributions.

    Mean over examples of: CE(lonely block) + (1/4) * sum of fine-grained
    block CEs. Cross-entropy is -sum_k p_k log q_k, so an all-zero target
    block contributes exactly 0. Infinite when a prediction puts zero mass
    where the target has mass.
    """
    schema = schema or default_schema()
    t = targets_matrix(targets, schema, dtype=np.float64)
    q = targets_matrix(preds, schema, require_valid=False, dtype=np.float64)
    if t.shape != q.shape:
        raise ValueError(f"targets {t.shape} and predictions {q.shape} differ")
    if t.shape[0] == 0:
        raise ValueError("empty batch")
    w = _block_weights(schema)
    total = 0.0
    start = 0
    for bi, size in enumerate(schema.block_sizes):
        p_b = t[:, start : start + size].astype(np.float64)
        q_b = q[:, start : start + size].astype(np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p_b > 0.0, p_b * np.log(q_b), 0.0)
        total += w[bi] * float(np.sum(-terms))
        start += size
    return total / t.shape[0]


def blend(local: np.ndarray, global_: np.ndarray, beta: float) -> np.ndarray:
    """Convex blend beta*local + (1-beta)*global; preserves per-block normalization."""
    check_beta(beta)
    if local.shape != global_.shape:
        raise ValueError(f"local {local.shape} and global {global_.shape} differ")
    return beta * local + (1.0 - beta) * global_


@dataclass(frozen=True)
class HdlnPrediction:
    """Batched local/global/blended block distributions (each (n, 21)) at one beta."""

    local: np.ndarray
    global_: np.ndarray
    blended: np.ndarray
    beta: float

    def __post_init__(self) -> None:
        check_beta(self.beta)

    @staticmethod
    def from_outputs(local: np.ndarray, global_: np.ndarray, beta: float) -> "HdlnPrediction":
        return HdlnPrediction(local=local, global_=global_, blended=blend(local, global_, beta), beta=beta)

    def at_beta(self, beta: float) -> np.ndarray:
        return blend(self.local, self.global_, beta)


def hdln_loss(targets, pred: HdlnPrediction, schema: Optional[LabelSchema] = None) -> float:
    """Joint loss: half the objective on local outputs plus half on global outputs."""
    schema = schema or default_schema()
    return 0.5 * hdl_objective(targets, pred.local, schema) + 0.5 * hdl_objective(
        targets, pred.global_, schema
    )


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; defaults follow the training protocol this toolkit reproduces."""

    epochs: int
    batch_size: int = 16
    base_lr: float = 2e-5
    warmup_ratio: float = 0.1
    weight_decay: float = 0.0
    patience: int = 3
    beta: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


# --- parameter construction and the two forward/backward passes -------------

def _head_layers(params: Mapping[str, np.ndarray], prefix: str) -> list[DenseLayer]:
    return [
        DenseLayer(params[f"{prefix}_w1"], params[f"{prefix}_b1"]),
        DenseLayer(params[f"{prefix}_w2"], params[f"{prefix}_b2"]),
    ]


def _init_embed_mlp(
    input_dim: int, hidden: int, block_sizes: Sequence[int], seed: int, dtype=np.float32
) -> dict[str, np.ndarray]:
    rng = substream(seed, "init")
    params: dict[str, np.ndarray] = {}
    for i, size in enumerate(block_sizes):
        params[f"head{i}_w1"] = glorot_uniform(hidden, input_dim, rng, dtype)
        params[f"head{i}_b1"] = np.zeros(hidden, dtype=dtype)
        params[f"head{i}_w2"] = glorot_uniform(size, hidden, rng, dtype)
        params[f"head{i}_b2"] = np.zeros(size, dtype=dtype)
    return params


def _init_hdln(
    input_dim: int,
    global_hidden: int,
    local_hidden: int,
    block_sizes: Sequence[int],
    seed: int,
    dtype=np.float32,
) -> dict[str, np.ndarray]:
    rng = substream(seed, "init")
    total = sum(block_sizes)
    params: dict[str, np.ndarray] = {
        "g1_w": glorot_uniform(global_hidden, input_dim, rng, dtype),
        "g1_b": np.zeros(global_hidden, dtype=dtype),
        "g2_w": glorot_uniform(global_hidden, global_hidden + input_dim, rng, dtype),
        "g2_b": np.zeros(global_hidden, dtype=dtype),
    }
    for i, size in enumerate(block_sizes):
        params[f"local{i}_w1"] = glorot_uniform(local_hidden, global_hidden, rng, dtype)
        params[f"local{i}_b1"] = np.zeros(local_hidden, dtype=dtype)
        params[f"local{i}_w2"] = glorot_uniform(size, local_hidden, rng, dtype)
        params[f"local{i}_b2"] = np.zeros(size, dtype=dtype)
    params["global_w"] = glorot_uniform(total, global_hidden, rng, dtype)
    params["global_b"] = np.zeros(total, dtype=dtype)
    return params


def _embed_mlp_logits(
    params: Mapping[str, np.ndarray], x: np.ndarray, block_sizes: Sequence[int]
) -> tuple[np.ndarray, list]:
    logits = []
    caches = []
    for i in range(len(block_sizes)):
        w1, b1 = params[f"head{i}_w1"], params[f"head{i}_b1"]
        w2, b2 = params[f"head{i}_w2"], params[f"head{i}_b2"]
        z1 = x @ w1.T + b1
        h = relu(z1)
        logits.append(h @ w2.T + b2)
        caches.append((z1, h))
    return np.concatenate(logits, axis=1), caches


def embed_mlp_loss_and_grads(
    params: Mapping[str, np.ndarray],
    x: np.ndarray,
    targets: np.ndarray,
    block_sizes: Sequence[int],
    block_weights: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    x = x.astype(params["head0_w1"].dtype, copy=False)
    n = x.shape[0]
    logits, caches = _embed_mlp_logits(params, x, block_sizes)
    losses, grad_logits = blockwise_softmax_xent(logits, targets, block_sizes)
    loss = float(np.sum(losses @ block_weights) / n)

    grads: dict[str, np.ndarray] = {}
    start = 0
    for i, size in enumerate(block_sizes):
        g2 = grad_logits[:, start : start + size] * (block_weights[i] / n)
        g2 = g2.astype(x.dtype, copy=False)
        z1, h = caches[i]
        grads[f"head{i}_w2"] = g2.T @ h
        grads[f"head{i}_b2"] = g2.sum(axis=0)
        g1 = (g2 @ params[f"head{i}_w2"]) * (z1 > 0)
        grads[f"head{i}_w1"] = g1.T @ x
        grads[f"head{i}_b1"] = g1.sum(axis=0)
        start += size
    return loss, grads


def _hdln_forward(
    params: Mapping[str, np.ndarray], x: np.ndarray, block_sizes: Sequence[int]
) -> tuple[np.ndarray, np.ndarray, dict]:
    z1 = x @ params["g1_w"].T + params["g1_b"]
    h1 = relu(z1)
    trunk_in = np.concatenate([h1, x], axis=1)
    z2 = trunk_in @ params["g2_w"].T + params["g2_b"]
    h2 = relu(z2)

    local_logits = []
    head_caches = []
    for i in range(len(block_sizes)):
        src = h1 if i == 0 else h2
        zh = src @ params[f"local{i}_w1"].T + params[f"local{i}_b1"]
        hh = relu(zh)
        local_logits.append(hh @ params[f"local{i}_w2"].T + params[f"local{i}_b2"])
        head_caches.append((zh, hh))
    global_logits = h2 @ params["global_w"].T + params["global_b"]
    cache = {"z1": z1, "h1": h1, "trunk_in": trunk_in, "z2": z2, "h2": h2, "heads": head_caches}
    return np.concatenate(local_logits, axis=1), global_logits, cache


def hdln_loss_and_grads(
    params: Mapping[str, np.ndarray],
    x: np.ndarray,
    targets: np.ndarray,
    block_sizes: Sequence[int],
    block_weights: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    dtype = params["g1_w"].dtype
    x = x.astype(dtype, copy=False)
    n = x.shape[0]
    local_logits, global_logits, cache = _hdln_forward(params, x, block_sizes)
    local_losses, g_local = blockwise_softmax_xent(local_logits, targets, block_sizes)
    global_losses, g_global = blockwise_softmax_xent(global_logits, targets, block_sizes)
    loss = float(0.5 * np.sum(local_losses @ block_weights) / n + 0.5 * np.sum(global_losses @ block_weights) / n)

    # Scale per-block logit gradients by the objective weights, the 1/2 joint
    # factors, and the batch mean.
    start = 0
    for i, size in enumerate(block_sizes):
        s = 0.5 * block_weights[i] / n
        g_local[:, start : start + size] = g_local[:, start : start + size] * s
        g_global[:, start : start + size] = g_global[:, start : start + size] * s
        start += size
    g_local = g_local.astype(dtype, copy=False)
    g_global = g_global.astype(dtype, copy=False)

    grads: dict[str, np.ndarray] = {}
    h1, h2, z1, z2 = cache["h1"], cache["h2"], cache["z1"], cache["z2"]
    grads["global_w"] = g_global.T @ h2
    grads["global_b"] = g_global.sum(axis=0)
    dh2 = g_global @ params["global_w"]
    dh1 = np.zeros_like(h1)

    start = 0
    for i, size in enumerate(block_sizes):
        zh, hh = cache["heads"][i]
        src = h1 if i == 0 else h2
        g2 = g_local[:, start : start + size]
        grads[f"local{i}_w2"] = g2.T @ hh
        grads[f"local{i}_b2"] = g2.sum(axis=0)
        g1 = (g2 @ params[f"local{i}_w2"]) * (zh > 0)
        grads[f"local{i}_w1"] = g1.T @ src
        grads[f"local{i}_b1"] = g1.sum(axis=0)
        dsrc = g1 @ params[f"local{i}_w1"]
        if i == 0:
            dh1 += dsrc
        else:
            dh2 += dsrc
        start += size

    dz2 = dh2 * (z2 > 0)
    grads["g2_w"] = dz2.T @ cache["trunk_in"]
    grads["g2_b"] = dz2.sum(axis=0)
    dtrunk = dz2 @ params["g2_w"]
    dh1 += dtrunk[:, : h1.shape[1]]
    dz1 = dh1 * (z1 > 0)
    grads["g1_w"] = dz1.T @ x
    grads["g1_b"] = dz1.sum(axis=0)
    return loss, grads


# --- estimators --------------------------------------------------------------

class _DistributionalEstimator(BaseEstimator):
    """Shared fit loop: seeded batches, AdamW with warmup+decay, early stopping."""

    kind: str = ""

    def _init_params(self, input_dim: int) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def _loss_and_grads(self, params, x, t, block_sizes, block_weights):
        raise NotImplementedError

    def _schema(self) -> LabelSchema:
        return self.schema if self.schema is not None else default_schema()

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise NotFittedError(f"this {type(self).__name__} instance is not fitted yet")

    def _validation_accuracy(self, x_val: np.ndarray, t_val: np.ndarray) -> float:
        raise NotImplementedError

    def fit(self, X, Y, validation: Optional[tuple] = None):
        schema = self._schema()
        x = check_features(X)
        t = targets_matrix(Y, schema)
        if x.shape[0] != t.shape[0]:
            raise ValueError(f"X has {x.shape[0]} rows but Y has {t.shape[0]}")
        if x.shape[0] == 0:
            raise ValueError("empty training split")
        if validation is not None:
            x_val = check_features(validation[0], n_features=x.shape[1])
            t_val = targets_matrix(validation[1], schema)
            if x_val.shape[0] == 0:
                raise ValueError("empty validation split")

        self.schema_ = schema
        self.block_sizes_ = schema.block_sizes
        self.n_features_in_ = x.shape[1]
        block_weights = _block_weights(schema)

        params = self._init_params(x.shape[1])
        state = AdamWState.init(params, weight_decay=self.weight_decay)
        n = x.shape[0]
        steps_per_epoch = math.ceil(n / self.batch_size)
        schedule = LrSchedule(
            total_steps=self.epochs * steps_per_epoch,
            base_lr=self.base_lr,
            warmup_ratio=self.warmup_ratio,
        )

        history: list[dict] = []
        best_acc = -math.inf
        best_params: Optional[dict[str, np.ndarray]] = None
        best_epoch = -1
        stale = 0
        global_step = 0
        for epoch in range(self.epochs):
            perm = substream(self.seed, "shuffle", epoch).permutation(n)
            epoch_loss = 0.0
            for b0 in range(0, n, self.batch_size):
                idx = perm[b0 : b0 + self.batch_size]
                lr_now = lr_at_step(schedule, global_step)
                loss, grads = self._loss_and_grads(
                    params, x[idx], t[idx], self.block_sizes_, block_weights
                )
                if not math.isfinite(loss):
                    raise NumericsError(
                        f"non-finite loss at epoch {epoch}, step {global_step} (lr={lr_now:g})"
                    )
                adamw_step(state, params, grads, lr_now)
                epoch_loss += loss * len(idx)
                global_step += 1
            entry = {"epoch": epoch, "train_loss": epoch_loss / n, "lr_last": lr_at_step(schedule, global_step - 1)}
            if validation is not None:
                self.params_ = params  # temporarily visible for the accuracy pass
                acc = self._validation_accuracy(x_val, t_val)
                entry["val_accuracy"] = acc
                improved = acc > best_acc
                entry["improved"] = improved
                if improved:
                    best_acc = acc
                    best_params = {k: v.copy() for k, v in params.items()}
                    best_epoch = epoch
                    stale = 0
                else:
                    stale += 1
                history.append(entry)
                if stale >= self.patience:
                    logger.info("early stop at epoch %d (no improvement for %d epochs)", epoch, stale)
                    break
            else:
                history.append(entry)

        if validation is not None and best_params is not None:
            self.params_ = best_params
            self.best_epoch_ = best_epoch
            self.best_val_accuracy_ = best_acc
        else:
            self.params_ = params
            self.best_epoch_ = len(history) - 1
        self.history_ = history
        return self

    def predict_proba(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        """Per-block argmax indices, shape (n, n_blocks); ties go to the lowest index."""
        probs = self.predict_proba(X)
        out = np.empty((probs.shape[0], len(self.block_sizes_)), dtype=np.int64)
        start = 0
        for i, size in enumerate(self.block_sizes_):
            out[:, i] = np.argmax(probs[:, start : start + size], axis=1)
            start += size
        return out

    # Shared accuracy helpers for early stopping.

    def _binary_accuracy(self, probs: np.ndarray, t: np.ndarray) -> float:
        pred = np.argmax(probs[:, :2], axis=1)
        true = np.argmax(t[:, :2], axis=1)
        return float(np.mean(pred == true))

    def _blockwise_accuracy(self, probs: np.ndarray, t: np.ndarray) -> float:
        """Mean over blocks of argmax accuracy; all-zero target blocks are skipped."""
        accs = []
        start = 0
        for size in self.block_sizes_:
            tb = t[:, start : start + size]
            mask = tb.sum(axis=1) > 0
            if np.any(mask):
                pred = np.argmax(probs[mask, start : start + size], axis=1)
                true = np.argmax(tb[mask], axis=1)
                accs.append(float(np.mean(pred == true)))
            start += size
        return float(np.mean(accs))


class EmbedMlpClassifier(_DistributionalEstimator):
    """One independent two-layer softmax head per label block over input embeddings."""

    kind = "embed-mlp"

    def __init__(
        self,
        hidden_size: int = 50,
        epochs: int = 10,
        batch_size: int = 16,
        base_lr: float = 2e-5,
        warmup_ratio: float = 0.1,
        weight_decay: float = 0.0,
        patience: int = 3,
        seed: int = 0,
        schema: Optional[LabelSchema] = None,
    ):
        self.hidden_size = hidden_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.warmup_ratio = warmup_ratio
        self.weight_decay = weight_decay
        self.patience = patience
        self.seed = seed
        self.schema = schema

    def _init_params(self, input_dim: int) -> dict[str, np.ndarray]:
        return _init_embed_mlp(input_dim, self.hidden_size, self._schema().block_sizes, self.seed)

    def _loss_and_grads(self, params, x, t, block_sizes, block_weights):
        return embed_mlp_loss_and_grads(params, x, t, block_sizes, block_weights)

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        x = check_features(X, n_features=self.n_features_in_)
        logits, _ = _embed_mlp_logits(self.params_, x.astype(np.float32, copy=False), self.block_sizes_)
        return _blockwise_softmax(logits, self.block_sizes_)

    def _validation_accuracy(self, x_val, t_val) -> float:
        return self._blockwise_accuracy(self.predict_proba(x_val), t_val)


class HdlnClassifier(_DistributionalEstimator):
    """Global-flow network with five local heads and one global head, blended at beta."""

    kind = "hdln"

    def __init__(
        self,
        global_hidden: int = 64,
        local_hidden: int = 64,
        epochs: int = 20,
        batch_size: int = 16,
        base_lr: float = 2e-5,
        warmup_ratio: float = 0.1,
        weight_decay: float = 0.0,
        patience: int = 3,
        beta: float = 0.0,
        seed: int = 0,
        schema: Optional[LabelSchema] = None,
    ):
        self.global_hidden = global_hidden
        self.local_hidden = local_hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.warmup_ratio = warmup_ratio
        self.weight_decay = weight_decay
        self.patience = patience
        self.beta = beta
        self.seed = seed
        self.schema = schema

    def _init_params(self, input_dim: int) -> dict[str, np.ndarray]:
        check_beta(self.beta)
        return _init_hdln(
            input_dim, self.global_hidden, self.local_hidden, self._schema().block_sizes, self.seed
        )

    def _loss_and_grads(self, params, x, t, block_sizes, block_weights):
        return hdln_loss_and_grads(params, x, t, block_sizes, block_weights)

    def predict_bundle(self, X, beta: Optional[float] = None) -> HdlnPrediction:
        """Local, global, and blended distributions for a batch."""
        self._check_fitted()
        b = self.beta if beta is None else beta
        x = check_features(X, n_features=self.n_features_in_).astype(np.float32, copy=False)
        local_logits, global_logits, _ = _hdln_forward(self.params_, x, self.block_sizes_)
        local = _blockwise_softmax(local_logits, self.block_sizes_)
        global_ = _blockwise_softmax(global_logits, self.block_sizes_)
        return HdlnPrediction.from_outputs(local, global_, b)

    def predict_proba(self, X) -> np.ndarray:
        return self.predict_bundle(X).blended

    def _validation_accuracy(self, x_val, t_val) -> float:
        return self._binary_accuracy(self.predict_proba(x_val), t_val)


MODEL_KINDS = {"embed-mlp": EmbedMlpClassifier, "hdln": HdlnClassifier}


def train(
    model_kind: str,
    train_examples: Sequence,
    val_examples: Sequence,
    config: TrainConfig,
    schema: Optional[LabelSchema] = None,
):
    """Build and fit the requested model kind from LabeledExample sequences.

    Returns (fitted estimator, per-epoch history).
    """
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}; expected one of {sorted(MODEL_KINDS)}")
    if not train_examples or not val_examples:
        raise ValueError("train and validation splits must both be non-empty")
    x_tr, y_tr = _examples_to_xy(train_examples)
    x_val, y_val = _examples_to_xy(val_examples)
    common = dict(
        epochs=config.epochs,
        batch_size=config.batch_size,
        base_lr=config.base_lr,
        warmup_ratio=config.warmup_ratio,
        weight_decay=config.weight_decay,
        patience=config.patience,
        seed=config.seed,
        schema=schema,
    )
    if model_kind == "hdln":
        est = HdlnClassifier(beta=config.beta, **common)
    else:
        est = EmbedMlpClassifier(**common)
    est.fit(x_tr, y_tr, validation=(x_val, y_val))
    return est, est.history_


def _examples_to_xy(examples: Sequence) -> tuple[np.ndarray, list[PostLabelSet]]:
    x = np.stack([np.asarray(e.features.values, dtype=np.float32) for e in examples])
    y = [e.labels for e in examples]
    return x, y


# --- checkpoint persistence ---------------------------------------------------

def save_checkpoint(model: _DistributionalEstimator, path: str) -> None:
    """Versioned binary checkpoint: JSON header + little-endian float32 tensors in declaration order."""
    model._check_fitted()
    header = {
        "format_version": CHECKPOINT_VERSION,
        "model_kind": model.kind,
        "schema_hash": model.schema_.schema_hash(),
        "input_dim": int(model.n_features_in_),
        "block_sizes": list(model.block_sizes_),
        "seed": int(model.seed),
        "hyper": {
            k: v
            for k, v in model.get_params().items()
            if k != "schema" and isinstance(v, (int, float, str, bool))
        },
        "tensors": [[name, list(t.shape)] for name, t in model.params_.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for t in model.params_.values():
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_checkpoint(path: str, schema: Optional[LabelSchema] = None) -> _DistributionalEstimator:
    """Restore an estimator whose predictions reproduce the saved model's bitwise."""
    schema = schema or default_schema()
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header["schema_hash"] != schema.schema_hash():
            raise ValueError(
                f"{path}: checkpoint schema hash {header['schema_hash']} does not match the active schema"
            )
        kind = header["model_kind"]
        if kind not in MODEL_KINDS:
            raise ValueError(f"{path}: unknown model kind {kind!r}")
        hyper = dict(header["hyper"])
        hyper["schema"] = schema
        est = MODEL_KINDS[kind](**hyper)
        est.schema_ = schema
        est.block_sizes_ = tuple(header["block_sizes"])
        est.n_features_in_ = int(header["input_dim"])
        params: dict[str, np.ndarray] = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise ValueError(f"{path}: truncated tensor data for {name!r}")
            params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        trailing = fh.read(1)
        if trailing:
            raise ValueError(f"{path}: trailing bytes after tensor data")
        est.params_ = params
        est.history_ = []
        return est
