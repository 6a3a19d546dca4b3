"""Self-contained numerics: dense layers, blockwise softmax cross-entropy with
analytic gradients, AdamW, the warmup+linear-decay schedule, and finite-difference
gradient checking.

Training math runs in float32 (matrix products included); scalar loss
reductions accumulate in float64. Gradient checks run entirely in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

__all__ = [
    "DenseLayer",
    "AdamWState",
    "LrSchedule",
    "GradCheckReport",
    "glorot_uniform",
    "relu",
    "mlp_forward",
    "mlp_backward",
    "softmax",
    "blockwise_softmax_xent",
    "adamw_step",
    "lr_at_step",
    "grad_check",
]


class NumericsError(ValueError):
    """Raised on shape mismatches or non-finite values in the math core."""


def _require_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values in {name}")


def glorot_uniform(out_dim: int, in_dim: int, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    a = math.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-a, a, size=(out_dim, in_dim)).astype(dtype)


@dataclass
class DenseLayer:
    """An affine map: weight is (out, in), bias is (out,)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise NumericsError(
                f"inconsistent dense shapes: weight {self.weight.shape}, bias {self.bias.shape}"
            )

    @staticmethod
    def init(out_dim: int, in_dim: int, rng: np.random.Generator, dtype=np.float32) -> "DenseLayer":
        return DenseLayer(
            weight=glorot_uniform(out_dim, in_dim, rng, dtype),
            bias=np.zeros(out_dim, dtype=dtype),
        )


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0)


def mlp_forward(layers: Sequence[DenseLayer], x: np.ndarray) -> tuple[np.ndarray, list]:
    """Run x (n, in) through dense layers with ReLU between them; returns (logits, cache).

    The cache holds each layer's input and pre-activation, enough for an exact
    backward pass.
    """
    if x.ndim != 2 or x.shape[1] != layers[0].weight.shape[1]:
        raise NumericsError(
            f"input shape {x.shape} does not match first layer input dim {layers[0].weight.shape[1]}"
        )
    cache = []
    h = x
    for i, layer in enumerate(layers):
        z = h @ layer.weight.T + layer.bias
        cache.append((h, z))
        h = relu(z) if i < len(layers) - 1 else z
    return h, cache


def mlp_backward(
    layers: Sequence[DenseLayer], cache: list, grad_logits: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Backprop through mlp_forward; returns ([(dW, db) per layer], grad wrt input)."""
    g = grad_logits
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)  # type: ignore[list-item]
    for i in range(len(layers) - 1, -1, -1):
        inp, z = cache[i]
        if i < len(layers) - 1:
            g = g * (z > 0)
        grads[i] = (g.T @ inp, g.sum(axis=0))
        if i > 0:
            g = g @ layers[i].weight
    return grads, g @ layers[0].weight


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-shifted softmax; strictly positive rows summing to 1."""
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def blockwise_softmax_xent(
    logits: np.ndarray,
    targets: np.ndarray,
    block_sizes: Sequence[int],
) -> tuple[np.ndarray, np.ndarray]:
    """Per-block softmax cross-entropy and its gradient w.r.t. the logits.

    For each block with target p and softmax output q the loss is
    -sum_k p_k log q_k and the gradient is (sum_k p_k) * q - p. An all-zero
    target therefore contributes zero loss and zero gradient, which is exactly
    how non-lonely posts mask their fine-grained blocks.

    Returns (losses (n, n_blocks) in float64, grad (n, total_dim) in the
    logits' dtype).
    """
    logits = np.atleast_2d(logits)
    targets = np.atleast_2d(targets)
    if logits.shape != targets.shape:
        raise NumericsError(f"logits {logits.shape} vs targets {targets.shape}")
    if sum(block_sizes) != logits.shape[1]:
        raise NumericsError(f"block sizes {tuple(block_sizes)} do not cover dim {logits.shape[1]}")
    _require_finite("logits", logits)

    n = logits.shape[0]
    losses = np.zeros((n, len(block_sizes)), dtype=np.float64)
    grad = np.zeros_like(logits)
    start = 0
    for bi, size in enumerate(block_sizes):
        z = logits[:, start : start + size]
        p = targets[:, start : start + size]
        shifted = z - np.max(z, axis=1, keepdims=True)
        log_q = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
        losses[:, bi] = -np.sum(p.astype(np.float64) * log_q.astype(np.float64), axis=1)
        q = np.exp(log_q)
        mass = np.sum(p, axis=1, keepdims=True)
        grad[:, start : start + size] = (mass * q - p).astype(logits.dtype)
        start += size
    return losses, grad


@dataclass
class AdamWState:
    """Per-parameter first/second moment accumulators plus the step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @staticmethod
    def init(params: Mapping[str, np.ndarray], **hyper) -> "AdamWState":
        state = AdamWState(**hyper)
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
        return state


def adamw_step(
    state: AdamWState,
    params: dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    lr_now: float,
) -> tuple[dict[str, np.ndarray], AdamWState]:
    """One bias-corrected AdamW update (decoupled decay), applied in place.

    With weight_decay = 0 this is exactly Adam. Bitwise deterministic for
    identical inputs.
    """
    if lr_now < 0:
        raise NumericsError("learning rate must be nonnegative")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise NumericsError(f"gradient shape {g.shape} != param shape {p.shape} for {name!r}")
        _require_finite(f"grads[{name}]", g)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= lr_now * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p)
    return params, state


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup to base_lr, then linear decay to zero at total_steps."""

    total_steps: int
    base_lr: float = 2e-5
    warmup_ratio: float = 0.1

    def __post_init__(self) -> None:
        if self.total_steps < 1:
            raise NumericsError("total_steps must be >= 1")
        if not (0.0 <= self.warmup_ratio < 1.0):
            raise NumericsError("warmup_ratio must be in [0, 1)")
        if self.warmup_steps >= self.total_steps:
            raise NumericsError("schedule too short for the warmup ratio")

    @property
    def warmup_steps(self) -> int:
        # Epsilon guard: 0.1 * 100 is 10.000000000000002 in binary, which must
        # still count as exactly 10 warmup steps.
        raw = self.warmup_ratio * self.total_steps
        return math.ceil(raw - 1e-9 * max(1.0, abs(raw)))


def lr_at_step(schedule: LrSchedule, step: int) -> float:
    if not (0 <= step <= schedule.total_steps):
        raise NumericsError(f"step {step} outside [0, {schedule.total_steps}]")
    w = schedule.warmup_steps
    if step < w:
        return schedule.base_lr * step / w
    return schedule.base_lr * (schedule.total_steps - step) / (schedule.total_steps - w)


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_err: float
    worst_tensor: str
    worst_index: tuple[int, ...]
    n_coords_checked: int

    def ok(self, tolerance: float) -> bool:
        return self.max_rel_err < tolerance


def grad_check(
    loss_fn: Callable[[dict[str, np.ndarray]], tuple[float, Mapping[str, np.ndarray]]],
    params: Mapping[str, np.ndarray],
    min_coords_per_tensor: int = 64,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_fn(params)`` must return (loss, analytic grads). Checks all
    coordinates of small tensors and at least ``min_coords_per_tensor``
    sampled coordinates of large ones, with per-coordinate step
    h = 1e-5 * max(1, |theta|). Run this with float64 parameters.

    Relative error uses a 1e-6 denominator floor so finite-difference
    round-off on near-zero coordinates cannot dominate the report.
    """
    rng = rng or np.random.default_rng(0)
    work = {k: np.array(p, dtype=np.float64) for k, p in params.items()}
    loss0, analytic = loss_fn(work)
    if not math.isfinite(loss0):
        raise NumericsError("loss is not finite at the supplied parameters")

    max_rel = 0.0
    worst = ("", ())
    checked = 0
    for name in sorted(work):
        p = work[name]
        n_coords = p.size
        if n_coords <= min_coords_per_tensor:
            flat_indices = np.arange(n_coords)
        else:
            flat_indices = rng.choice(n_coords, size=min_coords_per_tensor, replace=False)
        a_flat = np.asarray(analytic[name], dtype=np.float64).reshape(-1)
        flat = p.reshape(-1)
        for idx in flat_indices:
            theta = flat[idx]
            h = 1e-5 * max(1.0, abs(theta))
            flat[idx] = theta + h
            lp, _ = loss_fn(work)
            flat[idx] = theta - h
            lm, _ = loss_fn(work)
            flat[idx] = theta
            numeric = (lp - lm) / (2.0 * h)
            a = a_flat[idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            checked += 1
            if rel > max_rel:
                max_rel = rel
                worst = (name, tuple(np.unravel_index(idx, p.shape)))
    return GradCheckReport(
        max_rel_err=max_rel, worst_tensor=worst[0], worst_index=worst[1], n_coords_checked=checked
    )
