"""Training loop and losses for monotone gradient networks.

Gradients are exact forward-mode derivatives: one dual-number tangent per
parameter, pushed through the model, the Jacobian assembly and the
Cholesky-based log-determinant alike. Tangents are propagated in chunks
(a vector of seeds at once); nothing ever reduces across the tangent
axis, so the result is bitwise identical to parameter-at-a-time passes.

The flow loss is the change-of-variables negative log likelihood under a
standard normal prior,

    nll(x) = (n/2) log 2pi + ||g(x)||^2 / 2 - log det J_g(x),

whose minimizer transports the data law onto N(0, I).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dual import DualArray, absolute
from .errors import ConfigError, NonFiniteLoss, NotPositiveDefinite
from .models import ParamView, forward_batch, jacobian_batch
from .seeding import STREAM_DATA, STREAM_SHUFFLE, substream
from .textio import write_csv, write_json

LOG_2PI = math.log(2.0 * math.pi)

# Tangent seeds propagated per engine pass; results do not depend on this.
GRAD_CHUNK = 64


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 512
    epochs: int = 10
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    loss: str = "mae"
    seed: int = 42

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {b}")
        if not self.adam_eps > 0:
            raise ConfigError(f"adam_eps must be > 0, got {self.adam_eps}")
        if self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}; have {sorted(LOSSES)}")


@dataclass
class TrainReport:
    epoch_losses: list
    wall_seconds: float
    config: TrainConfig
    final_metrics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "epoch_losses": list(self.epoch_losses),
            "wall_seconds": self.wall_seconds,
            "final_metrics": dict(self.final_metrics),
            "config": {
                "batch_size": self.config.batch_size,
                "epochs": self.config.epochs,
                "learning_rate": self.config.learning_rate,
                "adam_beta1": self.config.adam_beta1,
                "adam_beta2": self.config.adam_beta2,
                "adam_eps": self.config.adam_eps,
                "loss": self.config.loss,
                "seed": self.config.seed,
            },
        }

    def save_json(self, path):
        write_json(path, self.to_dict())

    def save_loss_csv(self, path):
        write_csv(
            path,
            ("epoch", "loss"),
            [(e, float(v)) for e, v in enumerate(self.epoch_losses)],
        )


def chol_logdet_batch(mats):
    """log det of symmetric PD matrices over leading batch axes.

    Runs the outer-product form of Cholesky elimination, so the pivots are
    the squared diagonal of L and log det = sum(log pivot). Works on plain
    arrays and DualArray alike; raises NotPositiveDefinite on a pivot <= 0.

    The tangent channel of a DualArray input is handled with in-place
    product-rule updates rather than dual operator calls: the elimination
    dominates training time and the operator form allocates a large
    temporary per arithmetic step.
    """
    if isinstance(mats, DualArray):
        return _chol_logdet_dual(mats)
    n = mats.shape[-1]
    a = np.array(mats, dtype=np.float64)
    acc = 0.0
    for k in range(n):
        pivot = a[..., k, k]
        if not np.all(pivot > 0.0):
            raise NotPositiveDefinite(
                f"pivot min {np.min(pivot):.3e} at elimination step {k}"
            )
        acc = acc + np.log(pivot)
        if k + 1 < n:
            ratio = a[..., k, k + 1 :] / pivot[..., None]
            a[..., k + 1 :, k + 1 :] -= a[..., k + 1 :, k, None] * ratio[..., None, :]
    return acc


def _chol_logdet_dual(mats):
    n = mats.shape[-1]
    val = np.array(mats.val, dtype=np.float64)
    dot = np.array(mats.dot, dtype=np.float64)
    acc_val = 0.0
    acc_dot = 0.0
    for k in range(n):
        pivot = val[..., k, k]
        if not np.all(pivot > 0.0):
            raise NotPositiveDefinite(
                f"pivot min {np.min(pivot):.3e} at elimination step {k}"
            )
        pivot_dot = dot[..., k, k]
        acc_val = acc_val + np.log(pivot)
        acc_dot = acc_dot + pivot_dot / pivot
        if k + 1 < n:
            col = val[..., k + 1 :, k]
            ratio = val[..., k, k + 1 :] / pivot[..., None]
            update = col[..., :, None] * ratio[..., None, :]
            # d(update) = dcol (row/p) + (col/p) drow - update (dp/p)
            sub_dot = dot[..., k + 1 :, k + 1 :]
            sub_dot -= dot[..., k + 1 :, k, None] * ratio[..., None, :]
            sub_dot -= (col / pivot[..., None])[..., :, None] * dot[..., k, None, k + 1 :]
            sub_dot += update * (pivot_dot / pivot)[..., None, None]
            val[..., k + 1 :, k + 1 :] -= update
    return DualArray(np.asarray(acc_val), np.asarray(acc_dot))


def mae_loss(model, inputs, targets):
    """Mean absolute error per component, averaged over the batch."""
    pred = forward_batch(model, inputs)
    return absolute(pred - targets).mean()


def flow_nll(model, inputs):
    """Mean change-of-variables NLL under a standard normal prior (nats)."""
    pred = forward_batch(model, inputs)
    jac = jacobian_batch(model, inputs)
    logdet = chol_logdet_batch(jac)
    n = inputs.shape[-1]
    quad = (pred * pred).sum(axis=-1)
    per_sample = 0.5 * quad - logdet + 0.5 * n * LOG_2PI
    return per_sample.mean()


LOSSES = {
    "mae": lambda model, batch: mae_loss(model, batch[0], batch[1]),
    "flow_nll": lambda model, batch: flow_nll(model, batch[0]),
}


def _grad_and_loss(view, theta, loss_fn, batch, chunk=GRAD_CHUNK):
    size = theta.shape[0]
    grad = np.empty(size)
    loss_value = 0.0
    for start in range(0, size, chunk):
        width = min(chunk, size - start)
        seeds = np.zeros((width, size))
        seeds[np.arange(width), start + np.arange(width)] = 1.0
        dual_model = view.unflatten(DualArray(theta, seeds))
        loss = loss_fn(dual_model, batch)
        grad[start : start + width] = loss.dot
        loss_value = float(loss.val)
    if not (math.isfinite(loss_value) and np.all(np.isfinite(grad))):
        raise NonFiniteLoss(f"loss {loss_value} or gradient not finite")
    return grad, loss_value


def param_grad(model, loss_fn, batch):
    """Gradient of the batch loss w.r.t. the flat parameter vector.

    loss_fn(model, batch) must be scalar-valued and composed of operations
    the dual numbers support. One forward-mode tangent is seeded per
    parameter.
    """
    view = ParamView(model)
    grad, _ = _grad_and_loss(view, view.flatten(model), loss_fn, batch)
    return grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size):
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(theta, grad, state, cfg):
    """One bias-corrected Adam update; returns (new theta, new state)."""
    t = state.t + 1
    m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * grad
    v = cfg.adam_beta2 * state.v + (1.0 - cfg.adam_beta2) * grad * grad
    mhat = m / (1.0 - cfg.adam_beta1**t)
    vhat = v / (1.0 - cfg.adam_beta2**t)
    theta = theta - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)
    return theta, AdamState(m, v, t)


class UnitSquareSampler:
    """Uniform batches on [0,1]^dim; every epoch replays the same stream.

    The virtual dataset is points_per_epoch draws, re-derived per batch
    from (seed, stream, step) rather than stored.
    """

    def __init__(self, seed, batch_size, points_per_epoch, dim=2, target_fn=None):
        self.seed = seed
        self.batch_size = batch_size
        self.dim = dim
        self.target_fn = target_fn
        self.steps_per_epoch = max(1, points_per_epoch // batch_size)

    def batch(self, epoch, step):
        rng = substream(self.seed, STREAM_DATA, step)
        x = rng.random((self.batch_size, self.dim))
        return x, (self.target_fn(x) if self.target_fn is not None else None)


class ArraySampler:
    """Batches over a fixed sample matrix, reshuffled every epoch."""

    def __init__(self, data, seed, batch_size, targets=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.targets = None if targets is None else np.asarray(targets, dtype=np.float64)
        self.seed = seed
        self.batch_size = min(batch_size, self.data.shape[0])
        self.steps_per_epoch = max(1, self.data.shape[0] // self.batch_size)
        self._perm_epoch = None
        self._perm = None

    def batch(self, epoch, step):
        if self._perm_epoch != epoch:
            rng = substream(self.seed, STREAM_SHUFFLE, epoch)
            self._perm = rng.permutation(self.data.shape[0])
            self._perm_epoch = epoch
        idx = self._perm[step * self.batch_size : (step + 1) * self.batch_size]
        x = self.data[idx]
        return x, (self.targets[idx] if self.targets is not None else None)


def train(model, sampler, cfg, epoch_hook=None, loss_fn=None):
    """Run epochs x steps_per_epoch Adam updates of cfg.loss.

    Returns (trained model, TrainReport). Deterministic for a given
    (model, sampler, cfg). A non-finite loss aborts with NonFiniteLoss
    carrying the partial report. epoch_hook(epoch, model), when given, is
    called with the end-of-epoch model (metrics only; ignore its return).
    loss_fn overrides the registered cfg.loss; it must have the same
    (model, batch) -> scalar shape.
    """
    view = ParamView(model)
    theta = view.flatten(model)
    state = AdamState.zeros(theta.shape[0])
    if loss_fn is None:
        loss_fn = LOSSES[cfg.loss]
    started = time.perf_counter()
    epoch_losses = []
    current = model
    for epoch in range(cfg.epochs):
        total = 0.0
        for step in range(sampler.steps_per_epoch):
            batch = sampler.batch(epoch, step)
            try:
                grad, loss_value = _grad_and_loss(view, theta, loss_fn, batch)
            except NonFiniteLoss as e:
                e.report = TrainReport(
                    epoch_losses, time.perf_counter() - started, cfg,
                    {"aborted_epoch": epoch, "aborted_step": step},
                )
                raise
            theta, state = adam_step(theta, grad, state, cfg)
            total += loss_value
        epoch_losses.append(total / sampler.steps_per_epoch)
        current = view.unflatten(theta)
        if epoch_hook is not None:
            epoch_hook(epoch, current)
    report = TrainReport(epoch_losses, time.perf_counter() - started, cfg)
    return current, report
