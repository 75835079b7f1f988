"""Squared-error loss, classic-momentum SGD and the step-decay training loop."""

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import backward, forward
from .tensor_core import ConfigurationError

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class TrainConfig:
    """Optimizer hyper-parameters; the defaults are the full-size training setup."""

    epochs: int = 300
    batch_size: int = 64
    lr_body: float = 0.05
    lr_last: float = 0.005
    momentum: float = 0.95
    decay: float = 0.5
    decay_period: int = 60
    seed: int = 0
    reduction: str = "mean"

    def __post_init__(self):
        if not 0 <= self.momentum < 1:
            raise ConfigurationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.lr_body <= 0 or self.lr_last <= 0:
            raise ConfigurationError("learning rates must be positive")
        if not 0 < self.decay <= 1:
            raise ConfigurationError(f"decay must be in (0, 1], got {self.decay}")
        if self.epochs < 1 or self.batch_size < 1 or self.decay_period < 1:
            raise ConfigurationError("epochs, batch_size and decay_period must be >= 1")
        if self.reduction not in ("mean", "sum"):
            raise ConfigurationError(f"reduction must be 'mean' or 'sum', got {self.reduction!r}")

    def to_dict(self):
        return asdict(self)


@dataclass
class OptimizerState:
    velocity: list
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(a) for a in params.arrays()])


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)

    @property
    def losses(self):
        return [r["loss"] for r in self.records]


def loss_and_grad(F, target, reduction="mean"):
    """Squared error between prediction ``F`` and ``target`` and its gradient.

    With ``reduction="mean"`` the sum is divided by the element count, so the
    learning rate does not depend on patch or batch size.
    """
    if np.shape(F) != np.shape(target):
        raise ConfigurationError(f"shape mismatch: {np.shape(F)} vs {np.shape(target)}")
    diff = F - target
    scale = 1.0 / diff.size if reduction == "mean" else 1.0
    loss = float(np.sum(np.square(diff, dtype=np.float64)) * scale)
    grad = diff * diff.dtype.type(2 * scale)
    return loss, grad


def momentum_step(params, state, grads, lr_body, lr_last, momentum):
    """One classic-momentum update, in place: ``v = mu*v - lr*g; theta += v``.

    Layers 1..L-1 use ``lr_body`` and layer L uses ``lr_last``. Returns
    ``(params, state)``.
    """
    if len(grads) != len(params.layers):
        raise ConfigurationError(f"{len(grads)} gradient pairs for {len(params.layers)} layers")
    flat_grads = [g for pair in grads for g in pair]
    arrays = params.arrays()
    n_last = 2  # weights + bias of the final layer
    for k, (theta, v, g) in enumerate(zip(arrays, state.velocity, flat_grads)):
        if theta.shape != g.shape or theta.shape != v.shape:
            raise ConfigurationError(f"shape mismatch at parameter {k}: {theta.shape}, {v.shape}, {g.shape}")
        lr = lr_last if k >= len(arrays) - n_last else lr_body
        v *= momentum
        v -= theta.dtype.type(lr) * g
        theta += v
    state.step += 1
    return params, state


def lr_at_epoch(config, epoch, layer_class="body"):
    """Step-decayed learning rate: ``base * decay ** (epoch // decay_period)``."""
    if not 0 <= epoch < config.epochs:
        raise ConfigurationError(f"epoch {epoch} outside [0, {config.epochs})")
    base = {"body": config.lr_body, "last": config.lr_last}[layer_class]
    return base * config.decay ** (epoch // config.decay_period)


def epoch_order(seed, epoch, n):
    """Shuffled sample order for one epoch; depends only on (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def train(params, spec, config, dataset, state=None, start_epoch=0, on_epoch=None):
    """Train ``params`` in place on a list of ``(G, target)`` patch pairs.

    Each epoch visits the samples in a seeded random order, in full batches of
    ``config.batch_size`` (an incomplete trailing batch is dropped). ``on_epoch``
    is called as ``on_epoch(epoch, params, state, record)`` after every epoch.
    Returns ``(params, log, state)``.
    """
    if not dataset:
        raise ConfigurationError("empty training set")
    n_batches = len(dataset) // config.batch_size
    if n_batches == 0:
        raise ConfigurationError(f"{len(dataset)} samples cannot fill one batch of {config.batch_size}")
    shape_g, shape_t = dataset[0][0].shape, dataset[0][1].shape
    for g, t in dataset:
        if g.shape != shape_g or t.shape != shape_t:
            raise ConfigurationError("training samples have inconsistent shapes")
    if state is None:
        state = OptimizerState.zeros_like(params)
    G_all = np.concatenate([g for g, _ in dataset]).astype(params.dtype, copy=False)
    T_all = np.concatenate([t for _, t in dataset]).astype(params.dtype, copy=False)

    history = TrainingLog()
    start = time.perf_counter()
    for epoch in range(start_epoch, config.epochs):
        lr_body = lr_at_epoch(config, epoch, "body")
        lr_last = lr_at_epoch(config, epoch, "last")
        order = epoch_order(config.seed, epoch, len(dataset))
        total = 0.0
        for b in range(n_batches):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                F, cache = forward(params, spec, G_all[idx])
                loss, grad_F = loss_and_grad(F, T_all[idx], config.reduction)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {b}; "
                                       f"lower the learning rate (lr_body={lr_body:g})")
            with np.errstate(over="ignore", invalid="ignore"):
                grads = backward(params, spec, cache, grad_F)
                momentum_step(params, state, grads, lr_body, lr_last, config.momentum)
            total += loss
        record = {
            "epoch": epoch,
            "loss": total / n_batches,
            "lr_body": lr_body,
            "lr_last": lr_last,
            "wall_time": round(time.perf_counter() - start, 3),
        }
        history.records.append(record)
        log.debug("epoch %d loss %.6g", epoch, record["loss"])
        if on_epoch is not None:
            on_epoch(epoch, params, state, record)
    return params, history, state
