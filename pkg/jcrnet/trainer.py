# -*- coding: utf-8 -*-

import dataclasses
import logging
import math

import numpy as np

from jcrnet import dataset
from jcrnet import model
from jcrnet import optim
from jcrnet import tensor as T
from jcrnet.checkpoint import save_checkpoint
from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import NumericalError
from jcrnet.losses import charbonnier
from jcrnet.losses import LossConfig
from jcrnet.losses import total_loss
from jcrnet.params import make_rng
from jcrnet.params import PATCH_STREAM

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class PatchSpec:
    patch: int = 64
    batch: int = 2

    def __post_init__(self):
        if self.patch < 1:
            raise ConfigurationError("patch must be positive")

        if self.batch < 1:
            raise ConfigurationError("batch must be at least 1")

    def check(self, cfg):
        if self.patch % cfg.multiple:
            raise ConfigurationError(
                f"Patch {self.patch} is not divisible by {cfg.multiple}"
            )


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    seed: int = 0
    eta_max: float = 2e-4
    eta_min: float = 1e-6
    clip_norm: float = 5.0
    deep_supervision: bool = False
    aux_weight: float = 0.1
    checkpoint_every: int = 500
    prefetch: int = 2

    def __post_init__(self):
        for name in ("steps", "seed", "checkpoint_every", "prefetch"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")

        if not 0 <= self.eta_min <= self.eta_max:
            raise ConfigurationError("Learning rates need 0 <= eta_min <= eta_max")

        if self.clip_norm < 0 or self.aux_weight < 0:
            raise ConfigurationError("clip_norm and aux_weight must be non-negative")

    def schedule(self):
        return optim.LRSchedule(self.steps, self.eta_max, self.eta_min)


def sample_patches(pairs, spec, rng):
    """Random aligned crops: each batch entry picks a pair, then one
    window that is cut from both the low and the normal-light image."""
    usable = dataset.usable_pairs(pairs, spec.patch)
    p = spec.patch
    low = np.empty((spec.batch, 3, p, p), dtype=np.float32)
    gt = np.empty_like(low)

    for index in range(spec.batch):
        pair = usable[rng.integers(len(usable))]
        top = int(rng.integers(pair.low.height - p + 1))
        left = int(rng.integers(pair.low.width - p + 1))
        low[index] = pair.low.crop(top, left, p).pixels.transpose(2, 0, 1)
        gt[index] = pair.high.crop(top, left, p).pixels.transpose(2, 0, 1)

    return T.Tensor(low), T.Tensor(gt)


def step_rng(seed, step):
    return make_rng(seed, PATCH_STREAM, step)


def _max_grad(params):
    largest = 0.0
    for _, tensor in params.items():
        if tensor.grad is not None and tensor.grad.size:
            largest = max(largest, float(np.max(np.abs(tensor.grad))))
    return largest


class _InlineBatches:
    def __init__(self, pairs, spec, seed):
        self.pairs = pairs
        self.spec = spec
        self.seed = seed

    def get(self, step):
        return sample_patches(self.pairs, self.spec, step_rng(self.seed, step))

    def stop(self):
        pass


def _batches(pairs, spec, train_cfg, first_step):
    if not train_cfg.prefetch:
        return _InlineBatches(pairs, spec, train_cfg.seed)

    from jcrnet.workers import BatchQueue

    return BatchQueue(
        pairs,
        spec,
        train_cfg.seed,
        first_step,
        train_cfg.steps,
        train_cfg.prefetch,
    )


def training_loss(stages, gt, loss_cfg, train_cfg):
    loss = total_loss(stages.y, gt, loss_cfg)
    if train_cfg.deep_supervision and stages.aux_pred is not None:
        aux = charbonnier(stages.aux_pred, gt, loss_cfg.epsilon)
        loss = T.add(loss, T.scale(aux, train_cfg.aux_weight))
    return loss


def _diagnose(step, lr, params, last_max_grad, error):
    max_grad = max(_max_grad(params), last_max_grad)
    logger.error(
        "Training diverged at step %s (lr %s, max |grad| %s): %s",
        step,
        lr,
        max_grad,
        error,
    )
    return NumericalError(
        f"Non-finite value at step {step}, lr {lr!r}, max |grad| {max_grad!r}: {error}"
    )


def train_loop(
    pairs,
    cfg,
    loss_cfg=LossConfig(),
    spec=PatchSpec(),
    train_cfg=TrainConfig(),
    params=None,
    state=None,
    checkpoint_path=None,
    config_text="",
    loss_log=None,
):
    """Run Adam with cosine annealing up to ``train_cfg.steps`` updates.

    Returns the trained parameters and the loss trace as ``(step, lr,
    loss)`` tuples. Passing the ``params`` and ``state`` of a checkpoint
    resumes from ``state.step``; every batch is drawn from a generator
    keyed on (seed, step), so a resumed run repeats the original one.
    """
    spec.check(cfg)
    usable = dataset.usable_pairs(pairs, spec.patch)

    if params is None:
        params = model.build_params(cfg, train_cfg.seed)
    if state is None:
        state = optim.TrainState.for_params(params, train_cfg.schedule(), train_cfg.seed)
    state.check(params)
    if state.schedule.total_steps != train_cfg.steps:
        raise ConfigurationError(
            f"Resumed schedule spans {state.schedule.total_steps} steps, "
            f"configuration asks for {train_cfg.steps}"
        )

    logger.info(
        "Training %s parameters for steps %s..%s on %s pairs",
        params.count(),
        state.step,
        train_cfg.steps,
        len(usable),
    )

    trace = []
    last_max_grad = 0.0
    batches = _batches(usable, spec, train_cfg, state.step)
    try:
        for step in range(state.step, train_cfg.steps):
            lr = optim.cosine_lr(step, state.schedule)
            low, gt = batches.get(step)
            params.zero_grad()

            try:
                loss = training_loss(model.forward(low, params, cfg), gt, loss_cfg, train_cfg)
                value = loss.item()
                if not math.isfinite(value):
                    raise NumericalError(f"loss is {value}")
                T.backward(loss)
            except NumericalError as error:
                raise _diagnose(step, lr, params, last_max_grad, error)

            last_max_grad = _max_grad(params)
            optim.clip_grad_norm(params, train_cfg.clip_norm)
            optim.adam_step(params, state, lr)
            trace.append((step, lr, value))
            logger.debug("Step %s: lr %s, loss %s", step, lr, value)

            if loss_log is not None:
                loss_log.write(f"{step},{lr!r},{value!r}\n")

            every = train_cfg.checkpoint_every
            if (
                checkpoint_path
                and every
                and state.step % every == 0
                and state.step < train_cfg.steps
            ):
                save_checkpoint(
                    f"{checkpoint_path}.step{state.step}", params, state, config_text
                )
    finally:
        batches.stop()

    if checkpoint_path:
        save_checkpoint(checkpoint_path, params, state, config_text)

    logger.info("Finished training at step %s", state.step)
    return params, trace
