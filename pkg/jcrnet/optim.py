# -*- coding: utf-8 -*-

import collections
import logging
import math

import numpy as np

from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import TrainingError

logger = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPSILON = 1e-8


class LRSchedule:
    def __init__(self, total_steps, eta_max=2e-4, eta_min=1e-6):
        if total_steps < 0:
            raise ConfigurationError("total_steps must be non-negative")

        if eta_min > eta_max:
            raise ConfigurationError("eta_min must not exceed eta_max")

        self.total_steps = int(total_steps)
        self.eta_max = float(eta_max)
        self.eta_min = float(eta_min)
        self._warned = False

    def __eq__(self, other):
        return isinstance(other, LRSchedule) and (
            self.total_steps,
            self.eta_max,
            self.eta_min,
        ) == (other.total_steps, other.eta_max, other.eta_min)

    def __repr__(self):
        return f"<LRSchedule {self.eta_max:g} -> {self.eta_min:g} over {self.total_steps} steps>"


def cosine_lr(step, sched):
    """eta_min + (eta_max - eta_min) * (1 + cos(pi * step / T)) / 2."""
    if step < 0:
        raise ConfigurationError(f"Negative step {step}")

    if step >= sched.total_steps:
        if step > sched.total_steps and not sched._warned:
            logger.warning(
                "Step %s is past the schedule end (%s); using eta_min",
                step,
                sched.total_steps,
            )
            sched._warned = True
        return sched.eta_min

    if step == 0:
        return sched.eta_max

    cosine = math.cos(math.pi * step / sched.total_steps)
    return sched.eta_min + 0.5 * (sched.eta_max - sched.eta_min) * (1 + cosine)


class TrainState:
    """Adam moments, step counter, schedule and seed."""

    def __init__(self, schedule, seed=0, step=0, moments=None):
        self.schedule = schedule
        self.seed = int(seed)
        self.step = int(step)
        self.moments = moments if moments is not None else collections.OrderedDict()

    @classmethod
    def for_params(cls, params, schedule, seed=0):
        moments = collections.OrderedDict(
            (name, (np.zeros_like(tensor.data), np.zeros_like(tensor.data)))
            for name, tensor in params.items()
        )
        return cls(schedule, seed=seed, moments=moments)

    def check(self, params):
        if list(self.moments) != params.names():
            raise ConfigurationError("Optimizer moments do not match the parameter set")

        for name, tensor in params.items():
            first, second = self.moments[name]
            if first.shape != tensor.shape or second.shape != tensor.shape:
                raise ConfigurationError(f"Moment shapes for {name} do not match")

        if not 0 <= self.step <= self.schedule.total_steps:
            raise ConfigurationError(
                f"Step {self.step} outside [0, {self.schedule.total_steps}]"
            )

    def __repr__(self):
        return f"<TrainState step={self.step} seed={self.seed} {self.schedule}>"


def global_grad_norm(params):
    total = 0.0
    for _, tensor in params.items():
        if tensor.grad is not None:
            total += float(np.sum(np.square(tensor.grad, dtype=np.float64)))
    return math.sqrt(total)


def clip_grad_norm(params, max_norm):
    norm = global_grad_norm(params)
    if max_norm and norm > max_norm:
        factor = max_norm / norm
        for _, tensor in params.items():
            if tensor.grad is not None:
                tensor.grad = (tensor.grad * factor).astype(tensor.grad.dtype)
        logger.debug("Clipped gradient norm %s to %s", norm, max_norm)
    return norm


def adam_step(params, state, lr):
    """One bias-corrected Adam update of every parameter in place. Nothing
    changes unless every parameter has a gradient."""
    for name, tensor in params.items():
        if tensor.grad is None:
            raise TrainingError(f"No gradient for parameter {name}")

    state.step += 1
    t = state.step
    correction1 = 1 - BETA1**t
    correction2 = 1 - BETA2**t

    for name, tensor in params.items():
        grad = tensor.grad.astype(tensor.data.dtype)
        first, second = state.moments[name]
        first = BETA1 * first + (1 - BETA1) * grad
        second = BETA2 * second + (1 - BETA2) * grad * grad
        state.moments[name] = (first, second)

        update = (first / correction1) / (np.sqrt(second / correction2) + ADAM_EPSILON)
        tensor.data = (tensor.data - lr * update).astype(tensor.data.dtype)
