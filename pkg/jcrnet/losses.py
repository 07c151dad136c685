# -*- coding: utf-8 -*-

import dataclasses
import logging

from jcrnet import tensor as T
from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import DimensionError
from jcrnet.tensor.conv import laplacian_filter

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class LossConfig:
    epsilon: float = 1e-3
    lambda_edge: float = 0.05

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")

        if self.lambda_edge < 0:
            raise ConfigurationError("lambda_edge must be non-negative")


def _check_pair(x, gt):
    if x.shape != gt.shape:
        raise DimensionError(f"Prediction {x.shape} and target {gt.shape} differ")


def charbonnier(x, gt, eps=1e-3):
    """Mean over all elements of sqrt((x - gt)^2 + eps^2)."""
    _check_pair(x, gt)
    if eps <= 0:
        raise ConfigurationError("Charbonnier epsilon must be positive")
    return T.mean(T.sqrt(T.shift(T.square(T.sub(x, gt)), eps * eps)))


def edge_loss(x, gt, eps=1e-3):
    _check_pair(x, gt)
    return charbonnier(laplacian_filter(x), laplacian_filter(gt), eps)


def total_loss(x, gt, cfg=LossConfig()):
    loss = charbonnier(x, gt, cfg.epsilon)
    if cfg.lambda_edge == 0:
        return loss
    return T.add(loss, T.scale(edge_loss(x, gt, cfg.epsilon), cfg.lambda_edge))
