# -*- coding: utf-8 -*-
"""Central finite-difference verification of the analytic gradients."""

import logging

import numpy as np

from jcrnet import blocks
from jcrnet import losses
from jcrnet import model
from jcrnet import tensor as T
from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import DeterminismError
from jcrnet.params import make_rng
from jcrnet.params import ParamStore
from jcrnet.tensor.conv import conv2d
from jcrnet.tensor.conv import pad2d
from jcrnet.tensor.conv import upsample_nearest2

logger = logging.getLogger(__name__)

MAX_ELEMENTS = 10_000


class GradCheckReport:
    def __init__(self, max_rel_err, tol, checked, skipped, worst=None):
        self.max_rel_err = max_rel_err
        self.tol = tol
        self.checked = checked
        self.skipped = skipped
        self.worst = worst

    @property
    def passed(self):
        return self.max_rel_err <= self.tol

    def __bool__(self):
        return self.passed

    def __repr__(self):
        status = "pass" if self.passed else "FAIL"
        return (
            f"<GradCheckReport {status} max_rel_err={self.max_rel_err:.3e} "
            f"checked={self.checked} skipped={self.skipped} worst={self.worst}>"
        )


def _near_kink(value, kinks, h):
    return any(abs(value - kink) < h for kink in kinks)


def _indices(array, limit, rng):
    if limit is None or array.size <= limit:
        return range(array.size)
    return np.sort(rng.choice(array.size, size=limit, replace=False))


def grad_check(
    f,
    x,
    h=1e-3,
    tol=1e-4,
    wrt=(),
    kinks=(),
    atol=1e-6,
    samples_per_tensor=None,
    seed=0,
):
    """Compare analytic gradients of ``f`` against central differences.

    A non-scalar output is contracted with a fixed random tensor first.
    ``wrt`` lists extra leaves (parameters) to check besides ``x``; inputs
    of ``x`` closer than ``h`` to any of ``kinks`` are skipped. All
    arithmetic runs in float64; ``wrt`` leaves are restored afterwards.
    """
    if x.size > MAX_ELEMENTS:
        raise ConfigurationError(
            f"grad_check input has {x.size} elements, limit is {MAX_ELEMENTS}"
        )

    rng = np.random.Generator(np.random.Philox(key=seed))
    saved = [(leaf, leaf.data, leaf.grad, leaf.requires_grad) for leaf in wrt]

    try:
        with T.precision(np.float64):
            leaf_x = T.Tensor(x.data.astype(np.float64), requires_grad=True)
            for leaf in wrt:
                leaf.data = leaf.data.astype(np.float64)
                leaf.grad = None
                leaf.requires_grad = True

            first = f(leaf_x)
            second = f(leaf_x)
            if not np.array_equal(first.data, second.data):
                raise DeterminismError("Two forward passes on identical inputs disagree")

            weights = (
                np.ones_like(first.data)
                if first.ndim == 0
                else rng.standard_normal(first.shape)
            )
            T.sum(T.mul(first, T.Tensor(weights))).backward()

            def objective():
                with T.no_grad():
                    return float(np.sum(f(leaf_x).data * weights))

            targets = [("x", leaf_x, kinks)] + [
                (f"wrt[{position}]", leaf, ()) for position, leaf in enumerate(wrt)
            ]

            worst_err, worst, checked, skipped = 0.0, None, 0, 0
            for label, leaf, leaf_kinks in targets:
                analytic = (
                    np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad
                ).reshape(-1)
                flat = leaf.data.reshape(-1)
                for index in _indices(flat, samples_per_tensor, rng):
                    original = flat[index]
                    if _near_kink(original, leaf_kinks, h):
                        skipped += 1
                        continue

                    flat[index] = original + h
                    plus = objective()
                    flat[index] = original - h
                    minus = objective()
                    flat[index] = original

                    numeric = (plus - minus) / (2 * h)
                    exact = float(analytic[index])
                    err = abs(exact - numeric) / max(abs(exact), abs(numeric), atol)
                    checked += 1
                    if err > worst_err:
                        worst_err, worst = err, (label, int(index), exact, numeric)
    finally:
        for leaf, data, grad, requires_grad in saved:
            leaf.data, leaf.grad, leaf.requires_grad = data, grad, requires_grad

    report = GradCheckReport(worst_err, tol, checked, skipped, worst)
    logger.debug("Gradient check: %s", report)
    return report


# Built-in suites, run by ``jcrnet gradcheck``. Each yields (name, report).

SUITE_STEP = 1e-5
SUITE_ATOL = 1e-4


def _leaf(rng, shape, low=-1.0, high=1.0):
    return T.Tensor(rng.uniform(low, high, size=shape))


def _block_params(declare, *args):
    store = ParamStore()
    scope = store.scope("")
    scope.rng = make_rng(7)
    declare(scope, *args)
    return store, scope


def _leaves(store):
    return [tensor for _, tensor in store.items()]


def _check(f, x, wrt=(), **kwargs):
    kwargs.setdefault("h", SUITE_STEP)
    kwargs.setdefault("atol", SUITE_ATOL)
    kwargs.setdefault("samples_per_tensor", 4)
    return grad_check(f, x, wrt=list(wrt), **kwargs)


def tensor_suite(seed=0):
    rng = np.random.Generator(np.random.Philox(key=seed))
    shape = (2, 3, 5, 5)
    other = _leaf(rng, shape)
    positive = _leaf(rng, shape, 0.5, 1.5)
    gate = _leaf(rng, (2, 3, 1, 1))
    slope = T.Tensor(np.full(1, 0.25))
    gamma, beta = _leaf(rng, (3,)), _leaf(rng, (3,))
    weight, bias = _leaf(rng, (4, 3, 3, 3)), _leaf(rng, (4,))

    yield "add", _check(lambda x: T.add(x, other), _leaf(rng, shape))
    yield "mul", _check(lambda x: T.mul(x, gate), _leaf(rng, shape), [gate])
    yield "div", _check(lambda x: T.div(x, positive), _leaf(rng, shape), [positive])
    yield "sqrt", _check(T.sqrt, _leaf(rng, shape, 0.5, 2.0))
    yield "sigmoid", _check(T.sigmoid, _leaf(rng, shape))
    yield "relu", _check(T.relu, _leaf(rng, shape), kinks=(0.0,))
    yield "prelu", _check(lambda x: T.prelu(x, slope), _leaf(rng, shape), [slope], kinks=(0.0,))
    yield "clamp", _check(lambda x: T.clamp(x, -0.5, 0.5), _leaf(rng, shape), kinks=(-0.5, 0.5))
    yield "global_avg_pool", _check(T.global_avg_pool, _leaf(rng, shape))
    yield "concat", _check(lambda x: T.concat([x, other]), _leaf(rng, shape))
    yield "instance_norm", _check(
        lambda x: T.instance_norm(x, gamma, beta), _leaf(rng, shape), [gamma, beta]
    )
    yield "conv2d", _check(
        lambda x: conv2d(x, weight, bias, padding=1), _leaf(rng, shape), [weight, bias]
    )
    yield "conv2d_stride2", _check(
        lambda x: conv2d(x, weight, bias, stride=2, padding=1), _leaf(rng, (1, 3, 6, 6))
    )
    yield "reflect_pad", _check(lambda x: pad2d(x, 2, "reflect"), _leaf(rng, shape))
    yield "upsample", _check(upsample_nearest2, _leaf(rng, shape))


def blocks_suite(seed=0):
    rng = np.random.Generator(np.random.Philox(key=seed))
    width = 8
    shape = (1, width, 8, 8)
    image = _leaf(rng, (1, 3, 8, 8), 0.05, 0.95)

    store, scope = _block_params(blocks.declare_residual_block, width)
    yield "residual_block", _check(
        lambda x: blocks.residual_block(x, scope), _leaf(rng, shape), _leaves(store)
    )

    store, scope = _block_params(blocks.declare_rcab, width, 4)
    yield "rcab", _check(
        lambda x: blocks.rcab(x, scope, 4), _leaf(rng, shape), _leaves(store)
    )

    store, scope = _block_params(blocks.declare_encoder_decoder, width, 2)
    yield "encoder_decoder", _check(
        lambda x: blocks.encoder_decoder(x, scope, 2), _leaf(rng, shape), _leaves(store)
    )

    store, scope = _block_params(blocks.declare_ssb, width)
    yield "ssb", _check(
        lambda x: blocks.ssb(x, image, scope)[0], _leaf(rng, shape), _leaves(store)
    )

    store, scope = _block_params(blocks.declare_detail_enhance, 4)
    yield "detail_enhance", _check(
        lambda x: blocks.detail_enhance(x, scope),
        _leaf(rng, (1, 3, 8, 8)),
        _leaves(store),
    )

    condition = _leaf(rng, shape)
    store, scope = _block_params(blocks.declare_sft, width, 12)
    yield "sft", _check(
        lambda x: blocks.sft_modulate(x, condition, scope),
        _leaf(rng, (1, 12, 8, 8)),
        _leaves(store),
    )

    store, scope = _block_params(blocks.declare_color_correct, 12, 8)
    yield "color_correct", _check(
        lambda x: blocks.color_correct(image, x, scope, 0.01),
        _leaf(rng, (1, 12, 8, 8)),
        _leaves(store),
    )

    yield "uniform_correct", _check(
        lambda x: blocks.uniform_correct(image, x, 0.01), _leaf(rng, (1, 12, 8, 8))
    )

    other = _leaf(rng, shape)
    store, scope = _block_params(blocks.declare_feature_aggregate, width, 4)
    yield "feature_aggregate", _check(
        lambda x: blocks.feature_aggregate(x, other, scope), _leaf(rng, shape), _leaves(store)
    )

    store, scope = _block_params(blocks.declare_ias_residual, width, 1.0)
    yield "ias_residual", _check(
        lambda x: blocks.ias_residual(x, scope)[0], _leaf(rng, shape), _leaves(store)
    )


def model_suite(seed=0):
    rng = np.random.Generator(np.random.Philox(key=seed))
    cfg = model.ModelConfig(width=8, jrs_mid=8, detail_width=4)
    params = model.build_params(cfg, seed)
    x = _leaf(rng, (1, 3, 8, 8), 0.05, 0.95)
    yield "model", _check(
        lambda image: model.enhance(image, params, cfg),
        x,
        _leaves(params),
        samples_per_tensor=2,
    )


def losses_suite(seed=0):
    rng = np.random.Generator(np.random.Philox(key=seed))
    gt = _leaf(rng, (1, 3, 8, 8), 0.0, 1.0)
    yield "charbonnier", _check(lambda x: losses.charbonnier(x, gt), _leaf(rng, gt.shape))
    yield "edge_loss", _check(lambda x: losses.edge_loss(x, gt), _leaf(rng, gt.shape))
    yield "total_loss", _check(lambda x: losses.total_loss(x, gt), _leaf(rng, gt.shape))


SUITES = {
    "tensor": tensor_suite,
    "blocks": blocks_suite,
    "model": model_suite,
    "losses": losses_suite,
}


def run_suites(module="all", seed=0):
    """Run one suite, or all of them, and return ``[(name, report)]``."""
    if module == "all":
        names = list(SUITES)
    elif module in SUITES:
        names = [module]
    else:
        raise ConfigurationError(f"Unknown gradcheck suite: {module}")

    results = []
    for name in names:
        for check, report in SUITES[name](seed):
            logger.info("%s.%s: %s", name, check, report)
            results.append((f"{name}.{check}", report))
    return results
