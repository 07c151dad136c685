# -*- coding: utf-8 -*-
"""Architectural blocks of the three enhancement stages.

Each block comes as a ``declare_*`` function that registers its
parameters under a :class:`~jcrnet.params.ParamScope` and an apply
function that reads them back by the same local names. Blocks are pure
functions of (inputs, params).
"""

import logging

import numpy as np

from jcrnet import tensor as T
from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import DimensionError
from jcrnet.tensor.conv import conv2d
from jcrnet.tensor.conv import resample

logger = logging.getLogger(__name__)

COLORS = ("r", "g", "b")

# 3-channel heads start close to zero so fresh models stay off the clamps
HEAD_GAIN = 0.01
# sigmoid(3) ~ 0.95: the illumination starts just below 1
ILLUMINATION_BIAS = 3.0
ILLUMINATION_GAIN = 0.1


def _conv(x, params, name, stride=1):
    weight = params[f"{name}.weight"]
    return conv2d(
        x, weight, params[f"{name}.bias"], stride=stride, padding=weight.shape[2] // 2
    )


def _conv_prelu(x, params, name):
    return T.prelu(_conv(x, params, name), params[f"{name}.act.slope"])


def _dense(z, weight):
    rows, cols = weight.shape
    kernel = T.reshape(weight, (rows, cols, 1, 1))
    return conv2d(z, kernel, T.Tensor(np.zeros(rows, dtype=weight.data.dtype)))


def _expect_channels(x, channels, block):
    if x.ndim != 4 or x.shape[1] != channels:
        raise DimensionError(f"{block} expects {channels} channels, got {x.shape}")


def _expect_same_shape(a, b, block):
    if a.shape != b.shape:
        raise DimensionError(f"{block} inputs differ: {a.shape} and {b.shape}")


def _conv_prelu_declare(scope, name, cin, cout, kernel=3):
    scope.conv(name, cin, cout, kernel)
    scope.prelu(f"{name}.act")


# Residual block


def declare_residual_block(scope, channels):
    _conv_prelu_declare(scope, "res1", channels, channels)
    _conv_prelu_declare(scope, "res2", channels, channels)


def residual_block(x, params):
    """x - res2(res1(x) - x), each res a 3x3 conv followed by PReLU."""
    _expect_channels(x, params["res1.weight"].shape[1], "residual_block")
    first = _conv_prelu(x, params, "res1")
    return T.sub(x, _conv_prelu(T.sub(first, x), params, "res2"))


# Channel attention


def declare_channel_attention(scope, channels, reduction):
    if channels % reduction:
        raise ConfigurationError(
            f"{channels} channels are not divisible by reduction {reduction}"
        )
    scope.matrix("w1", channels // reduction, channels)
    scope.matrix("w2", channels, channels // reduction)


def channel_attention(u, params):
    """Squeeze, excite and scale. Returns the scaled feature and the
    per-channel gate s, shaped (N, C, 1, 1)."""
    z = T.global_avg_pool(u)
    s = T.sigmoid(_dense(T.relu(_dense(z, params["w1"])), params["w2"]))
    return T.mul(u, s), s


def declare_rcab(scope, channels, reduction):
    _conv_prelu_declare(scope, "conv1", channels, channels)
    scope.conv("conv2", channels, channels)
    declare_channel_attention(scope.scope("attention"), channels, reduction)


def rcab_branch(x, params, r):
    channels = x.shape[1]
    if channels % r:
        raise ConfigurationError(f"{channels} channels are not divisible by reduction {r}")

    if params["attention.w1"].shape != (channels // r, channels):
        raise ConfigurationError(
            f"Attention weights {params['attention.w1'].shape} do not match reduction {r}"
        )

    u = _conv(_conv_prelu(x, params, "conv1"), params, "conv2")
    scaled, _ = channel_attention(u, params.scope("attention"))
    return scaled


def rcab(x, params, r):
    return T.add(x, rcab_branch(x, params, r))


# Encoder-decoder


def declare_encoder_decoder(scope, width, depth):
    for level in range(depth):
        _conv_prelu_declare(scope, f"down{level}", width << level, width << (level + 1))

    inner = width << depth
    _conv_prelu_declare(scope, "bottleneck1", inner, inner)
    scope.conv("bottleneck2", inner, inner)

    for level in reversed(range(depth)):
        scope.conv(f"up{level}", width << (level + 1), width << level)
        _conv_prelu_declare(scope, f"fuse{level}", 2 * (width << level), width << level)


def encoder_decoder(x, params, depth):
    factor = 2**depth
    if x.shape[2] % factor or x.shape[3] % factor:
        raise DimensionError(
            f"Encoder-decoder of depth {depth} needs extents divisible "
            f"by {factor}, got {x.shape}"
        )

    skips = []
    h = x
    for level in range(depth):
        skips.append(h)
        h = resample(
            h,
            "down_stride2",
            params[f"down{level}.weight"],
            params[f"down{level}.bias"],
        )
        h = T.prelu(h, params[f"down{level}.act.slope"])

    h = _conv(_conv_prelu(h, params, "bottleneck1"), params, "bottleneck2")

    for level in reversed(range(depth)):
        h = resample(
            h, "up_nearest2", params[f"up{level}.weight"], params[f"up{level}.bias"]
        )
        h = _conv_prelu(T.concat([h, skips[level]]), params, f"fuse{level}")

    return h


# Self-supervised block


def declare_ssb(scope, channels):
    scope.conv("pred", channels, 3, gain=HEAD_GAIN)
    scope.conv("mask", 3, channels)


def ssb(features, image, params):
    if features.shape[0] != image.shape[0] or features.shape[2:] != image.shape[2:]:
        raise DimensionError(f"SSB inputs misaligned: {features.shape} and {image.shape}")

    _expect_channels(image, 3, "ssb")
    aux_pred = T.add(_conv(features, params, "pred"), image)
    mask = T.sigmoid(_conv(aux_pred, params, "mask"))
    return T.add(T.mul(features, mask), features), aux_pred


# Joint refinement


def declare_sft(scope, cond_channels, channels):
    for head in ("scale", "shift"):
        _conv_prelu_declare(scope, f"{head}.conv1", cond_channels, channels)
        scope.conv(f"{head}.conv2", channels, channels, kernel=1)


def _sft_head(condition, params, head):
    return _conv(_conv_prelu(condition, params, f"{head}.conv1"), params, f"{head}.conv2")


def sft_modulate(s1, condition, params):
    """Sc * s1 + Sh with (Sc, Sh) predicted from the condition map."""
    if s1.shape[0] != condition.shape[0] or s1.shape[2:] != condition.shape[2:]:
        raise DimensionError(
            f"SFT condition {condition.shape} is not aligned with {s1.shape}"
        )

    scale = _sft_head(condition, params, "scale")
    shift = _sft_head(condition, params, "shift")
    return T.add(T.mul(scale, s1), shift)


def declare_detail_enhance(scope, detail_width):
    for color in COLORS:
        scope.conv(f"{color}.conv1", 1, detail_width)
        scope.conv(f"{color}.conv2", detail_width, detail_width)


def detail_enhance(xa, params):
    """Independent conv/ReLU stacks over R, G and B; the branch outputs are
    concatenated in that order."""
    _expect_channels(xa, 3, "detail_enhance")
    branches = []
    for index, color in enumerate(COLORS):
        plane = T.channel_slice(xa, index, index + 1)
        h = T.relu(_conv(plane, params, f"{color}.conv1"))
        branches.append(T.relu(_conv(h, params, f"{color}.conv2")))
    return T.concat(branches)


def declare_color_correct(scope, in_channels, mid):
    for index, cin in enumerate((in_channels, mid, mid), start=1):
        _conv_prelu_declare(scope, f"conv{index}", cin, mid)
        scope.norm(f"conv{index}.norm", mid)
    declare_residual_block(scope.scope("res_a"), mid)
    declare_residual_block(scope.scope("res_b"), mid)
    scope.conv("out", mid, 3, gain=ILLUMINATION_GAIN, bias=ILLUMINATION_BIAS)


def illumination_map(refined, params, floor):
    h = refined
    for index in (1, 2, 3):
        name = f"conv{index}"
        h = T.instance_norm(
            _conv(h, params, name), params[f"{name}.norm.gamma"], params[f"{name}.norm.beta"]
        )
        h = T.prelu(h, params[f"{name}.act.slope"])

    h = residual_block(h, params.scope("res_a"))
    h = residual_block(h, params.scope("res_b"))
    return T.clamp(T.sigmoid(_conv(h, params, "out")), floor, 1.0)


def color_correct(xa, refined, params, floor):
    """Per-channel Retinex division of x_A by the estimated illumination."""
    _expect_channels(xa, 3, "color_correct")
    illumination = illumination_map(refined, params, floor)
    return T.div(xa, illumination)


def group_mean_illumination(refined, floor):
    """Parameter-free illumination: each colour's share of the refined
    channels averaged, squashed and clamped like the learned map."""
    channels = refined.shape[1]
    if refined.ndim != 4 or channels % 3:
        raise DimensionError(f"Refined features split into 3 colours, got {refined.shape}")

    group = channels // 3
    dtype = refined.data.dtype
    kernel = np.zeros((3, channels, 1, 1), dtype=dtype)
    for index in range(3):
        kernel[index, index * group : (index + 1) * group] = 1.0 / group
    averaged = conv2d(refined, T.Tensor(kernel), T.Tensor(np.zeros(3, dtype=dtype)))
    return T.clamp(T.sigmoid(averaged), floor, 1.0)


def uniform_correct(xa, refined, floor):
    _expect_channels(xa, 3, "uniform_correct")
    return T.div(xa, group_mean_illumination(refined, floor))


# Illumination adjustment


def declare_feature_aggregate(scope, channels, reduction):
    scope.conv("reduce", 2 * channels, channels, kernel=1)
    declare_channel_attention(scope.scope("attention"), channels, reduction)
    scope.conv("fuse", channels, channels)


def feature_aggregate(a, b, params):
    _expect_same_shape(a, b, "feature_aggregate")
    h = _conv(T.concat([a, b]), params, "reduce")
    h, _ = channel_attention(h, params.scope("attention"))
    return _conv(h, params, "fuse")


def declare_projection_block(scope, width):
    half = width // 2
    _conv_prelu_declare(scope, "encode", width, half)
    _conv_prelu_declare(scope, "offset", half, half)
    scope.conv("decode", half, width)


def _encode_offset(x, params):
    width = params["encode.weight"].shape[1]
    if x.ndim != 4 or x.shape[1] != width:
        raise ConfigurationError(f"Projection block built for width {width}, got {x.shape}")

    encoded = _conv_prelu(x, params, "encode")
    return encoded, _conv_prelu(encoded, params, "offset")


def lighten_block(x, params):
    encoded, offset = _encode_offset(x, params)
    return _conv(T.add(encoded, offset), params, "decode")


def darken_block(x, params):
    encoded, offset = _encode_offset(x, params)
    return _conv(T.sub(encoded, offset), params, "decode")


def declare_ias_residual(scope, width, lambda_bp_init):
    declare_projection_block(scope.scope("lighten1"), width)
    declare_projection_block(scope.scope("darken"), width)
    declare_projection_block(scope.scope("lighten2"), width)
    scope.scalar("lambda_bp", lambda_bp_init)


def back_projection_residual(xf, pred, params):
    """lambda_bp * x_F - D(L1(x_F)): the residual map fed to L2."""
    return T.sub(T.mul(xf, params["lambda_bp"]), darken_block(pred, params.scope("darken")))


def ias_residual(xf, params):
    pred = lighten_block(xf, params.scope("lighten1"))
    residual_map = back_projection_residual(xf, pred, params)
    return lighten_block(residual_map, params.scope("lighten2")), pred
