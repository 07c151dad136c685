# -*- coding: utf-8 -*-

import collections
import dataclasses
import logging

import numpy as np

from jcrnet import blocks
from jcrnet import tensor as T
from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import DimensionError
from jcrnet.params import make_rng
from jcrnet.params import ParamStore

logger = logging.getLogger(__name__)

Stages = collections.namedtuple("Stages", ["features", "aux_pred", "xa", "xj", "y"])


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    width: int = 64
    ed_depth: int = 2
    jrs_mid: int = 128
    detail_width: int = 16
    reduction: int = 4
    lambda_bp_init: float = 1.0
    illum_floor: float = 0.01
    use_fes: bool = True
    use_rcab: bool = True
    use_encdec: bool = True
    use_ssb: bool = True
    use_jrs: bool = True
    use_sft: bool = True
    use_color: bool = True
    use_ias: bool = True

    def __post_init__(self):
        for name in ("width", "jrs_mid", "detail_width", "reduction"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")

        if self.ed_depth < 0:
            raise ConfigurationError("ed_depth must be non-negative")

        if self.width % self.reduction:
            raise ConfigurationError(
                f"width {self.width} is not divisible by reduction {self.reduction}"
            )

        if self.width % 2:
            raise ConfigurationError(f"width {self.width} must be even")

        if self.jrs_mid < 3:
            raise ConfigurationError("jrs_mid must be at least 3")

        if not 0 < self.illum_floor < 1:
            raise ConfigurationError("illum_floor must lie in (0, 1)")

    @classmethod
    def desk(cls, **overrides):
        values = {"width": 16, "jrs_mid": 32, "detail_width": 8}
        values.update(overrides)
        return cls(**values)

    @property
    def encodes(self):
        return self.use_fes and self.use_encdec

    @property
    def multiple(self):
        return 2**self.ed_depth if self.encodes else 1


# y = clamp01(project(...)) starts at mid-grey
OUTPUT_BIAS = 0.5


def build_params(cfg, seed=0):
    """Declare and initialise every parameter for ``cfg``."""
    store = ParamStore()
    root = store.scope("")
    root.rng = make_rng(seed)
    w = cfg.width

    fes = root.scope("fes")
    fes.conv("stem", 3, w)
    if cfg.use_fes:
        blocks.declare_residual_block(fes.scope("rb1"), w)
        blocks.declare_residual_block(fes.scope("rb2"), w)
        if cfg.use_rcab:
            blocks.declare_rcab(fes.scope("rcab"), w, cfg.reduction)
        if cfg.use_encdec:
            blocks.declare_encoder_decoder(fes.scope("encdec"), w, cfg.ed_depth)
        if cfg.use_ssb:
            blocks.declare_ssb(fes.scope("ssb"), w)

    jrs = root.scope("jrs")
    jrs.conv("project", w, 3, gain=blocks.HEAD_GAIN)
    if cfg.use_jrs:
        detail = 3 * cfg.detail_width
        blocks.declare_detail_enhance(jrs.scope("detail"), cfg.detail_width)
        if cfg.use_sft:
            blocks.declare_sft(jrs.scope("sft"), w, detail)
        if cfg.use_color:
            blocks.declare_color_correct(jrs.scope("color"), detail, cfg.jrs_mid)

    if cfg.use_ias:
        ias = root.scope("ias")
        ias.conv("lift_x", 3, w)
        ias.conv("lift_j", 3, w)
        blocks.declare_feature_aggregate(ias.scope("aggregate"), w, cfg.reduction)
        blocks.declare_ias_residual(ias.scope("residual"), w, cfg.lambda_bp_init)
        ias.conv("project", w, 3, gain=blocks.HEAD_GAIN, bias=OUTPUT_BIAS)

    logger.debug("Built %s for %s", store, cfg)
    return store


def _conv_count(cin, cout, kernel=3):
    return cin * cout * kernel * kernel + cout


def parameter_table(cfg):
    """Closed-form parameter counts per stage."""
    w, r, m = cfg.width, cfg.reduction, cfg.jrs_mid
    attention = 2 * (w // r) * w
    residual = 2 * (_conv_count(w, w) + 1)

    fes = _conv_count(3, w)
    if cfg.use_fes:
        fes += 2 * residual
        if cfg.use_rcab:
            fes += _conv_count(w, w) + 1 + _conv_count(w, w) + attention
        if cfg.use_encdec:
            widths = [w << level for level in range(cfg.ed_depth + 1)]
            inner = widths[-1]
            fes += _conv_count(inner, inner) + 1 + _conv_count(inner, inner)
            for level in range(cfg.ed_depth):
                low, high = widths[level], widths[level + 1]
                fes += _conv_count(low, high) + 1
                fes += _conv_count(high, low) + _conv_count(2 * low, low) + 1
        if cfg.use_ssb:
            fes += _conv_count(w, 3) + _conv_count(3, w)

    jrs = _conv_count(w, 3)
    if cfg.use_jrs:
        e = cfg.detail_width
        jrs += 3 * (_conv_count(1, e) + _conv_count(e, e))
        if cfg.use_sft:
            jrs += 2 * (_conv_count(w, 3 * e) + 1 + _conv_count(3 * e, 3 * e, kernel=1))
        if cfg.use_color:
            jrs += _conv_count(3 * e, m) + 1 + 2 * m
            jrs += 2 * (_conv_count(m, m) + 1 + 2 * m)
            jrs += 2 * 2 * (_conv_count(m, m) + 1)
            jrs += _conv_count(m, 3)

    ias = 0
    if cfg.use_ias:
        half = w // 2
        projection = (
            _conv_count(w, half) + 1 + _conv_count(half, half) + 1 + _conv_count(half, w)
        )
        ias += 2 * _conv_count(3, w)
        ias += _conv_count(2 * w, w, kernel=1) + attention + _conv_count(w, w)
        ias += 3 * projection + 1
        ias += _conv_count(w, 3)

    return collections.OrderedDict([("fes", fes), ("jrs", jrs), ("ias", ias)])


def count_parameters(cfg):
    return sum(parameter_table(cfg).values())


def _conv(x, params, name):
    return blocks._conv(x, params, name)


def _check_input(x, cfg):
    if x.ndim != 4 or x.shape[1] != 3:
        raise DimensionError(f"Expected (N,3,H,W) images, got {x.shape}")

    if x.shape[2] % cfg.multiple or x.shape[3] % cfg.multiple:
        raise DimensionError(
            f"Image extents {x.shape[2:]} are not divisible by {cfg.multiple}"
        )


def forward_fes(x, params, cfg):
    """Features and the auxiliary prediction (None without an SSB). With the
    stage disabled the stem lift alone supplies the features."""
    _check_input(x, cfg)
    fes = params.scope("fes")
    h = _conv(x, fes, "stem")
    if not cfg.use_fes:
        return h, None

    h = blocks.residual_block(h, fes.scope("rb1"))
    h = blocks.residual_block(h, fes.scope("rb2"))
    if cfg.use_rcab:
        h = blocks.rcab(h, fes.scope("rcab"), cfg.reduction)
    if cfg.use_encdec:
        h = blocks.encoder_decoder(h, fes.scope("encdec"), cfg.ed_depth)
    if not cfg.use_ssb:
        return h, None
    return blocks.ssb(h, x, fes.scope("ssb"))


def stage_xa(features, x, params):
    """x_A: the input image plus a 3-channel projection of the features."""
    return T.add(x, _conv(features, params.scope("jrs"), "project"))


def _refine(features, xa, params, cfg):
    if not cfg.use_jrs:
        return xa

    jrs = params.scope("jrs")
    refined = blocks.detail_enhance(xa, jrs.scope("detail"))
    if cfg.use_sft:
        refined = blocks.sft_modulate(refined, features, jrs.scope("sft"))
    if not cfg.use_color:
        return blocks.uniform_correct(xa, refined, cfg.illum_floor)
    return blocks.color_correct(xa, refined, jrs.scope("color"), cfg.illum_floor)


def forward_jrs(features, x, params, cfg):
    return _refine(features, stage_xa(features, x, params), params, cfg)


def forward_ias(xj, x, params, cfg):
    if xj.shape != x.shape:
        raise DimensionError(f"IAS inputs differ: {xj.shape} and {x.shape}")

    if not cfg.use_ias:
        return T.clamp(xj, 0.0, 1.0)

    ias = params.scope("ias")
    lifted_j = _conv(xj, ias, "lift_j")
    lifted_x = _conv(x, ias, "lift_x")
    xf = blocks.feature_aggregate(lifted_j, lifted_x, ias.scope("aggregate"))
    rf, pred = blocks.ias_residual(xf, ias.scope("residual"))
    return T.clamp(_conv(T.add(pred, rf), ias, "project"), 0.0, 1.0)


def forward(x, params, cfg):
    features, aux_pred = forward_fes(x, params, cfg)
    xa = stage_xa(features, x, params)
    xj = _refine(features, xa, params, cfg)
    y = forward_ias(xj, x, params, cfg)
    return Stages(features, aux_pred, xa, xj, y)


def enhance(x, params, cfg):
    return forward(x, params, cfg).y


def enhance_array(image, params, cfg):
    """Enhance one H x W x 3 array of any size: reflect-pad up to the
    encoder multiple, run without recording a tape, crop back."""
    height, width = image.shape[:2]
    multiple = cfg.multiple
    pad_h = -height % multiple
    pad_w = -width % multiple
    padded = np.pad(image, ((0, pad_h), (0, pad_w), (0, 0)), mode="reflect")
    batch = np.ascontiguousarray(padded.transpose(2, 0, 1)[None], dtype=np.float32)

    with T.no_grad():
        y = enhance(T.Tensor(batch), params, cfg)

    return y.data[0, :, :height, :width].transpose(1, 2, 0).copy()
