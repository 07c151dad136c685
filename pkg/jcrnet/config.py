# -*- coding: utf-8 -*-
"""key=value configuration with a typed schema.

Keys are dotted (``model.width``, ``train.steps``, ``loss.epsilon``) and
typed with Mopidy's config values. Files ending in ``.yml``/``.yaml`` are
read as nested YAML mappings and flattened to the same dotted keys.
"""

import collections
import logging
import math
import os
import pathlib

import yaml
from mopidy import config as mopidy_config

from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import FormatError
from jcrnet.losses import LossConfig
from jcrnet.model import ModelConfig
from jcrnet.trainer import PatchSpec
from jcrnet.trainer import TrainConfig

logger = logging.getLogger(__name__)

YAML_EXTENSIONS = (".yml", ".yaml")


def get_config_schema():
    schema = collections.OrderedDict()

    schema["model.width"] = mopidy_config.Integer(minimum=2)
    schema["model.ed_depth"] = mopidy_config.Integer(minimum=0)
    schema["model.jrs_mid"] = mopidy_config.Integer(minimum=3)
    schema["model.detail_width"] = mopidy_config.Integer(minimum=1)
    schema["model.reduction"] = mopidy_config.Integer(minimum=1)
    schema["model.lambda_bp_init"] = mopidy_config.Float()
    schema["model.illum_floor"] = mopidy_config.Float(minimum=0)
    schema["model.use_fes"] = mopidy_config.Boolean()
    schema["model.use_rcab"] = mopidy_config.Boolean()
    schema["model.use_encdec"] = mopidy_config.Boolean()
    schema["model.use_ssb"] = mopidy_config.Boolean()
    schema["model.use_jrs"] = mopidy_config.Boolean()
    schema["model.use_sft"] = mopidy_config.Boolean()
    schema["model.use_color"] = mopidy_config.Boolean()
    schema["model.use_ias"] = mopidy_config.Boolean()

    schema["loss.epsilon"] = mopidy_config.Float(minimum=0)
    schema["loss.lambda_edge"] = mopidy_config.Float(minimum=0)

    schema["train.steps"] = mopidy_config.Integer(minimum=0)
    schema["train.patch"] = mopidy_config.Integer(minimum=1)
    schema["train.batch"] = mopidy_config.Integer(minimum=1)
    schema["train.seed"] = mopidy_config.Integer(minimum=0)
    schema["train.eta_max"] = mopidy_config.Float(minimum=0)
    schema["train.eta_min"] = mopidy_config.Float(minimum=0)
    schema["train.clip_norm"] = mopidy_config.Float(minimum=0)
    schema["train.deep_supervision"] = mopidy_config.Boolean()
    schema["train.aux_weight"] = mopidy_config.Float(minimum=0)
    schema["train.checkpoint_every"] = mopidy_config.Integer(minimum=0)
    schema["train.prefetch"] = mopidy_config.Integer(minimum=0)

    return schema


def _deserialize(field, raw):
    value = field.deserialize(str(raw).strip())
    if isinstance(value, float) and not math.isfinite(value):
        raise ValueError(f"{value} is not finite")
    return value


def _set(values, schema, key, raw, where):
    if key not in schema:
        raise FormatError(f"{where}: unknown key {key!r}")

    try:
        values[key] = _deserialize(schema[key], raw)
    except ValueError as error:
        raise FormatError(f"{where}: invalid value for {key}: {error}")


def parse_config(text, source="<config>"):
    """Values of the keys present in ``text``, which holds one
    ``key = value`` pair per line."""
    schema = get_config_schema()
    values = collections.OrderedDict()

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue

        key, sep, raw = line.partition("=")
        if not sep or not key.strip():
            raise FormatError(f"{source}, line {lineno}: expected key = value")

        _set(values, schema, key.strip(), raw, f"{source}, line {lineno}")

    return values


def _flatten(mapping, prefix=""):
    for key, value in mapping.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, f"{dotted}.")
        else:
            yield dotted, value


def parse_yaml_config(text, source="<config>"):
    try:
        content = yaml.safe_load(text)
    except yaml.YAMLError as error:
        mark = getattr(error, "problem_mark", None)
        where = f", line {mark.line + 1}" if mark is not None else ""
        raise FormatError(f"{source}{where}: malformed YAML")

    if content is None:
        return collections.OrderedDict()

    if not isinstance(content, dict):
        raise FormatError(f"{source}: expected a mapping at the top level")

    schema = get_config_schema()
    values = collections.OrderedDict()
    for key, raw in _flatten(content):
        _set(values, schema, key, raw, source)
    return values


def read_config(path):
    path = pathlib.Path(path)
    text = mopidy_config.read(path)
    if path.suffix.lower() in YAML_EXTENSIONS:
        return parse_yaml_config(text, str(path))
    return parse_config(text, str(path))


def get_default_config():
    return read_config(pathlib.Path(__file__).parent / "default.conf")


def load_config(path=None, **overrides):
    """Defaults, updated by the file at ``path`` and then by ``overrides``
    given with underscores for dots (``train_seed=3``)."""
    values = get_default_config()
    if path is not None:
        values.update(read_config(path))
        logger.info("Loaded configuration from %s", path)

    schema = get_config_schema()
    for name, value in overrides.items():
        if value is None:
            continue
        key = name.replace("_", ".", 1)
        if key not in schema:
            raise ConfigurationError(f"Unknown configuration key {key}")
        try:
            values[key] = _deserialize(schema[key], value)
        except ValueError as error:
            raise ConfigurationError(f"Invalid value for {key}: {error}")

    return values


def dump_config(values):
    schema = get_config_schema()
    lines = [
        f"{key} = {field.serialize(values[key])}"
        for key, field in schema.items()
        if key in values
    ]
    return "\n".join(lines) + "\n"


def _section(values, section):
    prefix = f"{section}."
    return {
        key[len(prefix) :]: value for key, value in values.items() if key.startswith(prefix)
    }


def model_config(values):
    return ModelConfig(**_section(values, "model"))


def loss_config(values):
    return LossConfig(**_section(values, "loss"))


def patch_spec(values):
    train = _section(values, "train")
    return PatchSpec(patch=train["patch"], batch=train["batch"])


def train_config(values):
    train = _section(values, "train")
    del train["patch"], train["batch"]
    return TrainConfig(**train)


def thread_count():
    """Enhancement workers, from ``JCRNET_THREADS``."""
    raw = os.environ.get("JCRNET_THREADS", "1")
    try:
        return _deserialize(mopidy_config.Integer(minimum=1), raw)
    except ValueError as error:
        raise ConfigurationError(f"JCRNET_THREADS: {error}")
