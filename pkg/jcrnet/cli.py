# -*- coding: utf-8 -*-

import argparse
import collections
import logging
import os
import sys

from jcrnet import __version__
from jcrnet import config
from jcrnet import dataset
from jcrnet import gradcheck
from jcrnet import metrics
from jcrnet import model
from jcrnet import workers
from jcrnet.checkpoint import load_checkpoint
from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import DimensionError
from jcrnet.exceptions import FormatError
from jcrnet.exceptions import NumericalError
from jcrnet.exceptions import TrainingError
from jcrnet.exceptions import UsageError
from jcrnet.imageio import IMAGE_EXTENSIONS
from jcrnet.imageio import ImageBuffer
from jcrnet.trainer import train_loop

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

_EXIT_CODES = {
    UsageError: EXIT_USAGE,
    FormatError: EXIT_DATA,
    ConfigurationError: EXIT_DATA,
    DimensionError: EXIT_DATA,
    OSError: EXIT_DATA,
    NumericalError: EXIT_NUMERICAL,
    TrainingError: EXIT_NUMERICAL,
}


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def exit_code(error):
    for cls in type(error).__mro__:
        if cls in _EXIT_CODES:
            return _EXIT_CODES[cls]
    raise error


def _values_from_checkpoint(ckpt):
    values = config.get_default_config()
    values.update(config.parse_config(ckpt.config_text, "checkpoint config"))
    return values


def _load_model(path):
    ckpt = load_checkpoint(path)
    values = _values_from_checkpoint(ckpt)
    return ckpt, config.model_config(values)


def _train(args):
    if args.resume and (
        args.config or args.seed is not None or args.steps is not None
    ):
        raise UsageError("--resume takes its configuration from the checkpoint")

    state = params = None
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        state = ckpt.require_state()
        params = ckpt.params
        values = _values_from_checkpoint(ckpt)
    else:
        values = config.load_config(args.config, train_seed=args.seed, train_steps=args.steps)

    cfg = config.model_config(values)
    pairs = dataset.load_pairs(args.data)
    log_path = args.log or f"{args.out}.log"

    with open(log_path, "a" if args.resume else "w") as loss_log:
        _, trace = train_loop(
            pairs,
            cfg,
            config.loss_config(values),
            config.patch_spec(values),
            config.train_config(values),
            params=params,
            state=state,
            checkpoint_path=args.out,
            config_text=config.dump_config(values),
            loss_log=loss_log,
        )

    if trace:
        logger.info("Final training loss %s after %s steps", trace[-1][2], len(trace))
    return EXIT_OK


def _enhance_jobs(source, target):
    if not os.path.isdir(source):
        return [(source, target)]

    os.makedirs(target, exist_ok=True)
    names = sorted(
        name for name in os.listdir(source) if name.lower().endswith(IMAGE_EXTENSIONS)
    )
    return [(os.path.join(source, name), os.path.join(target, name)) for name in names]


def _enhance(args):
    ckpt, cfg = _load_model(args.ckpt)
    jobs = _enhance_jobs(args.input, args.output)
    workers.enhance_files(jobs, ckpt.params, cfg, config.thread_count())
    logger.info("Enhanced %s images into %s", len(jobs), args.output)
    return EXIT_OK


def _eval(args):
    ckpt, cfg = _load_model(args.ckpt)
    report = metrics.MetricReport(peak=args.peak)
    for pair in dataset.load_pairs(args.data):
        pixels = model.enhance_array(pair.low.pixels, ckpt.params, cfg)
        name = os.path.splitext(pair.name)[0]
        report.add(name, ImageBuffer(pixels), pair.high)

    sys.stdout.write(report.as_table())
    with open(args.report, "w") as f:
        f.write(report.as_key_values())
    logger.info("Wrote metric report for %s images to %s", len(report.rows), args.report)
    return EXIT_OK


def _gradcheck(args):
    failed = 0
    for name, report in gradcheck.run_suites(args.module, args.seed):
        status = "ok" if report.passed else "FAIL"
        sys.stdout.write(
            f"{name:<32} {status:<4} max_rel_err={report.max_rel_err:.3e} "
            f"checked={report.checked} skipped={report.skipped}\n"
        )
        failed += not report.passed

    if failed:
        logger.error("%s gradient checks failed", failed)
        return EXIT_NUMERICAL
    return EXIT_OK


def _inspect(args):
    ckpt = load_checkpoint(args.ckpt)
    out = sys.stdout
    out.write(ckpt.config_text)
    out.write("\n")

    totals = collections.OrderedDict()
    for name, tensor in ckpt.params.items():
        shape = "x".join(str(extent) for extent in tensor.shape)
        out.write(f"{name} {shape} {tensor.size}\n")
        stage = name.split(".", 1)[0]
        totals[stage] = totals.get(stage, 0) + tensor.size

    for stage, count in totals.items():
        out.write(f"total.{stage} = {count}\n")
    out.write(f"total = {ckpt.params.count()}\n")
    if ckpt.state is not None:
        out.write(f"train.step = {ckpt.state.step}\n")
    return EXIT_OK


_COMMANDS = {
    "train": _train,
    "enhance": _enhance,
    "eval": _eval,
    "gradcheck": _gradcheck,
    "inspect": _inspect,
}


def build_parser():
    parser = ArgumentParser(prog="jcrnet", description="Low-light image enhancement")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="more log output (repeatable)"
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")

    train = commands.add_parser("train", help="train on a paired dataset")
    train.add_argument("--data", required=True, help="directory with low/ and high/")
    train.add_argument("--out", required=True, help="checkpoint to write")
    train.add_argument("--config", help="key=value or YAML configuration file")
    train.add_argument("--seed", type=int, help="overrides train.seed")
    train.add_argument("--steps", type=int, help="overrides train.steps")
    train.add_argument("--resume", help="checkpoint with training state to continue")
    train.add_argument("--log", help="loss log path (default: <out>.log)")

    enhance = commands.add_parser("enhance", help="enhance an image or a directory")
    enhance.add_argument("--ckpt", required=True)
    enhance.add_argument("--in", dest="input", required=True)
    enhance.add_argument("--out", dest="output", required=True)

    evaluate = commands.add_parser("eval", help="PSNR/SSIM over a paired dataset")
    evaluate.add_argument("--ckpt", required=True)
    evaluate.add_argument("--data", required=True)
    evaluate.add_argument("--report", required=True, help="key=value report path")
    evaluate.add_argument("--peak", type=float, choices=[1.0, 255.0], default=1.0)

    check = commands.add_parser("gradcheck", help="finite-difference gradient suites")
    check.add_argument(
        "--module", default="all", choices=["all"] + list(gradcheck.SUITES)
    )
    check.add_argument("--seed", type=int, default=0)

    inspect = commands.add_parser("inspect", help="print a checkpoint's contents")
    inspect.add_argument("--ckpt", required=True)

    return parser


def _configure_logging(verbosity):
    level = logging.DEBUG if verbosity else logging.INFO
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)-7s %(name)s: %(message)s"
    )


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("missing subcommand")

        _configure_logging(args.verbose)
        return _COMMANDS[args.command](args)
    except SystemExit as done:
        return done.code
    except tuple(_EXIT_CODES) as error:
        sys.stderr.write(f"jcrnet: {error}\n")
        return exit_code(error)