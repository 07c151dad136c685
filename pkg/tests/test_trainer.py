import io

import numpy as np
import pytest

from jcrnet import checkpoint
from jcrnet import metrics
from jcrnet import model
from jcrnet import optim
from jcrnet import trainer
from jcrnet.dataset import ImagePair
from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import NumericalError
from jcrnet.exceptions import TrainingError
from jcrnet.imageio import ImageBuffer
from jcrnet.params import ParamStore

from tests.conftest import make_pair


def image_pairs(rng, count=2, size=16):
    pairs = []
    for index in range(count):
        low, high = make_pair(rng, size, size)
        pairs.append(ImagePair(f"{index:04d}.ppm", ImageBuffer(low), ImageBuffer(high)))
    return pairs


def quick_run(**overrides):
    values = {"steps": 4, "checkpoint_every": 2, "prefetch": 0}
    values.update(overrides)
    return trainer.TrainConfig(**values)


SMALL_PATCHES = trainer.PatchSpec(patch=8, batch=1)


def assert_same_params(first, second):
    assert first.names() == second.names()
    for name in first.names():
        np.testing.assert_array_equal(first[name].data, second[name].data)


def test_cosine_schedule_endpoints():
    sched = optim.LRSchedule(1000)

    assert optim.cosine_lr(0, sched) == 2e-4
    assert optim.cosine_lr(1000, sched) == 1e-6
    assert optim.cosine_lr(500, sched) == pytest.approx(1.005e-4)


def test_cosine_schedule_is_monotone():
    sched = optim.LRSchedule(1000)
    rates = [optim.cosine_lr(step, sched) for step in range(1001)]

    assert all(later <= earlier for earlier, later in zip(rates, rates[1:]))


def test_cosine_schedule_clamps_past_the_end(caplog):
    sched = optim.LRSchedule(10)

    assert optim.cosine_lr(11, sched) == 1e-6
    assert optim.cosine_lr(20, sched) == 1e-6
    assert len([r for r in caplog.records if "past the schedule end" in r.message]) == 1


def test_cosine_schedule_rejects_negative_step():
    with pytest.raises(ConfigurationError):
        optim.cosine_lr(-1, optim.LRSchedule(10))


def scalar_store(grad):
    store = ParamStore()
    store.add("theta", np.zeros(1))
    store["theta"].grad = np.full(1, grad, dtype=np.float32)
    return store


def test_first_adam_step_moves_by_learning_rate():
    store = scalar_store(1.0)
    state = optim.TrainState.for_params(store, optim.LRSchedule(10))
    optim.adam_step(store, state, 1e-3)

    assert store["theta"].data[0] == pytest.approx(-1e-3, rel=1e-6)
    assert state.step == 1


def test_zero_gradient_leaves_parameters_unchanged():
    store = scalar_store(0.0)
    store.set("theta", np.full(1, 0.5))
    state = optim.TrainState.for_params(store, optim.LRSchedule(10))
    optim.adam_step(store, state, 1e-3)

    assert store["theta"].data[0] == np.float32(0.5)


def test_missing_gradient_names_the_parameter():
    store = ParamStore()
    store.add("head.weight", np.zeros(2))
    state = optim.TrainState.for_params(store, optim.LRSchedule(10))

    with pytest.raises(TrainingError, match="head.weight"):
        optim.adam_step(store, state, 1e-3)


def test_missing_gradient_leaves_state_and_parameters_untouched():
    store = ParamStore()
    store.add("body.weight", np.full(2, 0.5))
    store.add("head.weight", np.zeros(2))
    store["body.weight"].grad = np.ones(2, dtype=np.float32)
    state = optim.TrainState.for_params(store, optim.LRSchedule(10))

    with pytest.raises(TrainingError, match="head.weight"):
        optim.adam_step(store, state, 1e-3)

    assert state.step == 0
    np.testing.assert_array_equal(store["body.weight"].data, np.full(2, 0.5, np.float32))
    for first, second in state.moments.values():
        assert not first.any() and not second.any()


def test_clip_grad_norm_rescales_to_the_limit():
    store = scalar_store(10.0)
    norm = optim.clip_grad_norm(store, 5.0)

    assert norm == pytest.approx(10.0)
    assert optim.global_grad_norm(store) == pytest.approx(5.0)


def test_state_check_rejects_foreign_parameters():
    store = scalar_store(1.0)
    state = optim.TrainState.for_params(store, optim.LRSchedule(10))
    other = ParamStore()
    other.add("theta", np.zeros(2))

    with pytest.raises(ConfigurationError):
        state.check(other)


def test_exact_size_image_gives_the_whole_image(rng):
    pairs = image_pairs(rng, count=1, size=8)
    low, gt = trainer.sample_patches(pairs, SMALL_PATCHES, trainer.step_rng(0, 0))

    np.testing.assert_array_equal(low.data[0], pairs[0].low.pixels.transpose(2, 0, 1))
    np.testing.assert_array_equal(gt.data[0], pairs[0].high.pixels.transpose(2, 0, 1))


def test_patches_are_seeded(rng):
    pairs = image_pairs(rng, count=3, size=24)
    spec = trainer.PatchSpec(patch=8, batch=4)
    first, _ = trainer.sample_patches(pairs, spec, trainer.step_rng(3, 7))
    again, _ = trainer.sample_patches(pairs, spec, trainer.step_rng(3, 7))
    other, _ = trainer.sample_patches(pairs, spec, trainer.step_rng(3, 8))

    assert first.shape == (4, 3, 8, 8)
    np.testing.assert_array_equal(first.data, again.data)
    assert not np.array_equal(first.data, other.data)


def test_low_and_normal_light_crops_share_a_window(rng):
    pixels = rng.uniform(0, 1, size=(20, 20, 3))
    pair = ImagePair("same", ImageBuffer(pixels), ImageBuffer(pixels.copy()))
    low, gt = trainer.sample_patches([pair], trainer.PatchSpec(8, 6), trainer.step_rng(0, 1))

    np.testing.assert_array_equal(low.data, gt.data)


def test_undersized_pairs_are_skipped(rng):
    pairs = image_pairs(rng, count=1, size=4) + image_pairs(rng, count=1, size=8)
    low, _ = trainer.sample_patches(pairs, SMALL_PATCHES, trainer.step_rng(0, 0))

    np.testing.assert_array_equal(low.data[0], pairs[1].low.pixels.transpose(2, 0, 1))


def test_no_usable_pair_is_a_configuration_error(rng):
    with pytest.raises(ConfigurationError):
        trainer.sample_patches(image_pairs(rng, size=4), SMALL_PATCHES, trainer.step_rng(0, 0))


def test_patch_must_fit_the_encoder_depth(rng, tiny_config):
    with pytest.raises(ConfigurationError):
        trainer.train_loop(
            image_pairs(rng), tiny_config, spec=trainer.PatchSpec(6, 1), train_cfg=quick_run()
        )


@pytest.mark.parametrize(
    "overrides",
    [{"steps": -1}, {"eta_min": 1.0}, {"clip_norm": -1.0}, {"prefetch": -2}],
)
def test_invalid_train_config(overrides):
    with pytest.raises(ConfigurationError):
        trainer.TrainConfig(**overrides)


def test_zero_steps_returns_initial_parameters(rng, tiny_config):
    params, trace = trainer.train_loop(
        image_pairs(rng), tiny_config, spec=SMALL_PATCHES, train_cfg=quick_run(steps=0)
    )

    assert trace == []
    assert_same_params(params, model.build_params(tiny_config, seed=0))


def test_trace_covers_every_step(rng, tiny_config):
    log = io.StringIO()
    _, trace = trainer.train_loop(
        image_pairs(rng),
        tiny_config,
        spec=SMALL_PATCHES,
        train_cfg=quick_run(),
        loss_log=log,
    )

    assert [step for step, _, _ in trace] == [0, 1, 2, 3]
    assert all(np.isfinite(value) for _, _, value in trace)
    assert trace[0][1] == 2e-4
    lines = log.getvalue().splitlines()
    assert len(lines) == 4
    assert lines[0] == f"0,{2e-4!r},{trace[0][2]!r}"


def test_training_is_deterministic(rng, tiny_config):
    pairs = image_pairs(rng)
    first, first_trace = trainer.train_loop(
        pairs, tiny_config, spec=SMALL_PATCHES, train_cfg=quick_run()
    )
    second, second_trace = trainer.train_loop(
        pairs, tiny_config, spec=SMALL_PATCHES, train_cfg=quick_run()
    )

    assert first_trace == second_trace
    assert_same_params(first, second)


def test_prefetching_actor_delivers_the_seeded_order(rng, tiny_config):
    pairs = image_pairs(rng)
    _, inline = trainer.train_loop(
        pairs, tiny_config, spec=SMALL_PATCHES, train_cfg=quick_run()
    )
    _, prefetched = trainer.train_loop(
        pairs, tiny_config, spec=SMALL_PATCHES, train_cfg=quick_run(prefetch=2)
    )

    assert prefetched == inline


def test_resume_from_intermediate_checkpoint_repeats_the_run(tmp_path, rng, tiny_config):
    pairs = image_pairs(rng)
    path = tmp_path / "run.ckpt"
    final, trace = trainer.train_loop(
        pairs,
        tiny_config,
        spec=SMALL_PATCHES,
        train_cfg=quick_run(),
        checkpoint_path=str(path),
    )

    assert path.exists()
    assert (tmp_path / "run.ckpt.step2").exists()
    assert not (tmp_path / "run.ckpt.step4").exists()
    assert checkpoint.load_checkpoint(path).state.step == 4

    saved = checkpoint.load_checkpoint(tmp_path / "run.ckpt.step2")
    resumed, resumed_trace = trainer.train_loop(
        pairs,
        tiny_config,
        spec=SMALL_PATCHES,
        train_cfg=quick_run(),
        params=saved.params,
        state=saved.require_state(),
    )

    assert resumed_trace == trace[2:]
    assert_same_params(resumed, final)


def test_resume_with_other_schedule_is_rejected(tmp_path, rng, tiny_config):
    pairs = image_pairs(rng)
    path = tmp_path / "run.ckpt"
    trainer.train_loop(
        pairs, tiny_config, spec=SMALL_PATCHES, train_cfg=quick_run(), checkpoint_path=str(path)
    )
    saved = checkpoint.load_checkpoint(path)

    with pytest.raises(ConfigurationError):
        trainer.train_loop(
            pairs,
            tiny_config,
            spec=SMALL_PATCHES,
            train_cfg=quick_run(steps=8),
            params=saved.params,
            state=saved.state,
        )


def test_deep_supervision_adds_the_auxiliary_term(rng, tiny_config):
    pairs = image_pairs(rng)
    _, plain = trainer.train_loop(
        pairs, tiny_config, spec=SMALL_PATCHES, train_cfg=quick_run(steps=1)
    )
    _, supervised = trainer.train_loop(
        pairs,
        tiny_config,
        spec=SMALL_PATCHES,
        train_cfg=quick_run(steps=1, deep_supervision=True),
    )

    assert supervised[0][2] > plain[0][2]


def test_divergence_reports_step_and_learning_rate(rng, tiny_config):
    with pytest.raises(NumericalError, match="Non-finite value at step"):
        trainer.train_loop(
            image_pairs(rng),
            tiny_config,
            spec=SMALL_PATCHES,
            train_cfg=quick_run(eta_max=1e30, eta_min=1e30, clip_norm=0.0),
        )


@pytest.mark.slow
def test_overfits_four_pairs(rng):
    cfg = model.ModelConfig.desk()
    pairs = image_pairs(rng, count=4, size=64)
    params, trace = trainer.train_loop(
        pairs,
        cfg,
        spec=trainer.PatchSpec(patch=64, batch=2),
        train_cfg=trainer.TrainConfig(steps=2000, prefetch=0),
    )

    assert trace[-1][2] < 0.03
    for pair in pairs:
        enhanced = model.enhance_array(pair.low.pixels, params, cfg)
        assert metrics.psnr(enhanced, pair.high.pixels) >= 28.0
