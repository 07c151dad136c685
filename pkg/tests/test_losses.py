import numpy as np
import pytest

from jcrnet import losses
from jcrnet import tensor as T
from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import DimensionError


def images(rng, shape=(2, 3, 8, 8)):
    return (
        T.Tensor(rng.uniform(0, 1, size=shape)),
        T.Tensor(rng.uniform(0, 1, size=shape)),
    )


def test_charbonnier_of_identical_images_is_epsilon(rng):
    x, _ = images(rng)

    assert losses.charbonnier(x, x, 1e-3).item() == pytest.approx(1e-3, abs=1e-15)


def test_charbonnier_of_identical_float32_images(rng):
    x = T.Tensor(rng.uniform(0, 1, size=(1, 3, 4, 4)).astype(np.float32))

    assert losses.charbonnier(x, x).item() == pytest.approx(1e-3, rel=1e-6)


def test_charbonnier_of_constant_difference():
    gt = T.Tensor(np.full((1, 3, 4, 4), 0.25))
    x = T.Tensor(np.full((1, 3, 4, 4), 0.55))

    assert losses.charbonnier(x, gt).item() == pytest.approx(np.sqrt(0.09 + 1e-6))


def test_charbonnier_gradient_vanishes_at_target(rng):
    gt = T.Tensor(rng.uniform(0, 1, size=(1, 3, 4, 4)))
    x = T.Tensor(gt.data.copy(), requires_grad=True)
    losses.charbonnier(x, gt).backward()

    np.testing.assert_array_equal(x.grad, 0.0)


def test_charbonnier_needs_positive_epsilon(rng):
    x, gt = images(rng)

    with pytest.raises(ConfigurationError):
        losses.charbonnier(x, gt, 0.0)


def test_edge_loss_ignores_constant_offsets(rng):
    x, gt = images(rng)
    shifted = T.shift(x, 0.3)

    assert losses.edge_loss(shifted, gt).item() == pytest.approx(
        losses.edge_loss(x, gt).item(), abs=1e-6
    )


def test_edge_loss_of_identical_images_is_epsilon(rng):
    x, _ = images(rng)

    assert losses.edge_loss(x, x).item() == pytest.approx(1e-3)


def test_total_loss_is_weighted_sum(rng):
    x, gt = images(rng)
    expected = losses.charbonnier(x, gt).item() + 0.05 * losses.edge_loss(x, gt).item()

    assert losses.total_loss(x, gt).item() == pytest.approx(expected, abs=1e-7)


def test_total_loss_without_edge_term(rng):
    x, gt = images(rng)
    cfg = losses.LossConfig(lambda_edge=0.0)

    assert losses.total_loss(x, gt, cfg).item() == losses.charbonnier(x, gt).item()


def test_losses_reject_mismatched_shapes(rng):
    x, _ = images(rng)
    gt = T.Tensor(np.zeros((2, 3, 4, 4)))

    with pytest.raises(DimensionError):
        losses.charbonnier(x, gt)
    with pytest.raises(DimensionError):
        losses.edge_loss(x, gt)


@pytest.mark.parametrize("kwargs", [{"epsilon": 0.0}, {"lambda_edge": -0.1}])
def test_invalid_loss_config(kwargs):
    with pytest.raises(ConfigurationError):
        losses.LossConfig(**kwargs)


def test_charbonnier_approaches_mean_absolute_error(rng):
    x, gt = images(rng)
    mae = np.mean(np.abs(x.data - gt.data))

    for eps in (1e-2, 1e-4, 1e-6):
        value = float(losses.charbonnier(x, gt, eps).data)
        assert mae <= value <= mae + eps


def test_total_loss_grows_with_the_error(rng):
    gt, _ = images(rng)
    direction = rng.standard_normal(gt.shape)
    values = [
        float(losses.total_loss(T.Tensor(gt.data + t * direction), gt).data)
        for t in (0.0, 0.05, 0.1, 0.5, 1.0)
    ]

    assert all(later > earlier for earlier, later in zip(values, values[1:]))
