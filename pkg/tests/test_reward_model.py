import math

import numpy as np
import pytest
from pydantic import ValidationError

from latentkit.config import ModelConfig
from latentkit.core.trajectory import Label, LabeledSample, Trajectory
from latentkit.errors import DimensionError, ModelConfigError, UnlabeledSampleError
from latentkit.trainer.gradcheck import gradient_check, relative_error, small_problem
from latentkit.trainer.models import RewardModel, forward, init_model, loss_and_grads
from latentkit.trainer.models.encoder import sinusoidal_encoding

from conftest import make_sample


def _zero_head(model):
    for name in model.params:
        if name.startswith("head."):
            model.params[name][...] = 0.0
    return model


def test_init_is_seeded(tiny_model_config):
    a, b = init_model(tiny_model_config), init_model(tiny_model_config)
    assert list(a.params) == list(b.params)
    for name in a.params:
        np.testing.assert_array_equal(a.params[name], b.params[name])
    c = init_model(tiny_model_config.with_overrides(seed=1))
    assert not np.array_equal(a.params["input.weight"], c.params["input.weight"])


def test_init_biases_and_gains(tiny_model_config):
    model = init_model(tiny_model_config)
    for name, value in model.params.items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("bias", "b1", "b2", "bq", "bk", "bv", "bo"):
            assert np.all(value == 0.0), name
        if leaf == "gain":
            assert np.all(value == 1.0), name


def test_weights_within_fan_in_bound(tiny_model_config):
    model = init_model(tiny_model_config)
    bound = 1.0 / math.sqrt(tiny_model_config.input_dim)
    assert np.all(np.abs(model.params["input.weight"]) <= bound)


def test_parameter_count_matches_shapes(tiny_model_config):
    model = init_model(tiny_model_config)
    expected = sum(int(np.prod(shape)) for _, shape in model.parameter_shapes())
    assert model.num_parameters == expected


def test_zero_head_gives_one_half(rng, tiny_model_config):
    model = _zero_head(init_model(tiny_model_config))
    sample = make_sample(rng, steps=4, tokens=3, dim=tiny_model_config.input_dim)
    assert forward(model, sample.trajectory) == 0.5

    batch = [sample, make_sample(rng, sample_id=1, steps=4, dim=6, label=Label.INCORRECT)]
    loss, _ = loss_and_grads(model, batch)
    assert loss == pytest.approx(math.log(2.0), abs=1e-12)


def test_forward_is_pure_and_bounded(rng, tiny_model_config):
    model = init_model(tiny_model_config)
    traj = make_sample(rng, steps=5, dim=6).trajectory
    p = forward(model, traj)
    assert 0.0 < p < 1.0
    assert forward(model, traj) == p


def test_positional_encoding_sees_step_order(rng, tiny_model_config):
    model = init_model(tiny_model_config)
    values = rng.standard_normal((5, 3, 6))
    original = Trajectory.from_array(0, 0, values)
    permuted = Trajectory.from_array(0, 0, values[::-1])
    assert forward(model, original) != forward(model, permuted)

    model.use_positional_encoding = False
    assert abs(forward(model, original) - forward(model, permuted)) < 1e-9


def test_sinusoidal_encoding_values():
    pe = sinusoidal_encoding(3, 4)
    assert pe.shape == (3, 4)
    np.testing.assert_allclose(pe[0], [0.0, 1.0, 0.0, 1.0], atol=1e-15)
    assert pe[1, 0] == pytest.approx(math.sin(1.0))
    assert pe[1, 1] == pytest.approx(math.cos(1.0))
    assert pe[1, 2] == pytest.approx(math.sin(1.0 / 100.0))


def test_score_keeps_input_order(rng, tiny_model_config):
    model = init_model(tiny_model_config)
    samples = [make_sample(rng, sample_id=i, steps=2 + i % 3, dim=6) for i in range(7)]
    scores = model.score(samples, batch_size=2)
    expected = [forward(model, s.trajectory) for s in samples]
    np.testing.assert_allclose(scores, expected, atol=1e-12)


def test_duplicated_batch_has_same_loss_and_grads(rng, tiny_model_config):
    model = init_model(tiny_model_config)
    batch = [make_sample(rng, sample_id=i, steps=4, dim=6, label=Label(i % 2)) for i in range(4)]
    loss, grads = loss_and_grads(model, batch)
    loss2, grads2 = loss_and_grads(model, batch + batch)
    assert loss2 == pytest.approx(loss, rel=1e-12)
    for name in grads:
        np.testing.assert_allclose(grads2[name], grads[name], rtol=1e-9, atol=1e-15)


def test_mixed_lengths_average_exactly(rng, tiny_model_config):
    model = init_model(tiny_model_config)
    short = [make_sample(rng, sample_id=i, steps=2, dim=6, label=Label.CORRECT) for i in range(3)]
    long = [make_sample(rng, sample_id=10 + i, steps=5, dim=6, label=Label.INCORRECT) for i in range(1)]
    loss, grads = loss_and_grads(model, short + long)
    loss_short, grads_short = loss_and_grads(model, short)
    loss_long, grads_long = loss_and_grads(model, long)
    assert loss == pytest.approx(0.75 * loss_short + 0.25 * loss_long, rel=1e-12)
    for name in grads:
        np.testing.assert_allclose(grads[name], 0.75 * grads_short[name] + 0.25 * grads_long[name],
                                   rtol=1e-9, atol=1e-15)


def test_gradients_match_finite_differences():
    report = gradient_check(tolerance=1e-4, seed=0)
    assert report.passed, report.per_parameter
    assert report.checked == init_model(small_problem(0)[0]).num_parameters


def test_gradients_match_on_a_mixed_batch(rng):
    config, sample = small_problem(seed=3, label=Label.INCORRECT)
    other = make_sample(rng, sample_id=1, steps=2, tokens=3, dim=5, label=Label.CORRECT)
    report = gradient_check(init_model(config), [sample, other], tolerance=1e-4)
    assert report.passed, report.per_parameter


def test_relative_error_floor():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.array([1.0]), np.array([1.0 + 1e-6])) < 1e-5


def test_unlabeled_samples_are_rejected(rng, tiny_model_config):
    model = init_model(tiny_model_config)
    batch = [make_sample(rng, dim=6, label=Label.UNLABELED)]
    with pytest.raises(UnlabeledSampleError):
        loss_and_grads(model, batch)
    with pytest.raises(ValueError):
        loss_and_grads(model, [])


def test_dimension_mismatch(rng, tiny_model_config):
    model = init_model(tiny_model_config)
    with pytest.raises(DimensionError):
        forward(model, make_sample(rng, dim=5).trajectory)


def test_config_checks():
    with pytest.raises(ValidationError):
        ModelConfig(model_dim=10, heads=3)
    model = init_model(ModelConfig(input_dim=4, model_dim=8, heads=2))
    params = dict(model.params)
    params.pop("head.b2")
    with pytest.raises(ModelConfigError):
        RewardModel(model.config, params)


def test_copy_is_independent(tiny_model_config):
    model = init_model(tiny_model_config)
    clone = model.copy()
    clone.params["input.weight"][0, 0] += 1.0
    assert model.params["input.weight"][0, 0] != clone.params["input.weight"][0, 0]


def test_first_and_last_pooling(rng):
    config = ModelConfig(input_dim=4, model_dim=8, heads=2, pooling="last", pooling_k=1)
    model = init_model(config)
    traj = make_sample(rng, steps=3, tokens=5, dim=4).trajectory
    np.testing.assert_array_equal(model.pooled(traj), traj.stacked()[:, -1, :])
