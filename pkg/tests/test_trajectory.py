import numpy as np
import pytest

from latentkit.core.trajectory import (
    Label, LabeledSample, LatentThought, Trajectory, TrajectorySet,
    ensure_valid, merge_sets, mean_pool_tokens, pool_tokens, pooled_steps,
    split_by_problem, truncate_prefix, validate_set,
)
from latentkit.errors import InvalidTrajectoryError

from conftest import make_sample, make_set


def test_mean_pool_examples():
    thought = LatentThought([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(mean_pool_tokens(thought), [2.0, 3.0])

    single = LatentThought([[5.0, -1.0, 0.0]])
    np.testing.assert_array_equal(mean_pool_tokens(single), [5.0, -1.0, 0.0])


def test_mean_pool_is_linear(rng):
    a = rng.standard_normal((6, 4))
    b = rng.standard_normal((6, 4))
    combined = mean_pool_tokens(LatentThought(2.5 * a - 0.5 * b))
    expected = 2.5 * mean_pool_tokens(LatentThought(a)) - 0.5 * mean_pool_tokens(LatentThought(b))
    np.testing.assert_allclose(combined, expected, atol=1e-12)


def test_pool_first_and_last_tokens():
    thought = LatentThought(np.arange(12, dtype=float).reshape(4, 3))
    np.testing.assert_array_equal(pool_tokens(thought, "first", 2), [1.5, 2.5, 3.5])
    np.testing.assert_array_equal(pool_tokens(thought, "last", 1), [9.0, 10.0, 11.0])
    # k larger than L falls back to every token
    np.testing.assert_array_equal(pool_tokens(thought, "last", 10), pool_tokens(thought, "all"))
    with pytest.raises(ValueError):
        pool_tokens(thought, "middle")


def test_pooled_steps_shape(rng):
    traj = Trajectory.from_array(0, 0, rng.standard_normal((5, 3, 4)))
    assert pooled_steps(traj).shape == (5, 4)


def test_thought_values_are_read_only():
    thought = LatentThought(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        thought.values[0, 0] = 1.0


def test_valid_set_has_no_violations(rng):
    report = validate_set(make_set(rng, n=3))
    assert report.ok
    assert len(report) == 0


def test_nan_entry_is_reported(rng):
    bad = rng.standard_normal((3, 3, 4))
    bad[1, 2, 0] = np.nan
    tset = TrajectorySet((make_sample(rng), LabeledSample(Trajectory.from_array(0, 1, bad))))
    report = validate_set(tset)
    assert not report.ok
    assert report.violations[0].sample_index == 1
    assert "non-finite" in report.violations[0].reason
    with pytest.raises(InvalidTrajectoryError) as exc:
        ensure_valid(tset)
    assert len(exc.value.report) == 1


def test_heterogeneous_dimensionality_is_reported(rng):
    tset = TrajectorySet((make_sample(rng, dim=4), make_sample(rng, sample_id=1, dim=5)))
    report = validate_set(tset)
    assert [v.sample_index for v in report] == [1]
    assert "heterogeneous dimensionality" in report.violations[0].reason


def test_empty_trajectory_and_empty_set(rng):
    empty_traj = LabeledSample(Trajectory(0, 0, ()))
    report = validate_set(TrajectorySet((make_sample(rng), empty_traj)))
    assert any("T = 0" in v.reason for v in report)
    assert not validate_set(TrajectorySet(())).ok


def test_differing_thought_shapes_within_trajectory():
    traj = Trajectory(0, 0, (LatentThought(np.ones((2, 3))), LatentThought(np.ones((3, 3)))))
    report = validate_set(TrajectorySet((LabeledSample(traj),)))
    assert "differing shapes" in report.violations[0].reason


def test_truncate_prefix(rng):
    tset = make_set(rng, n=2, steps=5)
    short = truncate_prefix(tset, 3)
    assert [s.trajectory.steps for s in short] == [3, 3]
    np.testing.assert_array_equal(short[0].trajectory.stacked(), tset[0].trajectory.stacked()[:3])
    assert truncate_prefix(tset, 10)[0].trajectory.steps == 5
    with pytest.raises(ValueError):
        truncate_prefix(tset, 0)


def test_merge_sets_keeps_order(rng):
    a = make_set(rng, n=2)
    b = make_set(rng, n=3)
    merged = merge_sets([a, b])
    assert len(merged) == 5
    assert merged[2] == b[0]
    with pytest.raises(InvalidTrajectoryError):
        merge_sets([a, make_set(rng, n=1, dim=7)])


def test_merge_sets_skips_empty_inputs(rng):
    a = make_set(rng, n=3)
    merged = merge_sets([TrajectorySet(()), a, TrajectorySet(())])
    assert merged.samples == a.samples
    assert len(merge_sets([TrajectorySet(())])) == 0
    with pytest.raises(InvalidTrajectoryError):
        merge_sets([TrajectorySet(()), a, make_set(rng, n=1, dim=7)])


def test_split_by_problem_is_disjoint(rng):
    samples = [make_sample(rng, problem_id=p, sample_id=s) for p in range(10) for s in range(3)]
    train, test = split_by_problem(TrajectorySet(samples), 0.3, seed=4)
    train_ids = set(train.problem_ids())
    test_ids = set(test.problem_ids())
    assert not train_ids & test_ids
    assert len(test_ids) == 3
    assert len(train) + len(test) == 30
    again, _ = split_by_problem(TrajectorySet(samples), 0.3, seed=4)
    assert again.problem_ids() == train.problem_ids()


def test_label_values():
    assert int(Label.INCORRECT) == 0
    assert int(Label.CORRECT) == 1
    assert int(Label.UNLABELED) == 255
    assert not LabeledSample(Trajectory(0, 0, ())).is_labeled
