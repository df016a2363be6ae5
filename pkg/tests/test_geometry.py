import numpy as np
import pytest

from latentkit.core.geometry import (
    PCA_COLUMNS, fit_pca, pca_project, pca_project_per_problem, projection_rows, two_nn_estimate,
)
from latentkit.core.trajectory import Label, LabeledSample, Trajectory, TrajectorySet
from latentkit.errors import (
    DegenerateDistanceError, InsufficientDataError, OverTrimmedError, RankDeficiencyError,
)


def _embed(points, ambient, rng):
    """Isometric embedding of (n, k) points into an ambient space."""
    q, _ = np.linalg.qr(rng.standard_normal((ambient, points.shape[1])))
    return points @ q.T + rng.standard_normal(ambient)


def test_line_in_three_dimensions(rng):
    t = rng.uniform(0.0, 1.0, size=(1000, 1))
    points = _embed(t, 3, rng)
    report = two_nn_estimate(points, trim=0.1)
    assert 0.85 <= report.estimate <= 1.15
    assert report.retained_count == 900


def test_square_in_twenty_dimensions(rng):
    points = _embed(rng.uniform(0.0, 1.0, size=(2000, 2)), 20, rng)
    assert 1.8 <= two_nn_estimate(points, trim=0.1).estimate <= 2.2


def test_five_cube(rng):
    points = _embed(rng.uniform(0.0, 1.0, size=(5000, 5)), 20, rng)
    assert 4.0 <= two_nn_estimate(points, trim=0.1).estimate <= 6.0


def test_ratios_are_at_least_one(rng):
    report = two_nn_estimate(rng.standard_normal((200, 4)), trim=0.1)
    assert np.all(report.ratios >= 1.0)
    assert report.ratios.shape == (200,)


def test_scale_and_translation_invariance(rng):
    points = rng.standard_normal((300, 5))
    base = two_nn_estimate(points, trim=0.1).estimate
    moved = two_nn_estimate(3.7 * points + rng.standard_normal(5), trim=0.1).estimate
    assert abs(base - moved) < 1e-10


def test_slope_matches_least_squares_through_origin(rng):
    report = two_nn_estimate(rng.standard_normal((150, 3)), trim=0.2)
    x, y = report.regression_points[:, 0], report.regression_points[:, 1]
    slope, *_ = np.linalg.lstsq(x[:, None], y, rcond=None)
    assert abs(report.estimate - slope[0]) < 1e-12


def test_untrimmed_fit_drops_the_last_point(rng):
    report = two_nn_estimate(rng.standard_normal((50, 3)), trim=0.0)
    assert report.retained_count == 49
    assert np.all(np.isfinite(report.regression_points))


def test_duplicate_points_are_reported():
    points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [3.0, 3.0]])
    with pytest.raises(DegenerateDistanceError) as exc:
        two_nn_estimate(points, trim=0.0)
    assert exc.value.indices == (0, 2)


def test_too_few_points():
    with pytest.raises(InsufficientDataError):
        two_nn_estimate(np.array([[0.0, 0.0], [1.0, 0.0]]), trim=0.1)


def test_over_trimmed():
    points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.5]])
    with pytest.raises(OverTrimmedError):
        two_nn_estimate(points, trim=0.5)


def test_invalid_trim():
    with pytest.raises(ValueError):
        two_nn_estimate(np.eye(4), trim=1.0)


def _point_set(points, problem_ids=None):
    samples = []
    for i, row in enumerate(points):
        pid = 0 if problem_ids is None else problem_ids[i]
        traj = Trajectory.from_array(pid, i, row.reshape(1, 1, -1))
        samples.append(LabeledSample(traj, Label.CORRECT if i % 2 else Label.INCORRECT))
    return TrajectorySet(tuple(samples))


def test_pca_on_three_dimensional_subspace(rng):
    points = _embed(rng.standard_normal((60, 3)), 10, rng)
    tset = _point_set(points)
    basis = fit_pca(tset, components=3)
    assert basis.explained_variance.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.diff(basis.explained_variance) <= 1e-12)
    np.testing.assert_allclose(basis.components @ basis.components.T, np.eye(3), atol=1e-10)

    coords = basis.project(points)
    np.testing.assert_allclose(coords.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(basis.reconstruct(coords), points, atol=1e-8)


def test_pca_rank_deficiency(rng):
    points = _embed(rng.standard_normal((40, 2)), 10, rng)
    with pytest.raises(RankDeficiencyError):
        fit_pca(_point_set(points), components=3)


def test_pca_needs_enough_vectors(rng):
    with pytest.raises(InsufficientDataError):
        fit_pca(_point_set(rng.standard_normal((2, 5))), components=3)


def test_projection_rows(small_set):
    projections = pca_project(small_set, components=3)
    rows = projection_rows(projections)
    steps = small_set[0].trajectory.steps
    assert len(rows) == len(small_set) * steps
    assert list(rows[0]) == PCA_COLUMNS


def test_per_problem_projection(small_set):
    per_problem = pca_project_per_problem(small_set, components=2)
    assert list(per_problem) == small_set.problem_ids()
    for pid, projections in per_problem.items():
        assert all(p.problem_id == pid for p in projections)
        assert projections[0].coordinates.shape == (small_set[0].trajectory.steps, 2)
