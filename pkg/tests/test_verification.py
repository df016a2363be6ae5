import numpy as np
import pytest

from latentkit.core.verification import (
    check_reward_bound, check_sampler_equivalence, random_bound_instance, total_variation,
)


def test_total_variation():
    assert total_variation([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert total_variation([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert total_variation([0.7, 0.3], [0.5, 0.5]) == pytest.approx(0.2)


def test_sampler_matches_closed_form_across_seeds():
    rewards = np.random.default_rng(7).uniform(size=5)
    report = check_sampler_equivalence(rewards, beta=0.25, draws=200_000, seeds=[7, 8, 9])
    assert len(report.runs) == 3
    assert report.max_tv < 0.01
    assert report.min_p_value > 1e-3
    assert report.passed
    for run in report.runs:
        assert run.frequencies.sum() == pytest.approx(1.0)
        assert run.proposals >= 200_000


def test_too_few_draws_fail_the_tolerance():
    report = check_sampler_equivalence([0.9, 0.1, 0.5, 0.3, 0.7], beta=0.25, draws=100,
                                       seeds=[1], tv_tolerance=0.001)
    assert not report.passed


def test_random_instances_stay_within_epsilon(rng):
    for _ in range(50):
        r_true, r_approx, weights, beta = random_bound_instance(rng, 10, 0.1, (0.05, 1.0))
        assert np.max(np.abs(r_true - r_approx)) <= 0.1
        assert np.all(weights > 0)
        assert 0.05 <= beta <= 1.0
        assert 1 <= len(r_true) <= 10


def test_reward_bound_holds_on_random_instances():
    sweep = check_reward_bound(1000, np.random.default_rng(0))
    assert sweep.instances == 1000
    assert sweep.violations == 0
    assert sweep.passed
    assert sweep.max_gap_to_bound <= 1.0 + 1e-9
