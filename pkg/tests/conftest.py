import numpy as np
import pytest

from latentkit.config import ModelConfig, SyntheticConfig
from latentkit.core.synthetic import generate
from latentkit.core.trajectory import Label, LabeledSample, Trajectory, TrajectorySet


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    return SyntheticConfig(problems=6, samples_per_problem=4, steps=5, tokens=4, dim=6, seed=3)


@pytest.fixture
def small_set(small_config):
    return generate(small_config)


@pytest.fixture
def tiny_model_config():
    return ModelConfig(input_dim=6, model_dim=8, attention_blocks=1, heads=2, seed=0)


def make_sample(rng, problem_id=0, sample_id=0, steps=3, tokens=3, dim=4,
                label=Label.CORRECT, answer_id=None) -> LabeledSample:
    traj = Trajectory.from_array(problem_id, sample_id, rng.standard_normal((steps, tokens, dim)),
                                 answer_id=answer_id)
    return LabeledSample(traj, label)


def make_set(rng, n=4, **kwargs) -> TrajectorySet:
    return TrajectorySet(tuple(make_sample(rng, sample_id=i, **kwargs) for i in range(n)))
