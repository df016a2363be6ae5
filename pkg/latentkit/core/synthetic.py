"""
Synthetic Trajectories: Labeled latent-thinking data without a language model.

Every problem gets a center in d-space, one correct attractor and a few
incorrect ones. A sample starts near the center and contracts toward its
attractor step by step:

    h_1     = c + sigma * n
    h_{t+1} = h_t + gamma * (A - h_t) + s * n,   s = steps_noise (x dispersion_ratio if incorrect)

Tokens of a step are h_t plus independent token noise. Correct samples share
one attractor and converge tightly; incorrect ones split across several
attractors with larger per-step noise.
"""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from latentkit.config import SyntheticConfig
from latentkit.core.trajectory import Label, LabeledSample, Trajectory, TrajectorySet

logger = logging.getLogger(__name__)

# Concentration of the per-problem Beta prior on the correct probability.
DIFFICULTY_CONCENTRATION = 4.0

# Cosine between the correct-to-incorrect offset and the correctness axis.
AXIS_SHARE = 0.8


def correctness_direction(dim: int) -> np.ndarray:
    """Unit axis along which correct attractors sit apart from incorrect ones.

    Fixed per dimensionality, independent of the seed, so separately generated
    train and test corpora share it.
    """
    return np.ones(dim) / np.sqrt(dim)


@dataclass(frozen=True)
class ProblemPlan:
    problem_id: int
    center: np.ndarray
    correct_attractor: np.ndarray
    incorrect_attractors: np.ndarray     # (K, d)
    correct_answer: int
    incorrect_answers: Tuple[int, ...]
    correct_probability: float


def _orthogonal_unit(rng: np.random.Generator, axis: np.ndarray) -> np.ndarray:
    while True:
        v = rng.standard_normal(axis.shape[0])
        v -= np.dot(v, axis) * axis
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            return v / norm


def plan_problem(cfg: SyntheticConfig, problem_id: int, rng: np.random.Generator) -> ProblemPlan:
    d = cfg.dim
    axis = correctness_direction(d)
    center = rng.standard_normal(d)
    along = AXIS_SHARE * cfg.separation if d > 1 else cfg.separation
    across = np.sqrt(cfg.separation ** 2 - along ** 2)

    correct = center + 0.5 * along * axis
    incorrect = []
    for _ in range(cfg.incorrect_attractors):
        offset = _orthogonal_unit(rng, axis) if d > 1 else np.zeros(d)
        incorrect.append(center - 0.5 * along * axis + across * offset)

    answers = rng.permutation(cfg.answer_vocab)[: cfg.incorrect_attractors + 1]
    a = DIFFICULTY_CONCENTRATION * cfg.correct_rate
    b = DIFFICULTY_CONCENTRATION * (1.0 - cfg.correct_rate)
    return ProblemPlan(
        problem_id=problem_id,
        center=center,
        correct_attractor=correct,
        incorrect_attractors=np.array(incorrect),
        correct_answer=int(answers[0]),
        incorrect_answers=tuple(int(x) for x in answers[1:]),
        correct_probability=float(rng.beta(a, b)),
    )


def roll_out(cfg: SyntheticConfig, start: np.ndarray, attractor: np.ndarray,
             step_noise: float, rng: np.random.Generator) -> np.ndarray:
    """(T, d) hidden path contracting toward the attractor."""
    path = np.empty((cfg.steps, cfg.dim))
    h = start
    for t in range(cfg.steps):
        path[t] = h
        h = h + cfg.contraction * (attractor - h) + step_noise * rng.standard_normal(cfg.dim)
    return path


def generate_problem(cfg: SyntheticConfig, problem_id: int) -> List[LabeledSample]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, problem_id]))
    plan = plan_problem(cfg, problem_id, rng)

    samples = []
    for sample_id in range(cfg.samples_per_problem):
        is_correct = rng.random() < plan.correct_probability
        if is_correct:
            attractor, answer, noise = plan.correct_attractor, plan.correct_answer, cfg.steps_noise
        else:
            k = int(rng.integers(len(plan.incorrect_answers)))
            attractor = plan.incorrect_attractors[k]
            answer = plan.incorrect_answers[k]
            noise = cfg.steps_noise * cfg.dispersion_ratio

        start = plan.center + cfg.noise_std * rng.standard_normal(cfg.dim)
        path = roll_out(cfg, start, attractor, noise, rng)
        tokens = path[:, None, :] + cfg.token_noise * rng.standard_normal((cfg.steps, cfg.tokens, cfg.dim))
        traj = Trajectory.from_array(problem_id, sample_id, tokens, answer_id=answer)
        samples.append(LabeledSample(traj, Label.CORRECT if is_correct else Label.INCORRECT))
    return samples


def generate(cfg: SyntheticConfig) -> TrajectorySet:
    """Deterministic labeled set of cfg.problems * cfg.samples_per_problem trajectories."""
    samples = []
    for offset in range(cfg.problems):
        samples.extend(generate_problem(cfg, cfg.first_problem_id + offset))
    tset = TrajectorySet(tuple(samples))
    correct = sum(1 for s in samples if s.label == Label.CORRECT)
    logger.info(f"Generated {len(samples)} trajectories over {cfg.problems} problems "
                f"(correct fraction {correct / len(samples):.3f})")
    return tset
