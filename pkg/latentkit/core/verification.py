"""
Verification Harnesses: Executable checks of the sampler's guarantees.

check_sampler_equivalence: empirical LTO acceptance frequencies against the
closed-form policy (total variation + chi-square goodness of fit).
check_reward_bound: randomized instances of the imperfect-reward bound.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import chisquare

from latentkit.config import SamplerConfig
from latentkit.core.sampler import (
    BoundReport, CandidateSet, closed_form_policy, lto_sample, verify_performance_bound,
)

logger = logging.getLogger(__name__)


# ===============================================================
#  Sampler / closed-form equivalence
# ===============================================================

@dataclass(frozen=True)
class EquivalenceRun:
    seed: int
    frequencies: np.ndarray
    tv_distance: float
    chi2: float
    p_value: float
    proposals: int


@dataclass(frozen=True)
class EquivalenceReport:
    rewards: np.ndarray
    beta: float
    draws: int
    policy: np.ndarray
    runs: Tuple[EquivalenceRun, ...]
    significance: float
    tv_tolerance: float

    @property
    def max_tv(self) -> float:
        return max(r.tv_distance for r in self.runs)

    @property
    def min_p_value(self) -> float:
        return min(r.p_value for r in self.runs)

    @property
    def passed(self) -> bool:
        return all(r.tv_distance < self.tv_tolerance and r.p_value > self.significance
                   for r in self.runs)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum())


def check_sampler_equivalence(rewards: Sequence[float], beta: float, draws: int,
                              seeds: Sequence[int], significance: float = 1e-3,
                              tv_tolerance: float = 0.01) -> EquivalenceReport:
    """Draw `draws` accepted samples per seed and compare with closed_form_policy."""
    cset = CandidateSet.from_rewards(rewards)
    n = len(cset)
    policy = closed_form_policy(cset, beta).probabilities
    runs = []
    for seed in seeds:
        # Expected proposals per acceptance never exceed n.
        cfg = SamplerConfig(budget=n, required=draws, beta=beta,
                            max_iterations=max(1_000_000, 4 * n * draws), seed=seed)
        accepted, trace = lto_sample(cset, cfg)
        counts = np.bincount(np.asarray(accepted), minlength=n).astype(np.float64)
        freq = counts / draws
        stat, p = chisquare(counts, f_exp=policy * draws)
        runs.append(EquivalenceRun(seed, freq, total_variation(freq, policy),
                                   float(stat), float(p), trace.proposals))
        logger.debug(f"seed={seed} tv={runs[-1].tv_distance:.5f} p={p:.4g}")
    report = EquivalenceReport(np.asarray(cset.rewards), beta, draws, policy,
                               tuple(runs), significance, tv_tolerance)
    logger.info(f"Sampler equivalence: max TV {report.max_tv:.5f}, min p {report.min_p_value:.4g}, "
                f"{'PASS' if report.passed else 'FAIL'}")
    return report


# ===============================================================
#  Imperfect-reward bound, randomized
# ===============================================================

@dataclass(frozen=True)
class BoundSweepReport:
    instances: int
    violations: int
    vacuous: int                       # instances whose bound is >= 1
    max_gap: float
    max_gap_to_bound: float
    worst: Optional[BoundReport]

    @property
    def passed(self) -> bool:
        return self.violations == 0


def random_bound_instance(rng: np.random.Generator, max_candidates: int, epsilon: float,
                          beta_range: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """One (r*, r, ref_weights, beta) draw with max |r - r*| <= epsilon."""
    n = int(rng.integers(1, max_candidates + 1))
    r_true = rng.integers(0, 2, size=n).astype(np.float64)
    eps = rng.uniform(0.0, epsilon)
    r_approx = np.clip(r_true + rng.uniform(-eps, eps, size=n), 0.0, 1.0)
    weights = np.maximum(rng.dirichlet(np.ones(n)), 1e-12)
    weights /= weights.sum()
    beta = float(rng.uniform(beta_range[0], beta_range[1]))
    return r_true, r_approx, weights, beta


def check_reward_bound(instances: int, rng: np.random.Generator, max_candidates: int = 10,
                       epsilon: float = 0.1, beta_range: Sequence[float] = (0.05, 1.0)) -> BoundSweepReport:
    reports: List[BoundReport] = []
    for _ in range(instances):
        r_true, r_approx, weights, beta = random_bound_instance(rng, max_candidates, epsilon, beta_range)
        reports.append(verify_performance_bound(r_true, r_approx, weights, beta))

    failed = [r for r in reports if not r.holds]
    ratios = [r.gap / r.bound if r.bound > 0 else (0.0 if r.gap == 0 else np.inf) for r in reports]
    worst = reports[int(np.argmax(ratios))] if reports else None
    sweep = BoundSweepReport(
        instances=len(reports),
        violations=len(failed),
        vacuous=sum(1 for r in reports if r.bound >= 1.0),
        max_gap=max((r.gap for r in reports), default=0.0),
        max_gap_to_bound=float(max(ratios, default=0.0)),
        worst=worst,
    )
    level = logging.INFO if sweep.passed else logging.ERROR
    logger.log(level, f"Reward bound: {sweep.violations}/{sweep.instances} violations, "
                      f"max gap/bound {sweep.max_gap_to_bound:.4f}")
    return sweep
