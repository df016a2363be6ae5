"""
LTO Sampler: Reward-guided selection over sampled latent trajectories.

closed_form_policy gives the KL-regularized optimum over N candidates,
pi_r(i) ∝ pi_ref(i) * exp(r_i / beta). lto_sample draws from it without
normalizing: propose a candidate uniformly, keep it with probability
phi_i = exp((r_i - r_max) / beta). Voting baselines and the imperfect-reward
bound harness live here too.
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from latentkit.config import SamplerConfig
from latentkit.core.trajectory import Label, TrajectorySet
from latentkit.errors import InvalidBetaError, LengthMismatchError, SamplerStallError

logger = logging.getLogger(__name__)


# ===============================================================
#  Types
# ===============================================================

@dataclass(frozen=True)
class Candidate:
    index: int
    reward: float
    answer_id: Optional[int] = None
    ref: Hashable = None             # back-reference to the trajectory, if any


@dataclass(frozen=True)
class CandidateSet:
    candidates: Tuple[Candidate, ...]
    ref_weights: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        n = len(self.candidates)
        if n == 0:
            raise ValueError("candidate set is empty")
        if self.ref_weights is None:
            weights = np.full(n, 1.0 / n)
        else:
            weights = np.asarray(self.ref_weights, dtype=np.float64)
            if weights.shape != (n,):
                raise LengthMismatchError(f"{weights.shape[0]} ref weights for {n} candidates")
            if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
                raise ValueError("ref_weights must be positive and sum to 1")
        weights.setflags(write=False)
        object.__setattr__(self, "ref_weights", weights)

    @classmethod
    def from_rewards(cls, rewards: Sequence[float], answers: Optional[Sequence[Optional[int]]] = None,
                     ref_weights=None, refs: Optional[Sequence[Hashable]] = None) -> "CandidateSet":
        rewards = list(rewards)
        answers = list(answers) if answers is not None else [None] * len(rewards)
        refs = list(refs) if refs is not None else [None] * len(rewards)
        if not (len(rewards) == len(answers) == len(refs)):
            raise LengthMismatchError("rewards, answers and refs must have equal length")
        return cls(tuple(Candidate(i, float(r), a, ref)
                         for i, (r, a, ref) in enumerate(zip(rewards, answers, refs))), ref_weights)

    def __len__(self):
        return len(self.candidates)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([c.reward for c in self.candidates])

    @property
    def r_max(self) -> float:
        return float(self.rewards.max())


@dataclass(frozen=True)
class PolicyDistribution:
    probabilities: np.ndarray


@dataclass(frozen=True)
class AcceptanceTrace:
    indices: np.ndarray              # accepted candidate index, in acceptance order
    phi: np.ndarray                  # acceptance probability of each accepted draw
    rejected: np.ndarray             # rejected proposals before each acceptance

    @property
    def proposals(self) -> int:
        return int(self.rejected.sum() + len(self.indices))


@dataclass(frozen=True)
class BoundReport:
    epsilon: float
    expected_correctness_approx: float
    expected_correctness_perfect: float
    gap: float
    bound: float
    holds: bool


# ===============================================================
#  Closed-form policy and rejection sampler
# ===============================================================

def _check_beta(beta: float):
    if not beta > 0:
        raise InvalidBetaError(f"beta must be > 0, got {beta}")


def closed_form_policy(cset: CandidateSet, beta: float) -> PolicyDistribution:
    """pi_r(i) = w_i exp(r_i/beta) / sum_j w_j exp(r_j/beta), evaluated with the r_max shift."""
    _check_beta(beta)
    rewards = cset.rewards
    if np.all(rewards == rewards[0]):
        return PolicyDistribution(np.array(cset.ref_weights))
    logits = np.log(cset.ref_weights) + (rewards - rewards.max()) / beta
    probs = np.exp(logits - logsumexp(logits))
    probs /= probs.sum()
    return PolicyDistribution(probs)


def acceptance_probabilities(cset: CandidateSet, beta: float) -> np.ndarray:
    _check_beta(beta)
    rewards = cset.rewards
    return np.exp((rewards - rewards.max()) / beta)


def lto_sample(cset: CandidateSet, cfg: SamplerConfig,
               rng: Optional[np.random.Generator] = None) -> Tuple[List[int], AcceptanceTrace]:
    """
    Draw cfg.required accepted candidates.

    Proposals are generated in vectorized chunks from one seeded stream, so the
    accepted sequence is a deterministic function of the seed.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    phi = acceptance_probabilities(cset, cfg.beta)
    n, wanted = len(cset), cfg.required

    accepted_idx: List[np.ndarray] = []
    accepted_pos: List[np.ndarray] = []
    have, drawn = 0, 0
    while have < wanted:
        if drawn >= cfg.max_iterations:
            logger.error(f"Sampler stalled: {have}/{wanted} accepted after {drawn} proposals")
            raise SamplerStallError(
                f"accepted {have} of {wanted} samples within max_iterations={cfg.max_iterations}")
        # Expected proposals per acceptance is at most n.
        chunk = int(min(cfg.max_iterations - drawn, max(64, 2 * n * (wanted - have))))
        idx = rng.integers(0, n, size=chunk)
        u = rng.random(chunk)
        keep = np.flatnonzero(u < phi[idx])[: wanted - have]
        accepted_idx.append(idx[keep])
        accepted_pos.append(keep + drawn)
        have += keep.size
        drawn += chunk

    indices = np.concatenate(accepted_idx)
    positions = np.concatenate(accepted_pos)
    rejected = np.diff(np.concatenate([[-1], positions])) - 1
    trace = AcceptanceTrace(indices=indices, phi=phi[indices], rejected=rejected)
    return indices.tolist(), trace


# ===============================================================
#  Voting baselines
# ===============================================================

def _argmax_smallest(scores: dict) -> int:
    best = max(scores.values())
    return min(a for a, s in scores.items() if s == best)


def majority_vote(answers: Sequence[int]) -> int:
    """Most frequent answer; ties go to the smallest answer id."""
    if len(answers) == 0:
        raise ValueError("cannot vote over an empty answer list")
    counts = defaultdict(int)
    for a in answers:
        counts[a] += 1
    return _argmax_smallest(counts)


def weighted_majority_vote(answers: Sequence[int], rewards: Sequence[float],
                           exponential: bool = False, beta: float = 1e-3) -> int:
    """Answer with the largest summed reward of its supporters (or exp(r/beta) when exponential)."""
    if len(answers) != len(rewards):
        raise LengthMismatchError(f"{len(answers)} answers vs {len(rewards)} rewards")
    if len(answers) == 0:
        raise ValueError("cannot vote over an empty answer list")
    r = np.asarray(rewards, dtype=np.float64)
    if exponential:
        _check_beta(beta)
        r = np.exp((r - r.max()) / beta)
    totals = defaultdict(float)
    for a, w in zip(answers, r):
        totals[a] += float(w)
    return _argmax_smallest(totals)


# ===============================================================
#  Imperfect-reward bound
# ===============================================================

def verify_performance_bound(rewards_true: Sequence[float], rewards_approx: Sequence[float],
                             ref_weights=None, beta: float = 1e-3) -> BoundReport:
    """Compare expected correctness under pi_r and pi_r* against sqrt(4 eps / beta)."""
    _check_beta(beta)
    if len(rewards_true) != len(rewards_approx):
        raise LengthMismatchError(f"{len(rewards_true)} true vs {len(rewards_approx)} approximate rewards")
    r_star = np.asarray(rewards_true, dtype=np.float64)
    r_hat = np.asarray(rewards_approx, dtype=np.float64)

    pi_hat = closed_form_policy(CandidateSet.from_rewards(r_hat, ref_weights=ref_weights), beta)
    pi_star = closed_form_policy(CandidateSet.from_rewards(r_star, ref_weights=ref_weights), beta)
    approx = float(np.dot(pi_hat.probabilities, r_star))
    perfect = float(np.dot(pi_star.probabilities, r_star))

    eps = float(np.max(np.abs(r_hat - r_star)))
    gap = abs(perfect - approx)
    bound = math.sqrt(4.0 * eps / beta)
    return BoundReport(eps, approx, perfect, gap, bound, holds=gap <= bound + 1e-12)


# ===============================================================
#  Per-problem selection over a scored set
# ===============================================================

@dataclass(frozen=True)
class ProblemSelection:
    problem_id: int
    candidates: int
    chosen: Tuple[int, ...]              # sample_ids accepted by LTO, in acceptance order
    answer_id: Optional[int]
    reward: float
    phi: float
    rejected: int
    lto_correct: Optional[bool]
    base_rate: Optional[float]           # mean label over the labeled candidates
    majority_answer: Optional[int]
    majority_correct: Optional[bool]
    weighted_answer: Optional[int]
    weighted_correct: Optional[bool]


@dataclass(frozen=True)
class SelectionSummary:
    problems: int
    labeled_problems: int
    base_rate: Optional[float]
    lto_rate: Optional[float]
    majority_rate: Optional[float]
    weighted_rate: Optional[float]


def _answer_correct(answer: Optional[int], correct_answers: set, labeled: bool) -> Optional[bool]:
    if not labeled:
        return None
    return answer is not None and answer in correct_answers


def select_problems(tset: TrajectorySet, rewards: Sequence[float], cfg: SamplerConfig,
                    rng: Optional[np.random.Generator] = None) -> List[ProblemSelection]:
    """
    Run LTO and both votes on every problem of a scored set.

    rewards are aligned with tset.samples. Only the first cfg.budget samples of
    each problem are candidates. One random stream is shared across problems in
    first-seen order.
    """
    if len(rewards) != len(tset):
        raise LengthMismatchError(f"{len(rewards)} rewards for {len(tset)} samples")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    reward_of = {id(s): float(r) for s, r in zip(tset.samples, rewards)}

    out = []
    for pid, samples in tset.by_problem().items():
        pool = samples[: cfg.budget]
        cset = CandidateSet.from_rewards(
            [reward_of[id(s)] for s in pool],
            answers=[s.trajectory.answer_id for s in pool],
            refs=[s.trajectory.sample_id for s in pool],
        )
        accepted, trace = lto_sample(cset, cfg, rng)
        first = cset.candidates[accepted[0]]

        labeled = [s for s in pool if s.is_labeled]
        has_labels = bool(labeled)
        correct_answers = {s.trajectory.answer_id for s in labeled
                           if s.label == Label.CORRECT and s.trajectory.answer_id is not None}

        voters = [c for c in cset.candidates if c.answer_id is not None]
        mv = wmv = None
        if voters:
            mv = majority_vote([c.answer_id for c in voters])
            wmv = weighted_majority_vote([c.answer_id for c in voters], [c.reward for c in voters],
                                         exponential=cfg.exponential_vote, beta=cfg.beta)

        chosen_sample = pool[accepted[0]]
        out.append(ProblemSelection(
            problem_id=pid,
            candidates=len(pool),
            chosen=tuple(int(cset.candidates[i].ref) for i in accepted),
            answer_id=first.answer_id,
            reward=first.reward,
            phi=float(trace.phi[0]),
            rejected=int(trace.rejected[0]),
            lto_correct=(chosen_sample.label == Label.CORRECT) if chosen_sample.is_labeled else None,
            base_rate=float(np.mean([int(s.label) for s in labeled])) if has_labels else None,
            majority_answer=mv,
            majority_correct=_answer_correct(mv, correct_answers, has_labels),
            weighted_answer=wmv,
            weighted_correct=_answer_correct(wmv, correct_answers, has_labels),
        ))
    logger.debug(f"Selected over {len(out)} problems (budget={cfg.budget}, beta={cfg.beta})")
    return out


def _rate(values) -> Optional[float]:
    values = [float(v) for v in values if v is not None]
    return float(np.mean(values)) if values else None


def summarize_selection(selections: Sequence[ProblemSelection]) -> SelectionSummary:
    """Correctness rates over problems with labels: base, LTO, majority, weighted majority."""
    return SelectionSummary(
        problems=len(selections),
        labeled_problems=sum(1 for s in selections if s.base_rate is not None),
        base_rate=_rate(s.base_rate for s in selections),
        lto_rate=_rate(s.lto_correct for s in selections),
        majority_rate=_rate(s.majority_correct for s in selections),
        weighted_rate=_rate(s.weighted_correct for s in selections),
    )
