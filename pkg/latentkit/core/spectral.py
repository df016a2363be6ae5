"""
Spectral Metrics: Entropy, effective rank and anisotropy of latent thoughts.

All three read the singular-value spectrum of one L x d thought h_t. The Gram
spectrum lambda_i = sigma_i^2 is taken from the SVD of h_t instead of forming
h_t h_t^T. Natural logarithms throughout.
"""
import concurrent.futures
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from latentkit.core.geometry import two_nn_estimate
from latentkit.core.trajectory import LabeledSample, LatentThought, Trajectory, TrajectorySet
from latentkit.errors import (
    DegenerateDistanceError, DegenerateInputError, InsufficientDataError, OverTrimmedError,
)

logger = logging.getLogger(__name__)

# Singular values below ZERO_TOL * sigma_1 count as exact zeros.
ZERO_TOL = 1e-12


@dataclass(frozen=True)
class SpectrumResult:
    singular_values: np.ndarray
    gram_eigenvalues: np.ndarray
    trace: float


@dataclass(frozen=True)
class MetricProfile:
    """Per-step metrics of one trajectory; intrinsic_dimension is None until filled."""
    entropy: np.ndarray
    effective_rank: np.ndarray
    anisotropy: np.ndarray
    intrinsic_dimension: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.entropy)


def spectrum(thought: LatentThought) -> SpectrumResult:
    sigma = np.linalg.svd(thought.values, compute_uv=False)
    sigma = np.sort(sigma)[::-1]
    if sigma.size and sigma[0] > 0:
        sigma = np.where(sigma < ZERO_TOL * sigma[0], 0.0, sigma)
    lam = sigma ** 2
    return SpectrumResult(singular_values=sigma, gram_eigenvalues=lam, trace=float(lam.sum()))


def _nonzero_spectrum(thought: LatentThought) -> SpectrumResult:
    spec = spectrum(thought)
    if spec.trace <= 0.0:
        raise DegenerateInputError("all-zero latent thought has no spectrum")
    return spec


def _shannon(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def entropy(thought: LatentThought, alpha: float = 1.0) -> float:
    """Matrix-based Renyi entropy of the normalized Gram spectrum; alpha=1 is von Neumann."""
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    spec = _nonzero_spectrum(thought)
    p = spec.gram_eigenvalues / spec.trace
    if alpha == 1.0:
        return _shannon(p)
    p = p[p > 0]
    return float(np.log(np.sum(p ** alpha)) / (1.0 - alpha))


def effective_rank(thought: LatentThought) -> float:
    spec = _nonzero_spectrum(thought)
    q = spec.singular_values / spec.singular_values.sum()
    return float(np.exp(_shannon(q)))


def anisotropy(thought: LatentThought) -> float:
    spec = _nonzero_spectrum(thought)
    return float(spec.gram_eigenvalues[0] / spec.trace)


def metric_profile(trajectory: Trajectory, alpha: float = 1.0) -> MetricProfile:
    """Spectral metrics for every step of one trajectory."""
    ent, rank, aniso = [], [], []
    for step, thought in enumerate(trajectory.thoughts, start=1):
        try:
            ent.append(entropy(thought, alpha))
            rank.append(effective_rank(thought))
            aniso.append(anisotropy(thought))
        except DegenerateInputError as e:
            raise DegenerateInputError(e.detail, step=step) from e
    return MetricProfile(np.array(ent), np.array(rank), np.array(aniso))


def intrinsic_profile(trajectory: Trajectory, trim: float) -> np.ndarray:
    """TwoNN estimate on the L token rows of each step."""
    estimates = []
    for step, thought in enumerate(trajectory.thoughts, start=1):
        try:
            estimates.append(two_nn_estimate(thought.values, trim).estimate)
        except (DegenerateDistanceError, InsufficientDataError, OverTrimmedError) as e:
            raise DegenerateInputError(str(e), step=step) from e
    return np.array(estimates)


# ===============================================================
#  Metric Engine (fans profiles out over a set)
# ===============================================================

class MetricEngine:
    """
    Computes full profiles (spectral + intrinsic dimension) for every sample.
    Results come back in input order regardless of worker count.
    """

    def __init__(self, alpha: float = 1.0, trim: float = 0.1,
                 intrinsic: bool = True, workers: int = 1):
        self.alpha = alpha
        self.trim = trim
        self.intrinsic = intrinsic
        self.workers = max(1, int(workers))

    def profile(self, sample: LabeledSample) -> MetricProfile:
        traj = sample.trajectory
        try:
            prof = metric_profile(traj, self.alpha)
            if self.intrinsic:
                prof = MetricProfile(prof.entropy, prof.effective_rank, prof.anisotropy,
                                     intrinsic_profile(traj, self.trim))
        except DegenerateInputError as e:
            raise DegenerateInputError(e.detail, step=e.step,
                                       sample=(traj.problem_id, traj.sample_id)) from e
        return prof

    def run(self, samples: Sequence[LabeledSample]) -> List[MetricProfile]:
        if self.workers == 1:
            return [self.profile(s) for s in samples]
        logger.debug(f"Profiling {len(samples)} samples on {self.workers} workers")
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.workers) as executor:
            return list(executor.map(self.profile, samples))


METRIC_COLUMNS = ["problem_id", "sample_id", "label", "step",
                  "entropy", "effective_rank", "anisotropy", "intrinsic_dim"]


def profile_rows(tset: TrajectorySet, profiles: Sequence[MetricProfile]) -> List[dict]:
    """Flatten profiles into one row per (sample, step) for the metric CSV."""
    rows = []
    for sample, prof in zip(tset.samples, profiles):
        traj = sample.trajectory
        label = int(sample.label) if sample.is_labeled else None
        for t in range(len(prof)):
            rows.append({
                "problem_id": traj.problem_id,
                "sample_id": traj.sample_id,
                "label": label,
                "step": t + 1,
                "entropy": float(prof.entropy[t]),
                "effective_rank": float(prof.effective_rank[t]),
                "anisotropy": float(prof.anisotropy[t]),
                "intrinsic_dim": (None if prof.intrinsic_dimension is None
                                  else float(prof.intrinsic_dimension[t])),
            })
    return rows


SUMMARY_COLUMNS = ["label", "step", "metric", "mean", "std", "count"]


def summarize_profiles(rows: Sequence[dict]) -> List[dict]:
    """Per (label, step) mean/std of each metric: correct vs incorrect over steps."""
    if not rows:
        return []
    frame = pd.DataFrame(list(rows), columns=METRIC_COLUMNS)
    frame = frame[frame["label"].notna()]
    out = []
    metrics = ["entropy", "effective_rank", "anisotropy", "intrinsic_dim"]
    for (label, step), group in frame.groupby(["label", "step"], sort=True):
        for metric in metrics:
            col = group[metric].dropna().astype(float)
            if col.empty:
                continue
            out.append({
                "label": int(label), "step": int(step), "metric": metric,
                "mean": float(col.mean()), "std": float(col.std(ddof=0)), "count": int(col.size),
            })
    return out

