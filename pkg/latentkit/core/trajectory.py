"""
Trajectory Model: Latent thoughts, trajectories, labeled sets and their validation.

A latent thought is one L x d hidden-state matrix; a trajectory is the ordered
sequence of T thoughts produced for one problem attempt. Values are held as
read-only float64 arrays; invariants are checked by validate_set rather than at
construction so malformed data can be loaded and reported on.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from latentkit.errors import InvalidTrajectoryError

logger = logging.getLogger(__name__)

POOLING_MODES = ("all", "first", "last")


class Label(IntEnum):
    INCORRECT = 0
    CORRECT = 1
    UNLABELED = 255


def _frozen(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LatentThought:
    """One reasoning step: L token rows of d features."""
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, 2))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, LatentThought):
            return NotImplemented
        return self.values.shape == other.values.shape and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class Trajectory:
    problem_id: int
    sample_id: int
    thoughts: Tuple[LatentThought, ...]
    answer_id: Optional[int] = None

    def __post_init__(self):
        thoughts = tuple(
            t if isinstance(t, LatentThought) else LatentThought(t) for t in self.thoughts
        )
        object.__setattr__(self, "thoughts", thoughts)

    @classmethod
    def from_array(cls, problem_id: int, sample_id: int, values,
                   answer_id: Optional[int] = None) -> "Trajectory":
        """Build from a (T, L, d) array."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"expected (T, L, d) array, got shape {arr.shape}")
        return cls(problem_id, sample_id, tuple(LatentThought(h) for h in arr), answer_id)

    @property
    def steps(self) -> int:
        return len(self.thoughts)

    @property
    def token_shape(self) -> Optional[Tuple[int, int]]:
        return self.thoughts[0].shape if self.thoughts else None

    def stacked(self) -> np.ndarray:
        """(T, L, d) view of the thoughts."""
        return np.stack([t.values for t in self.thoughts])


@dataclass(frozen=True)
class LabeledSample:
    trajectory: Trajectory
    label: Label = Label.UNLABELED

    def __post_init__(self):
        object.__setattr__(self, "label", Label(int(self.label)))

    @property
    def is_labeled(self) -> bool:
        return self.label != Label.UNLABELED


@dataclass(frozen=True)
class TrajectorySet:
    samples: Tuple[LabeledSample, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, idx) -> LabeledSample:
        return self.samples[idx]

    @property
    def token_shape(self) -> Optional[Tuple[int, int]]:
        """(L, d) of the first sample; validate_set checks the rest agree."""
        for s in self.samples:
            if s.trajectory.thoughts:
                return s.trajectory.token_shape
        return None

    @property
    def labeled(self) -> List[LabeledSample]:
        return [s for s in self.samples if s.is_labeled]

    def problem_ids(self) -> List[int]:
        seen = {}
        for s in self.samples:
            seen.setdefault(s.trajectory.problem_id, None)
        return list(seen)

    def by_problem(self) -> "dict[int, List[LabeledSample]]":
        """Samples grouped by problem id, both in first-seen order."""
        groups: dict = {}
        for s in self.samples:
            groups.setdefault(s.trajectory.problem_id, []).append(s)
        return groups


# ===============================================================
#  Token pooling
# ===============================================================

def mean_pool_tokens(thought: LatentThought) -> np.ndarray:
    """Column means over all L token rows."""
    return thought.values.mean(axis=0)


def pool_tokens(thought: LatentThought, mode: str = "all", k: int = 10) -> np.ndarray:
    """Mean over all tokens, the first k, or the last k (k clipped to L)."""
    if mode == "all":
        return mean_pool_tokens(thought)
    if k < 1:
        raise ValueError("k must be >= 1")
    if mode == "first":
        return thought.values[:k].mean(axis=0)
    if mode == "last":
        return thought.values[-k:].mean(axis=0)
    raise ValueError(f"Unknown pooling: {mode}. Choose from {list(POOLING_MODES)}")


def pooled_steps(trajectory: Trajectory, mode: str = "all", k: int = 10) -> np.ndarray:
    """(T, d) matrix of pooled step vectors."""
    return np.stack([pool_tokens(t, mode, k) for t in trajectory.thoughts])


# ===============================================================
#  Validation
# ===============================================================

@dataclass(frozen=True)
class Violation:
    sample_index: Optional[int]
    reason: str

    def __str__(self):
        where = "set" if self.sample_index is None else f"sample {self.sample_index}"
        return f"{where}: {self.reason}"


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


def validate_set(tset: TrajectorySet) -> ValidationReport:
    """List every invariant violation; an empty report means the set is valid."""
    violations: List[Violation] = []
    if len(tset.samples) == 0:
        return ValidationReport((Violation(None, "empty set"),))

    reference = tset.token_shape
    for idx, sample in enumerate(tset.samples):
        traj = sample.trajectory
        if traj.problem_id < 0 or traj.problem_id >= 2 ** 64:
            violations.append(Violation(idx, "problem_id outside unsigned 64-bit range"))
        if traj.sample_id < 0 or traj.sample_id >= 2 ** 32:
            violations.append(Violation(idx, "sample_id outside unsigned 32-bit range"))
        if traj.answer_id is not None and not (0 <= traj.answer_id < 0xFFFFFFFF):
            violations.append(Violation(idx, "answer_id outside unsigned 32-bit range"))
        if traj.steps == 0:
            violations.append(Violation(idx, "trajectory has no thoughts (T = 0)"))
            continue

        shapes = {t.shape for t in traj.thoughts}
        if len(shapes) > 1:
            violations.append(Violation(idx, f"thoughts have differing shapes {sorted(shapes)}"))
        L, d = traj.token_shape
        if L < 1 or d < 1:
            violations.append(Violation(idx, f"empty thought shape ({L}, {d})"))
        if reference is not None and (L, d) != reference and len(shapes) == 1:
            reason = "heterogeneous dimensionality" if d != reference[1] else "heterogeneous token count"
            violations.append(Violation(idx, f"{reason}: ({L}, {d}) vs ({reference[0]}, {reference[1]})"))
        for step, thought in enumerate(traj.thoughts):
            if not np.all(np.isfinite(thought.values)):
                violations.append(Violation(idx, f"non-finite entry at step {step}"))
                break

    if violations:
        logger.warning(f"Validation found {len(violations)} violation(s)")
    return ValidationReport(tuple(violations))


def ensure_valid(tset: TrajectorySet) -> TrajectorySet:
    report = validate_set(tset)
    if not report.ok:
        summary = "; ".join(str(v) for v in report.violations[:3])
        raise InvalidTrajectoryError(f"invalid trajectory set ({len(report)} violations): {summary}",
                                     report.violations)
    return tset


# ===============================================================
#  Set transforms
# ===============================================================

def truncate_prefix(tset: TrajectorySet, steps: int) -> TrajectorySet:
    """Keep h_1..h_min(steps, T) of every trajectory."""
    if steps < 1:
        raise ValueError("prefix length must be >= 1")
    return TrajectorySet(tuple(
        replace(s, trajectory=replace(s.trajectory, thoughts=s.trajectory.thoughts[:steps]))
        for s in tset.samples
    ))


def merge_sets(sets: Iterable[TrajectorySet]) -> TrajectorySet:
    """Concatenate sets that share (L, d), in input order. Empty sets add nothing."""
    sets = list(sets)
    if not sets:
        raise ValueError("nothing to merge")
    shapes = {s.token_shape for s in sets if len(s)}
    if len(shapes) > 1:
        raise InvalidTrajectoryError(f"cannot merge sets with token shapes {sorted(shapes, key=str)}")
    return TrajectorySet(tuple(sample for s in sets for sample in s.samples))


def split_by_problem(tset: TrajectorySet, test_fraction: float,
                     seed: int) -> Tuple[TrajectorySet, TrajectorySet]:
    """Disjoint train/test split over problem ids."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    problems = np.array(tset.problem_ids(), dtype=np.uint64)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(problems))
    n_test = max(1, int(round(test_fraction * len(problems))))
    test_ids = {int(p) for p in problems[order[:n_test]]}
    train = tuple(s for s in tset.samples if s.trajectory.problem_id not in test_ids)
    test = tuple(s for s in tset.samples if s.trajectory.problem_id in test_ids)
    return TrajectorySet(train), TrajectorySet(test)


def labels_array(samples: Sequence[LabeledSample]) -> np.ndarray:
    return np.array([int(s.label) for s in samples], dtype=np.int64)
