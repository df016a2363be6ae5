"""
Geometry Metrics: TwoNN intrinsic dimension and PCA projection of trajectories.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from sklearn.decomposition import PCA
from sklearn.neighbors import NearestNeighbors

from latentkit.core.trajectory import TrajectorySet, pooled_steps
from latentkit.errors import (
    DegenerateDistanceError, InsufficientDataError, OverTrimmedError, RankDeficiencyError,
)

logger = logging.getLogger(__name__)


# ===============================================================
#  TwoNN intrinsic dimension
# ===============================================================

@dataclass(frozen=True)
class TwoNNReport:
    estimate: float
    ratios: np.ndarray              # mu_i = r2 / r1, input order
    retained_count: int             # L'
    trimming_fraction: float
    regression_points: np.ndarray   # (L', 2) rows of (x_j, y_j)


def _neighbour_distances(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """First and second nearest-neighbour distances of every point."""
    nn = NearestNeighbors(n_neighbors=3, metric="euclidean", algorithm="auto")
    nn.fit(points)
    dists, idx = nn.kneighbors(points)
    # With exact duplicates the query point is not guaranteed to sit in column 0.
    zero = dists[:, 1] <= 0.0
    if np.any(zero):
        i = int(np.flatnonzero(zero)[0])
        other = next(int(j) for j, dj in zip(idx[i], dists[i]) if j != i and dj <= 0.0)
        raise DegenerateDistanceError(min(i, other), max(i, other))
    return dists[:, 1], dists[:, 2]


def two_nn_estimate(points, trim: float) -> TwoNNReport:
    """
    Two-nearest-neighbour intrinsic dimension.

    Sorts mu ascending, assigns F_j = j / L, keeps the L' = floor((1 - trim) * L)
    smallest ratios when trim > 0 and fits y = d * x through the origin.
    The point with F_j = 1 has y = inf and is never part of the fit.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"expected a (n, dim) point cloud, got shape {points.shape}")
    if not 0.0 <= trim < 1.0:
        raise ValueError("trimming fraction must lie in [0, 1)")
    n = points.shape[0]
    if n < 3:
        raise InsufficientDataError(f"TwoNN needs at least 3 points, got {n}")

    r1, r2 = _neighbour_distances(points)
    mu = r2 / r1

    mu_sorted = np.sort(mu)
    F = np.arange(1, n + 1) / n
    retained = math.floor((1.0 - trim) * n) if trim > 0 else n
    retained = min(retained, n - 1)
    if retained < 2:
        raise OverTrimmedError(f"only {retained} point(s) left after trimming {trim} of {n}")

    x = np.log(mu_sorted[:retained])
    y = -np.log(1.0 - F[:retained])
    denom = float(np.dot(x, x))
    if denom <= 0.0:
        raise InsufficientDataError("all retained neighbour ratios equal 1; slope undefined")
    d_hat = float(np.dot(x, y) / denom)

    return TwoNNReport(
        estimate=d_hat,
        ratios=mu,
        retained_count=retained,
        trimming_fraction=trim,
        regression_points=np.column_stack([x, y]),
    )


# ===============================================================
#  PCA projection
# ===============================================================

@dataclass(frozen=True)
class ProjectedTrajectory:
    problem_id: int
    sample_id: int
    label: int
    coordinates: np.ndarray          # (T, components)
    explained_variance: np.ndarray   # ratio per component, descending


@dataclass(frozen=True)
class PCABasis:
    mean: np.ndarray
    components: np.ndarray           # (components, d), orthonormal rows
    explained_variance: np.ndarray

    def project(self, vectors: np.ndarray) -> np.ndarray:
        return (vectors - self.mean) @ self.components.T

    def reconstruct(self, coords: np.ndarray) -> np.ndarray:
        return coords @ self.components + self.mean


def fit_pca(tset: TrajectorySet, components: int = 3, pooling: str = "all") -> PCABasis:
    """Fit PCA jointly on all pooled step vectors of the set."""
    stacked = np.vstack([pooled_steps(s.trajectory, pooling) for s in tset.samples])
    if stacked.shape[0] < components:
        raise InsufficientDataError(
            f"{stacked.shape[0]} pooled step vectors cannot support {components} components")
    centered = stacked - stacked.mean(axis=0)
    rank = np.linalg.matrix_rank(centered)
    if rank < components:
        raise RankDeficiencyError(f"centered data has rank {rank} < {components} components")

    pca = PCA(n_components=components, svd_solver="full")
    pca.fit(stacked)
    logger.debug(f"PCA explained variance: {np.round(pca.explained_variance_ratio_, 4).tolist()}")
    return PCABasis(mean=pca.mean_, components=pca.components_,
                    explained_variance=pca.explained_variance_ratio_)


def pca_project(tset: TrajectorySet, components: int = 3,
                pooling: str = "all") -> List[ProjectedTrajectory]:
    basis = fit_pca(tset, components, pooling)
    out = []
    for s in tset.samples:
        traj = s.trajectory
        out.append(ProjectedTrajectory(
            problem_id=traj.problem_id,
            sample_id=traj.sample_id,
            label=int(s.label),
            coordinates=basis.project(pooled_steps(traj, pooling)),
            explained_variance=basis.explained_variance,
        ))
    return out


def pca_project_per_problem(tset: TrajectorySet, components: int = 3,
                            pooling: str = "all") -> Dict[int, List[ProjectedTrajectory]]:
    """One coordinate system per problem, shared by its correct and incorrect samples."""
    return {
        pid: pca_project(TrajectorySet(tuple(samples)), components, pooling)
        for pid, samples in tset.by_problem().items()
    }


PCA_COLUMNS = ["problem_id", "sample_id", "label", "step", "pc1", "pc2", "pc3"]


def projection_rows(projections: List[ProjectedTrajectory]) -> List[dict]:
    rows = []
    for p in projections:
        label = None if p.label == 255 else p.label
        for t, coords in enumerate(p.coordinates):
            row = {"problem_id": p.problem_id, "sample_id": p.sample_id,
                   "label": label, "step": t + 1}
            row.update({f"pc{k + 1}": float(c) for k, c in enumerate(coords[:3])})
            rows.append(row)
    return rows
