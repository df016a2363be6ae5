"""
Evaluation: Accuracy and ROC-AUC of a reward model on labeled trajectories.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from latentkit.core.trajectory import TrajectorySet, labels_array
from latentkit.errors import LengthMismatchError, NoLabeledSamplesError, SingleClassError

logger = logging.getLogger(__name__)

THRESHOLD = 0.5


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    roc_auc: Optional[float]        # None when only one class is present
    count: int
    positives: int


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney statistic: P(score_pos > score_neg), ties counted as 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise LengthMismatchError(f"{scores.size} scores vs {labels.size} labels")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("ROC-AUC needs at least one positive and one negative")
    # Average ranks give tied pairs half credit.
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate(model, data: TrajectorySet) -> EvalReport:
    """Score the labeled samples of `data`; accuracy predicts correct when p >= 0.5."""
    samples = data.labeled
    if not samples:
        raise NoLabeledSamplesError("evaluation set has no labeled samples")
    probs = model.score(samples)
    y = labels_array(samples)
    accuracy = float(np.mean((probs >= THRESHOLD).astype(np.int64) == y))
    try:
        auc = roc_auc(probs, y)
    except SingleClassError:
        logger.warning("Evaluation set holds a single class; ROC-AUC undefined")
        auc = None
    return EvalReport(accuracy=accuracy, roc_auc=auc, count=len(samples), positives=int(y.sum()))
