"""
Training Engine: Adam over the reward model's analytic gradients.

Mini-batches: each epoch shuffles the labeled samples with a generator seeded
from shuffle_seed, cuts every equal-T group into batches of batch_size, then
shuffles the batch order. Epoch loss is the sample-weighted mean batch loss.
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from latentkit.config import TrainConfig
from latentkit.core.trajectory import LabeledSample, Label, TrajectorySet
from latentkit.errors import DegenerateTrainingError
from latentkit.trainer.evaluate import evaluate
from latentkit.trainer.models.reward_model import RewardModel, group_by_steps, loss_and_grads

logger = logging.getLogger(__name__)


# ===============================================================
#  Adam
# ===============================================================

class Adam:
    """Adam with bias correction, one moment pair per named parameter."""

    def __init__(self, params: Dict[str, np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = OrderedDict((k, np.zeros_like(v)) for k, v in params.items())
        self.v = OrderedDict((k, np.zeros_like(v)) for k, v in params.items())

    @classmethod
    def from_config(cls, params, cfg: TrainConfig) -> "Adam":
        return cls(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / c1
            v_hat = self.v[name] / c2
            params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ===============================================================
#  Training loop
# ===============================================================

@dataclass
class TrainingHistory:
    losses: List[float] = field(default_factory=list)
    val_auc: List[Optional[float]] = field(default_factory=list)

    def __len__(self):
        return len(self.losses)


def make_batches(samples: Sequence[LabeledSample], batch_size: int,
                 rng: np.random.Generator) -> List[np.ndarray]:
    """Index batches for one epoch; every batch holds a single trajectory length."""
    order = rng.permutation(len(samples))
    shuffled = [samples[i] for i in order]
    batches = []
    for _, idx in group_by_steps(shuffled).items():
        for start in range(0, len(idx), batch_size):
            batches.append(order[idx[start:start + batch_size]])
    return [batches[i] for i in rng.permutation(len(batches))]


def train(model: RewardModel, data: TrajectorySet, cfg: TrainConfig,
          validation: Optional[TrajectorySet] = None) -> Tuple[RewardModel, List[float]]:
    """
    Train a private copy of `model`; the input model is left untouched.
    Returns the trained copy and the per-epoch mean losses.
    """
    model, history = train_with_history(model, data, cfg, validation)
    return model, history.losses


def train_with_history(model: RewardModel, data: TrajectorySet, cfg: TrainConfig,
                       validation: Optional[TrajectorySet] = None) -> Tuple[RewardModel, TrainingHistory]:
    samples = data.labeled
    classes = {s.label for s in samples}
    if classes != {Label.CORRECT, Label.INCORRECT}:
        raise DegenerateTrainingError(
            f"training needs both classes, got {sorted(int(c) for c in classes) or 'no labeled samples'}")

    model = model.copy()
    optimizer = Adam.from_config(model.params, cfg)
    rng = np.random.default_rng(cfg.shuffle_seed)
    history = TrainingHistory()

    logger.info(f"Training on {len(samples)} labeled samples: {cfg.epochs} epochs, "
                f"batch {cfg.batch_size}, lr {cfg.learning_rate:g}, {model.num_parameters:,} parameters")

    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        for batch_idx in make_batches(samples, cfg.batch_size, rng):
            batch = [samples[i] for i in batch_idx]
            loss, grads = loss_and_grads(model, batch)
            optimizer.step(model.params, grads)
            epoch_loss += loss * len(batch)
        epoch_loss /= len(samples)
        history.losses.append(epoch_loss)

        line = f"Epoch {epoch + 1}/{cfg.epochs} | Train Loss: {epoch_loss:.4f}"
        auc = None
        if validation is not None:
            report = evaluate(model, validation)
            auc = report.roc_auc
            line += f" | Val Acc: {report.accuracy:.4f} AUC: " + ("n/a" if auc is None else f"{auc:.4f}")
        history.val_auc.append(auc)
        logger.info(line)

    return model, history
