"""
Latent Reward Model: Sequence classifier scoring a trajectory's chance of being correct.

Pipeline: token pooling per step -> linear d->h -> + sinusoidal positions ->
B pre-norm encoder blocks -> mean over steps -> two-layer ReLU head -> logit -> sigmoid.
"""
import copy
import logging
from collections import OrderedDict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from latentkit.config import ModelConfig
from latentkit.core.trajectory import LabeledSample, Trajectory, pooled_steps
from latentkit.errors import DimensionError, ModelConfigError, UnlabeledSampleError
from latentkit.trainer.models.encoder import (
    EncoderBlock, FeedForward, Linear, Params, sinusoidal_encoding,
)

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-12


class RewardModel:
    """
    Parameters live in an ordered dict in canonical order (the .lrm file order).

    use_positional_encoding is a test hook: with it off the model is invariant
    to step order.
    """

    def __init__(self, config: ModelConfig, params: Optional[Params] = None):
        if config.model_dim % config.heads != 0:
            raise ModelConfigError(f"heads ({config.heads}) must divide model_dim ({config.model_dim})")
        self.config = config
        h = config.model_dim
        self.input = Linear("input", config.input_dim, h)
        self.blocks = [
            EncoderBlock(f"blocks.{i}", h, config.heads, config.ffn_multiplier)
            for i in range(config.attention_blocks)
        ]
        self.head = FeedForward("head", h, config.head_hidden_dim, out_dim=1)
        self.use_positional_encoding = True
        self.params: Params = OrderedDict()
        if params is not None:
            self.load_params(params)

    # -- parameters ---------------------------------------------------------

    def parameter_shapes(self) -> List[Tuple[str, Tuple[int, ...]]]:
        shapes = self.input.shapes()
        for block in self.blocks:
            shapes += block.shapes()
        return shapes + self.head.shapes()

    def load_params(self, params: Params):
        expected = self.parameter_shapes()
        if set(params) != {name for name, _ in expected}:
            missing = sorted({n for n, _ in expected} - set(params))
            extra = sorted(set(params) - {n for n, _ in expected})
            raise ModelConfigError(f"parameter names disagree with config (missing={missing}, extra={extra})")
        ordered = OrderedDict()
        for name, shape in expected:
            arr = np.array(params[name], dtype=np.float64).reshape(shape)
            if not np.all(np.isfinite(arr)):
                raise ModelConfigError(f"parameter {name} has non-finite entries")
            ordered[name] = arr
        self.params = ordered

    def zero_grads(self) -> Params:
        return OrderedDict((name, np.zeros_like(p)) for name, p in self.params.items())

    def copy(self) -> "RewardModel":
        clone = RewardModel(self.config, copy.deepcopy(self.params))
        clone.use_positional_encoding = self.use_positional_encoding
        return clone

    @property
    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    # -- inputs -------------------------------------------------------------

    def pooled(self, trajectory: Trajectory) -> np.ndarray:
        if trajectory.token_shape is None or trajectory.token_shape[1] != self.config.input_dim:
            got = None if trajectory.token_shape is None else trajectory.token_shape[1]
            raise DimensionError(f"trajectory d={got} does not match model input_dim={self.config.input_dim}")
        return pooled_steps(trajectory, self.config.pooling, self.config.pooling_k)

    # -- forward / backward -------------------------------------------------

    def _logits(self, X: np.ndarray):
        """X: (B, T, d) pooled steps -> ((B,) logits, caches)."""
        x, c_in = self.input.forward(self.params, X)
        if self.use_positional_encoding:
            x = x + sinusoidal_encoding(X.shape[1], self.config.model_dim)
        c_blocks = []
        for block in self.blocks:
            x, c = block.forward(self.params, x)
            c_blocks.append(c)
        pooled = x.mean(axis=1)
        logit, c_head = self.head.forward(self.params, pooled)
        return logit[:, 0], (c_in, c_blocks, c_head, X.shape[1])

    def _backward(self, dlogit: np.ndarray, caches, grads: Params):
        c_in, c_blocks, c_head, steps = caches
        dpooled = self.head.backward(self.params, dlogit[:, None], c_head, grads)
        dx = np.repeat(dpooled[:, None, :] / steps, steps, axis=1)
        for block, c in zip(reversed(self.blocks), reversed(c_blocks)):
            dx = block.backward(self.params, dx, c, grads)
        self.input.backward(self.params, dx, c_in, grads)

    def forward_batch(self, X: np.ndarray) -> np.ndarray:
        """Probabilities for a (B, T, d) array of pooled steps."""
        logits, _ = self._logits(np.asarray(X, dtype=np.float64))
        return expit(logits)

    def forward(self, trajectory: Trajectory) -> float:
        return float(self.forward_batch(self.pooled(trajectory)[None])[0])

    def score(self, samples: Sequence[LabeledSample], batch_size: int = 256) -> np.ndarray:
        """Rewards for every sample, in input order; batches group equal T."""
        out = np.empty(len(samples))
        for steps, idx in group_by_steps(samples).items():
            for start in range(0, len(idx), batch_size):
                chunk = idx[start:start + batch_size]
                X = np.stack([self.pooled(samples[i].trajectory) for i in chunk])
                out[chunk] = self.forward_batch(X)
        return out

    def loss_and_grads_array(self, X: np.ndarray, y: np.ndarray) -> Tuple[float, Params]:
        """Mean clamped BCE over a fixed-T batch and its exact gradients."""
        logits, caches = self._logits(np.asarray(X, dtype=np.float64))
        p_raw = expit(logits)
        p = np.clip(p_raw, PROB_CLAMP, 1.0 - PROB_CLAMP)
        n = len(y)
        loss = float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
        # Where the clamp is active the loss is flat in the logit.
        inside = (p_raw >= PROB_CLAMP) & (p_raw <= 1.0 - PROB_CLAMP)
        dlogit = np.where(inside, (p_raw - y) / n, 0.0)
        grads = self.zero_grads()
        self._backward(dlogit, caches, grads)
        return loss, grads


def group_by_steps(samples: Sequence[LabeledSample]) -> Dict[int, np.ndarray]:
    """Sample positions grouped by trajectory length T, groups in ascending T."""
    groups: Dict[int, List[int]] = {}
    for i, s in enumerate(samples):
        groups.setdefault(s.trajectory.steps, []).append(i)
    return {t: np.array(groups[t], dtype=np.int64) for t in sorted(groups)}


# ===============================================================
#  Module-level operations
# ===============================================================

def init_model(config: ModelConfig) -> RewardModel:
    """Seeded init: weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, gains 1."""
    model = RewardModel(config)
    rng = np.random.default_rng(config.seed)
    params: Params = OrderedDict()
    model.input.init(params, rng)
    for block in model.blocks:
        block.init(params, rng)
    model.head.init(params, rng)
    model.load_params(params)
    logger.debug(f"Initialized reward model with {model.num_parameters} parameters")
    return model


def forward(model: RewardModel, trajectory: Trajectory) -> float:
    return model.forward(trajectory)


def loss_and_grads(model: RewardModel, batch: Sequence[LabeledSample]) -> Tuple[float, Params]:
    """
    Mean BCE over the batch. Samples of different T are run as separate
    sub-batches and recombined with weights n_T / n, which keeps the mean exact.
    """
    if len(batch) == 0:
        raise ValueError("batch is empty")
    unlabeled = [i for i, s in enumerate(batch) if not s.is_labeled]
    if unlabeled:
        raise UnlabeledSampleError(f"batch contains unlabeled samples at positions {unlabeled[:5]}")

    total = len(batch)
    loss = 0.0
    grads = model.zero_grads()
    for _, idx in group_by_steps(batch).items():
        X = np.stack([model.pooled(batch[i].trajectory) for i in idx])
        y = np.array([int(batch[i].label) for i in idx], dtype=np.float64)
        part_loss, part_grads = model.loss_and_grads_array(X, y)
        weight = len(idx) / total
        loss += weight * part_loss
        for name, g in part_grads.items():
            grads[name] += weight * g
    return loss, grads
