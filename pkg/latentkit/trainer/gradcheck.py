"""
Gradient Check: Analytic reward-model gradients against central finite differences.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from latentkit.config import ModelConfig
from latentkit.core.trajectory import Label, LabeledSample, Trajectory
from latentkit.trainer.models.reward_model import RewardModel, init_model, loss_and_grads

logger = logging.getLogger(__name__)

STEP = 1e-4
# Arrays whose gradient norm is below this are compared in absolute terms.
DENOMINATOR_FLOOR = 1e-6


@dataclass(frozen=True)
class GradCheckReport:
    per_parameter: Dict[str, float]       # relative error per parameter array
    checked: int
    tolerance: float

    @property
    def max_relative_error(self) -> float:
        return max(self.per_parameter.values()) if self.per_parameter else 0.0

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||) over one parameter array."""
    denom = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), DENOMINATOR_FLOOR)
    return float(np.linalg.norm(analytic - numeric)) / denom


def numeric_gradient(model: RewardModel, batch: Sequence[LabeledSample], name: str,
                     step: float = STEP) -> np.ndarray:
    param = model.params[name]
    grad = np.zeros_like(param)
    flat, gflat = param.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus, _ = loss_and_grads(model, batch)
        flat[i] = original - step
        minus, _ = loss_and_grads(model, batch)
        flat[i] = original
        gflat[i] = (plus - minus) / (2.0 * step)
    return grad


def small_problem(seed: int = 0, steps: int = 4, tokens: int = 3, dim: int = 5,
                  label: Label = Label.CORRECT) -> Tuple[ModelConfig, LabeledSample]:
    """The reference configuration: h=8, one block, two heads, T=4, L=3, d=5."""
    config = ModelConfig(input_dim=dim, model_dim=8, attention_blocks=1, heads=2, seed=seed)
    rng = np.random.default_rng(seed)
    traj = Trajectory.from_array(0, 0, rng.standard_normal((steps, tokens, dim)))
    return config, LabeledSample(traj, label)


def gradient_check(model: Optional[RewardModel] = None, batch: Optional[Sequence[LabeledSample]] = None,
                   tolerance: float = 1e-4, seed: int = 0) -> GradCheckReport:
    if model is None or batch is None:
        config, sample = small_problem(seed)
        model = init_model(config) if model is None else model
        batch = [sample] if batch is None else batch
    model = model.copy()

    _, analytic = loss_and_grads(model, batch)
    errors = {}
    checked = 0
    for name in model.params:
        numeric = numeric_gradient(model, batch, name)
        errors[name] = relative_error(analytic[name], numeric)
        checked += numeric.size
    report = GradCheckReport(errors, checked, tolerance)
    logger.info(f"Gradient check over {checked} entries: max relative error "
                f"{report.max_relative_error:.3e} ({'PASS' if report.passed else 'FAIL'})")
    return report
