"""
Configuration: Typed settings for every stage, loaded from config.yaml.

Each section of the YAML file maps onto one model; CLI flags are applied on
top with `with_overrides`. Nothing is read from the environment.
"""
import logging
from pathlib import Path
from typing import Any, ClassVar, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config.yaml"


class _Section(BaseModel):
    """Base for config sections: frozen, strict about unknown keys."""
    model_config = ConfigDict(frozen=True, extra="forbid", protected_namespaces=())
    SECTION: ClassVar[str] = ""

    @classmethod
    def from_dict(cls, cfg: Optional[Dict[str, Any]]):
        """Build from the full parsed config; only this model's section is read."""
        values = dict((cfg or {}).get(cls.SECTION) or {})
        return cls(**values)

    def with_overrides(self, **overrides):
        """Copy with every non-None override applied, re-validated."""
        values = self.model_dump()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return type(self)(**values)


# ===============================================================
#  Reward model + training
# ===============================================================

class ModelConfig(_Section):
    SECTION: ClassVar[str] = "model"

    input_dim: int = Field(16, ge=1, description="d of the trajectories")
    model_dim: int = Field(64, ge=1, description="h")
    attention_blocks: int = Field(1, ge=1)
    heads: int = Field(2, ge=1)
    ffn_multiplier: int = Field(4, ge=1)
    head_hidden: Optional[int] = Field(None, ge=1, description="defaults to model_dim")
    pooling: Literal["all", "first", "last"] = "all"
    pooling_k: int = Field(10, ge=1)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _heads_divide_model_dim(self):
        if self.model_dim % self.heads != 0:
            raise ValueError(f"heads ({self.heads}) must divide model_dim ({self.model_dim})")
        return self

    @property
    def head_hidden_dim(self) -> int:
        return self.head_hidden or self.model_dim


class TrainConfig(_Section):
    SECTION: ClassVar[str] = "training"

    epochs: int = Field(10, ge=0)
    learning_rate: float = Field(1e-3, gt=0)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_epsilon: float = Field(1e-8, gt=0)
    batch_size: int = Field(32, ge=1)
    shuffle_seed: int = Field(0, ge=0)


# ===============================================================
#  Sampling, metrics, synthetic data
# ===============================================================

class SamplerConfig(_Section):
    SECTION: ClassVar[str] = "sampler"

    budget: int = Field(20, ge=1, description="N candidates per problem")
    required: int = Field(1, ge=1, description="M accepted samples")
    beta: float = Field(1e-3, gt=0)
    max_iterations: int = Field(1_000_000, ge=1)
    exponential_vote: bool = False
    seed: int = Field(0, ge=0)


class MetricConfig(_Section):
    SECTION: ClassVar[str] = "metrics"

    alpha: float = Field(1.0, gt=0)
    trim: float = Field(0.1, ge=0, lt=1)
    intrinsic: bool = True
    workers: int = Field(1, ge=1)
    pca_components: int = Field(3, ge=1)
    pooling: Literal["all", "first", "last"] = "all"


class SyntheticConfig(_Section):
    SECTION: ClassVar[str] = "synthetic"

    problems: int = Field(100, ge=1)
    samples_per_problem: int = Field(5, ge=1)
    steps: int = Field(8, ge=1, description="T")
    tokens: int = Field(4, ge=1, description="L")
    dim: int = Field(16, ge=1, description="d")
    correct_rate: float = Field(0.5, gt=0, lt=1)
    noise_std: float = Field(1.0, ge=0, description="initial-state sigma")
    steps_noise: float = Field(0.1, ge=0)
    token_noise: float = Field(0.1, ge=0)
    separation: float = Field(7.5, ge=0, description="delta: distance from the correct attractor to each incorrect one")
    dispersion_ratio: float = Field(2.0, gt=1)
    contraction: float = Field(0.3, gt=0, le=1, description="gamma")
    answer_vocab: int = Field(8, ge=2)
    incorrect_attractors: int = Field(3, ge=1)
    first_problem_id: int = Field(0, ge=0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _enough_answers(self):
        if self.incorrect_attractors > self.answer_vocab - 1:
            raise ValueError(
                f"{self.incorrect_attractors} incorrect attractors need answer_vocab >= "
                f"{self.incorrect_attractors + 1}, got {self.answer_vocab}")
        return self


class VerifyConfig(_Section):
    SECTION: ClassVar[str] = "verify"

    candidates: int = Field(5, ge=1, le=8)
    beta: float = Field(0.25, gt=0)
    draws: int = Field(200_000, ge=1)
    seeds: int = Field(3, ge=1)
    significance: float = Field(1e-3, gt=0, lt=1)
    tv_tolerance: float = Field(0.01, gt=0)
    instances: int = Field(1000, ge=1)
    max_candidates: int = Field(10, ge=1)
    epsilon: float = Field(0.1, ge=0, le=1)
    beta_range: List[float] = Field(default_factory=lambda: [0.05, 1.0])
    grad_tolerance: float = Field(1e-4, gt=0)

    @model_validator(mode="after")
    def _beta_range_ordered(self):
        lo, hi = self.beta_range
        if not 0 < lo <= hi:
            raise ValueError(f"beta_range must satisfy 0 < lo <= hi, got {self.beta_range}")
        return self


# ===============================================================
#  Whole run
# ===============================================================

class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", protected_namespaces=())

    subcommand: Optional[str] = None
    inputs: List[str] = Field(default_factory=list)
    output: Optional[str] = None
    model_path: Optional[str] = None
    report_format: Literal["csv", "text"] = "text"
    metrics: MetricConfig = Field(default_factory=MetricConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    training: TrainConfig = Field(default_factory=TrainConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)

    @classmethod
    def from_dict(cls, cfg: Optional[Dict[str, Any]]) -> "RunConfig":
        cfg = cfg or {}
        unknown = set(cfg) - {"metrics", "model", "training", "sampler", "synthetic", "verify"}
        if unknown:
            raise ValueError(f"unknown config section(s): {sorted(unknown)}")
        return cls(
            metrics=MetricConfig.from_dict(cfg),
            model=ModelConfig.from_dict(cfg),
            training=TrainConfig.from_dict(cfg),
            sampler=SamplerConfig.from_dict(cfg),
            synthetic=SyntheticConfig.from_dict(cfg),
            verify=VerifyConfig.from_dict(cfg),
        )


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Read a YAML config. With no path the repository's config.yaml is used when
    present, otherwise built-in defaults.
    """
    if path is None:
        if not DEFAULT_CONFIG_PATH.exists():
            return RunConfig()
        path = DEFAULT_CONFIG_PATH
    with open(path, "r") as f:
        cfg = yaml.safe_load(f) or {}
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: top level must be a mapping of sections")
    logger.debug(f"Loaded config from {path}")
    return RunConfig.from_dict(cfg)
