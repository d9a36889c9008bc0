"""Experiment configuration: one declarative JSON file, round-trip exact."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..degrade import get_preset
from ..degrade.manifest import MIN_SIDE
from ..losses import LossWeights
from ..numerics import OPTIMIZERS


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    clip_norm: float = 1.0
    batch: int = 4
    kind: str = "sgd"

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}; choose from {sorted(OPTIMIZERS)}")
        if self.learning_rate <= 0 or self.batch < 1:
            raise ValueError("learning_rate must be positive and batch at least 1")


@dataclass(frozen=True)
class StepsConfig:
    restorer: int = 2000
    prior: int = 1000
    projector: int = 1000
    direct: int = 1000


@dataclass(frozen=True)
class ExperimentConfig:
    run_seed: int = 0
    image_size: int = 64
    n_train: int = 200
    n_test: int = 64
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    restorer_optimizer: OptimizerConfig | None = None
    steps: StepsConfig = field(default_factory=StepsConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    lq_preset: str = "lq"
    elq_preset: str = "elq"
    prompt_dropout_p: float = 0.3
    lfo_iters: tuple = (0, 1, 2)
    width: int = 16
    blocks: int = 4
    alt_restorer_width: int = 12
    prior_width: int = 16
    prior_blocks: int = 3
    student_lr: float | None = None
    feature_seed: int = 1234
    ablation_lambdas: tuple = (0.0, 0.5, 1.0, 2.0)

    def __post_init__(self):
        for name in (self.lq_preset, self.elq_preset):
            preset = get_preset(name)
            smallest = self.image_size * min(preset.resize_scale[0], 1.0) ** 2
            if self.image_size < 16 or smallest < MIN_SIDE:
                raise ValueError(f"image_size {self.image_size} is too small for preset {name!r}: "
                                 f"two downscales can reach {smallest:.2f}px")
        if self.n_train < 1 or self.n_test < 2:
            raise ValueError("need n_train >= 1 and n_test >= 2")
        if not 0.0 <= self.prompt_dropout_p <= 1.0:
            raise ValueError("prompt_dropout_p must lie in [0, 1]")
        if any(int(i) != i or i < 0 for i in self.lfo_iters):
            raise ValueError("lfo_iters must be non-negative integers")
        object.__setattr__(self, "lfo_iters", tuple(int(i) for i in self.lfo_iters))
        object.__setattr__(self, "ablation_lambdas", tuple(float(x) for x in self.ablation_lambdas))

    @property
    def stage1_optimizer(self) -> OptimizerConfig:
        """Optimizer settings for the restorer (falls back to ``optimizer``)."""
        return self.restorer_optimizer or self.optimizer

    @property
    def lq(self):
        return get_preset(self.lq_preset)

    @property
    def elq(self):
        return get_preset(self.elq_preset)

    def to_dict(self):
        d = asdict(self)
        d["lfo_iters"] = list(self.lfo_iters)
        d["ablation_lambdas"] = list(self.ablation_lambdas)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields {sorted(unknown)}")
        if "optimizer" in d:
            d["optimizer"] = OptimizerConfig(**d["optimizer"])
        if d.get("restorer_optimizer") is not None:
            d["restorer_optimizer"] = OptimizerConfig(**d["restorer_optimizer"])
        if "steps" in d:
            d["steps"] = StepsConfig(**d["steps"])
        if "weights" in d:
            d["weights"] = LossWeights.from_dict(d["weights"])
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def replace(self, **changes):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ExperimentConfig(**d)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path


def load_config(path=None, env=None) -> ExperimentConfig:
    """Read a config file (defaults when ``path`` is None); ``IRIB_SEED`` overrides ``run_seed``."""
    env = os.environ if env is None else env
    cfg = ExperimentConfig() if path is None else ExperimentConfig.from_json(
        Path(path).read_text(encoding="utf-8"))
    if env.get("IRIB_SEED"):
        cfg = cfg.replace(run_seed=int(env["IRIB_SEED"]))
    return cfg
