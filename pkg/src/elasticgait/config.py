"""Experiment configuration shared by every CLI command."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .env import EnvConfig
from .experiments import DEFAULT_BUDGET, EVAL_SEEDS, PRONK_IMPULSES
from .rl.learner import LearnerConfig
from .rl.train import DEFAULT_REWARD_SCALE, TrainConfig
from .sim import ContactModel, RobotModel

TASKS = ("trot", "pronk")
MODES = ("cpg-handtuned", "cpg-optimize", "cpg-rl", "rl-scratch")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    task: str = "trot"
    mode: str = "cpg-optimize"
    seed: int = 0
    trial_budget: int | None = None  # optimisation trials; task default when unset
    train_budget: int = 20_000  # control steps
    top_k: int = 5
    reeval_episodes: int = 5
    eval_seeds: tuple[int, ...] = EVAL_SEEDS
    # pronking training and evaluation apply lateral pushes unless disabled
    pushes: bool = True
    env: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    contact: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    learner: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.trial_budget is None:
            self.trial_budget = DEFAULT_BUDGET[self.task]
        if self.trial_budget < 1:
            raise ConfigError("trial budget must be >= 1")
        if self.train_budget < 0:
            raise ConfigError("training budget must be >= 0")
        if not 1 <= self.top_k <= self.trial_budget:
            raise ConfigError("top_k must be between 1 and the trial budget")
        self.eval_seeds = tuple(int(s) for s in self.eval_seeds)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def env_config(self, pushes: bool = False) -> EnvConfig:
        d = {**EnvConfig(task=self.task).to_dict(), **self.env, "task": self.task}
        if pushes and self.task == "pronk" and self.pushes and "impulses" not in self.env:
            d["impulses"] = [asdict(i) for i in PRONK_IMPULSES]
        return EnvConfig.from_dict(d)

    def robot_model(self) -> RobotModel:
        return RobotModel.from_dict(self.model) if self.model else RobotModel()

    def contact_model(self) -> ContactModel:
        return ContactModel(**self.contact)

    def train_config(self) -> TrainConfig:
        learner = {"reward_scale": DEFAULT_REWARD_SCALE[self.task], **self.learner}
        mode = "scratch" if self.mode == "rl-scratch" else "residual"
        return TrainConfig(**{"budget": self.train_budget, "mode": mode, **self.train,
                              "learner": LearnerConfig(**learner)})
