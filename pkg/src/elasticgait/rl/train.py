"""Training loop: environment steps at the control rate interleaved with learner updates."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..cpg import CpgParams
from ..env import ACT_DIM, OBS_DIM, EnvConfig, EpisodeResult, LocomotionEnv, run_episode
from ..sim import ContactModel, RobotModel
from .learner import LearnerConfig, TQCLearner
from .replay import ReplayBuffer

CHECKPOINT_VERSION = 1

# learner reward scale per task; trotting rewards are metres per tick and
# pronking rewards a few tenths, both small next to the initial entropy bonus
DEFAULT_REWARD_SCALE = {"trot": 100.0, "pronk": 10.0}


class SmoothNoise:
    """Standard-normal AR(1) noise, redrawn at every episode start.

    ``eps_t = beta * eps_{t-1} + sqrt(1 - beta^2) * xi_t`` keeps a unit
    marginal variance while making consecutive actions correlated.
    """

    def __init__(self, dim: int, beta: float, rng: np.random.Generator):
        if not 0.0 <= beta < 1.0:
            raise ValueError("beta must be in [0, 1)")
        self.dim = dim
        self.beta = beta
        self.rng = rng
        self.reset()

    def reset(self):
        self.state = self.rng.standard_normal(self.dim)
        return self.state

    def __call__(self):
        self.state = self.beta * self.state + math.sqrt(1.0 - self.beta ** 2) * self.rng.standard_normal(self.dim)
        return self.state


@dataclass
class TrainConfig:
    budget: int = 100_000  # control steps
    mode: str = "residual"  # "residual" (CPG + RL) or "scratch"
    learning_starts: int = 1000
    grad_steps: int | None = None  # default: 1 for residual, 10 for scratch
    eval_every: int = 2000
    eval_seeds: tuple[int, ...] = (10_001, 10_002, 10_003, 10_004, 10_005)
    noise_beta: float = 0.8
    learner: LearnerConfig = field(default_factory=LearnerConfig)

    def __post_init__(self):
        if self.mode not in ("residual", "scratch"):
            raise ValueError(f"unknown training mode {self.mode!r}")
        if isinstance(self.learner, dict):
            self.learner = LearnerConfig(**self.learner)
        self.eval_seeds = tuple(self.eval_seeds)

    @property
    def updates_per_step(self) -> int:
        if self.grad_steps is not None:
            return self.grad_steps
        return 1 if self.mode == "residual" else 10

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CurvePoint:
    step: int
    episodes: int
    eval_reward: float
    eval_speed: float
    eval_failures: int


@dataclass
class TrainResult:
    learner: TQCLearner
    best_actor: dict
    best_step: int
    curve: list[CurvePoint]
    train_episodes: list[dict]

    def policy(self):
        """Deterministic policy with the best-evaluated actor weights."""
        actor = copy.deepcopy(self.learner.actor)
        actor.load_state_dict(self.best_actor)
        return make_policy(actor)


def make_policy(actor):
    @torch.no_grad()
    def policy(obs):
        o = torch.as_tensor(obs, dtype=torch.float32).unsqueeze(0)
        return actor.mean_action(o).squeeze(0).numpy().astype(float)
    return policy


def evaluate(env: LocomotionEnv, policy, seeds) -> list[EpisodeResult]:
    return [run_episode(env, policy, int(s)) for s in seeds]


def _summary(results: list[EpisodeResult]):
    return (float(np.mean([r.total_reward for r in results])),
            float(np.mean([r.mean_speed for r in results])),
            int(sum(r.failed for r in results)))


def build_env(task: str, params: CpgParams | None, mode: str, env_config: EnvConfig | None = None,
              model: RobotModel = RobotModel(), contact: ContactModel = ContactModel()) -> LocomotionEnv:
    cfg = env_config or EnvConfig(task=task)
    cfg = EnvConfig.from_dict({**cfg.to_dict(), "task": task,
                               "mode": "cpg" if mode == "residual" else "scratch"})
    return LocomotionEnv(params if mode == "residual" else None, cfg, model, contact)


def train(env: LocomotionEnv, config: TrainConfig, seed: int = 0, log=None) -> TrainResult:
    """Train from scratch for ``config.budget`` control steps.

    Deterministic evaluations on ``config.eval_seeds`` run before training and
    every ``eval_every`` steps; the actor with the fewest failed evaluation
    episodes, then the best mean evaluation reward, is kept, so a zero budget returns the untrained (zero-mean) policy.
    """
    if config.budget < 0:
        raise ValueError("budget must be >= 0")
    torch.set_num_threads(1)
    rng = np.random.default_rng(seed)
    lcfg = config.learner
    learner = TQCLearner(OBS_DIM, ACT_DIM, lcfg, seed=int(rng.integers(2 ** 31 - 1)))
    buffer = ReplayBuffer(OBS_DIM, ACT_DIM, lcfg.buffer_size)
    noise = SmoothNoise(ACT_DIM, config.noise_beta, np.random.default_rng(rng.integers(2 ** 31 - 1)))
    sample_rng = np.random.default_rng(rng.integers(2 ** 31 - 1))
    episode_seeds = np.random.default_rng(rng.integers(2 ** 31 - 1))

    curve: list[CurvePoint] = []
    best = {"key": (-math.inf, -math.inf), "actor": None, "step": 0}
    episodes: list[dict] = []

    def run_eval(step):
        res = evaluate(env, make_policy(learner.actor), config.eval_seeds)
        rew, speed, fails = _summary(res)
        curve.append(CurvePoint(step, len(episodes), rew, speed, fails))
        # fewer failed episodes first, then higher mean reward
        key = (-fails, rew)
        if key > best["key"]:
            best.update(key=key, actor=copy.deepcopy(learner.actor.state_dict()), step=step)
        if log:
            log(f"step {step}: eval reward {rew:.4f} speed {speed:.4f} failures {fails}")

    run_eval(0)
    obs = env.reset(int(episode_seeds.integers(2 ** 31 - 1)))
    eps = noise.reset()
    ep_ret, ep_len = 0.0, 0
    for step in range(1, config.budget + 1):
        action = learner.act(obs, eps)
        next_obs, rew, terminated, truncated, info = env.step(action)
        buffer.add(obs, action, rew, next_obs, terminated)
        obs = next_obs
        eps = noise()
        ep_ret += rew
        ep_len += 1
        if terminated or truncated:
            episodes.append({"step": step, "return": ep_ret, "length": ep_len,
                             "termination": info["termination"]})
            obs = env.reset(int(episode_seeds.integers(2 ** 31 - 1)))
            eps = noise.reset()
            ep_ret, ep_len = 0.0, 0
        if step >= config.learning_starts and len(buffer) >= lcfg.batch_size:
            for _ in range(config.updates_per_step):
                learner.update(buffer.sample(lcfg.batch_size, sample_rng))
        if step % config.eval_every == 0 or step == config.budget:
            run_eval(step)
    return TrainResult(learner, best["actor"], best["step"], curve, episodes)


def config_digest(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def save_checkpoint(path: str | Path, result: TrainResult, config: dict):
    torch.save({
        "version": CHECKPOINT_VERSION,
        "config": config,
        "config_digest": config_digest(config),
        "best_step": result.best_step,
        "best_actor": result.best_actor,
        "learner": result.learner.state_dict(),
        "learner_config": result.learner.config.to_dict(),
    }, path)


def load_checkpoint(path: str | Path) -> dict:
    ck = torch.load(path, map_location="cpu", weights_only=False)
    if ck.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {ck.get('version')}")
    if config_digest(ck["config"]) != ck["config_digest"]:
        raise ValueError(f"{path}: config digest mismatch")
    return ck


def policy_from_checkpoint(ck: dict):
    learner = TQCLearner(OBS_DIM, ACT_DIM, LearnerConfig(**ck["learner_config"]))
    learner.actor.load_state_dict(ck["best_actor"])
    return make_policy(learner.actor)
