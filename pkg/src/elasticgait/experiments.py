"""Task objectives, presets and evaluation reports shared by the CLI and tests."""
from __future__ import annotations

import math

import numpy as np

from .cpg import CpgParams
from .env import EnvConfig, EpisodeResult, Impulse, LocomotionEnv, run_episode
from .metrics import UndefinedRatio, mean_velocity_ratio
from .sim import ContactModel, RobotModel
from .tpe import Outcome, SearchSpace, params_from_vector

# Reconstructed hand-tuned gaits. Trot: swing 0.14 s, step length 2.5 cm,
# symmetric stance. Pronk: swing 0.18 s, stance 0.15 s.
HAND_TUNED = {
    "trot": CpgParams.from_durations(swing=0.14, stance=0.14, clearance=0.02,
                                     penetration=0.005, step_length=0.025),
    "pronk": CpgParams.from_durations(swing=0.18, stance=0.15, clearance=0.03,
                                      penetration=0.01, step_length=0.0),
}

DEFAULT_BUDGET = {"trot": 250, "pronk": 160}

# lateral pushes used for the pronking robustness evaluation
PRONK_IMPULSES = (Impulse(1.5, lateral_velocity=0.3, roll_rate=1.5),
                  Impulse(3.0, lateral_velocity=-0.3, roll_rate=-1.5))

EVAL_SEEDS = (20_001, 20_002, 20_003, 20_004, 20_005)


def episode_objective(result: EpisodeResult, task: str) -> float:
    """Minimised objective: negative mean speed (trot) or negative return (pronk)."""
    if task == "trot":
        return -result.mean_speed
    return -result.total_reward


def make_objective(task: str, env_config: EnvConfig | None = None, model: RobotModel = RobotModel(),
                   contact: ContactModel = ContactModel(), space: SearchSpace | None = None):
    space = space or SearchSpace.default()
    cfg = env_config or EnvConfig(task=task)

    def objective(x, seed: int) -> Outcome:
        env = LocomotionEnv(params_from_vector(x, space), cfg, model, contact)
        res = run_episode(env, seed=seed)
        return Outcome(episode_objective(res, task), res.failed, res.duration, res.termination)

    return objective


def episode_summary(res: EpisodeResult, task: str) -> dict:
    tr = res.trace
    try:
        ratio = mean_velocity_ratio(tr)
    except UndefinedRatio:
        ratio = float("nan")
    out = {
        "termination": res.termination,
        "failed": res.failed,
        "duration": res.duration,
        "mean_speed": res.mean_speed,
        "total_reward": res.total_reward,
        "velocity_ratio": ratio,
        "clamped_targets": res.clamped_targets,
    }
    if task == "pronk":
        c = res.pronk_costs
        out.update(drift_cost=c["weighted"][2], angular_velocity_cost=c["weighted"][1],
                   max_height=float(tr.position[:, 2].max() - tr.position[0, 2]))
    return out


def _mean_sd(vals):
    vals = np.asarray([v for v in vals if math.isfinite(v)], dtype=float)
    if len(vals) == 0:
        return float("nan"), float("nan")
    return float(vals.mean()), float(vals.std())


def evaluation_report(results: list[EpisodeResult], task: str) -> dict:
    eps = [episode_summary(r, task) for r in results]
    report = {"episodes": eps, "failures": int(sum(e["failed"] for e in eps))}
    keys = ["mean_speed", "velocity_ratio", "total_reward"]
    if task == "pronk":
        keys += ["drift_cost", "angular_velocity_cost", "max_height"]
    for k in keys:
        m, s = _mean_sd([e[k] for e in eps])
        report[k] = {"mean": m, "sd": s}
    return report


def run_evaluation(env: LocomotionEnv, policy=None, seeds=EVAL_SEEDS) -> list[EpisodeResult]:
    return [run_episode(env, policy, int(s)) for s in seeds]
