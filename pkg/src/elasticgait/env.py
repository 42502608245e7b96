"""Episode runner: CPG (plus optional residual offsets) driving the simulator.

Every control tick the CPG output is sampled, residual offsets are added,
the hip-frame targets go through IK and the resulting motor commands are held
for the physics sub-steps of the tick while the oscillators are integrated at
the physics rate.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import cpg
from .cpg import CpgParams
from .kinematics import inverse_kinematics
from .sim import (PHYSICS_DT, ContactModel, RobotModel, RobotState, SimulationDivergence,
                  Simulator, euler_from_quat, foot_positions, read_imu, spring_torque, standing_state)
from .trace import EpisodeTrace, TraceRecorder

OBS_DIM = 38
ACT_DIM = 8

# fixed per-channel observation scales: q, q_dot, tau, acc, gyro, targets
_OBS_SCALE = np.concatenate([
    np.full(8, 1.0), np.full(8, 10.0), np.full(8, 1.0),
    np.full(3, 10.0), np.full(3, 5.0), np.full(8, 0.05),
])

# absolute foot-target box used by the from-scratch mode, (x, z) per leg
SCRATCH_LOW = np.tile([-0.08, -0.03], 4)
SCRATCH_HIGH = np.tile([0.08, 0.06], 4)


@dataclass(frozen=True)
class Impulse:
    """Instantaneous trunk velocity change applied at ``time`` (s)."""

    time: float
    lateral_velocity: float = 0.0
    roll_rate: float = 0.0


@dataclass
class EnvConfig:
    task: str = "trot"
    mode: str = "cpg"  # "cpg" (open loop / residual) or "scratch"
    control_hz: float = 30.0
    episode_seconds: float = 5.0
    max_offset: float = 0.02
    reward_weights: tuple[float, float, float] = (1.0, 0.05, 0.5)
    imu_noise: tuple[float, ...] = (0.05, 0.05, 0.05, 0.01, 0.01, 0.01)
    # random global phase at reset; independent random phases per leg
    random_phase0: bool = True
    random_leg_phases: bool = False
    max_tilt: float = 0.8
    min_height: float = 0.05
    # tracking box relative to the start point (m)
    box_x: tuple[float, float] = (-0.5, 1.0)
    box_y: tuple[float, float] = (-0.25, 0.25)
    impulses: tuple[Impulse, ...] = ()
    coupling: float = cpg.DEFAULT_COUPLING
    convergence: float = cpg.DEFAULT_CONVERGENCE

    def __post_init__(self):
        if self.task not in ("trot", "pronk"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.mode not in ("cpg", "scratch"):
            raise ValueError(f"unknown mode {self.mode!r}")
        self.impulses = tuple(i if isinstance(i, Impulse) else Impulse(**i) for i in self.impulses)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["impulses"] = [asdict(i) for i in self.impulses]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        d = dict(d)
        for key in ("reward_weights", "imu_noise", "box_x", "box_y"):
            if key in d:
                d[key] = tuple(d[key])
        d["impulses"] = tuple(Impulse(**i) for i in d.get("impulses", ()))
        return cls(**d)


def compose_targets(cpg_targets, action) -> np.ndarray:
    """Residual composition: CPG foot offsets plus policy offsets (flat, 8)."""
    return np.asarray(cpg_targets, dtype=float).ravel() + np.asarray(action, dtype=float).ravel()


def reward_trot(state_prev: RobotState, state: RobotState, dt: float) -> float:
    """Forward displacement over the control step (m)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return float(state.position[0] - state_prev.position[0])


def pronk_costs(state_prev: RobotState, state: RobotState, start_xy) -> tuple[float, float, float]:
    """``(|z_dot|, roll_rate^2 + yaw_rate^2, drift^2)`` for the pronking reward."""
    w = state.angular_velocity
    drift2 = float(np.sum((state.position[:2] - np.asarray(start_xy)) ** 2))
    return abs(float(state.linear_velocity[2])), float(w[0] ** 2 + w[2] ** 2), drift2


def reward_pronk(state_prev: RobotState, state: RobotState, config: EnvConfig, dt: float,
                 start_xy=(0.0, 0.0)) -> float:
    if dt <= 0:
        raise ValueError("dt must be positive")
    w1, w2, w3 = config.reward_weights
    zdot, ang, drift2 = pronk_costs(state_prev, state, start_xy)
    return w1 * zdot - w2 * ang - w3 * drift2


@dataclass
class EpisodeResult:
    trace: EpisodeTrace
    total_reward: float
    duration: float
    termination: str  # "timeout", "fall", "limits", "diverged"
    clamped_targets: int
    pronk_costs: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.termination in ("fall", "diverged")

    @property
    def mean_speed(self) -> float:
        if self.duration <= 0:
            return 0.0
        x = self.trace.position[:, 0]
        return float((x[-1] - x[0]) / self.duration)


class LocomotionEnv:
    """Single simulated robot following a CPG gait; ``step`` takes normalised actions in [-1, 1]."""

    def __init__(self, params: CpgParams | None, config: EnvConfig = EnvConfig(),
                 model: RobotModel = RobotModel(), contact: ContactModel = ContactModel()):
        if config.mode == "cpg" and params is None:
            raise ValueError("CPG mode needs gait parameters")
        self.config = config
        self.model = model
        self.gait = cpg.gait_spec(config.task)
        if params is not None and self.gait.zero_step_length:
            params = CpgParams(params.clearance, params.penetration, 0.0,
                               params.omega_swing, params.omega_stance)
        self.params = params
        self.sim = Simulator(model, contact, PHYSICS_DT)
        self.substeps = max(1, int(round(1.0 / (config.control_hz * PHYSICS_DT))))
        self.control_dt = self.substeps * PHYSICS_DT
        self.max_ticks = int(config.episode_seconds / self.control_dt + 1e-9)
        if config.mode == "cpg":
            self.act_center = np.zeros(ACT_DIM)
            self.act_half = np.full(ACT_DIM, config.max_offset)
        else:
            self.act_center = 0.5 * (SCRATCH_HIGH + SCRATCH_LOW)
            self.act_half = 0.5 * (SCRATCH_HIGH - SCRATCH_LOW)
        self.neutral = np.asarray(model.geometry.neutral_foot, dtype=float)
        self._x = None

    # -- helpers ----------------------------------------------------------
    def _cpg_targets(self) -> np.ndarray:
        if self.config.mode == "scratch":
            return np.zeros(ACT_DIM)
        return cpg.foot_targets(self.net, self.params).ravel()

    def _motor_commands(self, offsets: np.ndarray):
        """Offsets (x fwd-travel, z up) per leg -> motor angles via IK."""
        off = offsets.reshape(4, 2)
        # CPG x runs opposite the travel direction; z offsets are upward
        hx = self.neutral[0] - off[:, 0]
        hz = self.neutral[1] - off[:, 1]
        hip, knee, clamped = inverse_kinematics(hx, hz, self.model.geometry)
        return np.stack([hip, knee], axis=1).ravel(), int(np.count_nonzero(clamped))

    def _observation(self, imu) -> np.ndarray:
        st = self.state
        tau = spring_torque(st.theta, st.q, self.model.spring_stiffness)
        raw = np.concatenate([st.q, st.qd, tau, imu[0], imu[1], self._targets])
        return raw / _OBS_SCALE

    @property
    def state(self) -> RobotState:
        return RobotState.from_vector(self._x, self._contacts)

    def scale_action(self, action) -> np.ndarray:
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        return self.act_center + a * self.act_half

    # -- gym-like API -------------------------------------------------------
    def reset(self, seed: int | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.rng = rng
        cfg = self.config
        if cfg.mode == "cpg":
            phase0 = rng.uniform(0.0, cpg.TWO_PI) if cfg.random_phase0 else 0.0
            self.net = cpg.init_network(self.gait, phase0, cfg.coupling, a=cfg.convergence,
                                        rng=rng if cfg.random_leg_phases else None)
        self._targets = self._cpg_targets()
        start = self._targets if cfg.mode == "cpg" else np.zeros(ACT_DIM)
        hip_pts = np.stack(self._hip_points(start), axis=1)
        st = standing_state(self.model, hip_pts)
        self._x = st.to_vector()
        self._contacts = self.sim.contacts(self._x)
        self._prev = st
        self.t = 0.0
        self.tick = 0
        self.start_xy = st.position[:2].copy()
        self._pending = sorted(cfg.impulses, key=lambda i: i.time)
        self.recorder = TraceRecorder()
        self.clamped = 0
        self.costs = np.zeros(3)
        imu = (np.array([0.0, 0.0, self.model.gravity]), np.zeros(3))
        self._record(st.qd, st.thetad)
        return self._observation(imu)

    def _hip_points(self, offsets):
        off = np.asarray(offsets).reshape(4, 2)
        return self.neutral[0] - off[:, 0], self.neutral[1] - off[:, 1]

    def _record(self, qd_peak, thetad_peak):
        st = self.state
        feet_z = self._foot_heights(st)
        self.recorder.append(
            time=self.t, position=st.position, orientation=st.orientation,
            linear_velocity=st.linear_velocity, angular_velocity=st.angular_velocity,
            theta=st.theta, q=st.q, thetad=st.thetad, qd=st.qd,
            tau=spring_torque(st.theta, st.q, self.model.spring_stiffness),
            qd_peak=qd_peak, thetad_peak=thetad_peak,
            contacts=self._contacts, targets=self._targets, foot_height=feet_z,
        )

    def _foot_heights(self, st):
        return foot_positions(st, self.model)[:, 2]

    def step(self, action):
        """Advance one control tick with a normalised action; returns (obs, reward, terminated, truncated, info)."""
        cfg = self.config
        if action is None:
            # plain open loop: CPG targets with no residual path at all
            if cfg.mode != "cpg":
                raise ValueError("the from-scratch mode needs an action every step")
            targets = np.array(self._targets, dtype=float)
        elif cfg.mode == "cpg":
            targets = compose_targets(self._targets, self.scale_action(action))
        else:
            targets = self.scale_action(action)
        cmds, n_clamped = self._motor_commands(targets)
        self.clamped += n_clamped

        while self._pending and self._pending[0].time <= self.t + 1e-12:
            imp = self._pending.pop(0)
            self._x[8] += imp.lateral_velocity
            self._x[10] += imp.roll_rate

        prev = self.state
        termination = None
        try:
            stats = self.sim.advance(self._x, cmds, self.substeps)
        except SimulationDivergence:
            termination = "diverged"
            stats = None
        if cfg.mode == "cpg":
            self.net = cpg.advance(self.net, self.params, PHYSICS_DT, self.substeps)
        self.t += self.control_dt
        self.tick += 1

        if termination == "diverged":
            # keep the last finite state in the record
            self._x = prev.to_vector()
            self._contacts = prev.contacts
            self._record(prev.qd, prev.thetad)
            return self._observation((np.zeros(3), np.zeros(3))), 0.0, True, False, \
                {"termination": termination, "clamped": n_clamped}

        self._contacts = self.sim.contacts(self._x)
        self._targets = self._cpg_targets()
        st = self.state
        imu = read_imu(prev, st, self.control_dt, cfg.imu_noise, self.rng, self.model.gravity)
        if cfg.task == "trot":
            reward = reward_trot(prev, st, self.control_dt)
        else:
            reward = reward_pronk(prev, st, cfg, self.control_dt, self.start_xy)
            self.costs += pronk_costs(prev, st, self.start_xy)
        self._record(stats[0].copy(), stats[1].copy())

        roll, pitch, _ = euler_from_quat(st.orientation)
        rel = st.position[:2] - self.start_xy
        if abs(roll) > cfg.max_tilt or abs(pitch) > cfg.max_tilt or st.position[2] < cfg.min_height:
            termination = "fall"
        elif not (cfg.box_x[0] <= rel[0] <= cfg.box_x[1] and cfg.box_y[0] <= rel[1] <= cfg.box_y[1]):
            termination = "limits"
        if termination is None and self.tick >= self.max_ticks:
            termination = "timeout"
        # leaving the tracking box ends the episode without being a failure,
        # so it is reported like a timeout (the return is still bootstrapped)
        info = {"termination": termination, "clamped": n_clamped}
        terminated = termination == "fall"
        truncated = termination in ("limits", "timeout")
        return self._observation(imu), float(reward), terminated, truncated, info


Policy = Callable[[np.ndarray], np.ndarray]


def zero_policy(obs: np.ndarray) -> np.ndarray:
    return np.zeros(ACT_DIM)


def run_episode(env: LocomotionEnv, policy: Policy | None = None, seed: int | None = None) -> EpisodeResult:
    """Roll out one episode; without a policy the CPG runs open loop."""
    obs = env.reset(seed)
    total = 0.0
    termination = "timeout"
    while True:
        obs, r, terminated, truncated, info = env.step(None if policy is None else policy(obs))
        total += r
        if terminated or truncated:
            termination = info["termination"]
            break
    trace = env.recorder.build()
    w = env.config.reward_weights
    costs = {
        "vertical_speed": float(env.costs[0]),
        "drift_cost": float(env.costs[2]),
        "angular_velocity_cost": float(env.costs[1]),
        "weighted": [float(w[0] * env.costs[0]), float(w[1] * env.costs[1]), float(w[2] * env.costs[2])],
    }
    return EpisodeResult(trace, total, env.t, termination, env.clamped, costs)
