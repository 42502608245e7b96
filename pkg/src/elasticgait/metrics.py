"""Evaluation quantities computed from episode traces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cpg import LEGS
from .sim import RobotModel, RobotState, foot_positions, foot_velocities
from .trace import EpisodeTrace

DEBOUNCE_SECONDS = 0.02


class UndefinedRatio(ValueError):
    pass


def velocity_ratio(trace: EpisodeTrace, joint: int, mode: str = "signed") -> float:
    """Peak joint velocity over peak motor velocity for one joint.

    ``mode="signed"`` takes maxima of the signed series; ``"abs"`` of their
    magnitudes. Within-tick peaks are used so the result does not depend on
    the control rate.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    qd = trace.qd_peak[:, joint]
    td = trace.thetad_peak[:, joint]
    if mode == "signed":
        num, den = qd.max(), td.max()
    elif mode == "abs":
        # the peak columns only hold maxima, so fold in the sampled series too
        num = max(np.abs(qd).max(), np.abs(trace.qd[:, joint]).max())
        den = max(np.abs(td).max(), np.abs(trace.thetad[:, joint]).max())
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if not np.any(trace.thetad_peak[:, joint] != 0) and not np.any(trace.thetad[:, joint] != 0):
        raise UndefinedRatio(f"joint {joint}: motor never moved")
    if den <= 0:
        raise UndefinedRatio(f"joint {joint}: peak motor velocity {den} is not positive")
    return float(num / den)


def mean_velocity_ratio(trace: EpisodeTrace, mode: str = "signed") -> float:
    """Average of the per-joint ratios over joints whose motors moved forward."""
    vals = []
    for j in range(trace.q.shape[1]):
        try:
            vals.append(velocity_ratio(trace, j, mode))
        except UndefinedRatio:
            pass
    if not vals:
        raise UndefinedRatio("no joint has a defined velocity ratio")
    return float(np.mean(vals))


def _com(trace: EpisodeTrace, model: RobotModel):
    m_t, m_f = model.trunk_mass, model.foot_mass
    m = model.total_mass
    pos = np.empty((len(trace), 3))
    vel = np.empty((len(trace), 3))
    for i in range(len(trace)):
        st = RobotState(trace.position[i], trace.orientation[i], trace.linear_velocity[i],
                        trace.angular_velocity[i], trace.theta[i], trace.q[i], trace.qd[i],
                        trace.thetad[i])
        feet = foot_positions(st, model)
        feet_v = foot_velocities(st, model)
        pos[i] = (m_t * st.position + m_f * feet.sum(0)) / m
        vel[i] = (m_t * st.linear_velocity + m_f * feet_v.sum(0)) / m
    return pos, vel


def energies(trace: EpisodeTrace, model: RobotModel = RobotModel()):
    """Spring, gravitational (relative to the first tick) and translational CoM kinetic energy (J)."""
    spring = 0.5 * model.spring_stiffness * np.sum((trace.theta - trace.q) ** 2, axis=1)
    pos, vel = _com(trace, model)
    m = model.total_mass
    grav = m * model.gravity * (pos[:, 2] - pos[0, 2])
    kinetic = 0.5 * m * np.sum(vel ** 2, axis=1)
    return spring, grav, kinetic


def mean_forward_speed(trace: EpisodeTrace) -> float:
    if trace.duration <= 0:
        raise ValueError("episode duration must be positive")
    x = trace.position[:, 0]
    return float((x[-1] - x[0]) / trace.duration)


@dataclass(frozen=True)
class Interval:
    phase: str  # "stance" or "swing"
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class GaitPattern:
    legs: dict[str, list[Interval]]

    def duty_factor(self, leg: str) -> float:
        ivs = self.legs[leg]
        total = ivs[-1].end - ivs[0].start
        if total <= 0:
            return float(ivs[0].phase == "stance")
        return sum(i.duration for i in ivs if i.phase == "stance") / total

    def rows(self):
        for leg, ivs in self.legs.items():
            for iv in ivs:
                yield leg, iv.phase, iv.start, iv.end


def _runs(flags: np.ndarray, time: np.ndarray):
    """Maximal runs of equal flags as (value, start_index, end_index_exclusive)."""
    edges = np.flatnonzero(np.diff(flags.astype(np.int8))) + 1
    starts = np.concatenate([[0], edges])
    ends = np.concatenate([edges, [len(flags)]])
    return [[bool(flags[s]), int(s), int(e)] for s, e in zip(starts, ends)]


def contact_intervals(flags, time, min_duration: float = DEBOUNCE_SECONDS) -> list[Interval]:
    """Stance/swing intervals partitioning ``[time[0], time[-1]]``.

    Runs shorter than ``min_duration`` are absorbed into their neighbours,
    shortest first.
    """
    flags = np.asarray(flags, dtype=bool)
    time = np.asarray(time, dtype=float)
    if len(flags) == 0:
        return []
    end_t = time[-1]

    def dur(run):
        return (time[run[2]] if run[2] < len(time) else end_t) - time[run[1]]

    runs = _runs(flags, time)
    while len(runs) > 1:
        short = [i for i, r in enumerate(runs) if dur(r) < min_duration]
        if not short:
            break
        i = min(short, key=lambda k: (dur(runs[k]), k))
        # flip the run and merge it with its neighbours
        lo = max(i - 1, 0)
        hi = min(i + 1, len(runs) - 1)
        value = runs[i - 1][0] if i > 0 else runs[i + 1][0]
        merged = [value, runs[lo][1], runs[hi][2]]
        runs = runs[:lo] + [merged] + runs[hi + 1:]
    out = []
    for value, s, e in runs:
        t1 = time[e] if e < len(time) else end_t
        out.append(Interval("stance" if value else "swing", float(time[s]), float(t1)))
    return out


def extract_pattern(trace: EpisodeTrace, min_duration: float = DEBOUNCE_SECONDS) -> GaitPattern:
    return GaitPattern({leg: contact_intervals(trace.contacts[:, i], trace.time, min_duration)
                        for i, leg in enumerate(LEGS)})
