"""Per-control-tick episode records and their CSV form."""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .cpg import LEGS

JOINT_NAMES = tuple(f"{leg}_{j}" for leg in LEGS for j in ("hip", "knee"))

# field name -> column suffixes
_LAYOUT = {
    "position": ("x", "y", "z"),
    "orientation": ("qw", "qx", "qy", "qz"),
    "linear_velocity": ("vx", "vy", "vz"),
    "angular_velocity": ("wx", "wy", "wz"),
    "theta": JOINT_NAMES,
    "q": JOINT_NAMES,
    "thetad": JOINT_NAMES,
    "qd": JOINT_NAMES,
    "tau": JOINT_NAMES,
    "qd_peak": JOINT_NAMES,
    "thetad_peak": JOINT_NAMES,
    "contacts": LEGS,
    "targets": tuple(f"{leg}_{c}" for leg in LEGS for c in ("x", "z")),
    "foot_height": LEGS,
}


@dataclass
class EpisodeTrace:
    """Time series sampled at the end of each control tick.

    ``qd_peak``/``thetad_peak`` hold the largest signed velocity reached by
    each joint/motor during the physics sub-steps of the tick, so peak-based
    metrics do not depend on the control rate.
    """

    time: np.ndarray
    position: np.ndarray
    orientation: np.ndarray
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray
    theta: np.ndarray
    q: np.ndarray
    thetad: np.ndarray
    qd: np.ndarray
    tau: np.ndarray
    qd_peak: np.ndarray
    thetad_peak: np.ndarray
    contacts: np.ndarray
    targets: np.ndarray
    foot_height: np.ndarray

    def __post_init__(self):
        n = len(self.time)
        for f in fields(self):
            arr = getattr(self, f.name)
            if len(arr) != n:
                raise ValueError(f"series {f.name} has length {len(arr)}, expected {n}")
        if n > 1 and not np.all(np.diff(self.time) > 0):
            raise ValueError("trace time must be strictly increasing")

    def __len__(self):
        return len(self.time)

    @property
    def duration(self) -> float:
        return float(self.time[-1] - self.time[0]) if len(self) > 1 else 0.0

    def columns(self) -> list[str]:
        cols = ["time"]
        for name, suffixes in _LAYOUT.items():
            cols += [f"{name}.{s}" for s in suffixes]
        return cols

    def to_array(self) -> np.ndarray:
        parts = [self.time[:, None]]
        for name in _LAYOUT:
            parts.append(np.asarray(getattr(self, name), dtype=float).reshape(len(self), -1))
        return np.hstack(parts)

    def write_csv(self, path: str | Path) -> None:
        data = self.to_array()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns())
            for row in data:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path: str | Path) -> "EpisodeTrace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        out = {"time": data[:, 0]}
        col = 1
        for name, suffixes in _LAYOUT.items():
            out[name] = data[:, col:col + len(suffixes)]
            col += len(suffixes)
        out["contacts"] = out["contacts"].astype(bool)
        return cls(**out)


class TraceRecorder:
    def __init__(self):
        self._rows: dict[str, list] = {f.name: [] for f in fields(EpisodeTrace)}

    def append(self, **values):
        for k, v in values.items():
            self._rows[k].append(np.array(v, copy=True))

    def __len__(self):
        return len(self._rows["time"])

    def build(self) -> EpisodeTrace:
        out = {}
        for k, v in self._rows.items():
            out[k] = np.array(v)
        out["contacts"] = out["contacts"].astype(bool)
        return EpisodeTrace(**out)


def synthetic_trace(time, **series) -> EpisodeTrace:
    """Trace with the given series; anything missing is zero (identity quaternion).

    Peak columns default to the instantaneous velocities.
    """
    time = np.asarray(time, dtype=float)
    n = len(time)
    widths = {name: len(s) for name, s in _LAYOUT.items()}
    out = {"time": time}
    for name, width in widths.items():
        if name in series:
            out[name] = np.asarray(series[name], dtype=float).reshape(n, width)
        elif name == "orientation":
            out[name] = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
        else:
            out[name] = np.zeros((n, width))
    if "qd_peak" not in series:
        out["qd_peak"] = out["qd"].copy()
    if "thetad_peak" not in series:
        out["thetad_peak"] = out["thetad"].copy()
    out["contacts"] = out["contacts"].astype(bool)
    return EpisodeTrace(**out)
