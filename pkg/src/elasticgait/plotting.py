"""PNG renderings of the exported figure CSVs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .cpg import LEGS  # noqa: E402
from .figures import read_csv  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 3.6),
    "figure.dpi": 120,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.frameon": False,
}

PHASE_COLOURS = {"stance": "#30475e", "swing": "#c9d6df"}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_pattern(csv_path: Path, png_path: Path, window: float = 2.0) -> Path:
    d = read_csv(csv_path)
    t0 = float(np.min(d["start"])) if len(d["start"]) else 0.0
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 2.2))
        for row, leg in enumerate(LEGS):
            sel = d["leg"] == leg
            for phase, s, e in zip(d["phase"][sel], d["start"][sel], d["end"][sel]):
                if s >= t0 + window:
                    continue
                ax.broken_barh([(s, min(e, t0 + window) - s)], (row - 0.4, 0.8),
                               color=PHASE_COLOURS[phase])
        ax.set_yticks(range(len(LEGS)), LEGS)
        ax.set_xlim(t0, t0 + window)
        ax.invert_yaxis()
        ax.set_xlabel("time (s)")
        ax.grid(False)
        return _save(fig, png_path)


def plot_velocity(csv_path: Path, png_path: Path, joint: int = 1) -> Path:
    d = read_csv(csv_path)
    sel = d["joint"] == joint
    t = d["time"][sel]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t, d["joint_velocity_peak"][sel], label="joint", lw=1.2)
        ax.plot(t, d["motor_velocity_peak"][sel], label="motor", lw=1.2)
        for col, key in (("joint_max", "joint_velocity_peak"), ("motor_max", "motor_velocity_peak")):
            k = np.flatnonzero(d[col][sel] == 1)
            ax.plot(t[k], d[key][sel][k], "kv", ms=5)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("velocity (rad/s)")
        ax.legend()
        return _save(fig, png_path)


def plot_energy(csv_path: Path, png_path: Path) -> Path:
    d = read_csv(csv_path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for key, label in (("spring_potential", "spring potential"),
                           ("gravitational_potential", "gravitational potential"),
                           ("kinetic", "kinetic")):
            ax.plot(d["time"], d[key], label=label, lw=1.2)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("energy (J)")
        ax.legend()
        return _save(fig, png_path)


def plot_history(csv_path: Path, png_path: Path) -> Path:
    d = read_csv(csv_path)
    ok = d["failed"] == 0
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(d["trial"][ok], d["objective"][ok], ".", ms=4, alpha=0.6, label="trial")
        ax.plot(d["trial"][~ok], d["objective"][~ok], "x", ms=4, color="grey", label="failed")
        ax.step(d["trial"], d["best_so_far"], where="post", color="C3", label="best so far")
        ax.set_xlabel("trial")
        ax.set_ylabel("objective")
        ax.legend()
        return _save(fig, png_path)


_RENDERERS = {"pattern": plot_pattern, "velocity": plot_velocity, "energy": plot_energy,
              "optimization": plot_history}


def render_all(csv_paths) -> list[Path]:
    """Render a PNG next to every exported CSV."""
    out = []
    for p in map(Path, csv_paths):
        kind = p.stem.split("_")[0]
        out.append(_RENDERERS[kind](p, p.with_suffix(".png")))
    return out
