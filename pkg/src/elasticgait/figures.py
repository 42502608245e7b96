"""Figure data products exported from a run directory as CSV."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .metrics import energies, extract_pattern
from .sim import RobotModel
from .tpe import OptimizationHistory
from .trace import EpisodeTrace

# joints of the front-right leg (hip, knee)
FR_JOINTS = (0, 1)


class MissingInputs(FileNotFoundError):
    def __init__(self, run_dir: Path, missing: list[str]):
        super().__init__(f"{run_dir}: nothing to export; missing inputs: {', '.join(missing)}")
        self.missing = missing


def _write(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def pattern_rows(trace: EpisodeTrace):
    return list(extract_pattern(trace).rows())


def velocity_rows(trace: EpisodeTrace, joints=FR_JOINTS):
    """Per-tick joint and motor velocity with flags marking each series' maximum."""
    rows = []
    for j in joints:
        i_q = int(np.argmax(trace.qd_peak[:, j]))
        i_m = int(np.argmax(trace.thetad_peak[:, j]))
        for k, t in enumerate(trace.time):
            rows.append((t, j, trace.qd[k, j], trace.thetad[k, j], trace.qd_peak[k, j],
                         trace.thetad_peak[k, j], int(k == i_q), int(k == i_m)))
    return rows


def energy_rows(trace: EpisodeTrace, model: RobotModel):
    spring, grav, kin = energies(trace, model)
    return list(zip(trace.time, spring, grav, kin))


def history_rows(history: OptimizationHistory):
    best = history.best_so_far()
    return [(t.trial_id, t.objective, b, int(t.failed)) for t, b in zip(history.trials, best)]


PATTERN_HEADER = ("leg", "phase", "start", "end")
VELOCITY_HEADER = ("time", "joint", "joint_velocity", "motor_velocity", "joint_velocity_peak",
                   "motor_velocity_peak", "joint_max", "motor_max")
ENERGY_HEADER = ("time", "spring_potential", "gravitational_potential", "kinetic")
HISTORY_HEADER = ("trial", "objective", "best_so_far", "failed")


def write_history_csv(path: Path, history: OptimizationHistory):
    _write(path, HISTORY_HEADER, history_rows(history))


def export_run(run_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Write every figure CSV the run directory supports; returns the written paths."""
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir / "figures"
    traces = sorted((run_dir / "traces").glob("*.csv"))
    hist_path = run_dir / "history.jsonl"
    missing = []
    if not traces:
        missing.append(str(run_dir / "traces" / "*.csv"))
    if not hist_path.exists():
        missing.append(str(hist_path))
    if len(missing) == 2:
        raise MissingInputs(run_dir, missing)
    model = RobotModel()
    cfg_path = run_dir / "config.json"
    if cfg_path.exists():
        model_d = json.loads(cfg_path.read_text()).get("experiment", {}).get("model") or {}
        model = RobotModel.from_dict(model_d) if model_d else model
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for tp in traces:
        tr = EpisodeTrace.read_csv(tp)
        for kind, header, rows in (("pattern", PATTERN_HEADER, pattern_rows(tr)),
                                   ("velocity", VELOCITY_HEADER, velocity_rows(tr)),
                                   ("energy", ENERGY_HEADER, energy_rows(tr, model))):
            p = out / f"{kind}_{tp.stem}.csv"
            _write(p, header, rows)
            written.append(p)
    if hist_path.exists():
        p = out / "optimization_history.csv"
        write_history_csv(p, OptimizationHistory.load(hist_path))
        written.append(p)
    return written


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {}
    for i, name in enumerate(header):
        vals = [r[i] for r in body]
        try:
            cols[name] = np.array(vals, dtype=float)
        except ValueError:
            cols[name] = np.array(vals)
    return cols

