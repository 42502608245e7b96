"""Tree-structured Parzen Estimator over gait parameters, with top-k re-evaluation."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import truncnorm

from .cpg import CpgParams

N_STARTUP = 20
GAMMA = 0.25
N_EI = 24
MIN_BANDWIDTH_FRACTION = 1.0 / 20.0


@dataclass(frozen=True)
class Dimension:
    name: str
    low: float
    high: float
    scale: str = "linear"

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"{self.name}: lower bound {self.low} must be below upper {self.high}")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"{self.name}: unknown scale {self.scale!r}")
        if self.scale == "log" and self.low <= 0:
            raise ValueError(f"{self.name}: log scale needs a positive lower bound")

    def to_internal(self, v):
        return np.log(v) if self.scale == "log" else np.asarray(v, dtype=float)

    def from_internal(self, u):
        v = np.exp(u) if self.scale == "log" else np.asarray(u, dtype=float)
        return np.clip(v, self.low, self.high)

    @property
    def bounds(self) -> tuple[float, float]:
        lo, hi = self.to_internal(self.low), self.to_internal(self.high)
        return float(lo), float(hi)


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dimension, ...]

    def __post_init__(self):
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("duplicate dimension names")

    @classmethod
    def default(cls) -> "SearchSpace":
        two_pi = 2.0 * math.pi
        return cls((
            Dimension("clearance", 0.005, 0.06),
            Dimension("penetration", 0.0, 0.03),
            Dimension("step_length", 0.0, 0.08),
            Dimension("omega_swing", two_pi * 0.5, two_pi * 8.0),
            Dimension("omega_stance", two_pi * 0.5, two_pi * 8.0),
        ))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dims)

    @property
    def low(self) -> np.ndarray:
        return np.array([d.low for d in self.dims])

    @property
    def high(self) -> np.ndarray:
        return np.array([d.high for d in self.dims])

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.low) and np.all(x <= self.high))

    def sample_uniform(self, rng: np.random.Generator) -> np.ndarray:
        out = np.empty(len(self.dims))
        for i, d in enumerate(self.dims):
            lo, hi = d.bounds
            out[i] = d.from_internal(rng.uniform(lo, hi))
        return out

    def to_dict(self) -> dict:
        return {"dims": [asdict(d) for d in self.dims]}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        return cls(tuple(Dimension(**x) for x in d["dims"]))


@dataclass
class TrialRecord:
    trial_id: int
    params: dict
    objective: float  # minimised; penalty value for failed trials
    failed: bool = False
    raw_objective: float | None = None
    duration: float = 0.0
    termination: str = ""
    wall_time: float = 0.0

    def vector(self, space: SearchSpace) -> np.ndarray:
        return np.array([self.params[n] for n in space.names])

    def to_json(self, timing: bool = False) -> str:
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "TrialRecord":
        return cls(**json.loads(line))


@dataclass
class OptimizationHistory:
    trials: list[TrialRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.trials)

    def append(self, rec: TrialRecord):
        if rec.trial_id != len(self.trials):
            raise ValueError(f"trial ids must be dense; expected {len(self.trials)}, got {rec.trial_id}")
        if not math.isfinite(rec.objective):
            raise ValueError("trial objective must be finite")
        self.trials.append(rec)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([t.objective for t in self.trials])

    def successful(self) -> list[TrialRecord]:
        return [t for t in self.trials if not t.failed]

    def best_so_far(self) -> np.ndarray:
        if not self.trials:
            return np.array([])
        return np.minimum.accumulate(self.objectives)

    def best(self) -> TrialRecord:
        ok = self.successful() or self.trials
        return min(ok, key=lambda t: (t.objective, t.trial_id))

    def failure_penalty(self) -> float:
        """Worst successful objective so far plus one range unit."""
        vals = np.array([t.objective for t in self.successful()])
        if len(vals) == 0:
            return 1.0
        span = float(vals.max() - vals.min())
        return float(vals.max() + (span if span > 0 else 1.0))

    def save(self, path: str | Path):
        with open(path, "w") as fh:
            for t in self.trials:
                fh.write(t.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "OptimizationHistory":
        h = cls()
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    h.append(TrialRecord.from_json(line))
        return h

    def rows(self):
        """(trial, objective, best_so_far) for plotting."""
        return list(zip(range(len(self)), self.objectives, self.best_so_far()))


def _parzen(points: np.ndarray, lo: float, hi: float):
    """Kernel centres and bandwidths for one dimension, in the input order.

    Each bandwidth is the larger gap to the neighbouring points; a point at
    either extreme uses its one interior gap. Bandwidths are clipped to
    [range/20, range]. A broad prior kernel centred on the range is appended
    last so the densities never vanish away from the data.
    """
    order = np.argsort(points, kind="stable")
    gaps = np.diff(points[order])
    left = np.concatenate([[0.0], gaps])
    right = np.concatenate([gaps, [0.0]])
    bw = np.empty(len(points))
    bw[order] = np.maximum(left, right)
    bw = np.clip(bw, MIN_BANDWIDTH_FRACTION * (hi - lo), hi - lo)
    return np.append(points, 0.5 * (lo + hi)), np.append(bw, hi - lo)


def _log_density(X: np.ndarray, mus: np.ndarray, sigmas: np.ndarray, bounds) -> np.ndarray:
    """Log of an equal-weight mixture of product kernels (one per row of ``mus``)."""
    comp = np.zeros((X.shape[0], mus.shape[0]))
    for d, (lo, hi) in enumerate(bounds):
        a = (lo - mus[:, d]) / sigmas[:, d]
        b = (hi - mus[:, d]) / sigmas[:, d]
        comp += truncnorm.logpdf(X[:, d, None], a[None, :], b[None, :],
                                 loc=mus[None, :, d], scale=sigmas[None, :, d])
    m = comp.max(axis=1, keepdims=True)
    return (m + np.log(np.mean(np.exp(comp - m), axis=1, keepdims=True)))[:, 0]


def _fit(U: np.ndarray, bounds):
    cols = [_parzen(U[:, d], lo, hi) for d, (lo, hi) in enumerate(bounds)]
    return np.column_stack([c[0] for c in cols]), np.column_stack([c[1] for c in cols])


def split_trials(history: OptimizationHistory, gamma: float = GAMMA):
    """Indices of the good (lowest gamma fraction) and bad trials."""
    obj = history.objectives
    order = np.lexsort((np.arange(len(obj)), obj))
    n_good = max(1, int(math.ceil(gamma * len(obj))))
    return order[:n_good], order[n_good:]


def tpe_suggest(history: OptimizationHistory, space: SearchSpace, rng: np.random.Generator,
                n_startup: int = N_STARTUP, gamma: float = GAMMA, n_ei: int = N_EI) -> np.ndarray:
    """Next point to evaluate, in the space's native units.

    l(x) and g(x) are mixtures with one kernel per observation; a kernel is
    the product of per-dimension truncated Gaussians, so correlations between
    good coordinates are kept.
    """
    if len(history) < n_startup or not history.successful():
        return space.sample_uniform(rng)
    good, bad = split_trials(history, gamma)
    bounds = [d.bounds for d in space.dims]
    X = np.array([t.vector(space) for t in history.trials])
    U = np.column_stack([d.to_internal(X[:, i]) for i, d in enumerate(space.dims)])
    mu_l, bw_l = _fit(U[good], bounds)
    mu_g, bw_g = _fit(U[bad], bounds)
    # candidates come from the observation kernels only; the prior kernel
    # would win by default wherever neither density has data
    k = rng.integers(0, len(mu_l) - 1, n_ei)
    cands = np.empty((n_ei, len(bounds)))
    for d, (lo, hi) in enumerate(bounds):
        a = (lo - mu_l[k, d]) / bw_l[k, d]
        b = (hi - mu_l[k, d]) / bw_l[k, d]
        c = truncnorm.rvs(a, b, loc=mu_l[k, d], scale=bw_l[k, d], random_state=rng)
        cands[:, d] = np.clip(np.atleast_1d(c), lo, hi)
    score = _log_density(cands, mu_l, bw_l, bounds) - _log_density(cands, mu_g, bw_g, bounds)
    best = cands[int(np.argmax(score))]
    return np.array([d.from_internal(v) for d, v in zip(space.dims, best)])


@dataclass
class Outcome:
    """Result of one objective evaluation."""

    value: float
    failed: bool = False
    duration: float = 0.0
    termination: str = ""


Objective = Callable[[np.ndarray, int], Outcome]


def _evaluate(objective: Objective, x: np.ndarray, seed: int) -> Outcome:
    try:
        out = objective(x, seed)
    except (FloatingPointError, ArithmeticError, ValueError) as exc:
        return Outcome(float("nan"), True, 0.0, f"error: {exc}")
    if not math.isfinite(out.value):
        return Outcome(float("nan"), True, out.duration, out.termination or "non-finite")
    return out


def optimize(objective: Objective, space: SearchSpace, budget: int, rng: np.random.Generator,
             history: OptimizationHistory | None = None, path: str | Path | None = None,
             timings_path: str | Path | None = None, **tpe_kwargs) -> OptimizationHistory:
    """Run trials until the history holds ``budget`` records.

    ``objective(x, seed)`` gets the parameter vector and a per-trial seed drawn
    from ``rng``. With ``path`` set each record is appended to a JSON-lines file
    as soon as it completes; passing a loaded ``history`` resumes it (the rng is
    replayed so a resumed run matches an uninterrupted one).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    history = history if history is not None else OptimizationHistory()
    replay = OptimizationHistory()
    fh = open(path, "a") if path is not None else None
    th = open(timings_path, "a") if timings_path is not None else None
    try:
        while len(replay) < budget:
            x = tpe_suggest(replay, space, rng, **tpe_kwargs)
            seed = int(rng.integers(0, 2 ** 31 - 1))
            n = len(replay)
            if n < len(history):
                replay.append(history.trials[n])
                continue
            t0 = time.perf_counter()
            out = _evaluate(objective, x, seed)
            wall = time.perf_counter() - t0
            value = replay.failure_penalty() if out.failed else float(out.value)
            rec = TrialRecord(n, dict(zip(space.names, map(float, x))), value, out.failed,
                              None if out.failed else float(out.value), float(out.duration),
                              out.termination, wall)
            replay.append(rec)
            if fh is not None:
                fh.write(rec.to_json() + "\n")
                fh.flush()
            if th is not None:
                th.write(json.dumps({"trial_id": n, "wall_time": wall}) + "\n")
                th.flush()
    finally:
        if fh is not None:
            fh.close()
        if th is not None:
            th.close()
    return replay


@dataclass
class Candidate:
    trial_id: int
    params: dict
    mean: float
    std: float
    values: list[float]


def reevaluate_top_k(history: OptimizationHistory, k: int, episodes: int, objective: Objective,
                     seeds=None) -> list[Candidate]:
    """Re-run the ``k`` best successful trials; rank by mean, then by lower spread."""
    ok = sorted(history.successful(), key=lambda t: (t.objective, t.trial_id))
    if len(ok) < k:
        raise ValueError(f"need {k} successful trials, history has {len(ok)}")
    seeds = list(range(episodes)) if seeds is None else list(seeds)
    if len(seeds) != episodes:
        raise ValueError("one seed per re-evaluation episode is required")
    names = list(ok[0].params)
    out = []
    for t in ok[:k]:
        x = np.array([t.params[n] for n in names])
        vals = []
        for s in seeds:
            o = _evaluate(objective, x, s)
            vals.append(history.failure_penalty() if o.failed else float(o.value))
        out.append(Candidate(t.trial_id, dict(t.params), float(np.mean(vals)), float(np.std(vals)), vals))
    out.sort(key=lambda c: (c.mean, c.std, c.trial_id))
    return out


def params_from_vector(x, space: SearchSpace) -> CpgParams:
    d = dict(zip(space.names, map(float, x)))
    return CpgParams.from_dict(d)
