"""Command-line entry point: optimize, train, eval and export-figures."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import figures, plotting
from .config import MODES, TASKS, ConfigError, ExperimentConfig
from .cpg import CpgParams
from .env import LocomotionEnv
from .experiments import HAND_TUNED, evaluation_report, make_objective, run_evaluation
from .rl.train import (build_env, load_checkpoint, policy_from_checkpoint, save_checkpoint, train)
from .tpe import OptimizationHistory, SearchSpace, TrialRecord, optimize, reevaluate_top_k

log = logging.getLogger("elasticgait")

COMMAND_MODES = {
    "optimize": ("cpg-optimize",),
    "train": ("cpg-rl", "rl-scratch"),
    "eval": MODES,
}


class RunExists(FileExistsError):
    pass


# -- run directory helpers ---------------------------------------------------

def prepare_run_dir(out: Path, force: bool, resume: bool = False):
    if out.exists() and any(out.iterdir()):
        if resume:
            return
        if not force:
            raise RunExists(f"{out} already exists and is not empty; pass --force to overwrite")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)


def write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_config(out: Path, command: str, cfg: ExperimentConfig, **extra):
    write_json(out / "config.json", {"command": command, "experiment": cfg.to_dict(), **extra})


def write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_evaluation(out: Path, results, report: dict, seeds):
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for s, r in zip(seeds, results):
        r.trace.write_csv(traces / f"episode_{s}.csv")
    keys = ["termination", "failed", "duration", "mean_speed", "total_reward", "velocity_ratio"]
    write_rows(out / "episodes.csv", ["seed", *keys],
               [[s, *(e[k] for k in keys)] for s, e in zip(seeds, report["episodes"])])


def load_params(spec: str | None, task: str) -> tuple[CpgParams, str]:
    if spec is None:
        raise ConfigError("CPG parameters required: pass --params <best_params.json> or --params handtuned")
    if spec == "handtuned":
        return HAND_TUNED[task], "handtuned"
    path = Path(spec)
    if path.is_dir():
        path = path / "best_params.json"
    if not path.exists():
        raise FileNotFoundError(f"CPG parameter file not found: expected {path}")
    return CpgParams.from_dict(json.loads(path.read_text())), str(path)


def _load_history(path: Path) -> OptimizationHistory:
    """History from a JSON-lines file, dropping a torn final line from an interrupted run."""
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    h = OptimizationHistory()
    for i, ln in enumerate(lines):
        try:
            h.append(TrialRecord.from_json(ln))
        except json.JSONDecodeError:
            if i != len(lines) - 1:
                raise
            log.warning("dropping incomplete last record of %s", path)
    h.save(path)
    return h


def _report(cfg: ExperimentConfig, results, **extra) -> dict:
    return {"task": cfg.task, "mode": cfg.mode, "seed": cfg.seed,
            "eval_seeds": list(cfg.eval_seeds), **extra,
            **evaluation_report(results, cfg.task)}


# -- commands ----------------------------------------------------------------

def cmd_optimize(cfg: ExperimentConfig, out: Path, resume: bool = False) -> dict:
    hist_path = out / "history.jsonl"
    if resume and (out / "config.json").exists():
        old = json.loads((out / "config.json").read_text())["experiment"]
        old.pop("trial_budget")
        new = cfg.to_dict()
        new.pop("trial_budget")
        if json.loads(json.dumps(new)) != old:
            raise ConfigError(f"{out}: cannot resume, configuration differs from the stored one")
    write_config(out, "optimize", cfg)
    history = _load_history(hist_path) if resume and hist_path.exists() else None
    if history is None:
        hist_path.write_text("")
        (out / "timings.jsonl").write_text("")
    if history is not None and len(history) > cfg.trial_budget:
        raise ConfigError(f"{out}: history already holds {len(history)} trials, above the budget")
    space = SearchSpace.default()
    objective = make_objective(cfg.task, cfg.env_config(), cfg.robot_model(), cfg.contact_model(), space)
    history = optimize(objective, space, cfg.trial_budget, np.random.default_rng(cfg.seed),
                       history=history, path=hist_path, timings_path=out / "timings.jsonl")
    figures.write_history_csv(out / "optimization_history.csv", history)

    n_ok = len(history.successful())
    k = min(cfg.top_k, n_ok)
    candidates = []
    if k > 0:
        seeds = np.random.default_rng([cfg.seed, 1]).integers(0, 2 ** 31 - 1, cfg.reeval_episodes)
        candidates = reevaluate_top_k(history, k, cfg.reeval_episodes, objective, seeds=seeds.tolist())
        best = candidates[0].params
    else:
        log.warning("no successful trial; reporting the least bad one")
        best = history.best().params
    write_json(out / "candidates.json", [asdict(c) for c in candidates])
    write_json(out / "best_params.json", best)

    params = CpgParams.from_dict(best)
    env = LocomotionEnv(params, cfg.env_config(pushes=True), cfg.robot_model(), cfg.contact_model())
    results = run_evaluation(env, None, cfg.eval_seeds)
    report = _report(cfg, results, params=best, trials=len(history),
                     failed_trials=len(history) - n_ok, best_objective=history.best().objective)
    write_evaluation(out, results, report, cfg.eval_seeds)
    write_json(out / "report.json", report)
    return report


def cmd_train(cfg: ExperimentConfig, out: Path, params_spec: str | None) -> dict:
    if cfg.mode == "rl-scratch":
        if params_spec is not None:
            warnings.warn("rl-scratch trains without a CPG; ignoring --params", UserWarning, stacklevel=2)
        params, source = None, None
    else:
        params, source = load_params(params_spec, cfg.task)
    write_config(out, "train", cfg, params=params.to_dict() if params else None, params_source=source)
    tcfg = cfg.train_config()
    env = build_env(cfg.task, params, tcfg.mode, cfg.env_config(pushes=True), cfg.robot_model(),
                    cfg.contact_model())
    result = train(env, tcfg, seed=cfg.seed, log=log.info)
    ck_config = {"experiment": cfg.to_dict(), "params": params.to_dict() if params else None,
                 "train": tcfg.to_dict()}
    save_checkpoint(out / "checkpoint.pt", result, ck_config)
    write_rows(out / "curve.csv", ["step", "episodes", "eval_reward", "eval_speed", "eval_failures"],
               [list(asdict(p).values()) for p in result.curve])
    write_rows(out / "train_episodes.csv", ["step", "return", "length", "termination"],
               [list(e.values()) for e in result.train_episodes])

    results = run_evaluation(env, result.policy(), cfg.eval_seeds)
    extra = {"best_step": result.best_step, "params": ck_config["params"]}
    if params is not None:
        extra["open_loop"] = evaluation_report(run_evaluation(env, None, cfg.eval_seeds), cfg.task)
    report = _report(cfg, results, **extra)
    write_evaluation(out, results, report, cfg.eval_seeds)
    write_json(out / "report.json", report)
    return report


def cmd_eval(cfg: ExperimentConfig, out: Path, params_spec: str | None, checkpoint: str | None) -> dict:
    policy = None
    if cfg.mode in ("cpg-rl", "rl-scratch"):
        if checkpoint is None:
            raise ConfigError(f"mode {cfg.mode} needs --checkpoint <checkpoint.pt>")
        ck_path = Path(checkpoint)
        if ck_path.is_dir():
            ck_path = ck_path / "checkpoint.pt"
        if not ck_path.exists():
            raise FileNotFoundError(f"checkpoint not found: expected {ck_path}")
        ck = load_checkpoint(ck_path)
        params = CpgParams.from_dict(ck["config"]["params"]) if ck["config"]["params"] else None
        source = str(ck_path)
        policy = policy_from_checkpoint(ck)
    elif cfg.mode == "cpg-handtuned":
        params, source = HAND_TUNED[cfg.task], "handtuned"
    else:
        params, source = load_params(params_spec, cfg.task)
    write_config(out, "eval", cfg, params=params.to_dict() if params else None, params_source=source)
    mode = "scratch" if cfg.mode == "rl-scratch" else "residual"
    env = build_env(cfg.task, params, mode, cfg.env_config(pushes=True), cfg.robot_model(),
                    cfg.contact_model())
    results = run_evaluation(env, policy, cfg.eval_seeds)
    report = _report(cfg, results, params=params.to_dict() if params else None)
    write_evaluation(out, results, report, cfg.eval_seeds)
    write_json(out / "report.json", report)
    return report


def cmd_export_figures(run_dir: Path, plots: bool = True) -> list[Path]:
    written = figures.export_run(run_dir)
    if plots:
        written += plotting.render_all(written)
    return written


# -- argument handling ---------------------------------------------------------

def parse_seeds(text: str) -> list[int]:
    lo, sep, hi = text.partition("..")
    try:
        a, b = int(lo), int(hi) if sep else int(lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a seed range like 0..4, got {text!r}")
    if b < a:
        raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
    return list(range(a, b + 1))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--task", choices=TASKS)
    common.add_argument("--mode", choices=MODES)
    common.add_argument("--seed", type=int)
    common.add_argument("--seeds", type=parse_seeds, help="inclusive range a..b, one run per seed")
    common.add_argument("--budget", type=int, help="trials (optimize) or control steps (train)")
    common.add_argument("--config", type=Path, help="JSON experiment configuration")
    common.add_argument("--out", type=Path, required=True, help="run directory")
    common.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    common.add_argument("--resume", action="store_true", help="continue an interrupted optimisation")
    common.add_argument("--params", help="CPG parameter JSON, a run directory, or 'handtuned'")
    common.add_argument("--checkpoint", help="policy checkpoint (eval of cpg-rl/rl-scratch)")
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="elasticgait", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("optimize", parents=[common], help="tune CPG parameters with TPE")
    sub.add_parser("train", parents=[common], help="train a residual or from-scratch policy")
    sub.add_parser("eval", parents=[common], help="evaluate a preset, parameter file or checkpoint")
    fig = sub.add_parser("export-figures", help="export figure CSVs and PNGs from a run directory")
    fig.add_argument("run_dir", type=Path)
    fig.add_argument("--no-plots", action="store_true", help="write the CSVs only")
    fig.add_argument("-q", "--quiet", action="store_true")
    return parser


def experiment_config(args) -> ExperimentConfig:
    d = {}
    if args.config is not None:
        if not args.config.exists():
            raise FileNotFoundError(f"config file not found: {args.config}")
        d = json.loads(args.config.read_text())
    for key in ("task", "mode", "seed"):
        if getattr(args, key) is not None:
            d[key] = getattr(args, key)
    d.setdefault("mode", COMMAND_MODES[args.command][0])
    if d["mode"] not in COMMAND_MODES[args.command]:
        raise ConfigError(f"{args.command} does not support mode {d['mode']!r}; "
                          f"expected one of {COMMAND_MODES[args.command]}")
    if args.budget is not None:
        d["trial_budget" if args.command == "optimize" else "train_budget"] = args.budget
    return ExperimentConfig.from_dict(d)


def run(args) -> None:
    if args.command == "export-figures":
        for p in cmd_export_figures(args.run_dir, plots=not args.no_plots):
            log.info("wrote %s", p)
        return
    if args.resume and args.command != "optimize":
        raise ConfigError("--resume is only supported by optimize")
    base = experiment_config(args)
    seeds = args.seeds if args.seeds is not None else [base.seed]
    for seed in seeds:
        cfg = ExperimentConfig.from_dict({**base.to_dict(), "seed": seed})
        out = args.out / f"seed_{seed}" if args.seeds is not None else args.out
        prepare_run_dir(out, args.force, args.resume)
        log.info("%s %s/%s seed %d -> %s", args.command, cfg.task, cfg.mode, seed, out)
        if args.command == "optimize":
            report = cmd_optimize(cfg, out, args.resume)
        elif args.command == "train":
            report = cmd_train(cfg, out, args.params)
        else:
            report = cmd_eval(cfg, out, args.params, args.checkpoint)
        log.info("mean speed %.4f m/s, failures %d", report["mean_speed"]["mean"], report["failures"])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        run(args)
    except (ConfigError, FileNotFoundError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
