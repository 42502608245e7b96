import csv
import json

import pytest

from elasticgait.cli import main, parse_seeds

FAST = {"eval_seeds": [20001, 20002], "reeval_episodes": 2, "top_k": 1,
        "train": {"learning_starts": 20, "eval_every": 30, "eval_seeds": [10001]},
        "learner": {"batch_size": 16, "hidden": 16}}


@pytest.fixture
def fast_config(tmp_path):
    p = tmp_path / "fast.json"
    p.write_text(json.dumps(FAST))
    return p


def run(*args):
    return main([*map(str, args), "-q"])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_optimize_budget_one_emits_every_file(tmp_path, fast_config):
    out = tmp_path / "opt"
    assert run("optimize", "--task", "trot", "--budget", 1, "--config", fast_config, "--out", out) == 0
    for name in ("config.json", "history.jsonl", "timings.jsonl", "candidates.json", "best_params.json",
                 "optimization_history.csv", "report.json", "episodes.csv"):
        assert (out / name).exists(), name
    assert len((out / "history.jsonl").read_text().splitlines()) == 1
    assert len(list((out / "traces").glob("*.csv"))) == 2
    report = json.loads((out / "report.json").read_text())
    assert report["seed"] == 0 and report["trials"] == 1


def test_optimize_is_deterministic(tmp_path, fast_config):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("optimize", "--task", "pronk", "--budget", 4, "--seed", 7,
                   "--config", fast_config, "--out", out) == 0
    assert (a / "history.jsonl").read_bytes() == (b / "history.jsonl").read_bytes()
    for t in (a / "traces").glob("*.csv"):
        assert t.read_bytes() == (b / "traces" / t.name).read_bytes()


def test_refuses_to_overwrite_without_force(tmp_path, fast_config, capsys):
    out = tmp_path / "opt"
    assert run("optimize", "--budget", 1, "--config", fast_config, "--out", out) == 0
    assert run("optimize", "--budget", 1, "--config", fast_config, "--out", out) == 2
    assert "--force" in capsys.readouterr().err
    assert run("optimize", "--budget", 1, "--config", fast_config, "--out", out, "--force") == 0


def test_resume_matches_uninterrupted_run(tmp_path, fast_config):
    full, part = tmp_path / "full", tmp_path / "part"
    assert run("optimize", "--budget", 6, "--config", fast_config, "--out", full) == 0
    assert run("optimize", "--budget", 3, "--config", fast_config, "--out", part) == 0
    # simulate an interruption that tore the last record
    hist = part / "history.jsonl"
    hist.write_text(hist.read_text() + '{"trial_id": 3, "par')
    assert run("optimize", "--budget", 6, "--config", fast_config, "--out", part, "--resume") == 0
    assert hist.read_bytes() == (full / "history.jsonl").read_bytes()


def test_resume_rejects_changed_config(tmp_path, fast_config, capsys):
    out = tmp_path / "opt"
    assert run("optimize", "--budget", 2, "--config", fast_config, "--out", out) == 0
    assert run("optimize", "--budget", 3, "--seed", 5, "--config", fast_config, "--out", out, "--resume") == 2
    assert "differs" in capsys.readouterr().err


def test_config_is_written_before_computation(tmp_path, fast_config):
    out = tmp_path / "tr"
    # a missing parameter file fails after the run directory is prepared but
    # before any training starts
    assert run("train", "--params", tmp_path / "missing.json", "--config", fast_config, "--out", out) == 2
    assert not (out / "checkpoint.pt").exists()


def test_missing_params_file_names_expected_path(tmp_path, fast_config, capsys):
    missing = tmp_path / "nowhere" / "best_params.json"
    assert run("train", "--mode", "cpg-rl", "--params", missing, "--config", fast_config,
               "--out", tmp_path / "tr") == 2
    assert str(missing) in capsys.readouterr().err


def test_train_layout_and_checkpoint_eval(tmp_path, fast_config):
    out = tmp_path / "tr"
    assert run("train", "--task", "trot", "--params", "handtuned", "--budget", 60,
               "--config", fast_config, "--out", out) == 0
    for name in ("config.json", "curve.csv", "checkpoint.pt", "report.json", "train_episodes.csv"):
        assert (out / name).exists(), name
    curve = rows(out / "curve.csv")
    assert [int(r["step"]) for r in curve] == [0, 30, 60]
    report = json.loads((out / "report.json").read_text())
    assert "open_loop" in report and report["seed"] == 0

    ev = tmp_path / "ev"
    assert run("eval", "--task", "trot", "--mode", "cpg-rl", "--checkpoint", out,
               "--config", fast_config, "--out", ev) == 0
    again = json.loads((ev / "report.json").read_text())
    assert again["mean_speed"] == report["mean_speed"]


def test_scratch_mode_warns_about_params(tmp_path, fast_config):
    with pytest.warns(UserWarning, match="ignoring --params"):
        code = run("train", "--mode", "rl-scratch", "--params", "handtuned", "--budget", 30,
                   "--config", fast_config, "--out", tmp_path / "s")
    assert code == 0
    cfg = json.loads((tmp_path / "s" / "config.json").read_text())
    assert cfg["params"] is None


def test_train_rejects_resume(tmp_path, fast_config, capsys):
    assert run("train", "--params", "handtuned", "--resume", "--config", fast_config,
               "--out", tmp_path / "t") == 2
    assert "resume" in capsys.readouterr().err


def test_eval_trot_report_schema(tmp_path, fast_config):
    out = tmp_path / "ev"
    assert run("eval", "--task", "trot", "--mode", "cpg-handtuned", "--config", fast_config, "--out", out) == 0
    report = json.loads((out / "report.json").read_text())
    for key in ("mean_speed", "velocity_ratio"):
        assert set(report[key]) == {"mean", "sd"}
    assert len(report["episodes"]) == 2


def test_eval_pronk_report_schema(tmp_path, fast_config):
    out = tmp_path / "ev"
    assert run("eval", "--task", "pronk", "--mode", "cpg-handtuned", "--config", fast_config, "--out", out) == 0
    report = json.loads((out / "report.json").read_text())
    for key in ("total_reward", "drift_cost", "angular_velocity_cost", "max_height", "velocity_ratio"):
        assert key in report
    assert isinstance(report["failures"], int)


def test_eval_counts_falls_as_failures(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**FAST, "env": {"max_tilt": 1e-3}}))
    out = tmp_path / "ev"
    assert run("eval", "--mode", "cpg-handtuned", "--config", cfg, "--out", out) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["failures"] == 2
    assert all(e["termination"] == "fall" for e in report["episodes"])


def test_eval_is_deterministic(tmp_path, fast_config):
    for name in ("a", "b"):
        assert run("eval", "--task", "pronk", "--mode", "cpg-handtuned", "--config", fast_config,
                   "--out", tmp_path / name) == 0
    for t in (tmp_path / "a" / "traces").glob("*.csv"):
        assert t.read_bytes() == (tmp_path / "b" / "traces" / t.name).read_bytes()


def test_seed_range_runs_each_seed(tmp_path, fast_config):
    out = tmp_path / "many"
    assert run("optimize", "--budget", 1, "--seeds", "3..4", "--config", fast_config, "--out", out) == 0
    for s in (3, 4):
        cfg = json.loads((out / f"seed_{s}" / "config.json").read_text())
        assert cfg["experiment"]["seed"] == s


def test_parse_seeds():
    assert parse_seeds("0..4") == [0, 1, 2, 3, 4]
    assert parse_seeds("7") == [7]
    for bad in ("4..1", "a..b"):
        with pytest.raises(Exception):
            parse_seeds(bad)


def test_unknown_config_key_is_an_error(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run("eval", "--mode", "cpg-handtuned", "--config", cfg, "--out", tmp_path / "e") == 2
    assert "bogus" in capsys.readouterr().err


def test_optimize_rejects_rl_mode(tmp_path, capsys):
    assert run("optimize", "--mode", "cpg-rl", "--out", tmp_path / "o") == 2


# -- figure export -------------------------------------------------------------

def test_export_trot_pattern(tmp_path, fast_config):
    out = tmp_path / "ev"
    assert run("eval", "--task", "trot", "--mode", "cpg-handtuned", "--config", fast_config, "--out", out) == 0
    assert run("export-figures", out) == 0
    pattern = rows(out / "figures" / "pattern_episode_20001.csv")
    legs = {}
    for r in pattern:
        legs.setdefault(r["leg"], []).append(r)
    assert sorted(legs) == ["FL", "FR", "HL", "HR"]
    for ivs in legs.values():
        phases = [r["phase"] for r in ivs]
        assert all(a != b for a, b in zip(phases, phases[1:]))
        assert all(float(a["end"]) == float(b["start"]) for a, b in zip(ivs, ivs[1:]))
    assert (out / "figures" / "pattern_episode_20001.png").stat().st_size > 0
    vel = rows(out / "figures" / "velocity_episode_20001.csv")
    assert sum(int(r["joint_max"]) for r in vel) == 2


def test_export_pronk_energy(tmp_path, fast_config):
    out = tmp_path / "ev"
    assert run("eval", "--task", "pronk", "--mode", "cpg-handtuned", "--config", fast_config, "--out", out) == 0
    assert run("export-figures", out, "--no-plots") == 0
    with open(out / "figures" / "energy_episode_20001.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["time", "spring_potential", "gravitational_potential", "kinetic"]
    assert not list((out / "figures").glob("*.png"))


def test_export_optimization_history(tmp_path, fast_config):
    out = tmp_path / "opt"
    assert run("optimize", "--budget", 3, "--config", fast_config, "--out", out) == 0
    assert run("export-figures", out) == 0
    hist = rows(out / "figures" / "optimization_history.csv")
    best = [float(r["best_so_far"]) for r in hist]
    assert len(hist) == 3 and best == sorted(best, reverse=True)
    assert (out / "figures" / "optimization_history.png").exists()


def test_export_empty_run_dir_lists_missing_inputs(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run("export-figures", empty) == 2
    err = capsys.readouterr().err
    assert "traces" in err and "history.jsonl" in err
