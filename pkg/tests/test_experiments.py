import filecmp
from pathlib import Path

import pytest

from coagsim.config import parse_config, parse_text
from coagsim.experiments import MIN_REPLICAS, run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small(name, **changes):
    """A shipped config with some keys replaced."""
    lines = []
    for line in (CONFIGS / name).read_text().splitlines():
        key = line.split("=", 1)[0].strip()
        if key in changes:
            line = f"{key} = {changes.pop(key)}"
        lines.append(line)
    lines += [f"{k} = {v}" for k, v in changes.items()]
    return parse_text("\n".join(lines) + "\n", name)


def read_summary(path):
    return dict(line.split(" = ", 1) for line in Path(path).read_text().splitlines())


def test_e1_single_replica_smoke(tmp_path):
    cfg = small("e1.cfg", replicas=1, t_macro_end=4e-5, epsilon="0.2")
    report = run_experiment(cfg, tmp_path)
    assert report.status == "inconclusive"
    assert "tube_exit_any" in report.metrics
    summary = read_summary(tmp_path / "summary.txt")
    assert summary["status"] == "inconclusive"
    assert summary["experiment"] == "E1"
    assert summary["flag_alpha>2nu+3"] == "false"
    assert any("infeasible" in v for k, v in summary.items() if k.startswith("note_"))
    assert (tmp_path / "stopping_eps0.2.csv").exists()


def test_e2_report_has_variance_ratio(tmp_path):
    cfg = small("e2.cfg", replicas=3, t_macro_end=1e-4, sample_every=1e-4)
    report = run_experiment(cfg, tmp_path)
    assert report.status == "inconclusive"           # below the replica minimum
    for key in ("variance_ratio", "ratio_ci_low", "ratio_ci_high", "martingale_max_gap"):
        assert key in report.metrics
    assert report.metrics["martingale_max_gap"] <= 1e-12


def test_e4_passes_quickly(tmp_path):
    report = run_experiment(parse_config(CONFIGS / "e4.cfg"), tmp_path)
    assert report.status == "pass", report.metrics
    assert report.metrics["decay_exponent"] >= 5.0 - 1e-9


def test_e5_smoke(tmp_path):
    cfg = small("e5.cfg", replicas=3)
    report = run_experiment(cfg, tmp_path)
    assert report.status == "inconclusive"
    assert (tmp_path / "merges.csv").read_text().startswith("run_id,seed,merge_time,increment")


def test_replica_minimum_is_documented():
    assert MIN_REPLICAS >= 20


@pytest.mark.parametrize("name, changes", [
    ("e1.cfg", dict(replicas=3, t_macro_end=4e-5)),
    ("e5.cfg", dict(replicas=2)),
    ("e4.cfg", dict(replicas=2)),
])
def test_byte_identical_reruns(tmp_path, name, changes):
    cfg = small(name, **changes)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", files, shallow=False)
    assert mismatch == [] and errors == []


def test_worker_pool_matches_serial(tmp_path):
    serial = small("e4.cfg", replicas=4)
    pooled = small("e4.cfg", replicas=4, workers=2)
    run_experiment(serial, tmp_path / "s")
    run_experiment(pooled, tmp_path / "p")
    assert (tmp_path / "s" / "decay.csv").read_bytes() == (tmp_path / "p" / "decay.csv").read_bytes()
