from pathlib import Path

import numpy as np
import pytest

from coagsim import io
from coagsim.cli import main
from coagsim.config import ConfigError, parse_config, parse_text
from coagsim.microsim import ScalingParams

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """\
experiment = E1
epsilon = 0.2
alpha = 4.5
nu = 1.0
nu_tilde = 1.0
mu = 1.2
kappa = 0.75
theta = 1.0
margin = 0.1
a = 4.0
rho = 1.0
t_macro_end = 1e-5
sample_every = 1e-5
delta = 0.5
replicas = 1
master_seed = 7
"""


def test_round_trip():
    cfg = parse_text(MINIMAL)
    assert parse_text(cfg.to_text()) == cfg
    assert cfg.epsilon == (0.2,) and cfg.rho == (1.0,) and cfg.replicas == 1
    assert list(cfg.seeds) == [7]


def test_comments_and_lists():
    cfg = parse_text(MINIMAL.replace("rho = 1.0", "rho = 0.5, 0.5   # two chains") + "\n# end\n")
    assert cfg.rho == (0.5, 0.5)


def test_unknown_key_names_line():
    text = MINIMAL.replace("epsilon = 0.2", "epslon = 0.2")
    with pytest.raises(ConfigError, match=r"cfg:2: unknown key 'epslon'"):
        parse_text(text, "cfg")


@pytest.mark.parametrize("text, pattern", [
    (MINIMAL.replace("alpha = 4.5", "alpha = four"), r":3: cannot parse .*'alpha'"),
    (MINIMAL + "alpha = 5\n", r":17: duplicate key 'alpha'"),
    (MINIMAL.replace("alpha = 4.5\n", ""), r"missing key\(s\) alpha"),
    (MINIMAL + "just words\n", r":17: expected 'key = value'"),
    (MINIMAL.replace("E1", "E9"), r"experiment must be one of"),
    (MINIMAL.replace("replicas = 1", "replicas = 0"), r"replicas must be at least 1"),
    (MINIMAL.replace("epsilon = 0.2", "epsilon = 1.5"), r"epsilon must lie in"),
    (MINIMAL.replace("E1", "E2").replace("0.2", "0.2, 0.1"), r"single epsilon"),
    (MINIMAL.replace("E1", "E5"), r"E5 needs 'separation' and 'window'"),
])
def test_config_errors(text, pattern):
    with pytest.raises(ConfigError, match=pattern):
        parse_text(text, "cfg")


def test_constraint_flag_from_config():
    cfg = parse_text(MINIMAL)
    params = ScalingParams(cfg.epsilon[0], cfg.alpha, cfg.rho, nu_tilde=cfg.nu_tilde)
    assert params.constraint_flags["alpha > 2nu_tilde+3"] is False


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.cfg")), ids=lambda p: p.name)
def test_shipped_configs_parse(path):
    parse_config(path)


def test_fmt_round_trips():
    for v in (0.1, 1 / 3, 1e-300, -2.5e17):
        assert float(io.fmt(v)) == v
    assert io.fmt(True) == "true" and io.fmt(np.int64(3)) == "3" and io.fmt(None) == "none"
    assert io.fmt((1, 2.5)) == "1, 2.5"


# ---------------------------------------------------------------------- cli

def test_cli_potential_info(capsys):
    assert main(["potential-info"]) == 0
    lines = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert float(lines["b"]) == pytest.approx(6.0, abs=1e-8)
    assert float(lines["u_a"]) == -4.0
    assert sum(k.startswith("assumption_") for k in lines) == 7
    assert all(v == "pass" for k, v in lines.items() if k.startswith("assumption_"))


def test_cli_potential_info_rejects_bad_margin(capsys):
    assert main(["potential-info", "--margin", "1.5"]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(MINIMAL.replace("epsilon", "epslon"))
    assert main(["experiment", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "unknown key 'epslon'" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_cli_simulate_micro(tmp_path):
    out = tmp_path / "micro"
    assert main(["simulate-micro", "--config", str(CONFIGS / "micro_two_chain.cfg"),
                 "--out", str(out), "--snapshots"]) == 0
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t_macro,com,energy,grad_norm_inf,n_segments"
    snap = (out / "snapshots.txt").read_text().splitlines()
    assert len(snap) == len((out / "trajectory.csv").read_text().splitlines()) - 1
    assert (out / "stopping.csv").read_text().startswith("run_id,seed,tau1,tau2,tau3,tau4,tau5")


def test_cli_simulate_macro(tmp_path):
    out = tmp_path / "macro"
    assert main(["simulate-macro", "--config", str(CONFIGS / "macro_three_rods.cfg"),
                 "--out", str(out)]) == 0
    rows = (out / "rods.csv").read_text().splitlines()
    assert rows[0] == "t_macro,eta_tilde_0,eta_tilde_1,eta_tilde_2"
    assert (out / "events.csv").read_text().startswith("t_macro,left_members,right_members,new_mass")
    summary = (out / "summary.txt").read_text()
    assert "total_mass = 3" in summary


def test_cli_simulate_macro_needs_rod_dt(tmp_path, capsys):
    cfg = tmp_path / "m.cfg"
    cfg.write_text(MINIMAL)
    assert main(["simulate-macro", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "rod_dt" in capsys.readouterr().err
