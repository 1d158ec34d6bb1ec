import os

import pytest
import tomli

from ddbm import config
from ddbm.cli import main


def test_defaults_validate_and_roundtrip(tmp_path):
    cfg = config.load(None)
    text = config.dumps(cfg.resolved())
    f = tmp_path / "snap.toml"
    f.write_text(text)
    again = config.load(f)
    assert again.resolved() == cfg.resolved()
    assert config.dumps(again.resolved()) == text


def test_floats_have_17_digits():
    assert config._fmt(0.1) == "0.10000000000000001"
    assert config._fmt(1.0) == "1.0"
    assert tomli.loads("x = " + config._fmt(1e-4))["x"] == 1e-4


@pytest.mark.parametrize("text", ['[foo]\nx = 1\n', '[train]\nepochs = 3\n', '[train]\niters = "many"\n',
                                  '[data]\nkind = "faces"\n', '[precond]\nmode = "magic"\n', 'seed = 1.5\n'])
def test_bad_configs_exit_1(tmp_path, text, capsys):
    f = tmp_path / "c.toml"
    f.write_text(text)
    assert main(["train", "--config", str(f), "--out", str(tmp_path / "o")]) == 1
    assert "config error" in capsys.readouterr().err


def test_missing_file_named(tmp_path, capsys):
    path = str(tmp_path / "absent.toml")
    assert main(["train", "--config", path]) == 1
    assert path in capsys.readouterr().err


def test_verify_default_passes_and_writes_nothing(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7 and "FAIL" not in out
    assert os.listdir(tmp_path) == []


def test_verify_cauchy_schwarz_fault(tmp_path, capsys):
    f = tmp_path / "c.toml"
    f.write_text('[precond]\nmode = "explicit"\nsigma0_sq = 0.25\nsigmaT_sq = 0.25\nsigma0T = 0.5\n')
    assert main(["verify", "--config", str(f)]) == 3
    assert "first failing check: precond_hyper" in capsys.readouterr().out


def test_reduce_check(tmp_path, capsys):
    assert main(["reduce-check"]) == 0
    out = capsys.readouterr().out
    assert "slope" in out and "edm_reduction" in out
    f = tmp_path / "c.toml"
    f.write_text('[precond]\nmode = "explicit"\nsigma0_sq = 0.25\nsigmaT_sq = 1.25\nsigma0T = 0.2\n')
    assert main(["reduce-check", "--config", str(f)]) == 3


def test_train_smoke_and_sample(tmp_path):
    import time
    f = tmp_path / "c.toml"
    f.write_text('[train]\niters = 10\n[data]\nn = 500\n')
    out = tmp_path / "run"
    t0 = time.perf_counter()
    assert main(["train", "--config", str(f), "--out", str(out)]) == 0
    assert time.perf_counter() - t0 < 10
    assert {"final.bin", "loss_trace.csv", "config.resolved.toml"} <= set(os.listdir(out))
    assert main(["sample", "--config", str(f), "--out", str(out), "--checkpoint", str(out / "final.bin"),
                 "-n", "5", "--traj"]) == 0
    lines = (out / "samples.csv").read_text().splitlines()
    assert lines[0] == "xT_0,xT_1,x0_0,x0_1" and len(lines) == 6
    traj = (out / "trajectory.csv").read_text().splitlines()
    assert traj[0] == "sample,step,t,dim_0,dim_1" and len(traj) == 1 + 5 * 41
    meta = (out / "samples.meta.json").read_text()
    for key in ('"N"', '"rho"', '"guidance_w"', '"euler_s"', '"seed"'):
        assert key in meta


def test_sample_errors_and_empty(tmp_path):
    assert main(["sample", "--out", str(tmp_path), "--checkpoint", str(tmp_path / "nope.bin")]) == 1
    assert main(["sample", "--out", str(tmp_path), "--oracle"]) == 1  # rotate2d has no oracle
    f = tmp_path / "g.toml"
    f.write_text('[data]\nkind = "gaussian_pair"\n')
    assert main(["sample", "--config", str(f), "--out", str(tmp_path / "o"), "--oracle", "-n", "0"]) == 0
    assert (tmp_path / "o" / "samples.csv").read_text() == "xT_0,x0_0\n"


def test_oracle_sample_posterior_moments(tmp_path):
    import numpy as np
    from ddbm.oracle import GaussianPairSpec, conditional_moments
    f = tmp_path / "g.toml"
    f.write_text('[data]\nkind = "gaussian_pair"\n[oracle]\ncov0T = 0.6\n[sampler]\nN = 100\neuler_s = 0.6\n'
                 'guidance_w = 1.0\n')
    assert main(["sample", "--config", str(f), "--out", str(tmp_path), "--oracle", "-n", "20000"]) == 0
    data = np.loadtxt(tmp_path / "samples.csv", delimiter=",", skiprows=1)
    xT, x0 = data[:, 0], data[:, 1]
    # regression of x0 on xT recovers the pair's conditional law
    slope, icpt = np.polyfit(xT, x0, 1)
    resid = x0 - (slope * xT + icpt)
    assert slope == pytest.approx(0.6, abs=0.03) and icpt == pytest.approx(0.0, abs=0.02)
    assert resid.var() == pytest.approx(0.64, rel=0.05)


def test_grid_dump(tmp_path):
    assert main(["grid-dump", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "grid.csv").read_text().splitlines()
    assert rows[0] == "i,t" and rows[1] == "40,1.0" or rows[1] == "40,1" and rows[-1] == "0,0"
