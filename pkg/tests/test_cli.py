import numpy as np
import pytest

from magnetostar.cli import build_parser, load_config, main, resolve_threads
from magnetostar.equilibrium import ConfigError
from magnetostar.fields import read_snapshot

SMALL = ["--grid", "48x48", "--support", "cylinder:2.0"]


def _report(path):
    out = {}
    for line in (path / "report.txt").read_text().splitlines():
        k, _, v = line.partition("=")
        out[k] = v
    return out


@pytest.fixture(scope="module")
def solved_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    code = main(["solve", "--gamma", "2.5", "--beta", "0.5", "--mass", "1", *SMALL, "--out", str(out)])
    return code, out


def test_solve_end_to_end(solved_dir):
    code, out = solved_dir
    assert code == 0
    rep = _report(out)
    assert float(rep["F"]) < 0 and rep["converged"] == "True"
    assert rep["status"] == "stationary point with negative energy"
    for name in ("rho", "gravity", "psi", "chi", "Br", "Bz"):
        snap = read_snapshot(out / f"{name}.csv")
        assert snap.name == name and snap.values.shape == (48, 48)
    hist = (out / "history.csv").read_text().splitlines()
    assert hist[0].startswith("iter,F,")


def test_export(solved_dir, tmp_path):
    _, out = solved_dir
    target = tmp_path / "all.csv"
    assert main(["export", str(out), "--output", str(target)]) == 0
    data = np.genfromtxt(target, delimiter=",", names=True)
    assert data.shape == (48 * 48,)
    assert set(data.dtype.names) == {"r", "z", "rho", "gravity", "psi", "chi", "Br", "Bz"}
    rho = read_snapshot(out / "rho.csv").values.ravel()
    assert np.array_equal(data["rho"], rho)


def test_export_missing(tmp_path):
    assert main(["export", str(tmp_path)]) == 1


def test_gamma_gate_exit_code(tmp_path, capsys):
    assert main(["solve", "--gamma", "1.5", "--out", str(tmp_path)]) == 1
    assert "8/5" in capsys.readouterr().err


def test_beta_zero_magnetic_outputs_vanish(tmp_path):
    assert main(["solve", "--gamma", "2.5", "--beta", "0", *SMALL, "--out", str(tmp_path)]) == 0
    for name in ("psi", "chi", "Br", "Bz"):
        assert not np.any(read_snapshot(tmp_path / f"{name}.csv").values)
    assert float(_report(tmp_path)["Q"]) == 0.0


def test_nonconvergence_exit_code(tmp_path):
    assert main(["solve", "--gamma", "2.5", "--beta", "0.5", *SMALL, "--max-iter", "2",
                 "--out", str(tmp_path)]) == 2


def test_config_file(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\ngamma = 3.0\nbeta = 0.25\ngrid = 32x32\nmax-iter = 40\n")
    cfg = load_config(str(ini))
    assert (cfg.gamma, cfg.beta, cfg.grid, cfg.max_iter) == (3.0, 0.25, "32x32", 40)
    assert main(["solve", "--config", str(ini), "--out", str(tmp_path / "o")]) == 0


def test_unknown_config_key(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[run]\ngama = 3.0\n")
    with pytest.raises(ConfigError, match="gama"):
        load_config(str(ini))
    assert main(["solve", "--config", str(ini), "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["solve", "--gamma", "x"], ["probe", "bogus"],
                                  ["validate", "--grid", "64x32"], ["validate", "--only", "nope"]])
def test_usage_errors(argv):
    assert main(argv) == 1


def test_threads_env(monkeypatch):
    monkeypatch.setenv("MAGNETOSTAR_THREADS", "2")
    assert resolve_threads(None) == 2
    assert resolve_threads(1) == 1
    monkeypatch.setenv("MAGNETOSTAR_THREADS", "many")
    with pytest.raises(ConfigError):
        resolve_threads(None)
    with pytest.raises(ConfigError):
        resolve_threads(0)


def test_validate_only(capsys):
    assert main(["validate", "--grid", "32x32", "--only", "radial-b"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] 10 radial-b" in out and "1/1 checks passed" in out


def test_probe_scaling(tmp_path):
    assert main(["probe", "scaling", "--gamma", "2.5", "--beta", "1", *SMALL, "--out", str(tmp_path)]) == 0
    text = (tmp_path / "probe_report.txt").read_text()
    assert text.startswith("probe=scaling") and "exponent_magnetic=" in text
    assert (tmp_path / "probe_samples.csv").read_text().startswith("kind,s,F")


def test_probe_beta_threshold_needs_gamma_two(tmp_path):
    assert main(["probe", "beta-threshold", "--gamma", "2.5", "--out", str(tmp_path)]) == 1


def test_parser_help_lists_subcommands():
    text = build_parser().format_help()
    for cmd in ("solve", "validate", "probe", "export"):
        assert cmd in text
