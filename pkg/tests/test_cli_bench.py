import csv
from fractions import Fraction
import json

import numpy as np
import pytest

from rdafem import bench
from rdafem.cli import main
from rdafem.config import RunConfig, parse_config
from rdafem.errors import ConfigError


def _csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _header(path):
    with open(path) as fh:
        return fh.readline().strip().split(",")


SMALL = "[discretization]\ndegrees = 1\nh = 1/5, 1/10\n[solver]\ncoarse_n = 5\n"


def test_cli_convergence(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(SMALL)
    assert main(["convergence", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    path = tmp_path / "convergence.csv"
    assert _header(path) == bench.CONVERGENCE_COLUMNS
    rows = _csv(path)
    assert len(rows) == 2
    assert rows[0]["energy_eoc"] == "" and float(rows[1]["l2_eoc"]) > 0.5
    assert "wrote" in capsys.readouterr().out


def test_cli_solve_outputs(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(SMALL)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path), "--threads", "1"]) == 0
    info = json.loads((tmp_path / "solve.json").read_text())
    assert info["converged"] and info["m"] == 1 and info["h"] == "1/10"
    x = np.loadtxt(tmp_path / "solution.txt")
    assert len(x) == info["dofs"]
    coo = np.loadtxt(tmp_path / "matrix.coo")
    assert coo.shape[1] == 3


def test_cli_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[solver]\nmethod = gmres\n")
    assert main(["convergence", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: ")


def test_cli_bad_threads(tmp_path, capsys):
    assert main(["solve", "--threads", "0", "--out", str(tmp_path)]) == 2
    assert capsys.readouterr().err.startswith("error: ")


def test_cli_unknown_command():
    with pytest.raises(SystemExit):
        main(["plot"])


def test_conditioning_and_alpha_sweep(tmp_path):
    cfg = parse_config(SMALL).with_(alpha0_values=(1.0, 10.0))
    rows = bench.run_conditioning(cfg, tmp_path / "c.csv")
    assert _header(tmp_path / "c.csv") == bench.CONDITIONING_COLUMNS
    assert rows[0]["kappa_Am_ratio"] is None and rows[1]["kappa_Am_ratio"] > 2
    rows = bench.run_alpha_sweep(cfg, tmp_path / "a.csv")
    assert _header(tmp_path / "a.csv") == bench.ALPHA_COLUMNS
    assert [r["alpha0"] for r in rows] == [1.0, 10.0]
    with pytest.raises(ConfigError):
        bench.run_conditioning(cfg.with_(hs=cfg.hs[:1]))


def test_lambda_sweep(tmp_path):
    cfg = parse_config(SMALL).with_(thresholds=(6, 8))
    rows = bench.run_lambda_sweep(cfg, tmp_path / "l.csv")
    assert _header(tmp_path / "l.csv") == bench.LAMBDA_COLUMNS
    assert [r["N"] for r in rows] == [6, 8]
    assert all(r["Lambda_max"] > 0 and r["Lambda_m"] > 1 for r in rows)


def test_single_mesh_has_no_rates():
    rows = bench.run_convergence(RunConfig(degrees=(0,), hs=(Fraction(1, 5),), coarse_n=5))
    assert rows[0]["energy_eoc"] is None and rows[0]["l2_eoc"] is None


def test_non_dyadic_levels():
    case = bench.get_case("example1")
    disc = bench.discretize(case, 12, 1)
    with pytest.raises(ConfigError):
        bench.make_preconditioner(disc, "mg2", coarse_n=5)


@pytest.mark.parametrize("method", ["cg", "a0", "mg1", "mg2"])
def test_methods_agree(method):
    case = bench.get_case("example1")
    disc = bench.discretize(case, 20, 1)
    x, rep = bench.solve(disc, method, coarse_n=5, config=bench.SolverConfig(tol=1e-12))
    ref = np.linalg.solve(disc.system.A.toarray(), disc.system.rhs)
    assert rep.converged
    assert np.abs(x - ref).max() <= 1e-8 * np.abs(ref).max()
