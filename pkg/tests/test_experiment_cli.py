import csv

import numpy as np
import pytest
from numpy.testing import assert_allclose

from moebius_rigidity import experiment_cli as E
from moebius_rigidity import hyperbolic_closed_form as H
from moebius_rigidity import suites
from moebius_rigidity.errors import IntegrationFailure, InvalidParameter

CONFIG = """\
scenario = pullback_twist
# twist about a point off the origin
twist.x0 = 0.1, 0.05
twist.R = 1.0
twist.alpha0 = 0.3
sample.N = 64
grid.k = 3
grid.far = 0.85, 0.0; -0.55, 0.65
tol.moebius = 1e-3
seed = 7
"""


def test_config_parse_roundtrip(tmp_path):
    cfg = E.ScenarioConfig.from_text(CONFIG)
    assert cfg.scenario == "pullback_twist"
    assert cfg.twist_x0 == (0.1, 0.05)
    assert cfg.grid_far == ((0.85, 0.0), (-0.55, 0.65))
    assert cfg.seed == 7 and cfg.sample_N == 64
    path = tmp_path / "c.cfg"
    path.write_text(cfg.to_text())
    again = E.ScenarioConfig.from_file(path)
    assert again == cfg
    assert again.digest() == cfg.digest()


def test_config_rejects_bad_input():
    with pytest.raises(InvalidParameter):
        E.ScenarioConfig.from_text("scenario = nope\n")
    with pytest.raises(InvalidParameter):
        E.ScenarioConfig.from_text("sample.N = 8\n")
    with pytest.raises(InvalidParameter):
        E.ScenarioConfig.from_text("twist.R = -1\n")
    with pytest.raises(InvalidParameter):
        E.ScenarioConfig.from_text("bogus.key = 1\n")


def test_parse_points():
    pts = E.parse_points("0.1,0.2; -0.3,0")
    assert_allclose(pts, [[0.1, 0.2], [-0.3, 0.0]])


def test_probe_grid_within_radius():
    cfg = E.ScenarioConfig(grid_k=4, grid_r=0.8)
    grid = cfg.probe_grid()
    assert len(grid) == 16 + len(cfg.grid_far)
    assert max(H.h_distance(cfg.x0, p) for p in grid[:16]) <= 0.8 + 1e-12


def test_twist_construction(twist_config):
    err = suites.twist_construction_errors(twist_config)
    assert err["twist_inverse"] <= 1e-10
    assert err["twist_pushforward"] <= 1e-6
    assert err["twist_dpsi"] <= 1e-6


def test_twist_identity_cases(twist_config):
    from dataclasses import replace

    fld, psi, _ = E.build_twist(replace(twist_config, twist_alpha0=0.0))
    p = np.array([0.2, 0.1])
    assert_allclose(psi(p), p, atol=1e-15)
    G, _ = fld.evaluate(p)
    assert_allclose(G, H.conformal_factor(p) ** 2 * np.eye(2), rtol=1e-12)
    _, psi, _ = E.build_twist(twist_config)
    q = H.h_geodesic_point(twist_config.twist_x0, 1.0, 1.2)
    assert_allclose(psi(q), q, atol=1e-14)


def test_check_relations():
    assert E.Check("a", 1.0, 2.0).passed
    assert not E.Check("a", 3.0, 2.0).passed
    assert E.Check("a", 3.0, 2.0, ">=").passed
    assert not E.Check("a", float("nan"), 2.0).passed


def test_rigidity_refuses_conformal(tmp_path, capsys):
    code = E.run(["rigidity", "--scenario", "conformal_bump", "--out", str(tmp_path)])
    assert code == 2
    assert "precondition" in capsys.readouterr().err


def test_extend_refuses_conformal(tmp_path):
    assert E.run(["extend", "--scenario", "conformal_bump", "--points", "0,0", "--out", str(tmp_path)]) == 2


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    def boom(config):
        raise IntegrationFailure("step size underflow")

    monkeypatch.setattr(E, "cmd_validate", boom)
    assert E.run(["validate", "--out", str(tmp_path)]) == 3


def test_validate_trivial(tmp_path, capsys):
    code = E.run(["validate", "--scenario", "trivial", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0, out
    assert "validate trivial: PASS" in out
    rows = list(csv.reader((tmp_path / "report.csv").open()))
    assert rows[0] == ["check", "value", "relation", "bound", "pass", "note"]
    assert rows[-1][0] == "#config"


def test_validate_conformal_reports_curvature(tmp_path):
    # the bump violates K <= -1; validate says so through exit code 1
    assert E.run(["validate", "--scenario", "conformal_bump", "--out", str(tmp_path)]) == 1
    rows = {r[0]: r for r in csv.reader((tmp_path / "report.csv").open())}
    assert rows["curvature_max"][4] == "0"


def test_extend_writes_csv(tmp_path, capsys):
    code = E.run(["extend", "--scenario", "trivial", "--points", "0.1,0.1;0.2,-0.1",
                  "--out", str(tmp_path)])
    assert code == 0
    rows = list(csv.reader((tmp_path / "results.csv").open()))
    assert len(rows) == 3


def test_sweep(tmp_path):
    cfg = E.ScenarioConfig(scenario="conformal_bump", grid_k=2)
    rep, rows = E.cmd_sweep(cfg, [0.0, 0.1], tmp_path)
    assert rep.ok
    assert len(rows) == 2
    lines = list(csv.reader((tmp_path / "results.csv").open()))
    assert len(lines) == 3
    assert float(lines[1][1]) <= 1e-5
    assert float(lines[2][1]) > float(lines[1][1])
    assert lines[2][4] == ""  # non-Moebius row has no isometry defect
