"""Acceptance criteria 1-8, one reported line each.

Every test prints ``criterion N: PASS|FAIL`` with its measured values and
bounds, and the terminal summary repeats the lines at the end of the run.
Runtimes are measured after a warm-up, so numba cache loading is excluded.
"""
import filecmp
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from moebius_rigidity import circumcenter as CC
from moebius_rigidity import experiment_cli as E
from moebius_rigidity import hyperbolic_closed_form as H
from moebius_rigidity import moebius_conjugacy as MC
from moebius_rigidity import perturbed_manifold as P
from moebius_rigidity import suites
from moebius_rigidity.boundary_core import BoundarySample

SEED = 20240917


@pytest.fixture(scope="module", autouse=True)
def warm(twist_pair):
    # compile/load the kernels once before any timing starts
    MC.conjugate(twist_pair, H.h_ray((0.1, 0.1), 1.0))
    P.p_distance(twist_pair.space1, (0.1, 0.2), (-0.2, 0.1))


def record(n, title, checks, elapsed, budget, capsys):
    """checks: (name, value, bound, relation)"""
    parts = []
    ok = True
    for name, value, bound, rel in checks:
        good = bool(np.isfinite(value)) and (value <= bound if rel == "<=" else value >= bound)
        ok &= good
        parts.append(f"{name}={value:.3e}{rel}{bound:.1e}{'' if good else '!'}")
    in_time = budget is None or elapsed <= budget
    ok &= in_time
    btxt = "" if budget is None else f"/{budget:.0f}s"
    line = (f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  [{', '.join(parts)}]"
            f"  runtime {elapsed:.1f}s{btxt}")
    ACCEPTANCE_LINES[n] = line
    with capsys.disabled():
        print("\n" + line)
    return ok


def test_c1_oracle_equivalence(capsys):
    rng = np.random.default_rng(SEED)
    t = time.perf_counter()
    err = suites.pure_oracle_errors(rng, 200)
    elapsed = time.perf_counter() - t
    checks = [(k, v, 1e-6, "<=") for k, v in err.items()]
    assert record(1, "pure-space oracle equivalence, 200 configs", checks, elapsed, 60, capsys)


def test_c2_metric_calculus(pure_space, twist_pair, capsys):
    rng = np.random.default_rng(SEED + 2)
    sample = BoundarySample.uniform(256)
    pts = [(suites.rand_point(rng, 0.6), suites.rand_point(rng, 0.6)) for _ in range(100)]
    t = time.perf_counter()
    a = suites.visual_pair_suite(pure_space, sample, pts[:50])
    b = suites.visual_pair_suite(twist_pair.space1, sample, pts[50:])
    elapsed = time.perf_counter() - t
    checks = [
        ("maxmin", max(a["maxmin"], b["maxmin"]), 1e-4, "<="),
        ("dM_vs_d", max(a["dM_vs_distance"], b["dM_vs_distance"]), 2e-3, "<="),
        ("maxmin_lemma", max(a["lemma"], b["lemma"]), 5e-3, "<="),
    ]
    assert record(2, "metric calculus, 100 pairs at N=256", checks, elapsed, 120, capsys)


def test_c3_shadow_angle(twist_pair, capsys):
    rng = np.random.default_rng(SEED + 3)
    sp = twist_pair.space1
    fld = sp.field
    t = time.perf_counter()
    sh = suites.shadow_bound_excess(sp, rng, 100)
    ang = suites.angle_sandwich(sp, rng, 200)
    eps = suites.eps_trend(twist_pair, fld.x0, fld.R, 0.7)
    elapsed = time.perf_counter() - t
    monotone = max(eps[1] - eps[0], eps[2] - eps[1])
    checks = [
        ("shadow_excess", sh, 1e-6, "<="),
        ("angle_lower", ang["lower"], 1e-4, "<="),
        ("angle_upper", ang["upper"], 1e-4, "<="),
        ("eps_step_max", monotone, 0.0, "<="),
        ("eps15_minus_eps5", eps[2] - eps[0], 0.0, "<="),
    ]
    assert record(3, f"shadow/angle bounds, b={sp.pinching_b:.3f}, eps_t={eps[0]:.2e},{eps[1]:.2e},{eps[2]:.2e}",
                  checks, elapsed, 120, capsys)


def test_c4_conjugacy(twist_pair, capsys):
    rng = np.random.default_rng(SEED + 4)
    t = time.perf_counter()
    ident = suites.conjugacy_identity_outside(twist_pair, suites.qualifying_vectors(twist_pair, rng, 40))
    fe = suites.flow_equivariance(twist_pair, rng, 20)
    mf = suites.maxmin_flip(twist_pair, rng, 10)
    elapsed = time.perf_counter() - t
    checks = [
        ("identity_outside", max(ident["foot"], ident["direction"]), 1e-5, "<="),
        ("derivative_residual", max(ident["residual"], fe["residual"]), 1e-5, "<="),
        ("flow_equivariance", fe["foot"], 1e-4, "<="),
        ("flip_part_ii", max(mf["foot_distance_residual"], mf["foot_on_ray_residual"]), 5e-3, "<="),
    ]
    assert record(4, "conjugacy, pullback twist N=64", checks, elapsed, 600, capsys)


@pytest.fixture(scope="module")
def twist_rigidity(tmp_path_factory):
    out = tmp_path_factory.mktemp("rigidity_a")
    t = time.perf_counter()
    rep, results = E.cmd_rigidity(E.ScenarioConfig(scenario="pullback_twist"), out)
    rep.write(out)
    return rep, results, out, time.perf_counter() - t


def test_c5_rigidity(twist_rigidity, capsys):
    t = time.perf_counter()
    triv, _ = E.cmd_rigidity(E.ScenarioConfig(scenario="trivial", grid_k=5, grid_far=()))
    elapsed = time.perf_counter() - t
    rep, _, _, t_twist = twist_rigidity
    tv = {c.name: c.value for c in triv.checks}
    v = {c.name: c.value for c in rep.checks}
    checks = [
        ("trivial_r_max", tv["r_max"], 1e-6, "<="),
        ("trivial_F_id", tv["F_identity"], 1e-6, "<="),
        ("twist_defect", v["moebius_defect"], 5e-4, "<="),
        ("r_spread", v["r_spread"], 5e-3, "<="),
        ("isometry_defect", v["isometry_defect"], 1e-2, "<="),
        ("F_vs_psi", v["F_vs_psi"], 1e-2, "<="),
        ("qisom_violation", v["qisom_sandwich"], 0.0, "<="),
        ("balance_Fx", max(v["balance_Fx_max"], tv["balance_Fx_max"]), 1e-3, "<="),
    ]
    ok = record(5, "rigidity: trivial 5x5 grid, pullback twist probes", checks,
                elapsed + t_twist, 1200, capsys)
    assert ok and triv.ok and rep.ok


def test_c6_adjoint(twist_pair, twist_config, capsys):
    grid = twist_config.probe_grid()
    pts = [grid[i] for i in (0, 2, 4, 6, 8)]
    t = time.perf_counter()
    res_h, res_h2 = [], []
    for p in pts:
        res_h.append(CC.dF_adjoint_check(twist_pair, p, h=1e-3)["residual"])
        res_h2.append(CC.dF_adjoint_check(twist_pair, p, h=5e-4)["residual"])
    elapsed = time.perf_counter() - t
    # halving h may not grow the residual by more than 2x (above a 1e-8 noise floor)
    growth = max(b - 2 * a for a, b in zip(res_h, res_h2))
    checks = [
        ("residual_h", max(res_h), 5e-2, "<="),
        ("residual_h/2", max(res_h2), 5e-2, "<="),
        ("halving_growth", growth, 1e-8, "<="),
    ]
    assert record(6, "adjoint identity at 5 twist probes", checks, elapsed, 300, capsys)


def test_c7_lipschitz(twist_pair, capsys):
    rng = np.random.default_rng(SEED + 7)
    pairs = [(suites.rand_point(rng, 0.6), suites.rand_point(rng, 0.6)) for _ in range(50)]
    y0 = np.array([0.05, -0.05])
    t = time.perf_counter()
    out = CC.lipschitz_surrogate(twist_pair, pairs, y0)
    elapsed = time.perf_counter() - t
    checks = [("max_excess", out["max_excess"], 2e-3, "<=")]
    assert record(7, "Lipschitz surrogate, 50 pairs", checks, elapsed, 300, capsys)


def test_c8_determinism(twist_rigidity, tmp_path, capsys):
    _, _, out_a, _ = twist_rigidity
    t = time.perf_counter()
    rep, _ = E.cmd_rigidity(E.ScenarioConfig(scenario="pullback_twist"), tmp_path)
    rep.write(tmp_path)
    elapsed = time.perf_counter() - t
    diff = 0.0
    for name in ("results.csv", "report.csv"):
        if not filecmp.cmp(out_a / name, tmp_path / name, shallow=False):
            diff += 1
    checks = [("differing_csv_files", diff, 0.0, "<=")]
    assert record(8, "determinism of rigidity CSVs", checks, elapsed, None, capsys)
