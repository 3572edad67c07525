import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from moebius_rigidity import circumcenter as CC
from moebius_rigidity import hyperbolic_closed_form as H
from moebius_rigidity import moebius_conjugacy as MC
from moebius_rigidity import perturbed_manifold as P
from moebius_rigidity.boundary_core import dM_distance
from moebius_rigidity.errors import InvalidParameter, NotMoebiusEquivalent


def unit(t):
    return np.array([math.cos(t), math.sin(t)])


def test_caratheodory_examples():
    e = unit(0.3)
    w, r = CC.caratheodory_balance([e, -e])
    assert_allclose(w, [0.5, 0.5], atol=1e-12)
    assert r <= 1e-12
    w, r = CC.caratheodory_balance([unit(0.1 + k * 2 * math.pi / 3) for k in range(3)])
    assert_allclose(w, [1 / 3] * 3, atol=1e-12)
    assert r <= 1e-12
    w, r = CC.caratheodory_balance([e])
    assert_allclose(w, [1.0])
    assert r == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 2 * math.pi), min_size=1, max_size=12))
def test_min_norm_point_properties(ts):
    pts = np.array([unit(t) for t in ts])
    x, w = CC.min_norm_point(pts)
    assert np.all(w >= 0)
    assert w.sum() == pytest.approx(1.0)
    assert np.count_nonzero(w) <= 3
    assert_allclose(w @ pts, x, atol=1e-12)
    # optimality: no hull vertex improves along its direction
    assert np.min(pts @ x) >= x @ x - 1e-9


def test_min_norm_point_against_grid():
    pts = np.array([[2.0, 1.0], [1.0, 3.0], [3.0, 2.5]])
    x, _ = CC.min_norm_point(pts)
    best = min(np.hypot(*(a * pts[0] + b * pts[1] + (1 - a - b) * pts[2]))
               for a in np.linspace(0, 1, 401) for b in np.linspace(0, 1, 401) if a + b <= 1)
    assert np.hypot(*x) <= best + 1e-9


def test_extend_trivial(trivial_pair):
    for x in [np.array([0.1, 0.05]), np.array([0.4, -0.2])]:
        res = CC.circumcenter_extend(trivial_pair, x)
        assert H.h_distance(res.F_x, x) <= 1e-6
        assert res.r_x <= 1e-6
        assert res.balance_residual_at_Fx <= 1e-3
        ws = [w for _, w in res.balanced_weights]
        assert len(ws) <= 3 and min(ws) >= 0 and sum(ws) == pytest.approx(1.0)
        assert res.argmax_band


def test_extend_twist_matches_psi(twist_pair, twist_config):
    from moebius_rigidity.experiment_cli import build_twist

    _, psi, _ = build_twist(twist_config)
    x = np.array([0.25, 0.0])
    res = CC.circumcenter_extend(twist_pair, x)
    assert P.p_distance(twist_pair.space1, res.F_x, psi(x)) <= 1e-2
    assert res.r_x <= 2e-3
    assert res.balance_residual_at_Fx <= 1e-3
    assert res.balance_residual_at_x <= 1e-3


def test_extend_gated(bump_pair):
    with pytest.raises(NotMoebiusEquivalent):
        CC.circumcenter_extend(bump_pair, (0.1, 0.1))


def test_dM_pushforward(trivial_pair, twist_pair):
    x, y = np.array([0.1, 0.2]), np.array([-0.2, 0.1])
    assert CC.dM_pushforward(trivial_pair, x, x)[0] <= 1e-10
    v, _ = CC.dM_pushforward(trivial_pair, x, y)
    # max over a 64-point sample sits slightly below d(x, y)
    assert 0 <= H.h_distance(x, y) - v <= 5e-3
    v, _ = CC.dM_pushforward(twist_pair, x, y)
    m0, m1 = MC.pair_visuals(twist_pair, x, y)
    assert_allclose(v, dM_distance(m1, m0, tol_moebius=None), atol=1e-4)


def test_r_profile_and_qisom_trivial(trivial_pair):
    grid = [np.array([0.1, 0.0]), np.array([0.0, 0.3]), np.array([-0.2, -0.1])]
    prof = CC.r_profile(trivial_pair, grid)
    assert np.all(prof.r <= 1e-6)
    cache = {tuple(np.round(r.x, 15)): r for r in prof.results}
    q = CC.qisom_check(trivial_pair, list(itertools.combinations(grid, 2)), cache)
    assert q["isometry_defect"] <= 1e-5
    assert q["sandwich_ok"] and q["bilipschitz_ok"]


def test_lipschitz_surrogate(twist_pair, rng):
    from moebius_rigidity.suites import rand_point

    pairs = [(rand_point(rng, 0.6), rand_point(rng, 0.6)) for _ in range(4)]
    assert CC.lipschitz_surrogate(twist_pair, pairs, np.zeros(2))["max_excess"] <= 2e-3


def test_adjoint_trivial(trivial_pair):
    rep = CC.dF_adjoint_check(trivial_pair, np.array([0.1, 0.1]), h=1e-3)
    assert rep["residual"] <= 1e-6


def test_cone_analysis(trivial_pair):
    x0 = trivial_pair.space1.field.x0
    with pytest.raises(InvalidParameter):
        CC.cone_analysis(trivial_pair, x0, 1.0, 0.5, 1.0)
    eps = [CC.cone_analysis(trivial_pair, x0, 1.0, 0.5, t).eps_t for t in (5.0, 10.0, 15.0)]
    assert eps[0] > eps[1] > eps[2]
    slack = 2 * math.pi / trivial_pair.n
    assert eps[1] <= 2 * math.asin(math.exp(2 - 10)) + slack
    rep = CC.cone_analysis(trivial_pair, x0, 1.0, 0.5, 5.0, with_case=True)
    assert rep.case_label in ("case1", "case2", "case3")
    assert len(rep.classification) == trivial_pair.n


def test_write_rows(tmp_path, trivial_pair):
    res = CC.circumcenter_extend(trivial_pair, (0.0, 0.2))
    CC.write_rows(tmp_path / "r.csv", [res], CC.ExtensionResult.COLUMNS)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].split(",") == list(CC.ExtensionResult.COLUMNS)
    assert len(lines) == 2
