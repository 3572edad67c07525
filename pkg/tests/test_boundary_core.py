import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from moebius_rigidity import boundary_core as B
from moebius_rigidity import hyperbolic_closed_form as H
from moebius_rigidity.errors import (
    InsufficientSample,
    InvalidParameter,
    InvalidQuadruple,
    NotAntipodalAtPoint,
    NotMoebiusEquivalent,
    SampleMismatch,
)


def visual(x, sample):
    return B.SampledMetric(sample, H.visual_matrix(x, sample.points))


@pytest.fixture(scope="module")
def s32():
    return B.BoundarySample.uniform(32, 0.1)


def test_sample_validation():
    with pytest.raises(InsufficientSample):
        B.BoundarySample(np.array([0.0, 1.0, 2.0]))
    with pytest.raises(InvalidParameter):
        B.BoundarySample(np.array([0.0, 2.0, 1.0, 3.0]))
    with pytest.raises(InvalidParameter):
        B.BoundarySample(np.array([0.0, 1.0, 2.0, 7.0]))
    s = B.BoundarySample.from_angles([7.0, -1.0, 0.5, 0.5, 3.0])
    assert len(s) == 4
    assert s.nearest(0.49) == 0


def test_metric_invariants(s32):
    d = H.visual_matrix((0, 0), s32.points)
    with pytest.raises(InvalidParameter):
        B.SampledMetric(s32, d[:-1, :-1])
    bad = d.copy()
    bad[0, 1] = 0.5
    with pytest.raises(InvalidParameter):
        B.SampledMetric(s32, bad)
    with pytest.raises(InvalidParameter):
        B.SampledMetric(s32, 1.5 * d)
    m = B.SampledMetric(s32, d)
    assert m.diameter() == pytest.approx(1.0)
    assert m.is_antipodal()


def test_csv_roundtrip(tmp_path, s32):
    m = visual((0.2, 0.1), s32)
    m.to_csv(tmp_path / "m.csv")
    m2 = B.SampledMetric.from_csv(tmp_path / "m.csv")
    assert m2.sample.same_as(m.sample)
    assert_allclose(m2.dist, m.dist, rtol=0, atol=0)


def test_cross_ratio_square():
    s = B.BoundarySample(np.array([0.0, 0.5, 1.0, 1.5]) * math.pi)
    m = visual((0, 0), s)
    assert_allclose(B.cross_ratio(m, 0, 1, 2, 3), 2.0, rtol=1e-14)
    with pytest.raises(InvalidQuadruple):
        B.cross_ratio(m, 0, 0, 2, 3)


@settings(max_examples=50, deadline=None)
@given(st.permutations(list(range(32))))
def test_cross_ratio_inverse(perm):
    s = B.BoundarySample.uniform(32, 0.1)
    m = visual((0.3, -0.2), s)
    i, j, k, l = perm[:4]
    assert_allclose(B.cross_ratio(m, i, j, k, l) * B.cross_ratio(m, i, j, l, k), 1.0, rtol=1e-12)


def test_moebius_defect_examples(s32):
    m1, m2 = visual((0, 0), s32), visual((0.4, -0.3), s32)
    assert B.moebius_defect(m1, m1) == 0.0
    assert B.moebius_defect(m1, m2) <= 1e-9
    d = m2.dist.copy()
    d[3, 7] *= 0.9
    d[7, 3] *= 0.9
    assert B.moebius_defect(m2, B.SampledMetric(s32, d)) > 1e-3
    with pytest.raises(SampleMismatch):
        B.moebius_defect(m1, visual((0, 0), B.BoundarySample.uniform(32)))


def test_log_defect_matches_brute_force(rng):
    s = B.BoundarySample.uniform(9)
    m1 = visual((0.1, 0.2), s)
    d = m1.dist * np.exp(0.05 * rng.standard_normal((9, 9)))
    d = np.minimum(0.5 * (d + d.T), 1.0)
    np.fill_diagonal(d, 0.0)
    m2 = B.SampledMetric(s, d)
    brute = 0.0
    for q in itertools.permutations(range(9), 4):
        brute = max(brute, abs(math.log(B.cross_ratio(m1, *q)) - math.log(B.cross_ratio(m2, *q))))
    assert_allclose(B.moebius_defect(m1, m2), brute, rtol=1e-12)


def test_derivative_is_exp_busemann(s32):
    x, y = np.array([0.1, 0.2]), np.array([-0.3, 0.25])
    m1, m2 = visual(x, s32), visual(y, s32)
    for i in (0, 5, 17):
        want = math.exp(H.h_busemann(x, y, s32.points[i]))
        assert_allclose(B.derivative(m1, m2, i), want, rtol=1e-10)
        assert_allclose(B.derivative(m1, m2, i, aux=(3, 20)), want, rtol=1e-10)
    assert_allclose(B.derivative(m1, m1, 4), 1.0)
    with pytest.raises(InvalidQuadruple):
        B.derivative(m1, m2, 3, aux=(3, 5))


def test_derivative_along_ray(s32):
    x = np.array([0.1, -0.1])
    xi = s32.points[9]
    for t in (0.5, 2.0):
        y = H.h_geodesic_point(x, xi, t)
        assert_allclose(B.derivative(visual(x, s32), visual(y, s32), 9), math.exp(t), rtol=1e-9)


def test_derivative_gate(s32):
    m1 = visual((0, 0), s32)
    d = m1.dist.copy()
    d[0, 5] = d[5, 0] = 0.3
    with pytest.raises(NotMoebiusEquivalent):
        B.derivative(m1, B.SampledMetric(s32, d), 2)


def test_derivative_function_extremes():
    # endpoints of the geodesic through x and y are on the sample, d(x, y) = 1
    s = B.BoundarySample.uniform(64)
    x = np.zeros(2)
    y = np.array([math.tanh(0.5), 0.0])
    df = B.derivative_function(visual(x, s), visual(y, s))
    assert_allclose(df.values.max(), math.e, rtol=1e-10)
    assert_allclose(df.values.min(), 1 / math.e, rtol=1e-10)
    assert df.maxmin_residual < 1e-10
    assert df.consistency_residual < 1e-10
    same = B.derivative_function(visual(x, s), visual(x, s))
    assert_allclose(same.values, 1.0, atol=1e-14)


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 0.8), st.floats(0, 6.28), st.floats(0, 0.8), st.floats(0, 6.28))
def test_dM_symmetric_and_isometric(r1, t1, r2, t2):
    x = np.array([r1 * math.cos(t1), r1 * math.sin(t1)])
    y = np.array([r2 * math.cos(t2), r2 * math.sin(t2)])
    w = H.recenter(complex(*x), complex(*y))
    if abs(w) < 1e-9:
        return
    v = H.UnitTangent(x, [w.real, w.imag])
    s = B.BoundarySample.from_angles(
        np.concatenate([B.BoundarySample.uniform(32).points,
                        [H.h_endpoint(v), H.h_endpoint(v.reversed())]]))
    m1, m2 = visual(x, s), visual(y, s)
    assert abs(B.dM_distance(m1, m2) - B.dM_distance(m2, m1)) <= 1e-9
    assert_allclose(B.dM_distance(m1, m2), H.h_distance(x, y), atol=1e-6)


def test_dM_zero(s32):
    m = visual((0.2, 0.3), s32)
    assert B.dM_distance(m, m) == 0.0


def test_antipode_of():
    s = B.BoundarySample.uniform(8)
    m = visual((0, 0), s)
    for i in range(8):
        assert B.antipode_of(m, i) == (i + 4) % 8
    half = B.SampledMetric(s, 0.5 * m.dist)
    with pytest.raises(NotAntipodalAtPoint):
        B.antipode_of(half, 0)


def test_antipode_off_center():
    s = B.BoundarySample.uniform(360)
    x = np.array([0.3, 0.2])
    m = B.SampledMetric(s, H.visual_matrix(x, s.points), antipodal_tol=2e-2)
    for i in (0, 90, 200):
        assert B.antipode_of(m, i) == s.nearest(H.h_involution(x, s.points[i]))


def test_multiplicativity_and_rescale(s32):
    m1 = visual((0.1, 0.0), s32)
    logd = 0.3 * np.cos(s32.points)  # not a derivative of any visual metric, still Moebius
    m2 = B.rescale(B.SampledMetric(s32, m1.dist, antipodal_tol=1.0), logd)
    assert B.multiplicativity_residual(m1, m2, logd) < 1e-12
    assert B.moebius_defect(m1, m2) < 1e-12


def test_maxmin_lemma_pure():
    s = B.BoundarySample.uniform(64)
    x, y = np.zeros(2), np.array([math.tanh(0.5), 0.0])
    res = B.maxmin_lemma_residuals(visual(x, s), visual(y, s))
    assert res["argmax"] == s.nearest(math.pi) or res["argmax"] == s.nearest(0.0)
    for k in ("forward_D", "forward_rho", "reverse_D", "reverse_rho"):
        assert res[k] <= 1e-9
