import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from moebius_rigidity import hyperbolic_closed_form as H
from moebius_rigidity import moebius_conjugacy as MC
from moebius_rigidity import perturbed_manifold as P
from moebius_rigidity import suites
from moebius_rigidity.errors import NotMoebiusEquivalent


def test_boundary_map_identity(twist_pair):
    for xi in (0.0, 1.3, 5.9):
        assert MC.boundary_map(twist_pair, xi) == xi
        assert MC.boundary_map_inverse(twist_pair, xi) == xi


def test_pair_visuals_trivial(trivial_pair):
    x = np.array([0.2, -0.1])
    r0, r1 = MC.pair_visuals(trivial_pair, x, x)
    assert_allclose(r1.dist, r0.dist, atol=1e-6)


def test_pair_visuals_locality(bump_pair):
    # far from the support, rays toward the sample mostly miss it
    fld = bump_pair.space1.field
    x = H.h_geodesic_point(fld.x0, 2.0, 6.0)
    r0, r1 = MC.pair_visuals(bump_pair, x, x)
    assert r1.diameter() <= 1.0
    half = H.shadow_halfwidth(H.h_distance(x, fld.x0), fld.R)
    to_c = np.angle(H.recenter(H.as_complex(x), fld.z0))
    dirs = np.angle(H.recenter(H.as_complex(x), np.exp(1j * bump_pair.sample.points)))
    clear = np.abs(np.angle(np.exp(1j * (dirs - to_c)))) > half + 0.05
    # pair constants differ even for clear pairs, so compare the Busemann parts
    sp = bump_pair.space1
    b1 = P.busemann_values(sp, x, bump_pair.sample.points[clear])
    b0 = P.hyperbolic_busemann_values(sp, x, bump_pair.sample.points[clear])
    assert_allclose(b1, b0, atol=1e-5)


def test_moebius_defects(trivial_pair, twist_pair, bump_pair):
    assert trivial_pair.defect <= 1e-5
    assert twist_pair.defect <= 5e-4
    assert bump_pair.defect > 1e-2
    with pytest.raises(NotMoebiusEquivalent):
        bump_pair.require_moebius()
    with pytest.raises(NotMoebiusEquivalent):
        MC.conjugate(bump_pair, H.h_ray((0, 0), 1.0))


def test_defect_basepoint_free(twist_pair, rng):
    assert suites.defect_basepoint(twist_pair, rng, 3) <= 5e-4


def test_conjugate_trivial(trivial_pair):
    for x, xi in [((0.1, 0.2), 0.4), ((-0.3, 0.05), 3.0), ((0.0, 0.0), 5.5)]:
        v = H.h_ray(x, xi)
        r = MC.conjugate(trivial_pair, v)
        assert H.h_distance(r.foot, v.base) <= 1e-8
        assert_allclose(r.output.dir / np.hypot(*r.output.dir), v.dir / np.hypot(*v.dir), atol=1e-8)
        assert r.derivative_residual <= 1e-10


def test_conjugate_identity_outside(twist_pair, rng):
    vecs = suites.qualifying_vectors(twist_pair, rng, 5)
    out = suites.conjugacy_identity_outside(twist_pair, vecs)
    assert out["foot"] <= 1e-5
    assert out["direction"] <= 1e-5


def test_conjugate_maps_twist_geodesics(twist_pair, twist_config):
    from moebius_rigidity.experiment_cli import build_twist

    _, psi, dpsi = build_twist(twist_config)
    x = np.array([0.15, 0.1])
    v = H.h_ray(x, 2.2)
    r = MC.conjugate(twist_pair, v)
    # psi is an isometry inducing the identity on the boundary, so it is the conjugacy
    assert P.p_distance(twist_pair.space1, r.foot, psi(x)) <= 1e-6
    w = dpsi(x, v.dir)
    assert_allclose(r.output.dir / np.hypot(*r.output.dir), w / np.hypot(*w), atol=1e-6)


def test_flow_equivariance(twist_pair, rng):
    out = suites.flow_equivariance(twist_pair, rng, 4)
    assert out["foot"] <= 1e-4
    assert out["residual"] <= 1e-5


def test_maxmin_flip_check(twist_pair):
    rep = MC.maxmin_flip_check(twist_pair, np.array([0.2, 0.1]), np.array([-0.1, 0.3]))
    assert rep["foot_distance_residual"] <= 5e-3
    assert rep["foot_on_ray_residual"] <= 5e-3
    assert rep["involution_commutes_residual"] <= 5e-3
    assert rep["argmin_involution_residual"] <= 2 * math.pi / twist_pair.n


def test_log_derivative_profile_pure(trivial_pair):
    x, y = np.zeros(2), np.array([0.3, 0.0])
    th = np.linspace(0, 6, 7)
    prof = MC.log_derivative_profile(trivial_pair, x, y, th)
    want = [H.h_busemann(x, y, t) for t in th]
    assert_allclose(-prof, want, atol=1e-10)
