"""Verification suites shared by the CLI and the test-suite.

Each suite returns raw measurements (maximal residuals and the like);
``lemma_checks`` turns them into bounded checks for ``cmd_lemmas``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar

from . import circumcenter as CC
from . import hyperbolic_closed_form as H
from . import moebius_conjugacy as MC
from . import perturbed_manifold as P
from .boundary_core import (
    BoundarySample,
    SampledMetric,
    derivative_function,
    dM_distance,
    maxmin_lemma_residuals,
    multiplicativity_residual,
)


def rand_point(rng, rmax: float = 0.7) -> np.ndarray:
    r = rmax * math.sqrt(rng.uniform())
    t = rng.uniform(0, 2 * np.pi)
    return np.array([r * math.cos(t), r * math.sin(t)])


def rand_angle(rng) -> float:
    return float(rng.uniform(0, 2 * np.pi))


# ---------------------------------------------------------------- oracles


def pure_oracle_errors(rng, n: int, x0=(0.1, 0.05), R: float = 1.0) -> dict:
    """Max deviation of the numerical operations (kind=pure) from the closed forms."""
    sp = P.PerturbedSpace(P.MetricField("pure", x0, R, 0.0))
    err = dict.fromkeys(["distance", "busemann", "gromov", "visual", "ray", "endpoint",
                         "flow", "involution", "angle"], 0.0)
    for _ in range(n):
        x, y = rand_point(rng, 0.8), rand_point(rng, 0.8)
        xi, eta = rand_angle(rng), rand_angle(rng)
        err["distance"] = max(err["distance"], abs(P.p_distance(sp, x, y) - H.h_distance(x, y)))
        err["busemann"] = max(err["busemann"], abs(P.p_busemann(sp, x, y, xi) - H.h_busemann(x, y, xi)))
        err["gromov"] = max(err["gromov"], abs(P.p_gromov(sp, x, xi, eta) - H.h_gromov(x, xi, eta)))
        err["visual"] = max(err["visual"], abs(P.p_visual(sp, x, xi, eta) - H.h_visual(x, xi, eta)))
        v1, v0 = P.p_ray(sp, x, xi), H.h_ray(x, xi)
        err["ray"] = max(err["ray"], float(np.abs(v1.dir - v0.dir).max() / np.hypot(*v0.dir)))
        u = H.h_ray(x, eta)
        err["endpoint"] = max(err["endpoint"], abs(H.angle_diff(P.ideal_endpoint(sp, u), eta)))
        T = float(rng.uniform(0.5, 4.0))
        path = P.shoot(sp, u, T)
        err["flow"] = max(err["flow"], H.h_distance(path.points[-1], H.h_flow(u, T).base))
        err["involution"] = max(err["involution"],
                                abs(H.angle_diff(P.p_involution(sp, x, xi), H.h_involution(x, xi))))
        err["angle"] = max(err["angle"], abs(P.p_angle(sp, x, xi, eta) - H.h_angle(x, xi, eta)))
    return err


def twist_construction_errors(config) -> dict:
    from .experiment_cli import build_twist

    fld, psi, dpsi = build_twist(config)
    z0 = fld.z0
    grid = [H.as_xy(H.uncenter(z0, 0.45 * complex(a, b)))
            for a in np.linspace(-1, 1, 7) for b in np.linspace(-1, 1, 7) if a * a + b * b <= 1]
    inv = max(float(np.abs(psi(psi(p), inverse=True) - p).max()) for p in grid)
    h = 1e-6
    push = 0.0
    dps = 0.0
    for p in grid:
        J = np.column_stack([(psi(p + h * e) - psi(p - h * e)) / (2 * h) for e in np.eye(2)])
        Ja = np.column_stack([dpsi(p, e) for e in np.eye(2)])
        dps = max(dps, float(np.abs(J - Ja).max()))
        G0 = H.conformal_factor(p) ** 2 * np.eye(2)
        Ji = np.linalg.inv(J)
        G1_fd = Ji.T @ G0 @ Ji
        G1, _ = fld.evaluate(psi(p))
        push = max(push, float(np.abs(G1_fd - G1).max() / np.abs(G1).max()))
    return {"twist_inverse": inv, "twist_pushforward": push, "twist_dpsi": dps}


# ---------------------------------------------------------------- metric calculus


def metric_calculus(m1: SampledMetric, m2: SampledMetric) -> dict:
    df = derivative_function(m1, m2, tol_moebius=None)
    lem = maxmin_lemma_residuals(m1, m2, df=df)
    return {
        "maxmin": abs(df.maxmin_product() - 1.0),
        "dM": dM_distance(m1, m2, df=df),
        "multiplicativity": multiplicativity_residual(m1, m2, np.log(df.values)),
        "lemma": max(v for k, v in lem.items() if k not in ("argmax", "argmin") and np.isfinite(v)),
    }


def extremal_points(space: P.PerturbedSpace | None, x, y) -> tuple[float, float]:
    """Endpoints of the geodesic through x and y: the argmax and argmin of d rho_y / d rho_x."""
    if space is None:
        w = H.recenter(H.as_complex(x), H.as_complex(y))
        v = H.UnitTangent(x, [w.real, w.imag])
        return H.h_endpoint(v), H.h_endpoint(v.reversed())
    path = P.connect(space, x, y, n_nodes=2)
    v = H.UnitTangent(path.points[0], path.velocities[0])
    return P.ideal_endpoint(space, v), P.ideal_endpoint(space, v.reversed())


def refined_sample(sample: BoundarySample, extra) -> BoundarySample:
    """Sample with extra angles inserted (dropping uniform points closer than 1e-9 to them)."""
    pts = sample.points
    keep = np.ones(pts.size, bool)
    for a in extra:
        keep &= np.abs(H.angle_diff(pts, a)) > 1e-9
    return BoundarySample.from_angles(np.concatenate([pts[keep], np.asarray(extra, float)]))


def visual_pair_suite(space: P.PerturbedSpace | None, sample: BoundarySample, pts,
                      refine: bool = True) -> dict:
    """Metric-calculus residuals over pairs of visual metrics of one space.

    ``space=None`` uses the closed-form hyperbolic visual metrics.  With
    ``refine`` the sample also contains the two extremal points of the
    derivative, so max and min are attained on the sample.
    """
    worst = dict.fromkeys(["maxmin", "dM_vs_distance", "multiplicativity", "lemma"], 0.0)
    base = sample
    for x, y in pts:
        sample = refined_sample(base, extremal_points(space, x, y)) if refine else base
        if space is None:
            m1 = SampledMetric(sample, H.visual_matrix(x, sample.points))
            m2 = SampledMetric(sample, H.visual_matrix(y, sample.points))
            d = H.h_distance(x, y)
        else:
            m1 = P.p_visual_sample(space, x, sample)
            m2 = P.p_visual_sample(space, y, sample)
            d = P.p_distance(space, x, y)
        r = metric_calculus(m1, m2)
        worst["maxmin"] = max(worst["maxmin"], r["maxmin"])
        worst["dM_vs_distance"] = max(worst["dM_vs_distance"], abs(r["dM"] - d))
        worst["multiplicativity"] = max(worst["multiplicativity"], r["multiplicativity"])
        worst["lemma"] = max(worst["lemma"], r["lemma"])
    return worst


def busemann_derivative_relation(space: P.PerturbedSpace, sample: BoundarySample, x, y) -> float:
    """Multiplicativity residual of rho_x, rho_y with D = exp(B(x, y, .))."""
    m1 = P.p_visual_sample(space, x, sample)
    m2 = P.p_visual_sample(space, y, sample)
    logd = P.busemann_values(space, x, sample.points) - P.busemann_values(space, y, sample.points)
    return multiplicativity_residual(m1, m2, logd)


# ---------------------------------------------------------------- shadows and angles


def shadow_bound_excess(space: P.PerturbedSpace, rng, n: int) -> float:
    """max of rho_x(xi, eta) - e^{2R - d(x, x0)} over pairs in the shadow of B(x0, R)."""
    fld = space.field
    R = fld.R
    worst = -np.inf
    for _ in range(n):
        d = float(rng.uniform(R + 0.3, R + 4.0))
        x = H.h_geodesic_point(fld.x0, rand_angle(rng), d)
        ends = []
        for _k in range(2):
            q = H.h_geodesic_point(fld.x0, rand_angle(rng), float(rng.uniform(0, R)))
            path = P.connect(space, x, q, n_nodes=2)
            v = H.UnitTangent(path.points[0], path.velocities[0])
            ends.append(P.ideal_endpoint(space, v))
        if abs(H.angle_diff(ends[0], ends[1])) < 1e-12:
            continue
        rho = P.p_visual(space, x, ends[0], ends[1])
        worst = max(worst, rho - math.exp(2 * R - P.p_distance(space, x, fld.x0)))
    return float(worst)


def angle_sandwich(space: P.PerturbedSpace, rng, n: int) -> dict:
    """Violations of rho^b <= sin(angle / 2) <= rho (positive means violated)."""
    b = space.pinching_b
    lower = upper = -np.inf
    for _ in range(n):
        x = rand_point(rng, 0.7)
        xi, eta = rand_angle(rng), rand_angle(rng)
        rho = P.p_visual(space, x, xi, eta)
        s = math.sin(P.p_angle(space, x, xi, eta) / 2)
        lower = max(lower, rho ** b - s)
        upper = max(upper, s - rho)
    return {"lower": float(lower), "upper": float(upper)}


def eps_trend(pair: MC.DeformationPair, x0, R: float, theta0: float, ts=(5.0, 10.0, 15.0)) -> list:
    return [CC.cone_analysis(pair, x0, R, theta0, t).eps_t for t in ts]


# ---------------------------------------------------------------- conjugacy


def qualifying_vectors(pair: MC.DeformationPair, rng, n: int, margin: float = 0.05) -> list:
    """Unit vectors at points outside the support whose two endpoints avoid its shadow."""
    fld = pair.space1.field
    out = []
    while len(out) < n:
        x = H.h_geodesic_point(fld.x0, rand_angle(rng), float(rng.uniform(fld.R + 0.3, fld.R + 3.0)))
        half = H.shadow_halfwidth(H.h_distance(x, fld.x0), fld.R)
        to_c = H.recenter(H.as_complex(x), fld.z0)
        xi = rand_angle(rng)
        d = H.recenter(H.as_complex(x), H.ideal(xi))
        ang = abs(np.angle(d / to_c))
        if ang > half + margin and math.pi - ang > half + margin:
            out.append(H.h_ray(x, xi))
    return out


def conjugacy_identity_outside(pair: MC.DeformationPair, vecs) -> dict:
    foot = direction = res = 0.0
    for v in vecs:
        r = MC.conjugate(pair, v)
        foot = max(foot, H.h_distance(r.foot, v.base))
        u0 = v.dir / np.hypot(*v.dir)
        u1 = r.output.dir / np.hypot(*r.output.dir)
        direction = max(direction, float(np.abs(u1 - u0).max()))
        res = max(res, r.derivative_residual)
    return {"foot": foot, "direction": direction, "residual": res}


def flow_equivariance(pair: MC.DeformationPair, rng, n: int, rmax: float = 0.6) -> dict:
    worst = res = 0.0
    for _ in range(n):
        v = H.h_ray(rand_point(rng, rmax), rand_angle(rng))
        t = float(rng.uniform(0.3, 2.0))
        a = MC.conjugate(pair, H.h_flow(v, t))
        c = MC.conjugate(pair, v)
        b = MC.flow1(pair, c.output, t)
        worst = max(worst, P.p_distance(pair.space1, a.foot, b.base))
        res = max(res, a.derivative_residual, c.derivative_residual)
    return {"foot": worst, "residual": res}


def flip_geodesic(pair: MC.DeformationPair, rng, n: int) -> float:
    """Feet of conjugate(v) and conjugate(-v) lie on one g1-geodesic."""
    worst = 0.0
    for _ in range(n):
        v = H.h_ray(rand_point(rng, 0.6), rand_angle(rng))
        a = MC.conjugate(pair, v)
        b = MC.conjugate(pair, v.reversed())
        if H.h_distance(a.foot, b.foot) < 1e-9:
            continue
        g = P.HybridGeodesic.from_state(pair.space1, pair.space1.field.chart_state(a.foot, a.output.dir))
        s = H.h_distance(a.foot, b.foot)

        def gap(t):
            return H.h_distance(g.point_at(t)[0], b.foot)

        ts = np.linspace(-s - 1, s + 1, 81)
        ds = np.array([gap(t) for t in ts])
        k = int(np.argmin(ds))
        lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, len(ts) - 1)]
        r = minimize_scalar(gap, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        dmin = ds[k]
        worst = max(worst, min(dmin, r.fun))
    return worst


def maxmin_flip(pair: MC.DeformationPair, rng, n: int, rmax: float = 0.6) -> dict:
    keys = ["argmin_involution_residual", "involution_commutes_residual",
            "foot_distance_residual", "foot_on_ray_residual"]
    worst = dict.fromkeys(keys, 0.0)
    worst["argmin_mismatch"] = 0
    for _ in range(n):
        x, y = rand_point(rng, rmax), rand_point(rng, rmax)
        rep = MC.maxmin_flip_check(pair, x, y)
        for k in keys:
            worst[k] = max(worst[k], rep[k])
        worst["argmin_mismatch"] += int(not rep["argmin_is_involution"])
    return worst


def defect_basepoint(pair: MC.DeformationPair, rng, n: int = 3) -> float:
    vals = [MC.deformation_moebius_defect(pair, [rand_point(rng, 0.6)]) for _ in range(n)]
    return float(max(vals) - min(vals))


# ---------------------------------------------------------------- circumcenter


def dM_two_path(pair: MC.DeformationPair, rng, n: int) -> float:
    worst = 0.0
    for _ in range(n):
        x, y = rand_point(rng, 0.6), rand_point(rng, 0.6)
        v, _ = CC.dM_pushforward(pair, x, y)
        m0, m1 = MC.pair_visuals(pair, x, y)
        worst = max(worst, abs(v - dM_distance(m1, m0, tol_moebius=None)))
    return worst


def lipschitz_pairs(pair: MC.DeformationPair, rng, n: int, y0=None) -> float:
    y0 = np.zeros(2) if y0 is None else y0
    pairs = [(rand_point(rng, 0.6), rand_point(rng, 0.6)) for _ in range(n)]
    return CC.lipschitz_surrogate(pair, pairs, y0)["max_excess"]


# ---------------------------------------------------------------- assembly


def lemma_checks(pair: MC.DeformationPair, config, N: int) -> list:
    """Invariant suites of every module against one scenario at one sample size."""
    from .experiment_cli import Check

    rng = np.random.default_rng(config.seed + N)
    n = config.probes_pairs
    sp = pair.space1
    tag = f"N{N}"
    out = []
    pts = [(rand_point(rng, 0.5), rand_point(rng, 0.5)) for _ in range(max(2, n // 3))]
    mc = visual_pair_suite(sp, pair.sample, pts)
    moebius = pair.defect <= pair.tol_moebius
    out.append(Check(f"{tag}_maxmin_product", mc["maxmin"], 1e-4))
    out.append(Check(f"{tag}_multiplicativity", mc["multiplicativity"], 1e-4))
    out.append(Check(f"{tag}_maxmin_lemma", mc["lemma"], 5e-3))
    out.append(Check(f"{tag}_busemann_derivative",
                     busemann_derivative_relation(sp, pair.sample, *pts[0]), 1e-4))
    if not pair.space1.curvature_ok:
        # the angle and shadow lemmas need K <= -1; record the violation that gates them
        out.append(Check(f"{tag}_curvature_gate", sp.K_max, -1 + config.tol_curv, ">=",
                         note="K <= -1 fails; angle and shadow lemmas skipped"))
    else:
        sh = shadow_bound_excess(sp, rng, max(3, n // 2))
        out.append(Check(f"{tag}_shadow_bound", sh, 1e-6))
        ang = angle_sandwich(sp, rng, n)
        out.append(Check(f"{tag}_angle_lower", ang["lower"], 1e-4))
        out.append(Check(f"{tag}_angle_upper", ang["upper"], 1e-4))
    eps = eps_trend(pair, sp.field.x0, sp.field.R, 0.7)
    out.append(Check(f"{tag}_eps_decrease", eps[-1] - eps[0], 0.0, "<=", note=" ".join(f"{e:.3e}" for e in eps)))
    if not moebius:
        # a generic deformation must be detected as non-Moebius
        out.append(Check(f"{tag}_moebius_defect_detected", pair.defect, 10 * pair.tol_moebius, ">=",
                         note="non-Moebius boundary map; conjugacy suites skipped"))
        return out
    out.append(Check(f"{tag}_defect_basepoint", defect_basepoint(pair, rng), 5e-4))
    ident = conjugacy_identity_outside(pair, qualifying_vectors(pair, rng, n))
    out.append(Check(f"{tag}_conjugacy_identity_outside", max(ident["foot"], ident["direction"]), 1e-5))
    fe = flow_equivariance(pair, rng, max(3, n // 2))
    out.append(Check(f"{tag}_flow_equivariance", fe["foot"], 1e-4))
    out.append(Check(f"{tag}_derivative_residual", max(fe["residual"], ident["residual"]), 1e-5))
    out.append(Check(f"{tag}_flip_same_geodesic", flip_geodesic(pair, rng, 3), 1e-6))
    mf = maxmin_flip(pair, rng, max(2, n // 4))
    out.append(Check(f"{tag}_flip_part_ii", max(mf["foot_distance_residual"], mf["foot_on_ray_residual"]), 5e-3))
    out.append(Check(f"{tag}_flip_involution", mf["involution_commutes_residual"], 5e-3))
    out.append(Check(f"{tag}_dM_two_path", dM_two_path(pair, rng, 3), 1e-4))
    out.append(Check(f"{tag}_lipschitz_surrogate", lipschitz_pairs(pair, rng, n), 2e-3))
    grid = config.probe_grid()[:4]
    prof = CC.r_profile(pair, grid, config.extend_options())
    out.append(Check(f"{tag}_r_spread", prof.spread, 5e-3))
    out.append(Check(f"{tag}_balance_certificate",
                     max(r.balance_residual_at_Fx for r in prof.results), 1e-3))
    for r in prof.results:
        if len(r.balanced_weights) == 2:
            out.append(Check(f"{tag}_case1_r", r.r_x, 5e-3))
            break
    return out
