"""Boundary map of a compact deformation and the induced geodesic conjugacy.

Both boundaries are parameterized by the same circle, so the boundary map
f is the identity on angles.  For Moebius f the conjugacy sends the
g0-geodesic (eta, xi) through x to the g1-geodesic (eta, xi), with foot
point fixed by the condition that the derivative of f*rho_foot with
respect to rho_x at xi equals one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels as K
from . import hyperbolic_closed_form as H
from . import perturbed_manifold as P
from .boundary_core import BoundarySample, SampledMetric, log_moebius_defect
from .errors import InvalidParameter, NotMoebiusEquivalent
from .hyperbolic_closed_form import UnitTangent, as_complex, as_xy


@dataclass(frozen=True, eq=False)
class DeformationPair:
    space0: P.PerturbedSpace
    space1: P.PerturbedSpace
    sample: BoundarySample
    tol_moebius: float = 1e-3
    _cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        if self.space0.kind != "pure":
            raise InvalidParameter("space0 must be the undeformed hyperbolic plane")

    @property
    def n(self) -> int:
        return len(self.sample)

    @property
    def chart_angles(self) -> np.ndarray:
        if "om" not in self._cache:
            self._cache["om"] = np.asarray(self.space1.field.chart_angle(self.sample.points))
        return self._cache["om"]

    def kappa1(self) -> np.ndarray:
        if "k1" not in self._cache:
            self._cache["k1"] = self.space1.kappa_matrix(self.chart_angles)
        return self._cache["k1"]

    def kappa0(self) -> np.ndarray:
        if "k0" not in self._cache:
            e = np.exp(1j * self.chart_angles)
            with np.errstate(divide="ignore"):
                k0 = 2.0 * np.log(np.abs(e[:, None] - e[None, :]) / 2.0)
            np.fill_diagonal(k0, 0.0)
            self._cache["k0"] = k0
        return self._cache["k0"]

    @property
    def defect(self) -> float:
        """Sample Moebius defect of f; basepoint free since it only involves pair constants."""
        if "defect" not in self._cache:
            self._cache["defect"] = log_moebius_defect(0.5 * self.kappa0(), 0.5 * self.kappa1())
        return self._cache["defect"]

    def require_moebius(self):
        if self.defect > self.tol_moebius:
            raise NotMoebiusEquivalent(
                f"boundary map has Moebius defect {self.defect:.3e} > {self.tol_moebius:.1e}")


@dataclass(frozen=True)
class ConjugacyResult:
    input: UnitTangent
    output: UnitTangent
    foot: np.ndarray
    derivative_residual: float
    xi: float = 0.0
    eta: float = 0.0
    foot_busemann: float = 0.0


def boundary_map(pair: DeformationPair, xi):
    return xi


def boundary_map_inverse(pair: DeformationPair, xi):
    return xi


def visual0_sample(pair: DeformationPair, x) -> SampledMetric:
    return SampledMetric(pair.sample, H.visual_matrix(x, pair.sample.points))


def pair_visuals(pair: DeformationPair, x, y) -> tuple[SampledMetric, SampledMetric]:
    """(rho^{g0}_x, f* rho^{g1}_y) on the shared sample."""
    rho0 = visual0_sample(pair, x)
    sp = pair.space1
    beta = sp.beta_chart(sp.field.chart(y), pair.chart_angles)
    rho1 = SampledMetric(pair.sample, P.visual_from_parts(beta, pair.kappa1()))
    return rho0, rho1


def deformation_moebius_defect(pair: DeformationPair, probes) -> float:
    from .boundary_core import moebius_defect

    return max(moebius_defect(*pair_visuals(pair, x, x)) for x in probes)


def _aux_pair(pair: DeformationPair, xi: float) -> tuple[int, int]:
    """Nearest sample points on each side of xi at angular distance >= 2pi/N."""
    pts = pair.sample.points
    d = np.mod(pts - xi, 2 * np.pi)
    gap = 2 * np.pi / pair.n
    ahead = np.flatnonzero(d >= gap - 1e-12)
    behind = np.flatnonzero(2 * np.pi - d >= gap - 1e-12)
    j = int(ahead[np.argmin(d[ahead])])
    k = int(behind[np.argmax(d[behind])])
    if j == k:
        raise InvalidParameter("sample too small for auxiliary points")
    return j, k


def _log_visual0(x, a, b) -> float:
    z = as_complex(x)
    ea, eb = H.ideal(a), H.ideal(b)
    return math.log(abs(ea - eb) / 2 * (1 - abs(z) ** 2) / (abs(ea - z) * abs(eb - z)))


class _ThreePoint:
    """log d(f*rho^1_y)/d(rho^0_x) at xi by the three-point formula."""

    def __init__(self, pair, x, xi):
        self.pair = pair
        sp = pair.space1
        self.j, self.k = _aux_pair(pair, xi)
        pts = pair.sample.points
        om = pair.chart_angles
        self.om = (sp.field.chart_angle(xi), om[self.j], om[self.k])
        k1 = sp.kappa_chart([self.om[0], self.om[0], self.om[1]],
                            [self.om[1], self.om[2], self.om[2]])
        self.k_xj, self.k_xk, self.k_jk = k1
        self.l0 = (_log_visual0(x, xi, pts[self.j]), _log_visual0(x, xi, pts[self.k]),
                   _log_visual0(x, pts[self.j], pts[self.k]))

    def __call__(self, w: complex, beta_xi: float) -> float:
        bj, bk = self.pair.space1.beta_chart(w, self.om[1:])
        l_xj = -0.5 * (beta_xi + bj - self.k_xj)
        l_xk = -0.5 * (beta_xi + bk - self.k_xk)
        l_jk = -0.5 * (bj + bk - self.k_jk)
        return (l_xj - self.l0[0]) + (l_xk - self.l0[1]) - (l_jk - self.l0[2])


def conjugate(pair: DeformationPair, v: UnitTangent) -> ConjugacyResult:
    pair.require_moebius()
    x = v.base
    xi = H.h_endpoint(v)
    eta = H.h_endpoint(v.reversed())
    sp = pair.space1
    fld = sp.field
    geo = P.bi_infinite(sp, boundary_map(pair, eta), boundary_map(pair, xi))
    # reference point: the candidate on the geodesic closest to x
    wx = fld.chart(x)
    cands = [K._line_offset(geo.y0, wx.real, wx.imag)[1]]
    if geo.entered:
        cands.append(geo.t_out + K._line_offset(geo.y_out, wx.real, wx.imag)[1])
        cands.append(0.5 * (geo.t_in + geo.t_out))

    def gap(t):
        y = geo.state_at(t)
        return H.h_distance(complex(y[0], y[1]), wx)

    t0 = min(cands, key=gap)
    tp = _ThreePoint(pair, x, xi)
    y0 = geo.state_at(t0)
    c = tp(complex(y0[0], y0[1]), geo.busemann_forward(t0))
    # moving a distance s toward xi multiplies the derivative at xi by e^s
    t_foot = t0 - c
    yf = geo.state_at(t_foot)
    bf = geo.busemann_forward(t_foot)
    res = abs(tp(complex(yf[0], yf[1]), bf))
    p, dp = fld.unchart_state(yf)
    return ConjugacyResult(v, UnitTangent(p, dp), p, float(res), float(xi), float(eta), float(bf))


def conjugate_feet(pair: DeformationPair, x) -> list[ConjugacyResult]:
    """Conjugacy images of the unit vectors from x toward every sample point."""
    key = ("feet", tuple(as_xy(x)))
    if key not in pair._cache:
        pair._cache[key] = [conjugate(pair, H.h_ray(x, t)) for t in pair.sample.points]
    return pair._cache[key]


def flow1(pair: DeformationPair, v: UnitTangent, t: float) -> UnitTangent:
    """g1 geodesic flow (hybrid evaluation)."""
    fld = pair.space1.field
    g = P.HybridGeodesic.from_state(pair.space1, fld.chart_state(v.base, v.dir))
    p, dp = g.point_at(t)
    return UnitTangent(p, dp)


def log_derivative_profile(pair: DeformationPair, x, y, thetas) -> np.ndarray:
    """log d(rho^0_x)/d(f*rho^1_y) at each angle: beta^1(y) - beta^0(x)."""
    sp = pair.space1
    b1 = P.busemann_values(sp, y, thetas)
    b0 = P.hyperbolic_busemann_values(sp, x, thetas)
    return b1 - b0


def _refine_extremum(pair, x, y, theta, sign):
    """Continuous maximization (sign=+1) or minimization of the log derivative near theta."""
    h = 2 * np.pi / pair.n

    def f(t):
        return -sign * log_derivative_profile(pair, x, y, [t])[0]

    res = minimize_scalar(f, bounds=(theta - h, theta + h), method="bounded",
                          options={"xatol": 1e-10})
    return float(np.mod(res.x, 2 * np.pi)), float(-sign * res.fun)


def maxmin_flip_check(pair: DeformationPair, x, y, refine: bool = True) -> dict:
    pair.require_moebius()
    pts = pair.sample.points
    phi = log_derivative_profile(pair, x, y, pts)
    imax, imin = int(np.argmax(phi)), int(np.argmin(phi))
    xs, vmax = float(pts[imax]), float(phi[imax])
    xm, vmin = float(pts[imin]), float(phi[imin])
    if refine:
        xs, vmax = _refine_extremum(pair, x, y, xs, +1)
        xm, vmin = _refine_extremum(pair, x, y, xm, -1)
    ix = H.h_involution(x, xs)
    iy = P.p_involution(pair.space1, y, boundary_map(pair, xs))
    foot = conjugate(pair, H.h_ray(x, xs)).foot
    dM = vmax
    ray = P.p_ray(pair.space1, y, xs)
    g = P.HybridGeodesic.from_state(pair.space1, pair.space1.field.chart_state(ray.base, ray.dir))
    ray_pt = g.point_at(max(dM, 0.0))[0]
    dist_yz = P.p_distance(pair.space1, y, foot)
    return {
        "argmax": imax,
        "argmin": imin,
        "argmax_angle": xs,
        "argmin_angle": xm,
        "dM": dM,
        "maxmin_sum": vmax + vmin,
        "argmin_is_involution": bool(imin == pair.sample.nearest(ix)),
        "argmin_involution_residual": abs(H.angle_diff(xm, ix)),
        "involution_commutes_residual": abs(H.angle_diff(boundary_map(pair, ix), iy)),
        "foot_distance_residual": abs(dist_yz - dM),
        "foot_on_ray_residual": H.h_distance(foot, ray_pt),
        "foot": np.asarray(foot),
    }
