"""The deformed plane (X, g1): g1 equals the hyperbolic metric outside a ball.

Geodesics are traced in the chart centred at the support centre x0.  Rays
and bi-infinite geodesics are hyperbolic outside the support, so their
Busemann functions reduce to an arclength plus a hyperbolic Busemann
function at the exit point.  Normalizing every Busemann function so that
it agrees with the hyperbolic one near its ideal point gives exact
expressions for Gromov products and visual metrics; the truncated-limit
evaluators are kept as independent cross-checks.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels as K
from . import hyperbolic_closed_form as H
from .boundary_core import BoundarySample, SampledMetric
from .errors import (
    BvpFailure,
    CurvatureViolation,
    InfiniteGromovProduct,
    IntegrationFailure,
    InvalidParameter,
    LimitNotConverged,
)
from .hyperbolic_closed_form import UnitTangent, as_complex, as_xy

KINDS = {"pure": K.PURE, "conformal_bump": K.CONFORMAL, "pullback_twist": K.TWIST}


@dataclass(frozen=True)
class MetricField:
    kind: str = "pure"
    x0: tuple = (0.0, 0.0)
    R: float = 1.0
    amplitude: float = 0.0
    order: int = 3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameter(f"unknown metric kind {self.kind!r}")
        if not self.R > 0:
            raise InvalidParameter("support radius must be positive")
        object.__setattr__(self, "x0", tuple(float(c) for c in as_xy(self.x0)))
        if abs(self.z0) >= 1:
            raise InvalidParameter("support centre outside the disk")
        if self.kind == "pullback_twist" and self.order != 3:
            raise InvalidParameter("only the C3 smoothstep twist profile (order 3) is built in")
        if self.kind == "conformal_bump" and self.order < 3:
            raise InvalidParameter("bump exponent below 3 gives a metric that is not C2")

    @property
    def z0(self) -> complex:
        return complex(*self.x0)

    @property
    def code(self) -> int:
        return KINDS[self.kind]

    def params(self, ode_tol=1e-12, exit_radius=None, max_arc=60.0) -> np.ndarray:
        re = self.R if exit_radius is None else max(float(exit_radius), self.R)
        return np.array([self.code, self.R, self.amplitude, float(self.order),
                         math.tanh(self.R / 2), math.tanh(re / 2), ode_tol,
                         ode_tol * 1e-2, max_arc])

    # chart maps -------------------------------------------------------
    def chart(self, p) -> complex:
        return H.recenter(self.z0, as_complex(p))

    def unchart(self, w: complex) -> np.ndarray:
        return as_xy(H.uncenter(self.z0, w))

    def _dh(self, z: complex) -> complex:
        z0 = self.z0
        return (1 - abs(z0) ** 2) / (1 - z0.conjugate() * z) ** 2

    def chart_state(self, p, v) -> np.ndarray:
        z = as_complex(p)
        w = self.chart(z)
        dw = self._dh(z) * complex(v[0], v[1])
        return np.array([w.real, w.imag, dw.real, dw.imag])

    def unchart_state(self, y) -> tuple[np.ndarray, np.ndarray]:
        p = self.unchart(complex(y[0], y[1]))
        dp = complex(y[2], y[3]) / self._dh(as_complex(p))
        return p, np.array([dp.real, dp.imag])

    def chart_angle(self, theta):
        th = np.asarray(theta, float)
        om = np.angle(H.recenter(self.z0, np.exp(1j * th)))
        return om if om.ndim else float(om)

    def unchart_angle(self, omega):
        om = np.asarray(omega, float)
        th = np.mod(np.angle(H.uncenter(self.z0, np.exp(1j * om))), 2 * np.pi)
        return th if th.ndim else float(th)

    def support_distance(self, p) -> float:
        return H.h_distance(self.x0, p)

    def in_support(self, p) -> bool:
        return self.support_distance(p) <= self.R

    # metric in disk coordinates ----------------------------------------
    def evaluate(self, point) -> tuple[np.ndarray, np.ndarray]:
        """g_ij and dG[k, i, j] = d_k g_ij in disk coordinates."""
        z = as_complex(point)
        w = self.chart(z)
        f = K.fields_batch(self.params(), np.array([[w.real, w.imag]]))[0]
        Gw = np.array([[f[0], f[1]], [f[1], f[2]]])
        dGw = np.array([[[f[3], f[4]], [f[4], f[5]]], [[f[6], f[7]], [f[7], f[8]]]])
        z0 = self.z0
        hp = self._dh(z)
        hpp = 2 * z0.conjugate() * (1 - abs(z0) ** 2) / (1 - z0.conjugate() * z) ** 3

        def cmat(c):
            return np.array([[c.real, -c.imag], [c.imag, c.real]])

        Dh = cmat(hp)
        dDh = [cmat(hpp), cmat(1j * hpp)]
        G = Dh.T @ Gw @ Dh
        dG = np.empty((2, 2, 2))
        for k in range(2):
            dGw_k = dGw[0] * Dh[0, k] + dGw[1] * Dh[1, k]
            dG[k] = dDh[k].T @ Gw @ Dh + Dh.T @ Gw @ dDh[k] + Dh.T @ dGw_k @ Dh
        return G, dG


def christoffel_from_metric(G: np.ndarray, dG: np.ndarray) -> np.ndarray:
    """Gamma[k, i, j] from g and dG[k, i, j] = d_k g_ij."""
    first = 0.5 * (np.einsum("ilj->lij", dG) + np.einsum("jli->lij", dG) - dG)
    return np.einsum("kl,lij->kij", np.linalg.inv(G), first)


def _christoffel_chart(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized symbols from the (n, 9) field array; returns (g, Gamma[n,k,i,j])."""
    n = F.shape[0]
    g = np.empty((n, 2, 2))
    g[:, 0, 0], g[:, 0, 1], g[:, 1, 0], g[:, 1, 1] = F[:, 0], F[:, 1], F[:, 1], F[:, 2]
    dG = np.empty((n, 2, 2, 2))
    for k in range(2):
        o = 3 + 3 * k
        dG[:, k, 0, 0], dG[:, k, 0, 1], dG[:, k, 1, 0], dG[:, k, 1, 1] = (
            F[:, o], F[:, o + 1], F[:, o + 1], F[:, o + 2])
    first = 0.5 * (np.einsum("nilj->nlij", dG) + np.einsum("njli->nlij", dG) - dG)
    return g, np.einsum("nkl,nlij->nkij", np.linalg.inv(g), first)


def curvature_chart(prm: np.ndarray, W: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Gaussian curvature at chart points from central differences of the symbols."""
    W = np.atleast_2d(np.asarray(W, float))
    g, Gam = _christoffel_chart(K.fields_batch(prm, W))
    dGam = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        _, gp = _christoffel_chart(K.fields_batch(prm, W + e))
        _, gm = _christoffel_chart(K.fields_batch(prm, W - e))
        dGam.append((gp - gm) / (2 * h))
    # R^l_{212} = d1 G^l_22 - d2 G^l_12 + G^l_1m G^m_22 - G^l_2m G^m_12
    Rl = (dGam[0][:, :, 1, 1] - dGam[1][:, :, 0, 1]
          + np.einsum("nlm,nm->nl", Gam[:, :, 0, :], Gam[:, :, 1, 1])
          - np.einsum("nlm,nm->nl", Gam[:, :, 1, :], Gam[:, :, 0, 1]))
    R1212 = g[:, 0, 0] * Rl[:, 0] + g[:, 0, 1] * Rl[:, 1]
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
    return R1212 / det


def support_grid(R: float, n: int = 100) -> np.ndarray:
    """n*n chart points in polar layout covering the support ball."""
    r = R * (np.arange(n) + 0.5) / n
    ang = 2 * np.pi * np.arange(n) / n
    s = np.tanh(r / 2)
    return np.column_stack([np.outer(s, np.cos(ang)).ravel(), np.outer(s, np.sin(ang)).ravel()])


@dataclass(frozen=True)
class GeodesicPath:
    """Nodes (s, x, y, vx, vy) in disk coordinates."""

    nodes: np.ndarray
    forward_ideal: float | None = None
    backward_ideal: float | None = None

    @property
    def length(self) -> float:
        return float(self.nodes[-1, 0])

    @property
    def points(self) -> np.ndarray:
        return self.nodes[:, 1:3]

    @property
    def velocities(self) -> np.ndarray:
        return self.nodes[:, 3:5]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "x", "y", "vx", "vy"])
            for row in self.nodes:
                w.writerow([repr(float(v)) for v in row])


class HybridGeodesic:
    """A g1-geodesic stored as hyperbolic pieces around one support passage.

    Arclength is measured from the start state ``y0`` (chart coordinates);
    negative times run backwards along the incoming hyperbolic part.
    """

    def __init__(self, space: "PerturbedSpace", y0, entered, t_in, y_in, t_out, y_out):
        self.space = space
        self.y0 = np.asarray(y0, float)
        self.entered = bool(entered)
        self.t_in = float(t_in)
        self.y_in = np.asarray(y_in, float)
        self.t_out = float(t_out)
        self.y_out = np.asarray(y_out, float)

    @classmethod
    def from_state(cls, space, y0):
        entered, t_in, y_in, t_out, y_out, st = K.trace(space.prm, np.asarray(y0, float))
        if st != K.OK:
            raise IntegrationFailure(f"integration failed with status {st}")
        return cls(space, y0, entered, t_in, y_in, t_out, y_out)

    def state_at(self, t: float) -> np.ndarray:
        if not self.entered or t <= self.t_in:
            return K.pure_flow(self.y0, t)
        if t >= self.t_out:
            return K.pure_flow(self.y_out, t - self.t_out)
        y, s, st, _, _ = K.integrate(self.space.prm, self.y_in, 1, t - self.t_in, 0.0, 0.0, False)
        if st != K.OK:
            raise IntegrationFailure(f"integration failed with status {st}")
        return y

    def point_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        return self.space.field.unchart_state(self.state_at(t))

    def forward_chart_angle(self) -> float:
        return K.endpoint_angle(self.y_out)

    def backward_chart_angle(self) -> float:
        y = self.y0.copy()
        y[2:] *= -1
        return K.endpoint_angle(y)

    def busemann_forward(self, t: float) -> float:
        """Normalized Busemann function of the forward endpoint at time t."""
        om = self.forward_chart_angle()
        return (self.t_out - t) + K.busemann0(om, self.y_out[0], self.y_out[1])


@dataclass(frozen=True, eq=False)
class PerturbedSpace:
    field: MetricField
    ode_tol: float = 1e-12
    bvp_tol: float = 1e-11
    R_max: float = 25.0
    limit_tol: float = 1e-7
    curv_tol: float = 1e-3
    strict_curvature: bool = True
    curvature_grid: int = 100
    K_min: float = field(init=False)
    K_max: float = field(init=False)
    pinching_b: float = field(init=False)
    _cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.R_max > self.field.R + 5:
            raise InvalidParameter("R_max must exceed R + 5")
        Kv = curvature_chart(self.prm, support_grid(self.field.R, self.curvature_grid))
        kmin, kmax = float(Kv.min()), float(Kv.max())
        object.__setattr__(self, "K_min", kmin)
        object.__setattr__(self, "K_max", kmax)
        object.__setattr__(self, "pinching_b", math.sqrt(max(1.0, -kmin)))
        if self.strict_curvature and kmax > -1.0 + self.curv_tol:
            raise CurvatureViolation(f"max curvature {kmax:.4f} exceeds -1 + {self.curv_tol}")

    @cached_property
    def prm(self) -> np.ndarray:
        return self.field.params(self.ode_tol)

    @property
    def kind(self) -> str:
        return self.field.kind

    @property
    def curvature_ok(self) -> bool:
        return self.K_max <= -1.0 + self.curv_tol

    # ---- chart-level primitives ------------------------------------
    def _rays(self, w: complex, omegas, th0=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Directions, exit arclengths and exit states of rays from w.

        ``th0`` optionally warm-starts the direction search.
        """
        om = np.atleast_1d(np.asarray(omegas, float))
        if th0 is None:
            th0 = np.angle(H.recenter(w, np.exp(1j * om)))
        th0 = np.asarray(th0, float)
        th, res, st, tout, yout = K.ray_batch(self.prm, w.real, w.imag, om, th0,
                                              self.bvp_tol, 60)
        if np.any(st != K.OK):
            bad = np.flatnonzero(st != K.OK)
            th, tout, yout = th.copy(), tout.copy(), yout.copy()
            for i in bad:
                th[i], tout[i], yout[i] = self._ray_bracket(w, om[i])
        return th, tout, yout

    def _ray_bracket(self, w: complex, omega: float):
        """Fallback: bracket the direction on a coarse circle, then bisect."""
        def F(t):
            y = K.unit_state(self.prm, w.real, w.imag, t)
            ang, st = K.ray_endpoint(self.prm, y)
            if st != K.OK:
                raise IntegrationFailure("ray integration failed")
            return ang

        grid = np.linspace(0, 2 * np.pi, 65)
        ends = np.unwrap([F(t) for t in grid])
        target = omega + 2 * np.pi * np.round((ends[0] - omega) / (2 * np.pi))
        k = np.searchsorted(ends - target, 0.0)
        if k == 0 or k >= grid.size:
            raise BvpFailure(f"no direction reaches boundary angle {omega}")
        lo, hi = grid[k - 1], grid[k]
        flo = ends[k - 1] - target
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = K._wrap(F(mid) - omega)
            if abs(fm) < self.bvp_tol or hi - lo < 1e-15:
                break
            if (fm < 0) == (flo < 0):
                lo, flo = mid, fm
            else:
                hi = mid
        else:
            raise BvpFailure("bisection on ray direction did not converge")
        y = K.unit_state(self.prm, w.real, w.imag, mid)
        e, t_in, y_in, t_out, y_out, st = K.trace(self.prm, y)
        return mid, t_out, y_out

    def beta_chart(self, w: complex, omegas) -> np.ndarray:
        """Normalized Busemann functions at chart point w toward chart angles."""
        om = np.atleast_1d(np.asarray(omegas, float))
        th, tout, yout = self._rays(w, om)
        return tout + np.array([K.busemann0(o, y[0], y[1]) for o, y in zip(om, yout)])

    def _biinf_chart(self, om_eta: float, om_xi: float) -> HybridGeodesic:
        y, res, st, entered, t_in, t_out, y_out, kap = K.biinf_solve(
            self.prm, float(om_eta), float(om_xi), self.bvp_tol, 60)
        if st != K.OK:
            raise BvpFailure(f"bi-infinite geodesic solve failed (status {st}, residual {res:.2e})")
        if entered:
            y_in = K.pure_flow(y, t_in)
        else:
            y_in = y
        g = HybridGeodesic(self, y, entered, t_in, y_in, t_out, y_out)
        g.kappa = kap
        return g

    def kappa_chart(self, om_a, om_b) -> np.ndarray:
        """Pair constants beta_a(m) + beta_b(m), m on the geodesic (a, b); cached."""
        a = np.atleast_1d(np.asarray(om_a, float))
        b = np.atleast_1d(np.asarray(om_b, float))
        out = np.empty(a.size)
        todo = []
        for i, (p, q) in enumerate(zip(a, b)):
            key = ("kappa",) + ((p, q) if p <= q else (q, p))
            v = self._cache.get(key)
            if v is None:
                todo.append(i)
            else:
                out[i] = v
        if todo:
            idx = np.array(todo)
            kap, res, st = K.biinf_batch(self.prm, a[idx], b[idx], self.bvp_tol, 60)
            if np.any(st != K.OK):
                raise BvpFailure("bi-infinite geodesic solve failed")
            for i, v in zip(idx, kap):
                p, q = a[i], b[i]
                self._cache[("kappa",) + ((p, q) if p <= q else (q, p))] = float(v)
                out[i] = v
        return out

    def kappa_matrix(self, omegas) -> np.ndarray:
        om = np.asarray(omegas, float)
        n = om.size
        iu = np.triu_indices(n, 1)
        M = np.zeros((n, n))
        M[iu] = self.kappa_chart(om[iu[0]], om[iu[1]])
        return M + M.T

    def connect_chart(self, wx: complex, wy: complex) -> tuple[float, float]:
        """(initial chart direction at wx, g1 length) of the geodesic to wy."""
        if wx == wy:
            raise InvalidParameter("connect needs distinct points")
        th0 = float(np.angle(H.recenter(wx, wy)))
        L0 = H.h_distance(wx, wy)
        t_in = K.entry_time(np.array([wx.real, wx.imag, math.cos(th0), math.sin(th0)]),
                            self.prm[5])
        if t_in < 0 or t_in > L0:
            # the hyperbolic segment avoids the support, so it is the g1 geodesic
            return th0, L0
        th, miss, L, st = K.connect_solve(self.prm, wx.real, wx.imag, wy.real, wy.imag,
                                          th0, self.bvp_tol, 60)
        if st != K.OK:
            raise BvpFailure(f"connect failed (status {st}, miss {miss:.2e})")
        return th, L

    def unit_chart(self, w: complex, theta: float) -> np.ndarray:
        return K.unit_state(self.prm, w.real, w.imag, theta)


# ---------------------------------------------------------------- public API


def christoffel(space: PerturbedSpace, point) -> np.ndarray:
    G, dG = space.field.evaluate(point)
    return christoffel_from_metric(G, dG)


def curvature(space: PerturbedSpace, points) -> np.ndarray:
    P = np.atleast_2d(np.asarray(points, float))
    W = np.array([[space.field.chart(p).real, space.field.chart(p).imag] for p in P])
    return curvature_chart(space.prm, W)


def g1_norm(space: PerturbedSpace, point, v) -> float:
    G, _ = space.field.evaluate(point)
    v = np.asarray(v, float)
    return float(np.sqrt(v @ G @ v))


def g1_inner(space: PerturbedSpace, point, u, v) -> float:
    G, _ = space.field.evaluate(point)
    return float(np.asarray(u, float) @ G @ np.asarray(v, float))


def _check_unit(space, v: UnitTangent):
    n = g1_norm(space, v.base, v.dir)
    if abs(n - 1.0) > 1e-8:
        raise InvalidParameter(f"tangent vector has g1-norm {n}, expected 1")


def shoot(space: PerturbedSpace, v: UnitTangent, T: float) -> GeodesicPath:
    """Integrate the geodesic equation to arclength T, recording every step."""
    _check_unit(space, v)
    fld = space.field
    y0 = fld.chart_state(v.base, v.dir)
    if T <= 0:
        nodes = np.array([[0.0, *v.base, *v.dir]])
    else:
        prm = space.prm.copy()
        prm[8] = T + 1.0
        y, s, st, raw, cnt = K.integrate(prm, y0, 1, float(T), 0.0, 0.0, True)
        if st != K.OK:
            raise IntegrationFailure(f"step size underflow at s={s}")
        nodes = np.empty((cnt, 5))
        for i in range(cnt):
            p, dp = fld.unchart_state(raw[i, 1:])
            nodes[i] = [raw[i, 0], p[0], p[1], dp[0], dp[1]]
    fwd = ideal_endpoint(space, v)
    bwd = ideal_endpoint(space, v.reversed())
    return GeodesicPath(nodes, fwd, bwd)


def ideal_endpoint(space: PerturbedSpace, v: UnitTangent, exit_radius: float | None = None) -> float:
    """Forward endpoint: integrate until outside the exit ball, then closed form."""
    prm = space.prm if exit_radius is None else space.field.params(space.ode_tol, exit_radius)
    y0 = space.field.chart_state(v.base, v.dir)
    ang, st = K.ray_endpoint(prm, y0)
    if st != K.OK:
        raise IntegrationFailure(f"integration failed with status {st}")
    return space.field.unchart_angle(ang)


def connect(space: PerturbedSpace, x, y, n_nodes: int = 9) -> GeodesicPath:
    fld = space.field
    wx, wy = fld.chart(x), fld.chart(y)
    th, L = space.connect_chart(wx, wy)
    g = HybridGeodesic.from_state(space, space.unit_chart(wx, th))
    nodes = np.empty((n_nodes, 5))
    for i, t in enumerate(np.linspace(0.0, L, n_nodes)):
        p, dp = g.point_at(t)
        nodes[i] = [t, p[0], p[1], dp[0], dp[1]]
    nodes[-1, 1:3] = as_xy(y)
    return GeodesicPath(nodes, fld.unchart_angle(g.forward_chart_angle()),
                        fld.unchart_angle(g.backward_chart_angle()))


def p_distance(space: PerturbedSpace, x, y) -> float:
    zx, zy = as_complex(x), as_complex(y)
    if zx == zy:
        return 0.0
    fld = space.field
    return float(space.connect_chart(fld.chart(zx), fld.chart(zy))[1])


def p_ray(space: PerturbedSpace, x, xi) -> UnitTangent:
    fld = space.field
    w = fld.chart(x)
    th, _, _ = space._rays(w, [fld.chart_angle(xi)])
    p, dp = fld.unchart_state(space.unit_chart(w, th[0]))
    return UnitTangent(p, dp)


def p_ray_batch(space: PerturbedSpace, x, thetas) -> np.ndarray:
    """g1-unit directions (disk components) at x toward each boundary angle."""
    fld = space.field
    w = fld.chart(x)
    th, _, _ = space._rays(w, fld.chart_angle(np.asarray(thetas, float)))
    out = np.empty((th.size, 2))
    for i, t in enumerate(th):
        out[i] = fld.unchart_state(space.unit_chart(w, t))[1]
    return out


def busemann_values(space: PerturbedSpace, x, thetas) -> np.ndarray:
    """Normalized g1-Busemann functions at x (normalization shared with pair constants)."""
    fld = space.field
    return space.beta_chart(fld.chart(x), fld.chart_angle(np.asarray(thetas, float)))


def hyperbolic_busemann_values(space: PerturbedSpace, x, thetas) -> np.ndarray:
    """Hyperbolic Busemann functions at x in the same normalization as busemann_values."""
    fld = space.field
    w = fld.chart(x)
    om = np.atleast_1d(fld.chart_angle(np.asarray(thetas, float)))
    return np.array([K.busemann0(o, w.real, w.imag) for o in om])


def pair_constant(space: PerturbedSpace, xi, eta) -> float:
    fld = space.field
    return float(space.kappa_chart(fld.chart_angle(xi), fld.chart_angle(eta))[0])


def bi_infinite(space: PerturbedSpace, eta, xi) -> HybridGeodesic:
    """g1-geodesic from eta (at -infinity) to xi (at +infinity)."""
    fld = space.field
    return space._biinf_chart(fld.chart_angle(eta), fld.chart_angle(xi))


def _busemann_limit(space, x, y, xi):
    fld = space.field
    ray = HybridGeodesic.from_state(space, space.unit_chart(0j, space._rays(0j, [fld.chart_angle(xi)])[0][0]))
    vals = []
    for t in np.arange(4.0, space.R_max + 1e-9, 1.0):
        z = fld.unchart(complex(*ray.state_at(t)[:2]))
        vals.append(p_distance(space, x, z) - p_distance(space, y, z))
        if len(vals) >= 3 and abs(vals[-1] - vals[-2]) <= space.limit_tol:
            return _aitken(vals)
    raise LimitNotConverged(f"Busemann limit not converged by R_max={space.R_max}")


def _aitken(vals):
    a, b, c = vals[-3:]
    den = (c - b) - (b - a)
    if abs(den) < 1e-14 or abs(c - b) > abs(b - a):
        return float(c)
    return float(c - (c - b) ** 2 / den)


def p_busemann(space: PerturbedSpace, x, y, xi, method: str = "exact") -> float:
    if method == "limit":
        return _busemann_limit(space, x, y, xi)
    b = busemann_values(space, x, [xi])[0] - busemann_values(space, y, [xi])[0]
    return float(b)


def _gromov_limit(space, x, xi, eta):
    fld = space.field
    om = [fld.chart_angle(xi), fld.chart_angle(eta)]
    th, _, _ = space._rays(0j, om)
    rays = [HybridGeodesic.from_state(space, space.unit_chart(0j, t)) for t in th]
    vals = []
    for t in np.arange(4.0, space.R_max + 1e-9, 1.0):
        a = fld.unchart(complex(*rays[0].state_at(t)[:2]))
        b = fld.unchart(complex(*rays[1].state_at(t)[:2]))
        vals.append(0.5 * (p_distance(space, x, a) + p_distance(space, x, b) - p_distance(space, a, b)))
        if len(vals) >= 3 and abs(vals[-1] - vals[-2]) <= space.limit_tol:
            return _aitken(vals)
    raise LimitNotConverged(f"Gromov product limit not converged by R_max={space.R_max}")


def p_gromov(space: PerturbedSpace, x, xi, eta, method: str = "exact") -> float:
    if abs(H.angle_diff(xi, eta)) == 0.0:
        raise InfiniteGromovProduct("Gromov product of a boundary point with itself")
    if method == "limit":
        return _gromov_limit(space, x, xi, eta)
    b = busemann_values(space, x, [xi, eta])
    return float(max(0.5 * (b[0] + b[1] - pair_constant(space, xi, eta)), 0.0))


def p_visual(space: PerturbedSpace, x, xi, eta, method: str = "exact") -> float:
    return float(math.exp(-p_gromov(space, x, xi, eta, method)))


def visual_from_parts(beta: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    """Visual metric matrix from Busemann values at the base and pair constants."""
    g = 0.5 * (beta[:, None] + beta[None, :] - kappa)
    d = np.exp(-np.maximum(g, 0.0))
    np.fill_diagonal(d, 0.0)
    return d


def p_visual_sample(space: PerturbedSpace, x, sample: BoundarySample,
                    antipodal_tol: float = 1e-3) -> SampledMetric:
    om = space.field.chart_angle(sample.points)
    beta = space.beta_chart(space.field.chart(x), om)
    return SampledMetric(sample, visual_from_parts(beta, space.kappa_matrix(om)), antipodal_tol)


def p_involution(space: PerturbedSpace, x, xi) -> float:
    return ideal_endpoint(space, p_ray(space, x, xi).reversed())


def shadow_distance(space: PerturbedSpace, x, xi, center, radius=None) -> float:
    """min over t >= 0 of d_g1(center, gamma(t)) along the ray [x, xi)."""
    fld = space.field
    w = fld.chart(x)
    th, _, _ = space._rays(w, [fld.chart_angle(xi)])
    ray = HybridGeodesic.from_state(space, space.unit_chart(w, th[0]))

    def dist(t):
        p = fld.unchart(complex(*ray.state_at(t)[:2]))
        return p_distance(space, center, p)

    d0 = p_distance(space, x, center)
    ts = np.linspace(0.0, d0 + (radius or 0.0) + 2.0, 41)
    ds = np.array([dist(t) for t in ts])
    k = int(np.argmin(ds))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, ts.size - 1)]
    if hi > lo:
        res = minimize_scalar(dist, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        return float(min(res.fun, ds[k]))
    return float(ds[k])


def in_shadow(space: PerturbedSpace, x, xi, center, radius) -> bool:
    if p_distance(space, x, center) <= radius:
        return True
    return shadow_distance(space, x, xi, center, radius) <= radius


def p_angle(space: PerturbedSpace, x, xi, eta) -> float:
    if abs(H.angle_diff(xi, eta)) == 0.0:
        return 0.0
    u = p_ray(space, x, xi).dir
    v = p_ray(space, x, eta).dir
    c = g1_inner(space, x, u, v)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))
