"""Circumcenter extension F of the boundary map, the function r and balance diagnostics.

F(x) minimizes y -> max_i B_g1(y, z_i, xi_i), where z_i is the conjugacy foot
of the g0-ray from x to xi_i.  Each piece is a Busemann function, convex along
g1-geodesics, with gradient minus the unit vector from y toward xi_i, so the
objective is a finite convex minimax solved by epsilon-active-set descent.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from . import hyperbolic_closed_form as H
from . import perturbed_manifold as P
from .boundary_core import BoundarySample
from .errors import InvalidParameter, MaxIterations
from .hyperbolic_closed_form import as_complex, as_xy
from .moebius_conjugacy import DeformationPair, conjugate_feet


# ---------------------------------------------------------------- min-norm point


def min_norm_point(points, tol: float = 1e-12, max_iter: int | None = None):
    """Wolfe's algorithm for the point of minimal norm in a convex hull.

    Returns (x, weights) with x = weights @ points.  The final corral is
    affinely independent, so at most three atoms survive in the plane.
    """
    Pm = np.atleast_2d(np.asarray(points, float))
    n, dim = Pm.shape
    if n == 0:
        raise InvalidParameter("min-norm point of an empty set")
    sq = np.einsum("ij,ij->i", Pm, Pm)
    scale = max(1.0, float(sq.max()))
    S = [int(np.argmin(sq))]
    lam = np.array([1.0])
    x = Pm[S[0]].copy()
    max_iter = max_iter or 50 * n + 50
    for _ in range(max_iter):
        j = int(np.argmin(Pm @ x))
        if x @ x - Pm[j] @ x <= tol * scale or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        for _minor in range(dim + 3):
            A = Pm[S]
            k = len(S)
            M = np.ones((k + 1, k + 1))
            M[:k, :k] = A @ A.T
            M[k, k] = 0.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            alpha = np.linalg.lstsq(M, rhs, rcond=None)[0][:k]
            if np.all(alpha > tol):
                lam = alpha
                break
            neg = alpha <= tol
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = lam[neg] / (lam[neg] - alpha[neg])
            theta = float(np.clip(np.nanmin(ratios), 0.0, 1.0))
            lam = theta * alpha + (1.0 - theta) * lam
            keep = lam > tol
            if not keep.any():
                keep[np.argmax(lam)] = True
            S = [s for s, kk in zip(S, keep) if kk]
            lam = lam[keep] / lam[keep].sum()
        x = lam @ Pm[S]
    w = np.zeros(n)
    w[S] = lam
    return x, w


def caratheodory_balance(directions) -> tuple[np.ndarray, float]:
    """Weights of the min-norm convex combination (at most 3 atoms) and its norm."""
    x, w = min_norm_point(directions)
    return w, float(np.hypot(*x))


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class ExtendOptions:
    grad_tol: float = 1e-5
    step_tol: float = 1e-8
    max_iter: int = 500
    armijo: float = 0.25
    band_delta: float | None = None
    delta_min: float = 1e-10
    polish: bool = True
    raise_on_max_iter: bool = True


@dataclass(frozen=True)
class ExtensionResult:
    x: np.ndarray
    F_x: np.ndarray
    r_x: float
    argmax_band: list
    balanced_weights: list
    balance_residual_at_x: float
    balance_residual_at_Fx: float
    optimizer_iters: int
    converged: bool = True

    COLUMNS = ("x", "y", "Fx", "Fy", "r", "band_size", "atoms", "weights",
               "balance_x", "balance_Fx", "iters", "converged")

    def row(self) -> list:
        atoms = " ".join(str(i) for i, _ in self.balanced_weights)
        wts = " ".join(f"{w:.12g}" for _, w in self.balanced_weights)
        return [f"{self.x[0]:.12g}", f"{self.x[1]:.12g}", f"{self.F_x[0]:.12g}",
                f"{self.F_x[1]:.12g}", f"{self.r_x:.12g}", len(self.argmax_band), atoms, wts,
                f"{self.balance_residual_at_x:.6e}", f"{self.balance_residual_at_Fx:.6e}",
                self.optimizer_iters, int(self.converged)]


@dataclass(frozen=True)
class ConeReport:
    t: float
    eps_t: float
    classification: list
    case_label: str | None = None
    x_t: np.ndarray | None = None

    COLUMNS = ("t", "eps_t", "n_C", "n_D", "n_outside", "case")

    def row(self) -> list:
        c = self.classification
        return [f"{self.t:.6g}", f"{self.eps_t:.12g}", c.count("in_C"), c.count("in_D"),
                c.count("outside"), self.case_label or ""]


def write_rows(path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow(r.row())


# ---------------------------------------------------------------- pieces


def band_delta(pair: DeformationPair, opts: ExtendOptions | None = None) -> float:
    if opts is not None and opts.band_delta is not None:
        return opts.band_delta
    return max(5e-3, 3.0 * pair.space1.limit_tol * pair.n)


def _foot_constants(pair, x) -> np.ndarray:
    return np.array([r.foot_busemann for r in conjugate_feet(pair, x)])


class _Objective:
    """Busemann pieces f_i(w) = beta_i(w) - beta_i(z_i) in the g1 chart."""

    def __init__(self, pair: DeformationPair, x):
        self.sp = pair.space1
        self.om = pair.chart_angles
        self.c = _foot_constants(pair, x)
        self.evals = 0
        self._last = None

    def _guess(self, w: complex):
        hyp = np.angle(H.recenter(w, np.exp(1j * self.om)))
        if self._last is None:
            return hyp
        w_prev, th_prev, hyp_prev = self._last
        return th_prev + H.angle_diff(hyp, hyp_prev)

    def values(self, w: complex):
        th, tout, yout = self.sp._rays(w, self.om, self._guess(w))
        self._last = (w, th, np.angle(H.recenter(w, np.exp(1j * self.om))))
        self.evals += 1
        b = tout + np.array([K.busemann0(o, y[0], y[1]) for o, y in zip(self.om, yout)])
        return b - self.c, th

    def frame(self, w: complex) -> np.ndarray:
        f = K.fields_batch(self.sp.prm, np.array([[w.real, w.imag]]))[0]
        return np.linalg.cholesky(np.array([[f[0], f[1]], [f[1], f[2]]]))

    def unit_dirs(self, w: complex, th) -> np.ndarray:
        """g1-unit chart vectors toward each sample point."""
        out = np.empty((len(th), 2))
        for i, t in enumerate(th):
            out[i] = K.unit_state(self.sp.prm, w.real, w.imag, t)[2:]
        return out

    def gradients(self, w, th, L) -> np.ndarray:
        """Gradients in the orthonormal frame L^T (rows)."""
        return -(self.unit_dirs(w, th) @ L)


def _newton_polish(obj: _Objective, w, vals, th, atoms, iters=8):
    """Solve f_i = f_j = f_k on three atoms by Newton in the chart."""
    i, j, k = atoms
    best = (float(vals.max()), w, vals, th)
    for _ in range(iters):
        L = obj.frame(w)
        G = L @ L.T
        U = obj.unit_dirs(w, th[[i, j, k]])
        dv = -(U @ G)  # differentials of the three pieces (covectors)
        J = np.array([dv[0] - dv[1], dv[0] - dv[2]])
        F = np.array([vals[i] - vals[j], vals[i] - vals[k]])
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or np.hypot(*step) > 0.1:
            break
        w_new = w + complex(step[0], step[1])
        if abs(w_new) >= 1:
            break
        v_new, th_new = obj.values(w_new)
        if v_new.max() > best[0] + 1e-13:
            break
        w, vals, th = w_new, v_new, th_new
        best = (float(vals.max()), w, vals, th)
        if np.hypot(*step) < 1e-15:
            break
    return best[1], best[2], best[3]


def _minimize(obj: _Objective, w0: complex, delta0: float, opts: ExtendOptions):
    w = complex(w0)
    vals, th = obj.values(w)
    delta = delta0
    alpha = 1.0
    it = 0
    converged = False
    while it < opts.max_iter:
        it += 1
        phi = float(vals.max())
        band = np.flatnonzero(vals >= phi - delta)
        L = obj.frame(w)
        g = obj.gradients(w, th[band], L)
        m, _ = min_norm_point(g)
        nm = float(np.hypot(*m))
        if nm <= opts.grad_tol:
            if delta <= opts.delta_min:
                converged = True
                break
            delta = max(delta * 0.1, opts.delta_min)
            continue
        d = np.linalg.solve(L.T, -m)  # chart direction, g1 length |m|
        a = min(2.0 * alpha, 1.0 / nm)
        accepted = False
        while a * nm >= opts.step_tol:
            w_new = w + a * complex(d[0], d[1])
            if abs(w_new) < 1:
                v_new, th_new = obj.values(w_new)
                if v_new.max() <= phi - opts.armijo * a * nm * nm:
                    accepted = True
                    break
            a *= 0.5
        if accepted:
            w, vals, th, alpha = w_new, v_new, th_new, a
        elif delta <= opts.delta_min:
            converged = True  # stationary up to the step tolerance
            break
        else:
            delta = max(delta * 0.1, opts.delta_min)
    return w, vals, th, it, converged


def _report_band(vals, delta):
    return np.flatnonzero(vals >= vals.max() - delta)


def _atoms_from(g, idx):
    _, wts = min_norm_point(g)
    keep = np.flatnonzero(wts > 0)
    return [(int(idx[k]), float(wts[k])) for k in keep], wts


def circumcenter_extend(pair: DeformationPair, x, opts: ExtendOptions | None = None,
                        start=None) -> ExtensionResult:
    """Minimize y -> d_M(f*rho_x, rho_y) over the deformed plane."""
    opts = opts or ExtendOptions()
    pair.require_moebius()
    x = np.asarray(as_xy(x))
    obj = _Objective(pair, x)
    fld = pair.space1.field
    w0 = fld.chart(x if start is None else start)
    delta = band_delta(pair, opts)
    w, vals, th, iters, converged = _minimize(obj, w0, delta, opts)
    if opts.polish:
        L = obj.frame(w)
        # candidates for the polish; steps that raise the max are rejected
        band = _report_band(vals, max(opts.delta_min, 1e-6))
        if band.size >= 3:
            g = obj.gradients(w, th[band], L)
            _, wts = min_norm_point(g)
            atoms = band[wts > 0]
            if atoms.size == 3:
                w, vals, th = _newton_polish(obj, w, vals, th, atoms)
    # certificate at the final point
    L = obj.frame(w)
    band = _report_band(vals, delta)
    g = obj.gradients(w, th[band], L)
    weights, _ = _atoms_from(g, band)
    u = obj.unit_dirs(w, th[[i for i, _ in weights]]) @ L
    res_F = float(np.hypot(*(np.array([wt for _, wt in weights]) @ u)))
    dirs0 = np.array([_unit0(x, pair.sample.points[i]) for i in band])
    _, res_x = caratheodory_balance(dirs0)
    result = ExtensionResult(x, fld.unchart(w), float(max(vals.max(), 0.0)),
                             [int(i) for i in band], weights, float(res_x), res_F,
                             iters, converged)
    if not converged and opts.raise_on_max_iter:
        raise MaxIterations(f"circumcenter optimizer hit {opts.max_iter} iterations", result)
    return result


def _unit0(x, theta) -> np.ndarray:
    """g0-unit direction at x toward theta, in an orthonormal frame."""
    zeta = H.recenter(as_complex(x), H.ideal(theta))
    return np.array([zeta.real, zeta.imag]) / abs(zeta)


# ---------------------------------------------------------------- d_M


def dM_pushforward(pair: DeformationPair, x, y) -> tuple[float, np.ndarray]:
    """d_M(f*rho_x, rho_y) through the Busemann formula B(y, z_i, xi_i)."""
    pair.require_moebius()
    logs = P.busemann_values(pair.space1, y, pair.sample.points) - _foot_constants(pair, x)
    return float(max(logs.max(), 0.0)), logs


# ---------------------------------------------------------------- batch diagnostics


@dataclass
class ProfileReport:
    results: list
    r: np.ndarray
    spread: float
    failures: list = field(default_factory=list)


def r_profile(pair: DeformationPair, grid, opts: ExtendOptions | None = None) -> ProfileReport:
    results = [circumcenter_extend(pair, x, opts) for x in grid]
    r = np.array([res.r_x for res in results])
    return ProfileReport(results, r, float(r.max() - r.min()))


def lipschitz_surrogate(pair: DeformationPair, pairs, y0) -> dict:
    """max of |dM(x, y0) - dM(x', y0)| - d0(x, x') over the given pairs."""
    excess = []
    for x, xp in pairs:
        a, _ = dM_pushforward(pair, x, y0)
        b, _ = dM_pushforward(pair, xp, y0)
        excess.append(abs(a - b) - H.h_distance(x, xp))
    excess = np.array(excess)
    return {"max_excess": float(excess.max()), "excess": excess}


def qisom_check(pair: DeformationPair, pairs, results: dict | None = None,
                opts: ExtendOptions | None = None, tol: float = 1e-2) -> dict:
    """Quasi-isometry sandwich with slack 2M + tol and sqrt(b) bi-Lipschitz bounds.

    ``results`` maps point tuples to ExtensionResults and is filled on demand.
    """
    results = {} if results is None else results

    def F(p):
        key = tuple(np.round(as_xy(p), 15))
        if key not in results:
            results[key] = circumcenter_extend(pair, p, opts)
        return results[key]

    rows = []
    for x, y in pairs:
        rx, ry = F(x), F(y)
        d0 = H.h_distance(x, y)
        d1 = P.p_distance(pair.space1, rx.F_x, ry.F_x)
        rows.append((d0, d1))
    M_hat = max(r.r_x for r in results.values())
    sb = math.sqrt(pair.space1.pinching_b)
    d0 = np.array([r[0] for r in rows])
    d1 = np.array([r[1] for r in rows])
    slack = 2 * M_hat + tol
    lower_ok = bool(np.all(d1 >= d0 - slack))
    upper_ok = bool(np.all(d1 <= d0 + slack))
    pos = d0 > 0
    ratio = d1[pos] / d0[pos]
    bilip_ok = bool(np.all((ratio <= sb + tol) & (ratio >= 1 / sb - tol)))
    return {
        "M_hat": M_hat,
        "isometry_defect": float(np.max(np.abs(d1 - d0))),
        "sandwich_ok": lower_ok and upper_ok,
        "bilipschitz_ok": bilip_ok,
        "ratio_min": float(ratio.min()) if ratio.size else 1.0,
        "ratio_max": float(ratio.max()) if ratio.size else 1.0,
        "d0": d0,
        "d1": d1,
    }


def dF_adjoint_check(pair: DeformationPair, x, h: float = 1e-3,
                     opts: ExtendOptions | None = None) -> dict:
    """Compare <dF(v), F(x)->xi>_g1 with <v, x->xi>_g0 on the argmax band at x."""
    x = np.asarray(as_xy(x))
    base = circumcenter_extend(pair, x, opts)
    sp = pair.space1
    fld = sp.field
    wF = fld.chart(base.F_x)

    def log1(p):
        # g1 log map at F(x), in chart components
        wp = fld.chart(p)
        if abs(wp - wF) < 1e-15:
            return 0j
        th, L = sp.connect_chart(wF, wp)
        u = sp.unit_chart(wF, th)
        return L * complex(u[2], u[3])

    cols = []
    for e in (np.array([1.0, 0.0]), np.array([0.0, 1.0])):
        # central difference along the g0-geodesic through x with unit direction e
        pp = H.h_flow(H.UnitTangent(x, e), h).base
        pm = H.h_flow(H.UnitTangent(x, -e), h).base
        fp = circumcenter_extend(pair, pp, opts, start=base.F_x)
        fm = circumcenter_extend(pair, pm, opts, start=base.F_x)
        cols.append((log1(fp.F_x) - log1(fm.F_x)) / (2 * h))
    band = np.array(base.argmax_band)
    th, _, _ = sp._rays(wF, pair.chart_angles[band])
    fl = K.fields_batch(sp.prm, np.array([[wF.real, wF.imag]]))[0]
    G = np.array([[fl[0], fl[1]], [fl[1], fl[2]]])
    worst = 0.0
    for k, c in enumerate(cols):
        dv = np.array([c.real, c.imag])
        for i, t in zip(band, th):
            u1 = K.unit_state(sp.prm, wF.real, wF.imag, t)[2:]
            lhs = float(dv @ G @ u1)
            rhs = float(_unit0(x, pair.sample.points[i])[k])
            worst = max(worst, abs(lhs - rhs))
    return {"residual": worst, "h": h, "band_size": int(band.size), "result": base}


# ---------------------------------------------------------------- cones


def cone_analysis(pair: DeformationPair, x0, R: float, theta0: float, t: float,
                  with_case: bool = False, opts: ExtendOptions | None = None) -> ConeReport:
    """Cone decomposition at x_t = gamma(t), gamma(-inf) = theta0, gamma(0) = x0."""
    if not t > R:
        raise InvalidParameter(f"cone analysis needs t > R (t={t}, R={R})")
    v = H.h_ray(x0, theta0).reversed()
    xt = H.h_flow(v, t).base
    back = _unit0(xt, theta0)
    pts = pair.sample.points
    dirs = np.array([_unit0(xt, p) for p in pts])
    half = H.shadow_halfwidth(H.h_distance(xt, x0), R)
    to_x0 = H.recenter(as_complex(xt), as_complex(x0))
    to_x0 = np.array([to_x0.real, to_x0.imag]) / abs(to_x0)
    cos_c = dirs @ to_x0
    shadow = cos_c >= math.cos(half) - 1e-15
    ang = np.arccos(np.clip(dirs[shadow] @ back, -1.0, 1.0))
    eps = float(ang.max()) if ang.size else 0.0
    proj = dirs @ back
    ce = math.cos(eps)
    cls = ["in_C" if p >= ce else ("in_D" if p <= -ce else "outside") for p in proj]
    label = None
    if with_case:
        res = circumcenter_extend(pair, xt, opts)
        atoms = [i for i, _ in res.balanced_weights]
        outside = sum(cls[i] == "outside" for i in atoms)
        if len(atoms) == 2:
            label = "case1"
        elif len(atoms) >= 3 and outside >= 2:
            label = "case2"
        else:
            label = "case3"
    return ConeReport(float(t), eps, cls, label, np.asarray(xt))
