"""Compiled geodesic kernels.

All states live in the chart centred at the support centre x0, where the
support is the Euclidean disk |w| <= tanh(R/2).  A state is the 4-vector
(w1, w2, v1, v2).  Outside the support the metric is the hyperbolic one,
so geodesic segments there are evaluated in closed form and only the
passage through the support is integrated numerically.

Parameter vector ``prm``:
    0 kind (0 pure, 1 conformal bump, 2 pullback twist)
    1 R (support radius)     2 amplitude a / twist angle alpha0
    3 profile exponent m     4 tanh(R/2)
    5 tanh(R_exit/2)         6 rtol   7 atol   8 max arclength per passage
"""
import math

import numpy as np
from numba import njit
from scipy.integrate import DOP853

# Dormand-Prince 8(5,3) tableau, taken from scipy's public class attributes.
_A = np.ascontiguousarray(DOP853.A, dtype=np.float64)
_B = np.ascontiguousarray(DOP853.B, dtype=np.float64)
_E3 = np.ascontiguousarray(DOP853.E3, dtype=np.float64)
_E5 = np.ascontiguousarray(DOP853.E5, dtype=np.float64)
_NS = int(DOP853.n_stages)

PURE, CONFORMAL, TWIST = 0, 1, 2

OK, UNDERFLOW, TOO_LONG, NO_CONVERGENCE = 0, 1, 2, 3

# ---------------------------------------------------------------- metric


@njit(cache=True)
def _rho_ratio(s):
    # r / s with r = 2 artanh(s)
    if s < 1e-4:
        s2 = s * s
        return 2.0 * (1.0 + s2 / 3.0 + s2 * s2 / 5.0)
    return 2.0 * math.atanh(s) / s


@njit(cache=True)
def fields(prm, w1, w2, out):
    """out <- g11 g12 g22, d1(g11 g12 g22), d2(g11 g12 g22)."""
    s2 = w1 * w1 + w2 * w2
    lam = 2.0 / (1.0 - s2)
    kind = int(prm[0])
    R = prm[1]
    s = math.sqrt(s2)
    if kind == PURE or s >= prm[4] or prm[2] == 0.0:
        g = lam * lam
        c = 2.0 * lam * lam * lam
        out[0] = g
        out[1] = 0.0
        out[2] = g
        out[3] = c * w1
        out[4] = 0.0
        out[5] = c * w1
        out[6] = c * w2
        out[7] = 0.0
        out[8] = c * w2
        return
    rho = _rho_ratio(s)
    r = rho * s
    if kind == CONFORMAL:
        a = prm[2]
        m = prm[3]
        q = r * r / (R * R)
        u = a * (1.0 - q) ** m
        up_s = -2.0 * a * m / (R * R) * (1.0 - q) ** (m - 1.0) * rho
        g = math.exp(2.0 * u) * lam * lam
        f = 2.0 * g * lam * (1.0 + up_s)
        out[0] = g
        out[1] = 0.0
        out[2] = g
        out[3] = f * w1
        out[4] = 0.0
        out[5] = f * w1
        out[6] = f * w2
        out[7] = 0.0
        out[8] = f * w2
        return
    # pullback twist, alpha(r) = alpha0 * S(1 - r/R), S the C3 smoothstep
    a0 = prm[2]
    x = 1.0 - r / R
    R4 = R * R * R * R
    p = -(140.0 * a0 / R4) * x * x * x * r * r * rho
    P2 = (a0 / R4) * (420.0 * x * x * (1.0 - 2.0 * x) * lam * rho * rho
                      + 140.0 * x * x * x * rho * rho * rho)
    c = lam * p
    M11 = 2.0 * w1 * w2
    M12 = w2 * w2 - w1 * w1
    c2s2 = c * c * s2
    E11 = 1.0 + c * M11 + c2s2 * w1 * w1
    E12 = c * M12 + c2s2 * w1 * w2
    E22 = 1.0 - c * M11 + c2s2 * w2 * w2
    l2 = lam * lam
    out[0] = l2 * E11
    out[1] = l2 * E12
    out[2] = l2 * E22
    for k in range(2):
        wk = w1 if k == 0 else w2
        dc = l2 * wk * p + lam * wk * P2
        if k == 0:
            dM11 = 2.0 * w2
            dM12 = -2.0 * w1
            dN11 = 2.0 * w1
            dN12 = w2
            dN22 = 0.0
        else:
            dM11 = 2.0 * w1
            dM12 = 2.0 * w2
            dN11 = 0.0
            dN12 = w1
            dN22 = 2.0 * w2
        dcs = 2.0 * c * dc * s2 + 2.0 * c * c * wk
        dE11 = dc * M11 + c * dM11 + dcs * w1 * w1 + c2s2 * dN11
        dE12 = dc * M12 + c * dM12 + dcs * w1 * w2 + c2s2 * dN12
        dE22 = -dc * M11 - c * dM11 + dcs * w2 * w2 + c2s2 * dN22
        t = 2.0 * l2 * lam * wk
        out[3 + 3 * k] = t * E11 + l2 * dE11
        out[4 + 3 * k] = t * E12 + l2 * dE12
        out[5 + 3 * k] = t * E22 + l2 * dE22


@njit(cache=True)
def fields_batch(prm, W):
    n = W.shape[0]
    out = np.empty((n, 9))
    for i in range(n):
        fields(prm, W[i, 0], W[i, 1], out[i])
    return out


@njit(cache=True)
def twist_map(prm, W, sign):
    """psi (sign=+1) or its inverse (sign=-1) in the centred chart."""
    n = W.shape[0]
    out = np.empty((n, 2))
    a0 = prm[2]
    R = prm[1]
    for i in range(n):
        w1 = W[i, 0]
        w2 = W[i, 1]
        s = math.sqrt(w1 * w1 + w2 * w2)
        al = 0.0
        if s < prm[4]:
            r = 2.0 * math.atanh(s)
            x = 1.0 - r / R
            al = a0 * x ** 4 * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x * x * x)
        ca = math.cos(sign * al)
        sa = math.sin(sign * al)
        out[i, 0] = ca * w1 - sa * w2
        out[i, 1] = sa * w1 + ca * w2
    return out


@njit(cache=True)
def accel(prm, y, f, fl):
    """Geodesic vector field: f <- (v, -Gamma(v, v)); fl is scratch of length 9."""
    fields(prm, y[0], y[1], fl)
    g11, g12, g22 = fl[0], fl[1], fl[2]
    d1g11, d1g12, d1g22 = fl[3], fl[4], fl[5]
    d2g11, d2g12, d2g22 = fl[6], fl[7], fl[8]
    v1 = y[2]
    v2 = y[3]
    # Christoffel symbols of the first kind contracted with v v
    c1 = 0.5 * d1g11 * v1 * v1 + d2g11 * v1 * v2 + (d2g12 - 0.5 * d1g22) * v2 * v2
    c2 = (d1g12 - 0.5 * d2g11) * v1 * v1 + d1g22 * v1 * v2 + 0.5 * d2g22 * v2 * v2
    det = g11 * g22 - g12 * g12
    f[0] = v1
    f[1] = v2
    f[2] = -(g22 * c1 - g12 * c2) / det
    f[3] = -(-g12 * c1 + g11 * c2) / det


@njit(cache=True)
def metric_norm2(prm, w1, w2, v1, v2):
    fl = np.empty(9)
    fields(prm, w1, w2, fl)
    return fl[0] * v1 * v1 + 2.0 * fl[1] * v1 * v2 + fl[2] * v2 * v2


@njit(cache=True)
def unit_state(prm, w1, w2, theta):
    y = np.empty(4)
    c = math.cos(theta)
    s = math.sin(theta)
    n = math.sqrt(metric_norm2(prm, w1, w2, c, s))
    y[0] = w1
    y[1] = w2
    y[2] = c / n
    y[3] = s / n
    return y


# ------------------------------------------------------------ integrator


@njit(cache=True)
def _step(prm, y, f0, h, K, ynew, tmp, fl):
    """One DOP853 step; returns the scipy-style error norm."""
    for m in range(4):
        K[0, m] = f0[m]
    for s in range(1, _NS):
        for m in range(4):
            acc = 0.0
            for j in range(s):
                acc += _A[s, j] * K[j, m]
            tmp[m] = y[m] + h * acc
        accel(prm, tmp, K[s], fl)
    for m in range(4):
        acc = 0.0
        for j in range(_NS):
            acc += _B[j] * K[j, m]
        ynew[m] = y[m] + h * acc
    accel(prm, ynew, K[_NS], fl)
    rtol = prm[6]
    atol = prm[7]
    e5 = 0.0
    e3 = 0.0
    for m in range(4):
        sc = atol + max(abs(y[m]), abs(ynew[m])) * rtol
        a5 = 0.0
        a3 = 0.0
        for j in range(_NS + 1):
            a5 += _E5[j] * K[j, m]
            a3 += _E3[j] * K[j, m]
        e5 += (a5 / sc) ** 2
        e3 += (a3 / sc) ** 2
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    return abs(h) * e5 / math.sqrt((e5 + 0.01 * e3) * 4.0)


@njit(cache=True)
def _factor(err, rejected):
    if err == 0.0:
        fac = 10.0
    else:
        fac = min(10.0, 0.9 * err ** (-1.0 / 8.0))
    if rejected:
        fac = min(1.0, fac)
    return fac


@njit(cache=True)
def integrate(prm, y0, mode, T, target1, target2, record):
    """Adaptive integration of the geodesic equation.

    mode 0: stop once outside radius prm[5] and moving outward.
    mode 1: stop at arclength exactly T.
    mode 2: stop where (w - target) . v changes sign from - to +.
    Returns (state, arclength, status, nodes, node_count).  Nodes are only
    stored when ``record`` is true.
    """
    y = y0.copy()
    f = np.empty(4)
    fl = np.empty(9)
    accel(prm, y, f, fl)
    K = np.empty((_NS + 1, 4))
    ynew = np.empty(4)
    tmp = np.empty(4)
    cap = 64 if record else 1
    nodes = np.empty((cap, 5))
    cnt = 0
    if record:
        nodes[0, 0] = 0.0
        nodes[0, 1:] = y
        cnt = 1
    s = 0.0
    h = 0.05
    smax = prm[8] if mode != 1 else T
    rho2 = prm[5] * prm[5]
    if mode == 1 and T <= 0.0:
        return y, 0.0, OK, nodes[:cnt], cnt
    dot_old = (y[0] - target1) * y[2] + (y[1] - target2) * y[3]
    if mode == 2 and dot_old >= 0.0:
        return y, 0.0, OK, nodes[:cnt], cnt
    rejected = False
    while True:
        if mode == 1 and s + h > T:
            h = T - s
        if h < 1e-14 * max(1.0, s):
            if mode == 1 and T - s <= 1e-13 * max(1.0, T):
                return y, T, OK, nodes[:cnt], cnt
            return y, s, UNDERFLOW, nodes[:cnt], cnt
        err = _step(prm, y, f, h, K, ynew, tmp, fl)
        if err > 1.0 or err != err:
            h *= max(0.2, 0.9 * err ** (-1.0 / 8.0)) if err == err else 0.2
            rejected = True
            continue
        if mode == 2:
            dot_new = (ynew[0] - target1) * ynew[2] + (ynew[1] - target2) * ynew[3]
            if dot_old < 0.0 <= dot_new:
                # secant (Illinois) on the sub-step length
                a, fa = 0.0, dot_old
                b, fb = h, dot_new
                side = 0
                hc = h
                for _ in range(60):
                    hc = (a * fb - b * fa) / (fb - fa)
                    _step(prm, y, f, hc, K, ynew, tmp, fl)
                    fc = (ynew[0] - target1) * ynew[2] + (ynew[1] - target2) * ynew[3]
                    if fc * fb > 0.0:
                        b, fb = hc, fc
                        if side == -1:
                            fa *= 0.5
                        side = -1
                    else:
                        a, fa = hc, fc
                        if side == 1:
                            fb *= 0.5
                        side = 1
                    if abs(fc) < 1e-17 or abs(b - a) < 1e-15:
                        break
                return ynew.copy(), s + hc, OK, nodes[:cnt], cnt
            dot_old = dot_new
        s += h
        for m in range(4):
            y[m] = ynew[m]
            f[m] = K[_NS, m]
        if record:
            if cnt == cap:
                bigger = np.empty((2 * cap, 5))
                bigger[:cnt] = nodes[:cnt]
                nodes = bigger
                cap *= 2
            nodes[cnt, 0] = s
            nodes[cnt, 1:] = y
            cnt += 1
        if mode == 0:
            if y[0] * y[0] + y[1] * y[1] > rho2 and y[0] * y[2] + y[1] * y[3] > 0.0:
                return y, s, OK, nodes[:cnt], cnt
        if mode == 1 and s >= T:
            return y, T, OK, nodes[:cnt], cnt
        if s > smax:
            return y, s, TOO_LONG, nodes[:cnt], cnt
        h *= _factor(err, rejected)
        rejected = False


# ----------------------------------------------------------- closed forms


@njit(cache=True)
def pure_flow(y, t):
    """Hyperbolic geodesic flow of a state for time t (speed preserved)."""
    z = complex(y[0], y[1])
    v = complex(y[2], y[3])
    sp = abs(v) * 2.0 / (1.0 - abs(z) ** 2)
    u = v / abs(v)
    th = math.tanh(sp * t / 2.0)
    w = th * u
    den = 1.0 + z.conjugate() * w
    p = (w + z) / den
    dw = 0.5 * (1.0 - th * th) * u * sp
    dp = dw * (1.0 - abs(z) ** 2) / (den * den)
    out = np.empty(4)
    out[0] = p.real
    out[1] = p.imag
    out[2] = dp.real
    out[3] = dp.imag
    return out


@njit(cache=True)
def endpoint_angle(y):
    z = complex(y[0], y[1])
    u = complex(y[2], y[3])
    u = u / abs(u)
    e = (u + z) / (1.0 + z.conjugate() * u)
    return math.atan2(e.imag, e.real)


@njit(cache=True)
def busemann0(omega, w1, w2):
    """Hyperbolic Busemann function toward angle omega, zero at the origin."""
    dx = math.cos(omega) - w1
    dy = math.sin(omega) - w2
    return math.log((dx * dx + dy * dy) / (1.0 - w1 * w1 - w2 * w2))


@njit(cache=True)
def entry_time(y, rho):
    """Arclength until the hyperbolic geodesic of y enters |w| <= rho.

    Returns 0 inside, -1 if the geodesic never enters.
    """
    s2 = y[0] * y[0] + y[1] * y[1]
    wv = y[0] * y[2] + y[1] * y[3]
    if s2 < rho * rho:
        return 0.0
    if wv >= 0.0:
        return -1.0
    vn = math.sqrt(y[2] * y[2] + y[3] * y[3])
    A = (1.0 + s2) / (1.0 - s2)
    B = 2.0 * wv / vn / (1.0 - s2)
    C = (1.0 + rho * rho) / (1.0 - rho * rho)
    disc = C * C - (A * A - B * B)
    if disc < 0.0:
        return -1.0
    return math.log((A - B) / (C + math.sqrt(disc)))


@njit(cache=True)
def trace(prm, y0):
    """Follow a ray through the support.

    Returns (entered, t_in, y_in, t_out, y_out, status): beyond t_out the
    ray is the hyperbolic geodesic of y_out.
    """
    t_in = entry_time(y0, prm[5])
    if t_in < 0.0:
        return False, 0.0, y0.copy(), 0.0, y0.copy(), OK
    if t_in > 0.0:
        y_in = pure_flow(y0, t_in)
    else:
        y_in = y0.copy()
    y_out, s, status, _, _ = integrate(prm, y_in, 0, 0.0, 0.0, 0.0, False)
    return True, t_in, y_in, t_in + s, y_out, status


@njit(cache=True)
def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@njit(cache=True)
def ray_endpoint(prm, y0):
    entered, t_in, y_in, t_out, y_out, status = trace(prm, y0)
    return endpoint_angle(y_out), status


# ------------------------------------------------------ safeguarded Newton


@njit(cache=True)
def _newton_update(x, F0, d, lo, hi, maxstep):
    """Newton step for an increasing function, kept inside the bracket."""
    if d > 0.0 and d == d:
        xn = x - F0 / d
    else:
        xn = x - maxstep if F0 > 0.0 else x + maxstep
    if abs(xn - x) > maxstep:
        xn = x + maxstep * (1.0 if xn > x else -1.0)
    if xn <= lo or xn >= hi:
        if lo > -1e300 and hi < 1e300:
            xn = 0.5 * (lo + hi)
        elif F0 > 0.0:
            xn = x - maxstep
        else:
            xn = x + maxstep
    return xn


@njit(cache=True)
def ray_solve(prm, w1, w2, omega, theta0, tol, maxit):
    """Initial direction at w whose ray ends at omega.

    Returns (theta, residual, status, t_out, y_out, entered, t_in).
    """
    th = theta0
    lo = -1e308
    hi = 1e308
    hfd = 1e-7
    prev = 1e300
    d = -1.0
    for it in range(maxit):
        y = unit_state(prm, w1, w2, th)
        entered, t_in, y_in, t_out, y_out, st = trace(prm, y)
        if st != OK:
            return th, 1e300, st, t_out, y_out, entered, t_in
        F0 = _wrap(endpoint_angle(y_out) - omega)
        if abs(F0) <= tol or (hi - lo) < 1e-15:
            return th, F0, OK, t_out, y_out, entered, t_in
        if F0 < 0.0:
            lo = th
        else:
            hi = th
        # chord steps reuse the slope while they contract fast enough
        if d <= 0.0 or abs(F0) > 0.1 * prev:
            y2 = unit_state(prm, w1, w2, th + hfd)
            e2, a2, b2, c2, yo2, st2 = trace(prm, y2)
            d = _wrap(endpoint_angle(yo2) - omega - F0) / hfd
        prev = abs(F0)
        thn = _newton_update(th, F0, d, lo, hi, 0.5)
        if abs(thn - th) < 1e-15:
            return th, F0, OK, t_out, y_out, entered, t_in
        th = thn
    y = unit_state(prm, w1, w2, th)
    entered, t_in, y_in, t_out, y_out, st = trace(prm, y)
    F0 = _wrap(endpoint_angle(y_out) - omega)
    status = OK if abs(F0) < 1e3 * tol else NO_CONVERGENCE
    return th, F0, status, t_out, y_out, entered, t_in


@njit(cache=True)
def ray_batch(prm, w1, w2, omegas, thetas0, tol, maxit):
    n = omegas.size
    th = np.empty(n)
    res = np.empty(n)
    st = np.empty(n, dtype=np.int64)
    tout = np.empty(n)
    yout = np.empty((n, 4))
    for i in range(n):
        a, r, s, t, yo, e, ti = ray_solve(prm, w1, w2, omegas[i], thetas0[i], tol, maxit)
        th[i] = a
        res[i] = r
        st[i] = s
        tout[i] = t
        yout[i] = yo
    return th, res, st, tout, yout


@njit(cache=True)
def _biinf_start(eta, R_exit, s):
    Cp = math.cosh(R_exit + 1.0)
    disc = Cp * Cp - s * s - 1.0
    if disc <= 0.0:
        H = math.sqrt(1.0 + s * s)
    else:
        H = Cp + math.sqrt(disc)
    w = complex(s, H)
    z = eta * (w - 1j) / (w + 1j)
    v = 2.0 * H * eta / ((w + 1j) * (w + 1j))
    y = np.empty(4)
    y[0] = z.real
    y[1] = z.imag
    y[2] = v.real
    y[3] = v.imag
    return y


@njit(cache=True)
def biinf_solve(prm, om_eta, om_xi, tol, maxit):
    """Geodesic from the ideal point om_eta to om_xi.

    Returns (start state, residual, status, entered, t_in, t_out, y_out,
    pair constant).  The start state lies outside the support on the
    incoming hyperbolic part; arclength is measured from it.
    """
    eta = complex(math.cos(om_eta), math.sin(om_eta))
    xi = complex(math.cos(om_xi), math.sin(om_xi))
    cz = 1j * (eta + xi) / (eta - xi)
    s = cz.real
    R_exit = 2.0 * math.atanh(prm[5])
    lo = -1e308
    hi = 1e308
    hfd = 1e-7 * max(1.0, abs(s))
    for it in range(maxit):
        y = _biinf_start(eta, R_exit, s)
        entered, t_in, y_in, t_out, y_out, st = trace(prm, y)
        if st != OK:
            return y, 1e300, st, entered, t_in, t_out, y_out, 0.0
        F0 = _wrap(endpoint_angle(y_out) - om_xi)
        done = abs(F0) <= tol or (hi - lo) < 1e-15 * max(1.0, abs(s))
        if not done:
            if F0 < 0.0:
                lo = s
            else:
                hi = s
            y2 = _biinf_start(eta, R_exit, s + hfd)
            e2, a2, b2, c2, yo2, st2 = trace(prm, y2)
            d = _wrap(endpoint_angle(yo2) - om_xi - F0) / hfd
            sn = _newton_update(s, F0, d, lo, hi, 0.5 * max(1.0, abs(s)))
            if abs(sn - s) < 1e-15 * max(1.0, abs(s)):
                done = True
            else:
                s = sn
        if done or it == maxit - 1:
            kappa = t_out + busemann0(om_xi, y_out[0], y_out[1]) + busemann0(om_eta, y[0], y[1])
            status = OK if abs(F0) < 1e3 * tol else NO_CONVERGENCE
            return y, F0, status, entered, t_in, t_out, y_out, kappa
    return y, 1e300, NO_CONVERGENCE, False, 0.0, 0.0, y, 0.0


@njit(cache=True)
def biinf_batch(prm, om_eta, om_xi, tol, maxit):
    n = om_eta.size
    kap = np.empty(n)
    res = np.empty(n)
    st = np.empty(n, dtype=np.int64)
    for i in range(n):
        y, r, s, e, ti, to, yo, k = biinf_solve(prm, om_eta[i], om_xi[i], tol, maxit)
        kap[i] = k
        res[i] = r
        st[i] = s
    return kap, res, st


# ---------------------------------------------------------------- connect


@njit(cache=True)
def _line_offset(y, q1, q2):
    """Signed distance from q to the hyperbolic line of y, and the time of the foot."""
    z = complex(y[0], y[1])
    u = complex(y[2], y[3])
    u = u / abs(u)
    q = complex(q1, q2)
    w = (q - z) / (1.0 - z.conjugate() * q) / u
    dist = math.asinh(2.0 * w.imag / (1.0 - abs(w) ** 2))
    a = w.real
    if abs(a) < 1e-300:
        return dist, 0.0
    c = (1.0 + abs(w) ** 2) / (2.0 * a)
    tau = c - math.copysign(math.sqrt(max(c * c - 1.0, 0.0)), c)
    return dist, 2.0 * math.atanh(tau)


@njit(cache=True)
def connect_miss(prm, w1, w2, q1, q2, th):
    """Signed miss (target left of the path positive) and arclength to target.

    The path is split into its incoming hyperbolic part, the passage through
    the support and the outgoing hyperbolic part; the miss is measured on
    the part where the target's foot lands.
    """
    y = unit_state(prm, w1, w2, th)
    entered, t_in, y_in, t_out, y_out, st = trace(prm, y)
    dist, tau = _line_offset(y, q1, q2)
    if not entered or tau <= t_in:
        return dist, tau, st
    rho = prm[5]
    if q1 * q1 + q2 * q2 > rho * rho:
        dist, tau = _line_offset(y_out, q1, q2)
        if tau >= 0.0:
            return dist, t_out + tau, st
    ye, s, st, _, _ = integrate(prm, y_in, 2, 0.0, q1, q2, False)
    vn = math.sqrt(ye[2] * ye[2] + ye[3] * ye[3])
    miss = (ye[2] * (q2 - ye[1]) - ye[3] * (q1 - ye[0])) / vn
    # chart miss expressed in metric units near the target
    miss *= 2.0 / (1.0 - q1 * q1 - q2 * q2)
    return miss, t_in + s, st


@njit(cache=True)
def connect_solve(prm, w1, w2, q1, q2, theta0, tol, maxit):
    """Returns (theta, miss, length, status)."""
    th = theta0
    lo = -1e308
    hi = 1e308
    hfd = 1e-7
    for it in range(maxit):
        m0, L, st = connect_miss(prm, w1, w2, q1, q2, th)
        if st != OK:
            return th, m0, L, st
        F0 = -m0
        if abs(F0) <= tol or (hi - lo) < 1e-15:
            return th, m0, L, OK
        if F0 < 0.0:
            lo = th
        else:
            hi = th
        m1, L1, st1 = connect_miss(prm, w1, w2, q1, q2, th + hfd)
        d = (-m1 - F0) / hfd
        thn = _newton_update(th, F0, d, lo, hi, 0.5)
        if abs(thn - th) < 1e-15:
            return th, m0, L, OK
        th = thn
    m0, L, st = connect_miss(prm, w1, w2, q1, q2, th)
    return th, m0, L, OK if abs(m0) < 1e3 * tol else NO_CONVERGENCE
