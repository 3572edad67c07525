"""Closed-form Poincare disk model of the hyperbolic plane.

Points are handled internally as complex numbers ``z = x + iy`` with
``|z| < 1``; ideal points are angles on the unit circle.  Every public
function accepts ``DiskPoint`` instances, length-2 sequences or complex
scalars.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfiniteGromovProduct, InvalidParameter

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class DiskPoint:
    coords: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.coords)
        if len(c) != 2:
            raise InvalidParameter("a disk point needs two coordinates")
        if c[0] * c[0] + c[1] * c[1] >= 1.0:
            raise InvalidParameter(f"point {c} is not inside the unit disk")
        object.__setattr__(self, "coords", c)

    @property
    def z(self) -> complex:
        return complex(self.coords[0], self.coords[1])

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)


@dataclass(frozen=True)
class UnitTangent:
    """Tangent vector ``dir`` (chart components) attached at ``base``."""

    base: np.ndarray
    dir: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(as_xy(self.base), float))
        object.__setattr__(self, "dir", np.asarray(self.dir, float).reshape(2))

    def reversed(self) -> "UnitTangent":
        return UnitTangent(self.base, -self.dir)


def as_complex(p) -> complex:
    if isinstance(p, DiskPoint):
        return p.z
    if isinstance(p, (complex, np.complexfloating)):
        return complex(p)
    a = np.asarray(p, dtype=float).reshape(2)
    return complex(a[0], a[1])


def as_xy(p) -> np.ndarray:
    z = as_complex(p)
    return np.array([z.real, z.imag])


def wrap_angle(theta):
    """Canonical representative in [0, 2pi)."""
    t = np.mod(theta, TWO_PI)
    return np.where(t >= TWO_PI, 0.0, t) if np.ndim(t) else (0.0 if t >= TWO_PI else float(t))


def angle_diff(a, b):
    """Signed difference a - b reduced to (-pi, pi]."""
    d = np.mod(np.asarray(a) - np.asarray(b) + np.pi, TWO_PI) - np.pi
    return d if np.ndim(d) else float(d)


def ideal(theta) -> complex:
    return complex(np.cos(theta), np.sin(theta))


def recenter(x: complex, z):
    """Isometry M_x sending x to the origin."""
    return (z - x) / (1.0 - np.conj(x) * z)


def uncenter(x: complex, w):
    return (w + x) / (1.0 + np.conj(x) * w)


def conformal_factor(p) -> float:
    z = as_complex(p)
    return 2.0 / (1.0 - abs(z) ** 2)


def metric_norm(p, v) -> float:
    return conformal_factor(p) * float(np.hypot(v[0], v[1]))


def h_distance(x, y) -> float:
    zx, zy = as_complex(x), as_complex(y)
    num = abs(zx - zy)
    den = np.sqrt((1.0 - abs(zx) ** 2) * (1.0 - abs(zy) ** 2))
    return float(2.0 * np.arcsinh(num / den))


def busemann0(theta, p) -> float:
    """Busemann function toward ``theta`` normalized to vanish at the origin."""
    z = as_complex(p)
    return float(np.log(abs(ideal(theta) - z) ** 2 / (1.0 - abs(z) ** 2)))


def h_busemann(x, y, xi) -> float:
    return busemann0(xi, x) - busemann0(xi, y)


def pair_constant0(xi, eta) -> float:
    """beta_xi(m) + beta_eta(m) for any m on the geodesic (xi, eta)."""
    return float(2.0 * np.log(abs(ideal(xi) - ideal(eta)) / 2.0))


def h_gromov(x, xi, eta) -> float:
    if abs(angle_diff(xi, eta)) == 0.0:
        raise InfiniteGromovProduct("Gromov product of a point with itself")
    z = as_complex(x)
    a, b = ideal(xi), ideal(eta)
    val = -np.log(abs(a - b) / 2.0 * (1.0 - abs(z) ** 2) / (abs(a - z) * abs(b - z)))
    return float(max(val, 0.0))


def h_visual(x, xi, eta) -> float:
    z = as_complex(x)
    a, b = ideal(xi), ideal(eta)
    if a == b:
        raise InfiniteGromovProduct("visual distance of a point to itself is 0")
    val = abs(a - b) / 2.0 * (1.0 - abs(z) ** 2) / (abs(a - z) * abs(b - z))
    return float(min(val, 1.0))


def visual_matrix(x, angles) -> np.ndarray:
    """Visual metric at x on an array of boundary angles (diagonal 0)."""
    z = as_complex(x)
    pts = np.exp(1j * np.asarray(angles, float))
    dz = np.abs(pts - z)
    out = np.abs(pts[:, None] - pts[None, :]) / 2.0 * (1.0 - abs(z) ** 2)
    out /= dz[:, None] * dz[None, :]
    np.fill_diagonal(out, 0.0)
    return np.minimum(out, 1.0)


def h_ray(x, xi) -> UnitTangent:
    """Unit tangent at x pointing at the ideal point xi."""
    z = as_complex(x)
    zeta = recenter(z, ideal(xi))
    v = zeta * (1.0 - abs(z) ** 2) / 2.0
    return UnitTangent(as_xy(z), np.array([v.real, v.imag]))


def _chart_direction(v: UnitTangent) -> tuple[complex, complex]:
    """Base point and unit direction of v seen in the chart recentered at its base."""
    z = as_complex(v.base)
    u = complex(v.dir[0], v.dir[1])
    if u == 0:
        raise InvalidParameter("zero tangent vector")
    return z, u / abs(u)


def h_flow(v: UnitTangent, t: float) -> UnitTangent:
    """Geodesic flow for time t of a (not necessarily unit) tangent, unit output."""
    z, u = _chart_direction(v)
    th = np.tanh(t / 2.0)
    w = th * u
    p = uncenter(z, w)
    dw = 0.5 * (1.0 - th * th) * u
    dp = dw * (1.0 - abs(z) ** 2) / (1.0 + np.conj(z) * w) ** 2
    return UnitTangent(as_xy(p), np.array([dp.real, dp.imag]))


def h_geodesic_point(x, xi, t) -> np.ndarray:
    return h_flow(h_ray(x, xi), t).base


def h_endpoint(v: UnitTangent) -> float:
    """Forward ideal endpoint of the geodesic with initial vector v."""
    z, u = _chart_direction(v)
    return wrap_angle(np.angle(uncenter(z, u)))


def h_involution(x, xi) -> float:
    z = as_complex(x)
    zeta = recenter(z, ideal(xi))
    return wrap_angle(np.angle(uncenter(z, -zeta / abs(zeta))))


def h_angle(x, xi, eta) -> float:
    z = as_complex(x)
    a = recenter(z, ideal(xi))
    b = recenter(z, ideal(eta))
    return float(abs(np.angle(a / b)))


def h_closest_time(v: UnitTangent, q) -> float:
    """Arclength parameter of the point of the geodesic through v nearest to q."""
    z, u = _chart_direction(v)
    w = recenter(z, as_complex(q)) / u
    # nearest point on the real diameter: tanh(s/2) solves a quadratic
    a = w.real
    if abs(a) < 1e-300:
        return 0.0
    r2 = abs(w) ** 2
    c = (1.0 + r2) / (2.0 * a)
    tau = c - np.sign(c) * np.sqrt(c * c - 1.0)
    return float(2.0 * np.arctanh(tau))


def h_line_distance(v: UnitTangent, q) -> float:
    """Signed distance from q to the geodesic through v (left of travel positive)."""
    z, u = _chart_direction(v)
    w = recenter(z, as_complex(q)) / u
    return float(np.arcsinh(2.0 * w.imag / (1.0 - abs(w) ** 2)))


def ball_entry_time(v: UnitTangent, center, radius: float) -> float:
    """First time t >= 0 the geodesic of v reaches the closed ball, or inf."""
    c = as_complex(center)
    z, u = _chart_direction(v)
    w = recenter(c, z)
    # direction seen in the chart centered at `center`
    du = u * (1.0 - abs(c) ** 2) / (1.0 - np.conj(c) * z) ** 2
    du /= abs(du)
    s2 = abs(w) ** 2
    A = (1.0 + s2) / (1.0 - s2)
    B = 2.0 * (w.real * du.real + w.imag * du.imag) / (1.0 - s2)
    C = np.cosh(radius)
    if A <= C:
        return 0.0
    disc = C * C - (A * A - B * B)
    if B >= 0.0 or disc < 0.0:
        return float("inf")
    return float(np.log((A - B) / (C + np.sqrt(disc))))


def shadow_halfwidth(dist: float, radius: float) -> float:
    """Angular radius at a point of a ball of given radius at distance dist."""
    if dist <= radius:
        return float(np.pi)
    return float(np.arcsin(np.sinh(radius) / np.sinh(dist)))


def christoffel0(p) -> np.ndarray:
    """Christoffel symbols Gamma[k, i, j] of the disk metric at p."""
    z = as_complex(p)
    lam = conformal_factor(z)
    d = lam * np.array([z.real, z.imag])  # gradient of log(lambda)
    G = np.zeros((2, 2, 2))
    for k in range(2):
        for i in range(2):
            for j in range(2):
                G[k, i, j] = (k == i) * d[j] + (k == j) * d[i] - (i == j) * d[k]
    return G
