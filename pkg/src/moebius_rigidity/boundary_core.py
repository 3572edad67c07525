"""Antipodal metrics on a finite boundary sample.

Cross-ratios, Moebius defect, derivatives between Moebius equivalent
metrics and the induced distance d_M.  Everything works on log-distance
matrices, which turns the multiplicative identities into sums.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    InsufficientSample,
    InvalidParameter,
    InvalidQuadruple,
    NotAntipodalAtPoint,
    NotMoebiusEquivalent,
    SampleMismatch,
)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class BoundarySample:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size < 4:
            raise InsufficientSample(f"need at least 4 boundary points, got {pts.size}")
        if np.any(pts < 0.0) or np.any(pts >= TWO_PI):
            raise InvalidParameter("angles must lie in [0, 2pi)")
        if np.any(np.diff(pts) <= 0.0):
            raise InvalidParameter("angles must be distinct and strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, n: int, offset: float = 0.0) -> "BoundarySample":
        return cls(np.sort(np.mod(offset + TWO_PI * np.arange(n) / n, TWO_PI)))

    @classmethod
    def from_angles(cls, angles) -> "BoundarySample":
        """Canonical sample from arbitrary angles (wrapped, sorted, deduplicated)."""
        a = np.unique(np.mod(np.asarray(angles, float), TWO_PI))
        return cls(a)

    def __len__(self):
        return int(self.points.size)

    def same_as(self, other: "BoundarySample") -> bool:
        return self.points.shape == other.points.shape and bool(np.all(self.points == other.points))

    def nearest(self, theta: float) -> int:
        d = np.abs(np.mod(self.points - theta + np.pi, TWO_PI) - np.pi)
        return int(np.argmin(d))


@dataclass(frozen=True)
class SampledMetric:
    """Symmetric distance matrix on a boundary sample.

    Structural invariants are enforced at construction.  Antipodality is
    approximate on finite samples and is reported by ``antipodal_gap``;
    ``antipode_of`` enforces it pointwise.
    """

    sample: BoundarySample
    dist: np.ndarray
    antipodal_tol: float = 1e-3
    _log: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        d = np.array(self.dist, dtype=float)
        n = len(self.sample)
        if d.shape != (n, n):
            raise InvalidParameter(f"distance matrix must be {n}x{n}")
        if not np.allclose(d, d.T, rtol=0.0, atol=1e-12):
            raise InvalidParameter("distance matrix is not symmetric")
        d = 0.5 * (d + d.T)
        if np.any(np.diag(d) != 0.0):
            raise InvalidParameter("diagonal must vanish")
        off = d[~np.eye(n, dtype=bool)]
        if np.any(off <= 0.0):
            raise InvalidParameter("off-diagonal entries must be positive")
        if off.max() > 1.0 + self.antipodal_tol:
            raise InvalidParameter(f"diameter {off.max()} exceeds one")
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)
        with np.errstate(divide="ignore"):
            lg = np.log(d)
        np.fill_diagonal(lg, 0.0)
        lg.setflags(write=False)
        object.__setattr__(self, "_log", lg)

    @property
    def n(self) -> int:
        return len(self.sample)

    @property
    def log(self) -> np.ndarray:
        return self._log

    def antipodal_gap(self) -> float:
        """Largest shortfall 1 - max_j rho(i, j) over rows."""
        return float(np.max(1.0 - self.dist.max(axis=1)))

    def diameter(self) -> float:
        return float(self.dist.max())

    def is_antipodal(self) -> bool:
        return self.antipodal_gap() <= self.antipodal_tol

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([repr(float(a)) for a in self.sample.points])
            for row in self.dist:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, antipodal_tol: float = 1e-3) -> "SampledMetric":
        rows = list(csv.reader(Path(path).read_text().splitlines()))
        angles = np.array([float(v) for v in rows[0]])
        dist = np.array([[float(v) for v in r] for r in rows[1:]])
        return cls(BoundarySample(angles), dist, antipodal_tol)


@dataclass(frozen=True)
class DerivativeFunction:
    values: np.ndarray
    consistency_residual: float
    maxmin_residual: float

    @property
    def log_values(self) -> np.ndarray:
        return np.log(self.values)

    def maxmin_product(self) -> float:
        return float(self.values.max() * self.values.min())


def _check_index(m: SampledMetric, *idx):
    for i in idx:
        if not 0 <= i < m.n:
            raise IndexError(f"index {i} out of range for sample of size {m.n}")


def cross_ratio(m: SampledMetric, i: int, j: int, k: int, l: int) -> float:
    if len({i, j, k, l}) != 4:
        raise InvalidQuadruple(f"indices {(i, j, k, l)} are not pairwise distinct")
    _check_index(m, i, j, k, l)
    d = m.dist
    return float(d[i, k] * d[j, l] / (d[i, l] * d[j, k]))


def _same_sample(m1: SampledMetric, m2: SampledMetric):
    if not m1.sample.same_as(m2.sample):
        raise SampleMismatch("metrics live on different boundary samples")


def log_moebius_defect(L1: np.ndarray, L2: np.ndarray) -> float:
    """Exact max over distinct quadruples of |log CR_1 - log CR_2|.

    With D = L1 - L2 the log cross-ratio difference of (i, j, k, l) is
    a_k - a_l where a = D[i] - D[j]; so for each pair (i, j) the maximum
    over (k, l) is the range of a off {i, j}.  O(N^3) instead of O(N^4).
    """
    D = np.asarray(L1) - np.asarray(L2)
    n = D.shape[0]
    best = 0.0
    for i in range(n - 1):
        a = D[i][None, :] - D[i + 1:]  # rows are j > i
        a[:, i] = np.nan
        a[np.arange(n - i - 1), np.arange(i + 1, n)] = np.nan
        rng = np.nanmax(a, axis=1) - np.nanmin(a, axis=1)
        best = max(best, float(rng.max()))
    return best


def moebius_defect(m1: SampledMetric, m2: SampledMetric) -> float:
    _same_sample(m1, m2)
    return log_moebius_defect(m1.log, m2.log)


def log_derivative_three_point(L1, L2, i, j, k) -> np.ndarray:
    """log d rho_2/d rho_1 at i from the auxiliary pair (j, k).

    Works elementwise on broadcastable index arrays.
    """
    D = np.asarray(L2) - np.asarray(L1)
    return D[i, j] + D[i, k] - D[j, k]


def _log_derivative_all_pairs(D: np.ndarray, i: int) -> np.ndarray:
    n = D.shape[0]
    others = np.array([j for j in range(n) if j != i])
    row = D[i, others]
    vals = row[:, None] + row[None, :] - D[np.ix_(others, others)]
    iu = np.triu_indices(others.size, k=1)
    return vals[iu]


def _gate(m1, m2, tol_moebius, defect):
    _same_sample(m1, m2)
    if m1.n < 3:
        raise InsufficientSample("derivative needs at least three points")
    if tol_moebius is None:
        return
    if defect is None:
        defect = moebius_defect(m1, m2)
    if defect > tol_moebius:
        raise NotMoebiusEquivalent(f"Moebius defect {defect:.3e} exceeds {tol_moebius:.1e}")


def derivative(m1: SampledMetric, m2: SampledMetric, i: int, aux=None,
               tol_moebius: float | None = 1e-3, defect: float | None = None) -> float:
    """D(xi_i) = d m2 / d m1 at sample point i.

    ``defect`` may carry a precomputed Moebius defect to skip the O(N^3)
    gate; ``tol_moebius=None`` disables the gate.
    """
    _check_index(m1, i)
    _gate(m1, m2, tol_moebius, defect)
    if aux is not None:
        j, k = aux
        if len({i, j, k}) != 3:
            raise InvalidQuadruple("auxiliary pair must avoid i and be distinct")
        return float(np.exp(log_derivative_three_point(m1.log, m2.log, i, j, k)))
    vals = _log_derivative_all_pairs(m2.log - m1.log, i)
    return float(np.exp(np.median(vals)))


def _median_logs(D: np.ndarray, chunk: int = 16) -> tuple[np.ndarray, float]:
    """All-pairs median of the three-point log derivative at every index.

    Pairs touching i are pushed to +inf so that the valid values occupy the
    first K ranks and the median is read off by partition.
    """
    n = D.shape[0]
    iu0, iu1 = np.triu_indices(n, 1)
    Dt = D[iu0, iu1]
    K = iu0.size - (n - 1)
    lo, hi = (K - 1) // 2, K // 2
    logs = np.empty(n)
    spread = 0.0
    for start in range(0, n, chunk):
        idx = np.arange(start, min(start + chunk, n))
        V = D[idx][:, iu0] + D[idx][:, iu1] - Dt
        bad = (iu0[None, :] == idx[:, None]) | (iu1[None, :] == idx[:, None])
        V[bad] = np.inf
        part = np.partition(V, hi, axis=1)
        upper = part[:, hi]
        lower = part[:, :hi].max(axis=1) if lo < hi else upper
        med = 0.5 * (lower + upper)
        logs[idx] = med
        V[bad] = np.nan
        spread = max(spread, float(np.nanmax(np.abs(V - med[:, None]))))
    return logs, spread


def derivative_function(m1: SampledMetric, m2: SampledMetric,
                        tol_moebius: float | None = 1e-3,
                        defect: float | None = None) -> DerivativeFunction:
    _gate(m1, m2, tol_moebius, defect)
    logs, spread = _median_logs(m2.log - m1.log)
    return DerivativeFunction(np.exp(logs), spread, float(abs(logs.max() + logs.min())))


def dM_distance(m1: SampledMetric, m2: SampledMetric, tol_moebius: float | None = 1e-3,
                defect: float | None = None, df: DerivativeFunction | None = None) -> float:
    """max log dm2/dm1, floored at zero; ``df`` reuses a computed derivative."""
    if df is None:
        df = derivative_function(m1, m2, tol_moebius=tol_moebius, defect=defect)
    return float(max(np.log(df.values).max(), 0.0))


def antipode_of(m: SampledMetric, i: int) -> int:
    _check_index(m, i)
    row = m.dist[i]
    j = int(np.argmax(row))  # argmax returns the lowest index on ties
    if row[j] < 1.0 - m.antipodal_tol:
        raise NotAntipodalAtPoint(f"point {i}: max distance {row[j]:.6f} below 1 - tol")
    return j


def multiplicativity_residual(m1: SampledMetric, m2: SampledMetric, log_d: np.ndarray) -> float:
    """max |log rho_2^2 - log D_i - log D_j - log rho_1^2| over i != j."""
    _same_sample(m1, m2)
    R = 2.0 * m2.log - 2.0 * m1.log - log_d[:, None] - log_d[None, :]
    np.fill_diagonal(R, 0.0)
    return float(np.abs(R).max())


def rescale(m: SampledMetric, log_d: np.ndarray) -> SampledMetric:
    """Metric rho'(i, j) = sqrt(D_i D_j) rho(i, j); Moebius equivalent to m."""
    d = m.dist * np.exp(0.5 * (log_d[:, None] + log_d[None, :]))
    np.fill_diagonal(d, 0.0)
    return SampledMetric(m.sample, d, m.antipodal_tol)


def maxmin_lemma_residuals(m1: SampledMetric, m2: SampledMetric, tol: float = 1e-3,
                           defect: float | None = None,
                           df: DerivativeFunction | None = None) -> dict:
    """Residuals of the max/min antipodal lemma on the sample.

    Forward: at the argmax i* of D = dm2/dm1, every j with m1(i*, j) >= 1 - tol
    should carry D(j) = min D and m2(i*, j) = 1.  Reverse: at the argmin i0,
    every j with m2(i0, j) >= 1 - tol should carry D(j) = max D and m1(i0, j) = 1.
    Residuals are in log scale for D and linear for the metrics.
    """
    if df is None:
        df = derivative_function(m1, m2, tol_moebius=None)
    lg = np.log(df.values)
    imax, imin = int(np.argmax(lg)), int(np.argmin(lg))
    fwd = np.flatnonzero(m1.dist[imax] >= 1.0 - tol)
    rev = np.flatnonzero(m2.dist[imin] >= 1.0 - tol)
    out = {
        "argmax": imax,
        "argmin": imin,
        "forward_D": float(max((lg[j] - lg.min() for j in fwd), default=np.nan)),
        "forward_rho": float(max((1.0 - m2.dist[imax, j] for j in fwd), default=np.nan)),
        "reverse_D": float(max((lg.max() - lg[j] for j in rev), default=np.nan)),
        "reverse_rho": float(max((1.0 - m1.dist[imin, j] for j in rev), default=np.nan)),
    }
    return out
