"""Scenario construction, verification commands and the ``moebius-rigidity`` CLI.

Config files are flat ``key = value`` text with dotted keys, for example::

    scenario = pullback_twist
    twist.x0 = 0.1, 0.05
    twist.alpha0 = 0.3
    sample.N = 64
    grid.k = 3

See README.md for the full key list.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import itertools
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import _kernels as K
from . import circumcenter as CC
from . import hyperbolic_closed_form as H
from . import moebius_conjugacy as MC
from . import perturbed_manifold as P
from .boundary_core import BoundarySample
from .errors import InvalidParameter, NumericalFailure, PreconditionError

SCENARIOS = ("trivial", "pullback_twist", "conformal_bump")
_SECTIONS = ("bump", "twist", "sample", "grid", "probes", "tol")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "trivial"
    bump_x0: tuple = (0.1, 0.05)
    bump_R: float = 1.0
    bump_amplitude: float = 0.2
    bump_order: int = 3
    twist_x0: tuple = (0.1, 0.05)
    twist_R: float = 1.0
    twist_alpha0: float = 0.3
    twist_order: int = 3
    sample_N: int = 64
    sample_offset: float = 0.0
    grid_k: int = 3
    grid_r: float = 0.8
    grid_far: tuple = ((0.85, 0.0), (-0.55, 0.65))
    probes_pairs: int = 12
    tol_ode: float = 1e-12
    tol_bvp: float = 1e-11
    tol_R_max: float = 25.0
    tol_limit: float = 1e-7
    tol_curv: float = 1e-3
    tol_moebius: float = 1e-3
    tol_grad: float = 1e-5
    tol_step: float = 1e-8
    tol_max_iter: int = 500
    tol_armijo: float = 0.25
    tol_band: float = 0.0
    tol_adjoint: float = 5e-2
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InvalidParameter(f"unknown scenario {self.scenario!r}")
        if self.sample_N < 16:
            raise InvalidParameter("sample size N must be at least 16")
        if self.bump_R <= 0 or self.twist_R <= 0:
            raise InvalidParameter("support radius must be positive")
        if self.grid_k < 1:
            raise InvalidParameter("grid.k must be positive")

    # ------------------------------------------------------------ io
    @classmethod
    def from_text(cls, text: str) -> "ScenarioConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        cp.optionxform = str
        cp.read_string("[config]\n" + text)
        kw = {}
        types = {f.name: f.default for f in fields(cls)}
        for key, raw in cp["config"].items():
            name = key.replace(".", "_")
            if name not in types:
                raise InvalidParameter(f"unknown config key {key!r}")
            kw[name] = _parse_value(raw, types[name])
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            head = f.name.split("_", 1)[0]
            key = f.name.replace("_", ".", 1) if head in _SECTIONS else f.name
            lines.append(f"{key} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]

    # ------------------------------------------------------------ derived
    def field(self) -> P.MetricField:
        if self.scenario == "trivial":
            return P.MetricField("pure", self.twist_x0, self.twist_R, 0.0)
        if self.scenario == "pullback_twist":
            return P.MetricField("pullback_twist", self.twist_x0, self.twist_R,
                                 self.twist_alpha0, self.twist_order)
        return P.MetricField("conformal_bump", self.bump_x0, self.bump_R,
                             self.bump_amplitude, self.bump_order)

    @property
    def x0(self) -> tuple:
        return self.bump_x0 if self.scenario == "conformal_bump" else self.twist_x0

    @property
    def R(self) -> float:
        return self.bump_R if self.scenario == "conformal_bump" else self.twist_R

    def space_kwargs(self) -> dict:
        return dict(ode_tol=self.tol_ode, bvp_tol=self.tol_bvp, R_max=self.tol_R_max,
                    limit_tol=self.tol_limit, curv_tol=self.tol_curv)

    def extend_options(self) -> CC.ExtendOptions:
        return CC.ExtendOptions(grad_tol=self.tol_grad, step_tol=self.tol_step,
                                max_iter=self.tol_max_iter, armijo=self.tol_armijo,
                                band_delta=self.tol_band or None)

    def probe_grid(self) -> list:
        """k x k chart grid inside the hyperbolic ball of radius grid.r about x0, plus far points."""
        k = self.grid_k
        half = math.tanh(self.grid_r / 2) / math.sqrt(2)
        ticks = np.linspace(-half, half, k) if k > 1 else np.zeros(1)
        z0 = complex(*self.x0)
        pts = [H.as_xy(H.uncenter(z0, complex(a, b))) for b in ticks for a in ticks]
        pts += [np.asarray(p, float) for p in self.grid_far]
        return pts


def _parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        if default and isinstance(default[0], tuple):
            return tuple(tuple(float(c) for c in item.split(",")) for item in raw.split(";") if item.strip())
        return tuple(float(c) for c in raw.split(","))
    return raw


def _format_value(v) -> str:
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(", ".join(repr(float(c)) for c in p) for p in v)
        return ", ".join(repr(float(c)) for c in v)
    return str(v)


def parse_points(text: str) -> list:
    pts = []
    for item in text.split(";"):
        if item.strip():
            a, b = (float(c) for c in item.split(","))
            pts.append(np.array([a, b]))
    return pts


# ---------------------------------------------------------------- scenarios


def _alpha(a0, R, r):
    x = 1.0 - r / R
    if x <= 0:
        return 0.0, 0.0
    S = x ** 4 * (35 - 84 * x + 70 * x * x - 20 * x ** 3)
    dS = 140 * x ** 3 * (1 - x) ** 3
    return a0 * S, -a0 * dS / R


def build_twist(config: ScenarioConfig):
    """(MetricField, psi, dpsi) for the pullback twist; psi : (X, g0) -> (X, g1) is an isometry."""
    fld = P.MetricField("pullback_twist", config.twist_x0, config.twist_R,
                        config.twist_alpha0, config.twist_order)
    prm = fld.params()
    z0 = fld.z0

    def psi(p, inverse: bool = False):
        w = fld.chart(p)
        out = K.twist_map(prm, np.array([[w.real, w.imag]]), -1 if inverse else 1)[0]
        return fld.unchart(complex(out[0], out[1]))

    def dpsi(p, v):
        """Differential of psi at p applied to v (disk components)."""
        z = H.as_complex(p)
        w = fld.chart(z)
        dw = fld._dh(z) * complex(v[0], v[1])
        s = abs(w)
        if s >= math.tanh(config.twist_R / 2):
            out_w, dout = w, dw
        else:
            r = 2 * math.atanh(s)
            al, dal = _alpha(config.twist_alpha0, config.twist_R, r)
            dr = 0.0 if s == 0 else 2 / (1 - s * s) * (w.real * dw.real + w.imag * dw.imag) / s
            rot = complex(math.cos(al), math.sin(al))
            out_w = rot * w
            dout = rot * (dw + 1j * w * dal * dr)
        q = H.uncenter(z0, out_w)
        dq = dout / fld._dh(q)
        return np.array([dq.real, dq.imag])

    return fld, psi, dpsi


def build_space(config: ScenarioConfig, field: P.MetricField | None = None) -> P.PerturbedSpace:
    fld = field or config.field()
    strict = fld.kind != "conformal_bump"
    return P.PerturbedSpace(fld, strict_curvature=strict, **config.space_kwargs())


def build_pair(config: ScenarioConfig, N: int | None = None, field=None) -> MC.DeformationPair:
    space0 = P.PerturbedSpace(P.MetricField("pure", config.x0, config.R, 0.0), **config.space_kwargs())
    sample = BoundarySample.uniform(N or config.sample_N, config.sample_offset)
    return MC.DeformationPair(space0, build_space(config, field), sample, config.tol_moebius)


# ---------------------------------------------------------------- reports


@dataclass
class Check:
    name: str
    value: float
    bound: float
    relation: str = "<="
    note: str = ""

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        if self.relation == "<=":
            return self.value <= self.bound
        return self.value >= self.bound


@dataclass
class RunReport:
    command: str
    config: ScenarioConfig
    checks: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    def add(self, name, value, bound, relation="<=", note=""):
        self.checks.append(Check(name, float(value), float(bound), relation, note))

    @property
    def n_pass(self) -> int:
        return sum(c.passed for c in self.checks)

    @property
    def ok(self) -> bool:
        return self.n_pass == len(self.checks)

    def summary(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return (f"{self.command} {self.config.scenario}: {status} {self.n_pass}/{len(self.checks)} checks"
                f" (config {self.config.digest()}, seed {self.config.seed})")

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "report.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["check", "value", "relation", "bound", "pass", "note"])
            for c in self.checks:
                w.writerow([c.name, repr(c.value), c.relation, repr(c.bound), int(c.passed), c.note])
            w.writerow(["#config", self.config.digest(), "", "", "", f"seed={self.config.seed}"])
        self.outputs.insert(0, str(path))
        return path


# ---------------------------------------------------------------- commands


def cmd_validate(config: ScenarioConfig) -> RunReport:
    from . import suites

    rep = RunReport("validate", config)
    sp = build_space(config)
    rep.add("curvature_max", sp.K_max, -1.0 + config.tol_curv, note="K <= -1 on support grid")
    rep.add("pinching_b", sp.pinching_b, 1.0, ">=")
    rng = np.random.default_rng(config.seed)
    for name, err in suites.pure_oracle_errors(rng, 40, x0=config.x0, R=config.R).items():
        rep.add(f"pure_oracle_{name}", err, 1e-6)
    if config.scenario == "pullback_twist":
        for name, err in suites.twist_construction_errors(config).items():
            rep.add(name, err, 1e-10 if name == "twist_inverse" else 1e-6)
    return rep


def cmd_lemmas(config: ScenarioConfig) -> RunReport:
    from . import suites

    rep = RunReport("lemmas", config)
    for N in sorted({config.sample_N, 128}):
        pair = build_pair(config, N)
        for c in suites.lemma_checks(pair, config, N):
            rep.checks.append(c)
    return rep


def _require_moebius(pair: MC.DeformationPair, rep: RunReport):
    rep.add("moebius_defect", pair.defect, pair.tol_moebius)
    pair.require_moebius()


def cmd_extend(config: ScenarioConfig, points, out_dir=None) -> tuple[RunReport, list]:
    rep = RunReport("extend", config)
    pair = build_pair(config)
    _require_moebius(pair, rep)
    results = [CC.circumcenter_extend(pair, p, config.extend_options()) for p in points]
    for i, r in enumerate(results):
        rep.add(f"balance_Fx_{i}", r.balance_residual_at_Fx, 1e-3)
    if out_dir is not None:
        path = Path(out_dir) / "results.csv"
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        CC.write_rows(path, results, CC.ExtensionResult.COLUMNS)
        rep.outputs.append(str(path))
    return rep, results


def cmd_rigidity(config: ScenarioConfig, out_dir=None) -> tuple[RunReport, list]:
    if config.scenario not in ("trivial", "pullback_twist"):
        raise PreconditionError("rigidity runs only on the Moebius scenarios trivial and pullback_twist")
    rep = RunReport("rigidity", config)
    pair = build_pair(config)
    _require_moebius(pair, rep)
    grid = config.probe_grid()
    opts = config.extend_options()
    results = [CC.circumcenter_extend(pair, p, opts) for p in grid]
    r = np.array([res.r_x for res in results])
    rep.add("r_spread", r.max() - r.min(), 5e-3)
    rep.add("balance_Fx_max", max(res.balance_residual_at_Fx for res in results), 1e-3)
    rep.add("balance_x_max", max(res.balance_residual_at_x for res in results), 1e-3)
    cache = {tuple(np.round(res.x, 15)): res for res in results}
    pairs = list(itertools.combinations(grid, 2))
    q = CC.qisom_check(pair, pairs, cache, opts)
    rep.add("isometry_defect", q["isometry_defect"], 1e-2)
    rep.add("qisom_sandwich", 0.0 if q["sandwich_ok"] else 1.0, 0.0, note=f"M_hat={q['M_hat']:.3e}")
    rep.add("bilipschitz", 0.0 if q["bilipschitz_ok"] else 1.0, 0.0,
            note=f"ratio in [{q['ratio_min']:.6f}, {q['ratio_max']:.6f}]")
    if config.scenario == "trivial":
        rep.add("r_max", r.max(), 1e-6)
        rep.add("F_identity", max(H.h_distance(res.F_x, res.x) for res in results), 1e-6)
    else:
        _, psi, _ = build_twist(config)
        dev = max(P.p_distance(pair.space1, res.F_x, psi(res.x)) for res in results)
        rep.add("F_vs_psi", dev, 1e-2)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        path = Path(out_dir) / "results.csv"
        CC.write_rows(path, results, CC.ExtensionResult.COLUMNS)
        rep.outputs.append(str(path))
    return rep, results


def cmd_sweep(config: ScenarioConfig, amplitudes=(0.0, 0.05, 0.1, 0.2), out_dir=None) -> tuple[RunReport, list]:
    """Moebius defect and best-effort isometry defect of conformal bumps against amplitude."""
    rep = RunReport("sweep", config)
    rows = []
    for a in amplitudes:
        cfg = replace(config, scenario="conformal_bump", bump_amplitude=float(a))
        pair = build_pair(cfg)
        d = pair.defect
        iso = ""
        if d <= cfg.tol_moebius:
            pts = cfg.probe_grid()[:4]
            res = {tuple(np.round(p, 15)): CC.circumcenter_extend(pair, p, cfg.extend_options()) for p in pts}
            q = CC.qisom_check(pair, list(itertools.combinations(pts, 2)), res)
            iso = repr(q["isometry_defect"])
        rows.append([repr(float(a)), repr(d), repr(pair.space1.K_min), repr(pair.space1.K_max), iso])
        if a == 0.0:
            rep.add("defect_a0", d, 1e-5)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        path = Path(out_dir) / "results.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["amplitude", "moebius_defect", "K_min", "K_max", "isometry_defect"])
            w.writerows(rows)
        rep.outputs.append(str(path))
    return rep, rows


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="moebius-rigidity",
                                 description="Boundary rigidity experiments for compact deformations of H2.")
    ap.add_argument("command", choices=["validate", "lemmas", "extend", "rigidity", "sweep"])
    ap.add_argument("--config", type=Path, help="flat key = value config file")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--points", help='points for extend, "x,y;x,y"')
    ap.add_argument("--amplitudes", default="0,0.05,0.1,0.2", help="bump amplitudes for sweep")
    ap.add_argument("--scenario", choices=SCENARIOS, help="override the config scenario")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ScenarioConfig.from_file(args.config) if args.config else ScenarioConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.scenario:
            cfg = replace(cfg, scenario=args.scenario)
        out = args.out
        if args.command == "validate":
            rep = cmd_validate(cfg)
        elif args.command == "lemmas":
            rep = cmd_lemmas(cfg)
        elif args.command == "extend":
            pts = parse_points(args.points) if args.points else cfg.probe_grid()
            rep, _ = cmd_extend(cfg, pts, out)
        elif args.command == "rigidity":
            rep, _ = cmd_rigidity(cfg, out)
        else:
            amps = [float(a) for a in args.amplitudes.split(",")]
            rep, _ = cmd_sweep(cfg, amps, out)
        rep.write(out)
    except PreconditionError as exc:
        print(f"{args.command}: precondition failed: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"{args.command}: numerical failure: {exc}", file=sys.stderr)
        return 3
    print(rep.summary())
    return 0 if rep.ok else 1


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
