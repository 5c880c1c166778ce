"""Command-line front end: verification suites, trajectories, censuses and reports.

Every command accepts ``--config FILE`` (flat ``key = value`` INI, keys in
an optional ``[run]`` section) whose values are overridden by explicit
flags.  Exit status is 0 when every gate of the suite passes, 1 on a gate
failure and 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .census import SectionSpec, census
from .dynamics import CotangentState, KatokH, Kinetic, WFamily, magnetic_round
from .ellipsoid import CLOSURE_THRESHOLD, reeb_periodic_orbits, return_scan
from .integrator import integrate
from .katok import (
    GOLDEN,
    KatokParams,
    Omega_s,
    ParameterError,
    R_s,
    SequenceSpec,
    WParams,
    appendix_validate,
    convergence_report,
    katok_clock_rate,
    katok_system,
    kinetic_level_radii,
    level_identity_defect,
    vertical_hessian,
    vertical_hessian_expected,
    w_convexity_limit,
    w_level_identity_defect,
)
from .psi import (
    equivariance_defect,
    omega_pullback_defect,
    psi_forward,
    psi_inverse,
    pullback_defect,
)
from .sphere import random_rotation

COMMANDS = ("verify-psi", "simulate", "katok-verify", "orbits", "converge", "ellipsoid", "w-family")
EXIT_OK, EXIT_GATE, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


# name -> (type, default, check, help)
PARAMS: dict[str, tuple[Callable, Any, Callable[[Any], bool], str]] = {
    "s": (float, 1.0, lambda x: x >= 0, "magnetic strength s >= 0"),
    "alpha": (float, None, lambda x: 0 <= x < 1, "rotation parameter in [0, 1)"),
    "k": (float, 0.125, lambda x: x > 0, "energy level k > 0"),
    "epsilon": (float, 0.5, lambda x: x > 0, "W-family parameter > 0"),
    "n": (int, 1000, lambda x: x > 0, "number of random states or rays"),
    "N": (int, 16, lambda x: 1 <= x <= 60, "length of the Katok sequence"),
    "tol": (float, 1e-10, lambda x: 0 < x < 1, "integrator tolerance or closed-form gate"),
    "seeds": (int, 256, lambda x: x > 0, "number of census seeds"),
    "period_cap": (float, 100.0, lambda x: x > 0, "largest period searched"),
    "rng_seed": (int, 0, lambda x: x >= 0, "random seed"),
    "T": (float, 10.0, lambda x: x > 0, "integration time"),
    "system": (str, "round", lambda x: x in ("round", "katok", "katok-h", "w"), "round | katok | katok-h | w"),
    "start": (str, "", lambda x: True, "theta,phi,p_theta,p_phi in chart A (random if empty)"),
    "samples": (int, 201, lambda x: x >= 2, "trajectory rows written"),
    "expect": (int, None, lambda x: x >= 0, "expected number of distinct orbits"),
    "format": (str, None, lambda x: x in ("csv", "json"), "csv | json"),
    "out": (str, "", lambda x: True, "output path (stdout if empty)"),
}


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None


def _convert(name: str, raw, where: str):
    typ, _, check, hint = PARAMS[name]
    try:
        val = typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: field '{name}' expects {typ.__name__}, got {raw!r}") from None
    if not check(val):
        raise ConfigError(f"{where}: field '{name}' out of range ({hint}), got {raw!r}")
    return val


def _read_ini(path: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror}") from None
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
        offset = 1
    else:
        offset = 0
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text, source=path)
    except configparser.Error as err:
        line = getattr(err, "lineno", None)
        if line is None and getattr(err, "errors", None):
            line = err.errors[0][0]
        loc = f"{path}:{line - offset}" if line else path
        raise ConfigError(f"{loc}: {err.message.splitlines()[0]}") from None
    out = {}
    lines = text.splitlines()
    for sec in cp.sections():
        for key, raw in cp.items(sec):
            name = key.replace("-", "_")
            lineno = next((i + 1 - offset for i, ln in enumerate(lines)
                           if ln.split("=")[0].split(":")[0].strip() == key), "?")
            if name not in PARAMS:
                raise ConfigError(f"{path}:{lineno}: unknown field '{key}'")
            out[name] = _convert(name, raw, f"{path}:{lineno}")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magkatok", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", default=None, help="INI file with key = value lines")
        for name, (typ, _, _, hint) in PARAMS.items():
            p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, help=hint)
    return parser


def make_config(argv: Optional[list[str]] = None) -> RunConfig:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        if err.code == 0:
            raise
        raise ConfigError("invalid command line") from err
    values = {name: spec[1] for name, spec in PARAMS.items()}
    if args.config:
        values.update(_read_ini(args.config))
    for name in PARAMS:
        raw = getattr(args, name)
        if raw is not None:
            values[name] = _convert(name, raw, "command line")
    if values["format"] is None:
        values["format"] = "json" if args.command in ("orbits", "ellipsoid") else "csv"
    if values["alpha"] is None:
        values["alpha"] = values["k"] ** 2 * GOLDEN
    return RunConfig(args.command, values)


# ---------------------------------------------------------------------------
# reports


@dataclass
class Report:
    title: str
    thresholds: dict
    checks: list = field(default_factory=list)  # (name, value, gate, passed)
    table: list = field(default_factory=list)
    payload: Optional[dict] = None

    def check(self, name: str, value: float, gate: str, passed: bool) -> None:
        self.checks.append((name, float(value), gate, bool(passed)))

    @property
    def passed(self) -> bool:
        return all(c[3] for c in self.checks)

    def render(self, fmt: str) -> str:
        if fmt == "json":
            out = {"suite": self.title, "thresholds": self.thresholds,
                   "checks": [{"name": n, "value": v, "gate": g, "passed": p} for n, v, g, p in self.checks],
                   "passed": self.passed}
            if self.payload is not None:
                out.update(self.payload)
            if self.table:
                out["table"] = self.table
            return json.dumps(out, indent=2, sort_keys=True) + "\n"
        buf = io.StringIO()
        buf.write(f"# suite: {self.title}\n")
        for key, val in self.thresholds.items():
            buf.write(f"# threshold {key}: {val}\n")
        for n, v, g, p in self.checks:
            buf.write(f"# check {n} = {v:.6e} ({g}) {'PASS' if p else 'FAIL'}\n")
        buf.write(f"# result: {'PASS' if self.passed else 'FAIL'}\n")
        if self.table:
            w = csv.writer(buf, lineterminator="\n")
            cols = list(self.table[0])
            w.writerow(cols)
            for row in self.table:
                w.writerow([_fmt(row[c]) for c in cols])
        elif self.payload is not None:
            buf.write(self.payload.get("csv", ""))
        return buf.getvalue()


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{x:.15g}"
    return str(x)


def _random_states(rng: np.random.Generator, n: int, lo: float, hi: float) -> list[CotangentState]:
    q = rng.normal(size=(n, 3))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    u = rng.normal(size=(n, 3))
    u -= np.einsum("ni,ni->n", u, q)[:, None] * q
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    m = rng.uniform(lo, hi, n)
    return [CotangentState.from_ambient(qi, mi * ui) for qi, ui, mi in zip(q, u, m)]


# ---------------------------------------------------------------------------
# suites

PULLBACK_GATE = 1e-6
OMEGA_GATE = 1e-5
CLOSURE_GATE = 1e-7


def run_verify_psi(cfg: RunConfig) -> Report:
    s, tol = cfg.s, cfg.tol
    rep = Report("verify-psi", {"lambda_pullback": PULLBACK_GATE, "omega_pullback": OMEGA_GATE,
                                "closed_form": tol, "s": s, "states": cfg.n, "rng_seed": cfg.rng_seed})
    rng = np.random.default_rng(cfg.rng_seed)
    states = _random_states(rng, cfg.n, s + 0.1, s + 5.0)
    lam = max(pullback_defect(s, st, rng=rng) for st in states)
    om = max(omega_pullback_defect(s, st, rng=rng) for st in states)
    conj, rt, eq = 0.0, 0.0, 0.0
    for st in states:
        im = psi_forward(s, st)
        conj = max(conj, abs(R_s(s, im) - R_s(0.0, st)), abs(Omega_s(s, im) - Omega_s(0.0, st)))
        rt = max(rt, psi_inverse(s, im).distance(st))
    for st in states[:100]:
        eq = max(eq, equivariance_defect(s, random_rotation(rng), st))
    rep.check("lambda_pullback", lam, f"< {PULLBACK_GATE:g}", lam < PULLBACK_GATE)
    rep.check("omega_pullback", om, f"< {OMEGA_GATE:g}", om < OMEGA_GATE)
    rep.check("conjugacy", conj, f"< {tol:g}", conj < tol)
    rep.check("roundtrip", rt, f"< {tol:g}", rt < tol)
    rep.check("equivariance", eq, f"< {tol:g}", eq < tol)
    return rep


def _system(cfg: RunConfig):
    if cfg.system == "round":
        return Kinetic(), magnetic_round(cfg.s)
    if cfg.system == "katok":
        return katok_system(KatokParams(cfg.s, cfg.alpha, cfg.k))
    if cfg.system == "katok-h":
        return KatokH(cfg.s, cfg.alpha), magnetic_round(cfg.s)
    return WFamily(cfg.s, cfg.epsilon), magnetic_round(cfg.s)


def run_simulate(cfg: RunConfig) -> Report:
    H, sigma = _system(cfg)
    if cfg.start:
        try:
            x = np.array([float(z) for z in cfg.start.split(",")])
        except ValueError:
            raise ConfigError(f"command line: field 'start' expects four numbers, got {cfg.start!r}") from None
        if x.shape != (4,):
            raise ConfigError("field 'start' expects four comma-separated numbers")
        start = CotangentState.from_chart(x, "A")
    else:
        start = _random_states(np.random.default_rng(cfg.rng_seed), 1, 0.5, 1.5)[0]
    res = integrate(H, sigma, start, cfg.T, tol=cfg.tol)
    gate = 10 * cfg.tol
    rep = Report("simulate", {"energy_drift": f"10 * tol = {gate:g}", "system": cfg.system,
                              "tol": cfg.tol, "T": cfg.T})
    rep.check("energy_drift", res.energy_drift, f"< {gate:g}", res.energy_drift < gate)
    rep.payload = {"csv": res.to_csv(H, np.linspace(0.0, cfg.T, cfg.samples))}
    if cfg.format == "json":
        rows = list(csv.DictReader(io.StringIO(rep.payload["csv"])))
        rep.payload = {"trajectory": rows}
    return rep


LEVEL_GATE = 1e-9


def run_katok_verify(cfg: RunConfig) -> Report:
    p = KatokParams(cfg.s, cfg.alpha, cfg.k)
    rep = Report("katok-verify", {"level_identity": LEVEL_GATE, "radius_match": LEVEL_GATE,
                                  "grid": "y2 > 0, |y1| < 1e-10, quadratic residual < 1e-9, margins > 0",
                                  "s": p.s, "alpha": p.alpha, "k": p.k, "states": cfg.n,
                                  "rng_seed": cfg.rng_seed})
    rng = np.random.default_rng(cfg.rng_seed)
    states = _random_states(rng, cfg.n, 0.05, 5.0)
    lev, margin = 0.0, np.inf
    for st in states:
        d, m = level_identity_defect(p, st)
        lev, margin = max(lev, d), min(margin, m)
    rad = 0.0
    for st in states[:100]:
        r1, r2 = kinetic_level_radii(p, st.q, st.v)
        rad = max(rad, abs(r1 - r2))
    app = appendix_validate(p)
    rep.check("level_identity", lev, f"< {LEVEL_GATE:g}", lev < LEVEL_GATE)
    rep.check("root_margin", margin, "> 0", margin > 0)
    rep.check("radius_match", rad, f"< {LEVEL_GATE:g}", rad < LEVEL_GATE)
    rep.check("grid_min_y2", app["min_y2"], "> 0", app["min_y2"] > 0)
    rep.check("grid_max_y1", app["max_y1"], "< 1e-10", app["max_y1"] < 1e-10)
    rep.check("grid_quad_residual", app["max_quad_residual"], "< 1e-9", app["max_quad_residual"] < 1e-9)
    rep.check("grid_all", float(app["passed"]), "= 1", app["passed"])
    rep.table = [{"quantity": key, "value": float(val)} for key, val in app.items() if key != "passed"]
    return rep


def run_orbits(cfg: RunConfig) -> Report:
    p = KatokParams(cfg.s, cfg.alpha, cfg.k)
    H, sigma = katok_system(p)
    spec = SectionSpec(H, sigma, p.k, clock=lambda q, v: katok_clock_rate(p, q, v),
                       label=f"magnetic katok s={p.s:g} alpha={p.alpha:.12g} k={p.k:g}")
    res = census(spec, seeds=cfg.seeds, period_cap=cfg.period_cap, rng_seed=cfg.rng_seed)
    rep = Report("orbits", {"closure_defect": CLOSURE_GATE, "distinct": 1e-4, "near_return": 0.05,
                            "seeds": cfg.seeds, "period_cap": cfg.period_cap, "rng_seed": cfg.rng_seed,
                            "expected_orbits": cfg.expect})
    worst = max((o.closure_defect for o in res.orbits), default=0.0)
    rep.check("closure_defect", worst, f"< {CLOSURE_GATE:g}", worst < CLOSURE_GATE)
    if cfg.expect is not None:
        n = len(res.orbits)
        rep.check("orbit_count", n, f"= {cfg.expect}", n == cfg.expect)
    rep.payload = json.loads(res.to_json())
    rep.table = [{"period": o.period, "clock_period": o.clock_period, "closure_defect": o.closure_defect,
                  "section": o.section} for o in res.orbits] if cfg.format == "csv" else []
    return rep


RATIO_GATE = 1e-3


def run_converge(cfg: RunConfig) -> Report:
    rows = convergence_report(SequenceSpec(s=cfg.s), cfg.N)
    rep = Report("converge", {"ratio": f"|ratio - 1| < {RATIO_GATE:g} at n = N",
                              "monotone": "sup_metric_dev and sup_eta strictly decreasing for n >= 4",
                              "s": cfg.s, "N": cfg.N})
    tail = [r for r in rows if r["n"] >= 4]
    mono = all(b["sup_metric_dev"] < a["sup_metric_dev"] and b["sup_eta"] < a["sup_eta"]
               for a, b in zip(tail, tail[1:]))
    last = abs(rows[-1]["ratio"] - 1)
    rep.check("ratio_at_N", last, f"< {RATIO_GATE:g}", last < RATIO_GATE)
    rep.check("monotone", float(mono), "= 1", mono)
    rep.table = rows
    return rep


def run_ellipsoid(cfg: RunConfig) -> Report:
    recs = reeb_periodic_orbits(cfg.alpha, cfg.period_cap)
    best, t = return_scan(cfg.alpha, cfg.period_cap)
    rep = Report("ellipsoid", {"closure_threshold": CLOSURE_THRESHOLD, "alpha": cfg.alpha,
                               "period_cap": cfg.period_cap})
    expected = sorted([2 * np.pi / (1 + cfg.alpha), 2 * np.pi / (1 - cfg.alpha)])
    err = max(abs(r.period - e) for r, e in zip(recs, expected))
    rep.check("axis_periods", err, "< 1e-12", err < 1e-12)
    rep.check("no_other_orbit", best, f"> {CLOSURE_THRESHOLD:g}", best > CLOSURE_THRESHOLD)
    rep.payload = {"orbits": [r.as_dict() for r in recs], "scan_min_defect": best, "scan_argmin": t}
    rep.table = [{"orbit": i, "period": r.period, "closure_defect": r.closure_defect} for i, r in enumerate(recs)]
    return rep


W_LEVEL_GATE = 1e-8
HESSIAN_GATE = 1e-5


def run_w_family(cfg: RunConfig) -> Report:
    wp = WParams(cfg.s, cfg.epsilon)
    rng = np.random.default_rng(cfg.rng_seed)
    rays = min(cfg.n, 100)
    k = cfg.k
    rep = Report("w-family", {"level_identity": W_LEVEL_GATE, "vertical_hessian_rel": HESSIAN_GATE,
                              "s": wp.s, "epsilon": wp.eps, "k": k, "rays": rays, "rng_seed": cfg.rng_seed})
    lev, hess = 0.0, 0.0
    for st in _random_states(rng, rays, 1.0, 2.0):
        lev = max(lev, w_level_identity_defect(wp, k, st.q, st.v))
        H2 = vertical_hessian(wp, st.q)
        e = vertical_hessian_expected(wp, st.q)
        hess = max(hess, float(np.max(np.abs(H2 - e * np.eye(2)))) / e)
    limit = w_convexity_limit(wp, rng)
    rep.check("level_identity", lev, f"< {W_LEVEL_GATE:g}", lev < W_LEVEL_GATE)
    rep.check("vertical_hessian_rel", hess, f"< {HESSIAN_GATE:g}", hess < HESSIAN_GATE)
    rep.table = [{"quantity": "delta", "value": wp.delta}, {"quantity": "radius", "value": wp.radius},
                 {"quantity": "convexity_limit_k", "value": limit}]
    return rep


SUITES = {
    "verify-psi": run_verify_psi,
    "simulate": run_simulate,
    "katok-verify": run_katok_verify,
    "orbits": run_orbits,
    "converge": run_converge,
    "ellipsoid": run_ellipsoid,
    "w-family": run_w_family,
}


def run(cfg: RunConfig) -> tuple[int, Report]:
    """Run the configured suite; returns the exit status and the report."""
    try:
        rep = SUITES[cfg.command](cfg)
    except ConfigError:
        raise
    except ParameterError as err:
        raise ConfigError(str(err)) from err
    return (EXIT_OK if rep.passed else EXIT_GATE), rep


def main(argv: Optional[list[str]] = None) -> int:
    try:
        cfg = make_config(argv)
        status, rep = run(cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    text = rep.render(cfg.format)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
        for name, value, gate, ok in rep.checks:
            print(f"{'PASS' if ok else 'FAIL'} {name} = {value:.3e} ({gate})", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return status
