"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest

from conftest import random_states
from magkatok.census import SectionSpec, census, poincare_return
from magkatok.dynamics import CotangentState, KatokH, Kinetic, magnetic_round
from magkatok.ellipsoid import CLOSURE_THRESHOLD, reeb_periodic_orbits, return_scan
from magkatok.integrator import integrate
from magkatok.katok import (
    GOLDEN,
    KatokParams,
    Omega_s,
    R_s,
    SequenceSpec,
    WParams,
    appendix_validate,
    closed_flow,
    convergence_report,
    katok_clock_rate,
    katok_system,
    kinetic_level_radii,
    level_identity_defect,
    vertical_hessian,
    vertical_hessian_expected,
    w_level_identity_defect,
)
from magkatok.psi import equivariance_defect, omega_pullback_defect, psi_forward, pullback_defect
from magkatok.sphere import random_rotation

K_N = 2.0**-3
ALPHA_N = K_N**2 * GOLDEN


@pytest.fixture
def verdict(capsys):
    """Print one line per criterion regardless of capture, then assert."""
    t0 = time.perf_counter()

    def emit(name: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail} ({time.perf_counter() - t0:.1f}s)")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def katok_census():
    out = {}
    for s in (0.0, 1.0):
        p = KatokParams(s, ALPHA_N, K_N)
        H, sig = katok_system(p)
        spec = SectionSpec(H, sig, p.k, clock=lambda q, v, p=p: katok_clock_rate(p, q, v))
        out[s] = census(spec, seeds=256, period_cap=100.0)
    return out


def test_criterion_01_psi_pullback(verdict):
    rng = np.random.default_rng(1)
    lam = om = 0.0
    for s in (0.1, 0.5, 2.0):
        for st in random_states(rng, 1000, s + 0.1, s + 5.0):
            lam = max(lam, pullback_defect(s, st, rng=rng))
            om = max(om, omega_pullback_defect(s, st, rng=rng))
    verdict("1 psi pullback", lam < 1e-6 and om < 1e-5,
            f"lambda defect {lam:.2e} (< 1e-6), omega defect {om:.2e} (< 1e-5)")


def test_criterion_02_conjugacy(verdict):
    rng = np.random.default_rng(2)
    worst = 0.0
    for s in (0.1, 1.0, 3.0):
        for st in random_states(rng, 1000, s + 0.1, s + 5.0):
            img = psi_forward(s, st)
            worst = max(worst, abs(R_s(s, img) - R_s(0.0, st)), abs(Omega_s(s, img) - Omega_s(0.0, st)))
    verdict("2 conjugacy identities", worst < 1e-10, f"max defect {worst:.2e} (< 1e-10)")


def test_criterion_03_equivariance(verdict):
    rng = np.random.default_rng(3)
    worst = max(equivariance_defect(s, random_rotation(rng), st)
                for s in (0.1, 1.0, 3.0) for st in random_states(rng, 100, s + 0.1, s + 5.0))
    verdict("3 equivariance", worst < 1e-10, f"max defect {worst:.2e} (< 1e-10)")


def test_criterion_04_integrator_oracles(verdict):
    rng = np.random.default_rng(4)
    per = 0.0
    for s, k in [(0.0, 0.5), (1.0, 0.5), (2.0, 0.05)]:
        spec = SectionSpec(Kinetic(), magnetic_round(s), k)
        for st in random_states(rng, 3, 1.0, 1.0):
            st = CotangentState(st.q, np.sqrt(2 * k) * st.v)
            first = poincare_return(spec, st)[0][0]
            t = poincare_return(spec, first)[0][1]
            per = max(per, abs(t - 2 * np.pi / np.sqrt(2 * k + s**2)))
    flow = 0.0
    ts = np.linspace(0, 10, 101)
    for s, alpha in [(0.0, 0.3), (0.7, 0.3), (1.0, 0.05)]:
        for st in random_states(rng, 3, 0.5, 2.0):
            res = integrate(KatokH(s, alpha), magnetic_round(s), st, 10.0, tol=1e-10)
            exact = np.array([closed_flow(s, alpha, st, t).as_vector() for t in ts])
            flow = max(flow, float(np.max(np.abs(res.ambient(ts) - exact))))
    verdict("4 integrator oracles", per < 1e-7 and flow < 1e-6,
            f"latitude period error {per:.2e} (< 1e-7), closed-flow error {flow:.2e} (< 1e-6)")


def test_criterion_05_two_orbits(verdict, katok_census):
    expected = sorted([2 * np.pi / (1 + ALPHA_N), 2 * np.pi / (1 - ALPHA_N)])
    counts, err, closure = [], 0.0, 0.0
    for s, res in katok_census.items():
        counts.append(len(res.orbits))
        if len(res.orbits) == 2:
            got = sorted(o.clock_period for o in res.orbits)
            err = max(err, max(abs(a - b) for a, b in zip(got, expected)))
        closure = max([closure] + [o.closure_defect for o in res.orbits])
    ok = counts == [2, 2] and err < 1e-6 and closure < 1e-7
    verdict("5 exactly two orbits", ok,
            f"orbit counts {counts} for s = 0, 1; period error {err:.2e} (< 1e-6); closure {closure:.2e}")


def test_criterion_06_ellipsoid(verdict, katok_census):
    reeb = [r.period for r in reeb_periodic_orbits(ALPHA_N, 100.0)]
    err = 0.0
    for res in katok_census.values():
        got = sorted(o.clock_period for o in res.orbits)
        err = max([err] + [abs(a - b) for a, b in zip(got, reeb)]) if len(got) == 2 else np.inf
    best, _ = return_scan(ALPHA_N, 100.0)
    verdict("6 ellipsoid correspondence", err < 1e-6 and best > CLOSURE_THRESHOLD,
            f"period mismatch {err:.2e} (< 1e-6), non-axis scan minimum {best:.2e} (> {CLOSURE_THRESHOLD:g})")


def test_criterion_07_level_identities(verdict):
    rng = np.random.default_rng(7)
    lev = rad = 0.0
    for s, a, k in [(1.0, ALPHA_N, K_N), (0.0, 0.3, 0.5), (2.0, 0.1, 0.05)]:
        p = KatokParams(s, a, k)
        states = random_states(rng, 1000, 0.05, 5.0)
        for st in states:
            lev = max(lev, level_identity_defect(p, st)[0])
        for st in states[:100]:
            r1, r2 = kinetic_level_radii(p, st.q, st.v)
            rad = max(rad, abs(r1 - r2))
    wp = WParams(1.0, 0.5)
    w = max(w_level_identity_defect(wp, 1e-3, st.q, st.v) for st in random_states(rng, 100, 1.0, 1.0))
    verdict("7 level identities", lev < 1e-9 and rad < 1e-9 and w < 1e-8,
            f"level {lev:.2e} (< 1e-9), kinetic radius {rad:.2e} (< 1e-9), W radius {w:.2e} (< 1e-8)")


def test_criterion_08_vertical_hessian(verdict):
    rng = np.random.default_rng(8)
    wp = WParams(1.0, 0.5)
    worst = 0.0
    for st in random_states(rng, 100):
        e = vertical_hessian_expected(wp, st.q)
        worst = max(worst, float(np.max(np.abs(vertical_hessian(wp, st.q) - e * np.eye(2)))) / e)
    verdict("8 vertical Hessian", worst < 1e-5, f"max relative error {worst:.2e} (< 1e-5)")


def test_criterion_09_grid_validators(verdict):
    y2, y1, quad, ok = np.inf, 0.0, 0.0, True
    for s, a, k in [(1.0, ALPHA_N, K_N), (0.0, 0.3, 0.5), (2.0, 0.1, 0.05)]:
        app = appendix_validate(KatokParams(s, a, k))
        y2, y1, quad = min(y2, app["min_y2"]), max(y1, app["max_y1"]), max(quad, app["max_quad_residual"])
        ok = ok and app["passed"]
    verdict("9 appendix validators", ok and y2 > 0 and y1 < 1e-10 and quad < 1e-9,
            f"min y2 {y2:.3e} (> 0), max |y1| {y1:.2e}, quadratic residual {quad:.2e} (< 1e-9)")


def test_criterion_10_convergence(verdict):
    worst, mono = 0.0, True
    for s in (0.0, 1.0):
        rows = convergence_report(SequenceSpec(s=s), 16)
        tail = [r for r in rows if r["n"] >= 4]
        mono = mono and all(b["sup_metric_dev"] < a["sup_metric_dev"] and b["sup_eta"] < a["sup_eta"]
                            for a, b in zip(tail, tail[1:]))
        worst = max(worst, abs(rows[-1]["ratio"] - 1))
    verdict("10 convergence report", mono and worst < 1e-3,
            f"strictly decreasing for n >= 4: {mono}; |ratio - 1| at n = 16: {worst:.2e} (< 1e-3)")
