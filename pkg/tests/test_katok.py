import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_states
from magkatok.dynamics import CotangentState, Hamiltonian, KatokH, Kinetic
from magkatok.katok import (
    GOLDEN,
    KatokMetric,
    KatokParams,
    Omega_s,
    ParameterError,
    R_s,
    SequenceSpec,
    WParams,
    appendix_validate,
    closed_flow,
    convergence_report,
    equatorial_orbits,
    fibre_hessian,
    fibre_range,
    katok_clock_rate,
    katok_metric,
    katok_system,
    kinetic_level_radii,
    level_identity_defect,
    level_in_punctured,
    ray_root,
    vertical_hessian,
    vertical_hessian_expected,
    w_convexity_limit,
    w_family,
    w_level_identity_defect,
    w_level_radii,
)
from magkatok.sphere import random_points, random_tangents


# -- R_s, Omega_s, H_{s,alpha} ---------------------------------------------


def test_r_values():
    st_ = CotangentState(np.array([1.0, 0, 0]), np.array([0, 4.0, 0]))
    assert R_s(0.0, st_) == pytest.approx(4.0)
    assert R_s(3.0, st_) == pytest.approx(5.0)


def test_omega_on_zero_section(rng):
    s = 1.7
    vals = [Omega_s(s, CotangentState(q, np.zeros(3))) for q in random_points(rng, 500)]
    assert min(vals) >= -s and max(vals) <= s
    assert Omega_s(s, CotangentState(np.array([0, 0, 1.0]), np.zeros(3))) == pytest.approx(s)


@pytest.mark.parametrize("alpha", [0.0, 0.3, 0.9])
def test_fibre_image_interval(alpha, rng):
    for q in random_points(rng, 20):
        m = rng.uniform(0.5, 3.0)
        lo, hi = fibre_range(0.0, alpha, q, m)
        assert lo == pytest.approx(m * (1 - alpha * np.sqrt(1 - q[2] ** 2)), abs=1e-6)
        # the extremes over all base points bracket [m(1-alpha), m(1+alpha)]
        assert lo >= m * (1 - alpha) - 1e-12 and hi <= m * (1 + alpha) + 1e-12
    lo, hi = fibre_range(0.0, alpha, np.array([1.0, 0, 0]), 2.0)
    assert lo == pytest.approx(2 * (1 - alpha), abs=1e-8)
    assert hi == pytest.approx(2 * (1 + alpha), abs=1e-8)


def test_alpha_zero_is_r(rng):
    for st_ in random_states(rng, 20):
        assert KatokH(0.8, 0.0)(st_) == pytest.approx(R_s(0.8, st_))


class _Squared(Hamiltonian):
    """``H^2 / 2`` of a one-homogeneous Hamiltonian."""

    def __init__(self, H):
        self.H = H

    def ambient_value(self, q, v):
        return 0.5 * self.H.ambient_value(q, v) ** 2


@pytest.mark.parametrize("alpha", [0.0, 0.3, 0.9])
@pytest.mark.parametrize("s", [0.0, 1.0])
def test_fibrewise_strict_convexity(alpha, s, rng):
    H = KatokH(s, alpha)
    # at s = 0 the Hamiltonian is one-homogeneous; convexity is that of H^2/2
    G = _Squared(H) if s == 0 else H
    worst = min(np.linalg.eigvalsh(fibre_hessian(G, st_)).min() for st_ in random_states(rng, 1000, 0.2, 3.0))
    assert worst > 0


# -- closed-form flow ----------------------------------------------------------


def test_round_geodesic_period(rng):
    for st_ in random_states(rng, 10):
        assert closed_flow(0.0, 0.0, st_, 2 * np.pi).distance(st_) < 1e-12


@pytest.mark.parametrize("s, alpha", [(0.0, 0.3), (0.7, 0.3), (1.0, 0.05)])
def test_equatorial_orbits(s, alpha):
    c = np.sqrt(2 * 0.5 + s**2) + alpha * s
    (co, T1), (counter, T2) = equatorial_orbits(s, alpha, c)
    assert T1 == pytest.approx(2 * np.pi / (1 + alpha))
    assert T2 == pytest.approx(2 * np.pi / (1 - alpha))
    for st_, T in ((co, T1), (counter, T2)):
        assert KatokH(s, alpha)(st_) == pytest.approx(c, abs=1e-12)
        assert closed_flow(s, alpha, st_, T).distance(st_) < 1e-12
        assert closed_flow(s, alpha, st_, T / 2).distance(st_) > 1e-2


def test_closed_flow_is_a_flow(rng):
    for st_ in random_states(rng, 20):
        a = closed_flow(0.7, 0.3, closed_flow(0.7, 0.3, st_, 1.3), 2.1)
        assert a.distance(closed_flow(0.7, 0.3, st_, 3.4)) < 1e-12


# -- Katok metric ----------------------------------------------------------------


def test_parameter_checks():
    with pytest.raises(ParameterError):
        KatokParams(1.0, 1.0, 0.1)
    with pytest.raises(ParameterError):
        KatokParams(1.0, 0.3, -0.1)
    assert level_in_punctured(1.0, 0.3, 1.4) and not level_in_punctured(1.0, 0.3, 1.2)


def test_alpha_zero_collapse(rng):
    p = KatokParams(1.3, 0.0, 0.2)
    q = random_points(rng, 50)
    assert np.allclose(p.r(q[:, 2]), p.c)
    assert np.allclose(p.y2(q[:, 2]), 2 * p.k)
    assert np.allclose(p.eta(q), 0)
    m = katok_metric(p, q[0])
    assert np.allclose(m.cometric, np.eye(2))
    v = random_tangents(rng, q[:1])[0]
    v *= np.sqrt(2 * p.k) / np.linalg.norm(v)
    assert m.F(v) == pytest.approx(1.0)


def test_metric_positive_definite(rng):
    p = KatokParams(1.0, 0.2, 0.05)
    h = random_points(rng, 1000) @ p.axis
    e1, e2 = p.metric_eigenvalues(h)
    assert min(e1.min(), e2.min()) > 0


def test_kinetic_matches_cometric(rng):
    p = KatokParams(1.0, 0.3, 0.1)
    metric = KatokMetric(p)
    H = Kinetic(metric)
    for st_ in random_states(rng, 20):
        cm = katok_metric(p, st_.q).cometric
        e = np.cross(p.axis, st_.q)
        e /= np.linalg.norm(e)
        et = np.cross(e, st_.q)
        comps = np.array([st_.v @ et, st_.v @ e])
        assert H(st_) == pytest.approx(0.5 * comps @ cm @ comps, rel=1e-12)
    assert "katok" in repr(metric)


def test_level_identity_alpha_zero(rng):
    p = KatokParams(1.0, 0.0, 0.3)
    for st_ in random_states(rng, 100, 0.05, 4.0):
        assert level_identity_defect(p, st_)[0] < 1e-12


def test_level_identity(rng):
    p = KatokParams(1.0, 0.3, 0.1)
    for st_ in random_states(rng, 1000, 0.01, 5.0):
        d, margin = level_identity_defect(p, st_)
        assert d < 1e-9
        assert margin > 0


def test_radii_match(rng):
    p = KatokParams(1.0, 0.3, 0.1, axis=np.array([0.2, 0.1, 1.0]))
    for st_ in random_states(rng, 50):
        r1, r2 = kinetic_level_radii(p, st_.q, st_.v)
        assert abs(r1 - r2) < 1e-9


def test_ray_root():
    assert ray_root(lambda t: t**2 - 2, lambda t: 2 * t, 0, 3) == pytest.approx(np.sqrt(2), abs=1e-14)
    with pytest.raises(ValueError):
        ray_root(lambda t: t + 1, None, 0, 1)


def test_grid_validators_alpha_zero():
    res = appendix_validate(KatokParams(1.0, 0.0, 0.2), 32, 64, 4)
    assert res["passed"]
    assert res["max_y2_closed_form_gap"] < 1e-14
    assert res["min_y2"] == pytest.approx(0.4)


def test_grid_validators_strong_field():
    assert appendix_validate(KatokParams(2.0, 0.5, 0.01), 128, 256, 8)["min_y2"] > 0


def test_y1_vanishes_at_random_states(rng):
    p = KatokParams(1.0, 0.3, 0.1)
    q = random_points(rng, 1000)
    v = random_tangents(rng, q, 2.0)
    h = q @ p.axis
    rot = np.cross(p.axis, q)
    coef = p.c + p.alpha * np.einsum("ni,ni->n", p.eta(q), rot) - p.alpha * p.s * h
    y1 = np.einsum("ni,ni->n", v, p.eta(q)) - p.alpha * coef * np.einsum("ni,ni->n", v, rot)
    assert np.max(np.abs(y1)) < 1e-10


def test_clock_rate_on_equatorial_orbit():
    from magkatok.integrator import integrate

    k = 0.125
    p = KatokParams(1.0, k * k * GOLDEN, k)
    H, sig = katok_system(p)
    # the kinetic level is the shifted H_{s,alpha} level; its equatorial orbits are known
    for st_, T in equatorial_orbits(p.s, p.alpha, p.c):
        st_ = CotangentState.from_ambient(st_.q, st_.v + p.eta(st_.q[None])[0])
        assert H(st_) == pytest.approx(k, abs=1e-12)
        rate = katok_clock_rate(p, st_.q, st_.v)[0]
        res = integrate(H, sig, st_, T / rate, tol=1e-12)
        assert res.final.distance(st_) < 1e-8


# -- W family ---------------------------------------------------------------------


def test_w_vanishes_on_zero_section(rng):
    wp = WParams(1.0, 0.5)
    for q in random_points(rng, 20):
        assert w_family(wp, CotangentState(q, np.zeros(3))) == 0.0


def test_w_domain():
    wp = WParams(1.0, 0.5)
    assert wp.delta == pytest.approx(np.sqrt(8))
    with pytest.raises(ParameterError):
        w_family(wp, CotangentState(np.array([1.0, 0, 0]), np.array([0, 3.0, 0])))
    with pytest.raises(ParameterError):
        WParams(0.0, 0.5)


def test_vertical_hessian_north_pole():
    wp = WParams(2.0, 0.5)
    Hs = vertical_hessian(wp, np.array([0, 0, 1.0]))
    assert np.allclose(Hs, np.eye(2) / 2.0, rtol=1e-6)


def test_vertical_hessian(rng):
    wp = WParams(1.0, 0.5)
    worst = 0.0
    for q in random_points(rng, 100):
        e = vertical_hessian_expected(wp, q)
        worst = max(worst, np.max(np.abs(vertical_hessian(wp, q) - e * np.eye(2))) / e)
    assert worst < 1e-5


def test_w_level_identity(rng):
    wp = WParams(1.0, 0.5)
    for q in random_points(rng, 100):
        u = random_tangents(rng, q[None])[0]
        assert w_level_identity_defect(wp, 1e-3, q, u) < 1e-8


def test_w_level_outside_domain():
    wp = WParams(1.0, 0.5)
    with pytest.raises(ParameterError):
        w_level_radii(wp, 50.0, np.array([1.0, 0, 0]), np.array([0, 1.0, 0]))


def test_w_convexity_limit_positive():
    lim = w_convexity_limit(WParams(1.0, 0.5), np.random.default_rng(0), samples=16)
    assert 1e-3 < lim < 10


# -- sequences and convergence -------------------------------------------------------


def test_sequence_values():
    spec = SequenceSpec(s=1.0)
    assert spec.k(3) == 0.125
    assert spec.alpha(3) == pytest.approx(0.125**2 * GOLDEN)
    assert SequenceSpec(s=0.0, weak=True).alpha(3) == 0.125


def test_convergence_report():
    rows = convergence_report(SequenceSpec(s=1.0), 16)
    tail = rows[3:]
    assert all(b["sup_metric_dev"] < a["sup_metric_dev"] for a, b in zip(tail, tail[1:]))
    assert all(b["sup_eta"] < a["sup_eta"] for a, b in zip(tail, tail[1:]))
    assert abs(rows[-1]["ratio"] - 1) < 1e-3
    for r in rows:
        if r["alpha"] < 1e-3 and r["k"] < 1e-3:
            assert r["r_minus_s"] < 1e-3
        if r["n"] >= 4:
            assert abs(r["ratio"] - 1) < 10 * (r["alpha"] / r["k"] + r["k"])


def test_convergence_weak_sequence_at_zero_field():
    rows = convergence_report(SequenceSpec(s=0.0, weak=True), 16)
    assert rows[-1]["sup_metric_dev"] < 1e-3
    assert abs(rows[-1]["ratio"] - 1) < 1e-3


@given(st.floats(0.0, 3.0), st.floats(0.0, 0.95), st.floats(0.01, 2.0))
def test_y2_positive_whenever_admissible(s, alpha, k):
    try:
        p = KatokParams(s, alpha, k)
    except ParameterError:
        return
    h = np.linspace(-1, 1, 201)
    assert np.all(p.y2(h) > 0)


@pytest.mark.parametrize("s, alpha, k", [(1.0, 0.3, 0.4), (0.0, 0.2, 0.05), (2.0, 0.01, 1.0)])
def test_metric_deviation_matches_eigenvalues(s, alpha, k):
    p = KatokParams(s, alpha, k)
    h = np.linspace(-1, 1, 33)
    for e, d in zip(p.metric_eigenvalues(h), p.metric_deviation(h)):
        assert np.allclose(e - 1, d, atol=1e-14)
