import numpy as np
import pytest

from conftest import random_states
from magkatok.dynamics import CotangentState, KatokH, Kinetic, MagneticForm, Rs, ZeroSectionError, magnetic_round
from magkatok.integrator import IntegrationError, integrate, integrate_batch
from magkatok.katok import KatokParams, closed_flow, katok_system


def equator_start():
    return CotangentState(np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))


def test_great_circle_returns():
    res = integrate(Kinetic(), MagneticForm(), equator_start(), 2 * np.pi, tol=1e-12)
    assert res.final.distance(equator_start()) < 1e-8
    assert res.energy_drift < 1e-10
    assert np.all(np.diff(res.times) > 0)


@pytest.mark.parametrize("s, k", [(0.0, 0.5), (1.0, 0.5), (2.0, 0.05), (0.5, 1.3)])
def test_latitude_circle_period(s, k, rng):
    T = 2 * np.pi / np.sqrt(2 * k + s**2)
    for st in random_states(rng, 3, 1.0, 1.0):
        st = CotangentState(st.q, np.sqrt(2 * k) * st.v)
        res = integrate(Kinetic(), magnetic_round(s), st, T, tol=1e-12)
        assert res.final.distance(st) < 1e-8
        # not closed at half the period
        assert res.at(T / 2).distance(st) > 1e-3


@pytest.mark.parametrize("s, alpha", [(0.0, 0.3), (0.7, 0.3), (1.0, 0.05)])
def test_katok_h_matches_closed_flow(s, alpha, rng):
    H, sig = KatokH(s, alpha), magnetic_round(s)
    for st in random_states(rng, 3, 0.5, 2.0):
        res = integrate(H, sig, st, 10.0, tol=1e-10)
        ts = np.linspace(0, 10, 41)
        amb = res.ambient(ts)
        exact = np.array([closed_flow(s, alpha, st, t).as_vector() for t in ts])
        assert np.max(np.abs(amb - exact)) < 1e-6


@pytest.mark.parametrize("tol", [1e-8, 1e-10])
def test_energy_reversibility_and_band_shift(tol, rng):
    p = KatokParams(1.0, 0.3, 0.5)
    H, sig = katok_system(p)
    for st in random_states(rng, 3, 0.5, 1.5):
        fwd = integrate(H, sig, st, 8.0, tol=tol)
        assert fwd.drift_ok()
        back = integrate(H, sig, fwd.final, -8.0, tol=tol)
        assert back.final.distance(st) < 100 * tol
        shifted = integrate(H, sig, st, 8.0, tol=tol, band_shift=np.pi / 32)
        assert shifted.final.distance(fwd.final) < 100 * tol


def test_chart_switching_happens():
    # a meridian great circle crosses both poles of chart A
    st = CotangentState(np.array([1.0, 0, 0]), np.array([0, 0, 1.0]))
    res = integrate(Kinetic(), MagneticForm(), st, 2 * np.pi, tol=1e-10)
    assert set(res.chart) == {0, 1}
    assert res.final.distance(st) < 1e-8


def test_dense_output_accuracy():
    st = equator_start()
    res = integrate(Kinetic(), MagneticForm(), st, 6.0, tol=1e-12)
    ts = np.linspace(0, 6, 97)
    q = res.ambient(ts)[:, :3]
    exact = np.column_stack([np.cos(ts), np.sin(ts), 0 * ts])
    assert np.max(np.abs(q - exact)) < 1e-6


def test_zero_section_rejected():
    z = CotangentState(np.array([1.0, 0, 0]), np.zeros(3))
    with pytest.raises(ZeroSectionError):
        integrate(Rs(0.0), MagneticForm(), z, 1.0)


def test_step_budget_carries_partial():
    with pytest.raises(IntegrationError) as err:
        integrate(Kinetic(), MagneticForm(), equator_start(), 10.0, max_steps=5)
    assert err.value.partial is not None
    assert 0 < err.value.partial.steps_accepted <= 5


def test_bad_tolerance():
    with pytest.raises(ValueError):
        integrate(Kinetic(), MagneticForm(), equator_start(), 1.0, tol=0.0)


class _Plane:
    """Crossings of the plane y = 0 upward."""

    direction = 1

    def value(self, q, v):
        return q[:, 1]


def test_events_on_great_circle():
    st = CotangentState(np.array([1.0, 0, 0]), np.array([0, -1.0, 0]))
    res = integrate(Kinetic(), MagneticForm(), st, 10.0, tol=1e-11, sections=[_Plane()])
    times = [e.t for e in res.events]
    assert times == pytest.approx([np.pi, 3 * np.pi], abs=1e-9)
    assert all(e.transverse for e in res.events)


def test_batch_rows_are_independent(rng):
    states = random_states(rng, 4)
    H, sig = KatokH(0.7, 0.3), magnetic_round(0.7)
    x, c, t, _ = integrate_batch(H, sig, states, 3.0, tol=1e-10)
    for i, st in enumerate(states):
        single = integrate(H, sig, st, 3.0, tol=1e-10).final
        got = CotangentState.from_chart(x[i], "AB"[c[i]])
        assert got.distance(single) < 1e-8


def test_csv_schema():
    res = integrate(Kinetic(), magnetic_round(1.0), equator_start(), 1.0, tol=1e-9)
    text = res.to_csv(Kinetic(), [0.0, 0.5, 1.0])
    lines = text.strip().splitlines()
    assert lines[0] == "t,theta,phi,p_theta,p_phi,chart,energy"
    assert len(lines) == 4
    assert lines[1].split(",")[5] in ("A", "B")
