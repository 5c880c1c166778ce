"""Adaptive Dormand-Prince 5(4) integration in canonical chart coordinates.

Trajectories are advanced in batches: every row carries its own time, step
size and chart tag, so many initial conditions (census seeds, shooting
perturbations) share one vectorised right-hand side evaluation.

A row in chart ``c`` stays there while its colatitude lies in
``[pi/16, 15pi/16]`` (shifted by ``band_shift``); past that it is moved to the
other chart, where it is then far from the poles.  Switches only happen
between accepted steps, so each step (and its Hermite interpolant) lives in
a single chart.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import (
    CotangentState,
    Hamiltonian,
    MagneticForm,
    ZeroSectionError,
    ambient_to_chart,
    chart_to_ambient,
    vector_field,
)
from .sphere import BAND, CHARTS, HYSTERESIS, chart_index

Array = np.ndarray

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])

H_MIN = 1e-13
# largest chart-angle change per step
MAX_TURN = 0.25
ON_SECTION = 1e-10
# the azimuth is unbounded along a trajectory, so it gets absolute control only
_REL = np.array([1.0, 0.0, 1.0, 1.0])
# per-step tolerance relative to the caller's tol; keeps the accumulated
# error of moderately long runs at the level of tol
LOCAL_FACTOR = 0.02


class IntegrationError(RuntimeError):
    """Step size underflow or step budget exhausted.

    ``partial`` holds the trajectory so far: one :class:`FlowResult` from
    :func:`integrate`, a list of them (one per row) from ``Propagator.run``.
    """

    def __init__(self, message: str, partial: Optional["FlowResult"] = None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class Event:
    """A located section crossing."""

    row: int
    section: int
    t: float
    x: Array
    chart: int
    rate: float

    @property
    def state(self) -> CotangentState:
        return CotangentState.from_chart(self.x, CHARTS[self.chart])

    @property
    def transverse(self) -> bool:
        return abs(self.rate) > 1e-6


@dataclass
class FlowResult:
    """Accepted steps of one trajectory with cubic Hermite dense output."""

    t0: Array
    t1: Array
    x0: Array
    x1: Array
    f0: Array
    f1: Array
    chart: Array
    energies: Array
    steps_accepted: int
    steps_rejected: int
    events: list = field(default_factory=list)
    tol: float = 0.0

    @property
    def times(self) -> Array:
        return np.concatenate([self.t0[:1], self.t1])

    @property
    def samples(self) -> list[tuple[float, CotangentState]]:
        out = [(float(self.t0[0]), CotangentState.from_chart(self.x0[0], CHARTS[self.chart[0]]))]
        for t, x, c in zip(self.t1, self.x1, self.chart):
            out.append((float(t), CotangentState.from_chart(x, CHARTS[c])))
        return out

    @property
    def final(self) -> CotangentState:
        return CotangentState.from_chart(self.x1[-1], CHARTS[self.chart[-1]])

    @property
    def t_final(self) -> float:
        return float(self.t1[-1])

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energies - self.energies[0])))

    def drift_ok(self, factor: float = 10.0) -> bool:
        return self.energy_drift < factor * self.tol

    def _locate(self, t: Array) -> Array:
        forward = self.t1[-1] >= self.t0[0]
        ends = self.t1 if forward else -self.t1
        tt = t if forward else -t
        return np.clip(np.searchsorted(ends, tt), 0, len(self.t1) - 1)

    def interpolate(self, t) -> tuple[Array, Array]:
        """Chart coordinates and chart tags at time(s) ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        i = self._locate(t)
        h = self.t1[i] - self.t0[i]
        s = ((t - self.t0[i]) / h)[:, None]
        h = h[:, None]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        x = h00 * self.x0[i] + h10 * h * self.f0[i] + h01 * self.x1[i] + h11 * h * self.f1[i]
        return x, self.chart[i]

    def ambient(self, t) -> Array:
        """Stacked ambient ``(q, v)`` rows at time(s) ``t``."""
        x, c = self.interpolate(t)
        q, v = chart_to_ambient(x, c)
        return np.concatenate([q, v], axis=1)

    def at(self, t: float) -> CotangentState:
        x, c = self.interpolate(t)
        return CotangentState.from_chart(x[0], CHARTS[c[0]])

    def to_csv(self, H: Hamiltonian, times: Optional[Sequence[float]] = None) -> str:
        """Trajectory table ``t,theta,phi,p_theta,p_phi,chart,energy``."""
        if times is None:
            ts = self.times
            xs = np.concatenate([self.x0[:1], self.x1])
            cs = np.concatenate([self.chart[:1], self.chart])
        else:
            ts = np.asarray(times, dtype=float)
            xs, cs = self.interpolate(ts)
        q, v = chart_to_ambient(xs, cs)
        energy = H.ambient_value(q, v)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "theta", "phi", "p_theta", "p_phi", "chart", "energy"])
        for t, x, c, e in zip(ts, xs, cs, energy):
            w.writerow([f"{t:.12g}", *(f"{z:.15g}" for z in x), CHARTS[c], f"{e:.15g}"])
        return buf.getvalue()


class Propagator:
    """Batched DP5(4) integrator for ``X_{H, sigma}``."""

    def __init__(self, H: Hamiltonian, sigma: MagneticForm, tol: float = 1e-10,
                 band_shift: float = 0.0, max_steps: int = 200_000):
        if tol <= 0:
            raise ValueError("tol must be positive")
        self.H = H
        self.sigma = sigma
        self.tol = tol
        self.local_tol = max(tol * LOCAL_FACTOR, 1e-15)
        self.low = BAND - HYSTERESIS + band_shift
        self.max_steps = max_steps

    def rhs(self, x: Array, chart: Array) -> Array:
        return vector_field(self.H, self.sigma, x, chart)

    def energy(self, x: Array, chart: Array) -> Array:
        q, v = chart_to_ambient(x, chart)
        return self.H.ambient_value(q, v)

    def step(self, x: Array, chart: Array, h: Array, k1: Array):
        ks = [k1]
        hh = h[:, None]
        for i in range(1, 7):
            xi = x + hh * sum(a * k for a, k in zip(_A[i], ks) if a != 0.0)
            ks.append(self.rhs(xi, chart))
        x5 = x + hh * sum(b * k for b, k in zip(_B, ks) if b != 0.0)
        err = hh * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
        return x5, err, ks[-1]

    def _switch(self, x: Array, chart: Array) -> Array:
        th = x[:, 0]
        return (th < self.low) | (th > np.pi - self.low)

    def _rechart(self, x: Array, chart: Array, rows: Array):
        q, v = chart_to_ambient(x[rows], chart[rows])
        new = 1 - chart[rows]
        x[rows] = ambient_to_chart(q, v, new)
        chart[rows] = new

    def run(self, x0: Array, chart0: Array, duration, *, sections: Sequence = (),
            terminal: Optional[Array] = None, t_ignore: float = 1e-6,
            record: bool = False, h0: Optional[float] = None):
        """Integrate rows of ``x0`` for ``duration`` (scalar or per row).

        ``sections`` are objects with ``value(q, v)``, ``direction`` and
        optionally ``accept(q, v)``; crossings are located and returned as
        :class:`Event` objects.  With ``terminal`` a row stops at its
        ``terminal[row]``-th transverse crossing of ``sections[0]``.
        """
        x = np.array(x0, dtype=float, copy=True)
        chart = np.array(chart0, dtype=int, copy=True)
        n = len(x)
        T = np.broadcast_to(np.asarray(duration, dtype=float), (n,)).copy()
        sign = np.where(T < 0, -1.0, 1.0)
        t = np.zeros(n)
        if self.H.needs_nonzero:
            _, v = chart_to_ambient(x, chart)
            if np.any(np.linalg.norm(v, axis=1) < 1e-10):
                raise ZeroSectionError(f"{self.H.name} is undefined on the zero section")
        # initial chart choice
        bad = self._switch(x, chart)
        if np.any(bad):
            self._rechart(x, chart, np.flatnonzero(bad))
        f = self.rhs(x, chart)
        scale = np.maximum(np.abs(f).max(axis=1), 1e-3)
        h = sign * (h0 if h0 else np.minimum(0.1, 0.05 * self.tol ** 0.2 / scale * 10))
        active = np.abs(T) > 0
        counts = np.zeros((n, max(len(sections), 1)), dtype=int)
        svals = []
        for sec in sections:
            val = self._section_values(sec, x, chart)
            # a start on the section counts as already crossed
            svals.append(np.where(np.abs(val) < ON_SECTION, sec.direction * ON_SECTION, val))
        events: list[Event] = []
        acc = np.zeros(n, dtype=int)
        rej = np.zeros(n, dtype=int)
        rec: list = []
        e0 = self.energy(x, chart) if record else None
        iters = 0
        while np.any(active):
            iters += 1
            if iters > self.max_steps:
                raise IntegrationError("maximum number of steps exceeded",
                                       self._collect(rec, n, e0, acc, rej, events)[0] if record else None)
            idx = np.flatnonzero(active)
            remaining = T[idx] - t[idx]
            hs = np.where(np.abs(h[idx]) > np.abs(remaining), remaining, h[idx])
            xi, ci, fi = x[idx], chart[idx], f[idx]
            xn, err, fn = self.step(xi, ci, hs, fi)
            sc = self.local_tol * (1.0 + np.maximum(np.abs(xi), np.abs(xn)) * _REL)
            en = np.max(np.abs(err) / sc, axis=1)
            en = np.where(np.isfinite(en), en, 1e10)
            ok = en <= 1.0
            fac = np.clip(0.9 * np.maximum(en, 1e-10) ** -0.2, 0.2, 5.0)
            h[idx] = hs * np.where(ok, fac, np.minimum(fac, 1.0))
            # steps may not turn the base point too far: keeps crossings resolvable
            turn = np.maximum(np.abs(fn[:, :2]).max(axis=1), 1e-12)
            h[idx] = np.sign(h[idx]) * np.minimum(np.abs(h[idx]), MAX_TURN / turn)
            rej[idx[~ok]] += 1
            tiny = np.abs(h[idx]) < H_MIN
            if np.any(tiny & ~ok):
                partial = self._collect(rec, n, e0, acc, rej, events)[0] if record else None
                raise IntegrationError("step size underflow", partial)
            if not np.any(ok):
                continue
            a = idx[ok]
            t_old = t[a].copy()
            x_old, f_old = xi[ok], fi[ok]
            x[a], f[a] = xn[ok], fn[ok]
            t[a] = t_old + hs[ok]
            acc[a] += 1
            if record:
                rec.append((a, t_old, t[a].copy(), x_old, x[a].copy(), f_old, f[a].copy(), chart[a].copy()))
            # events
            stop = np.zeros(len(a), dtype=bool)
            for si, sec in enumerate(sections):
                new = self._section_values(sec, x[a], chart[a])
                old = svals[si][a]
                d = sec.direction
                hit = (d * old < 0) & (d * new >= 0)
                if np.any(hit):
                    hit &= self._accept(sec, x[a], chart[a])
                if np.any(hit):
                    loc = np.flatnonzero(hit)
                    for ev in self._locate(sec, si, a[loc], t_old[loc], hs[ok][loc],
                                           x_old[loc], f_old[loc], x[a][loc], f[a][loc], chart[a][loc]):
                        if abs(ev.t) <= t_ignore:
                            continue
                        events.append(ev)
                        if not ev.transverse:
                            continue
                        counts[ev.row, si] += 1
                        if terminal is not None and si == 0 and counts[ev.row, 0] >= terminal[ev.row]:
                            j = np.flatnonzero(a == ev.row)[0]
                            stop[j] = True
                            x[ev.row] = ev.x
                            t[ev.row] = ev.t
                svals[si][a] = new
            done = (sign[a] * (T[a] - t[a]) <= 1e-14) | stop
            active[a[done]] = False
            # chart switching
            sw = self._switch(x[a], chart[a]) & ~done
            if np.any(sw):
                rows = a[sw]
                self._rechart(x, chart, rows)
                f[rows] = self.rhs(x[rows], chart[rows])
                for si, sec in enumerate(sections):
                    svals[si][rows] = self._section_values(sec, x[rows], chart[rows])
        if record:
            results, _ = self._collect(rec, n, e0, acc, rej, events)
            return results
        return x, chart, t, events

    # -- helpers ---------------------------------------------------------

    def _collect(self, rec, n, e0, acc, rej, events):
        per_row = [[] for _ in range(n)]
        for item in rec:
            a = item[0]
            for j, r in enumerate(a):
                per_row[r].append(tuple(z[j] for z in item[1:]))
        out = []
        for r in range(n):
            if not per_row[r]:
                out.append(None)
                continue
            cols = list(zip(*per_row[r]))
            t0, t1 = np.array(cols[0]), np.array(cols[1])
            x0, x1 = np.array(cols[2]), np.array(cols[3])
            f0, f1 = np.array(cols[4]), np.array(cols[5])
            ch = np.array(cols[6], dtype=int)
            en = np.concatenate([[e0[r]], self.energy(x1, ch)])
            out.append(FlowResult(t0, t1, x0, x1, f0, f1, ch, en, int(acc[r]), int(rej[r]),
                                  [e for e in events if e.row == r], self.tol))
        return out, events

    @staticmethod
    def _section_values(sec, x, chart):
        q, v = chart_to_ambient(x, chart)
        return sec.value(q, v)

    @staticmethod
    def _accept(sec, x, chart):
        if not hasattr(sec, "accept"):
            return np.ones(len(x), dtype=bool)
        q, v = chart_to_ambient(x, chart)
        return sec.accept(q, v)

    def _locate(self, sec, si, rows, t0, h, x0, f0, x1, f1, chart):
        """Crossing times: bisection on the Hermite cubic, then Newton on re-steps."""
        def herm(s):
            s = s[:, None]
            hh = h[:, None]
            return ((2 * s**3 - 3 * s**2 + 1) * x0 + (s**3 - 2 * s**2 + s) * hh * f0
                    + (-2 * s**3 + 3 * s**2) * x1 + (s**3 - s**2) * hh * f1)

        d = sec.direction
        lo = np.zeros(len(rows))
        hi = np.ones(len(rows))
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            val = d * self._section_values(sec, herm(mid), chart)
            below = val < 0
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        tau = 0.5 * (lo + hi) * h
        eps = 1e-7
        for _ in range(4):
            xs, _, fs = self.step(x0, chart, tau, f0)
            g = self._section_values(sec, xs, chart)
            gp = self._section_values(sec, xs + eps * fs, chart)
            gm = self._section_values(sec, xs - eps * fs, chart)
            rate = (gp - gm) / (2 * eps)
            delta = np.where(np.abs(rate) > 1e-14, g / np.where(rate == 0, 1, rate), 0.0)
            tau = tau - delta
            if np.all(np.abs(delta) < 1e-13):
                break
        xs, _, fs = self.step(x0, chart, tau, f0)
        gp = self._section_values(sec, xs + eps * fs, chart)
        gm = self._section_values(sec, xs - eps * fs, chart)
        rate = (gp - gm) / (2 * eps)
        return [Event(int(r), si, float(t0[j] + tau[j]), xs[j].copy(), int(chart[j]), float(rate[j]))
                for j, r in enumerate(rows)]


def integrate(H: Hamiltonian, sigma: MagneticForm, start: CotangentState, T: float,
              tol: float = 1e-10, *, band_shift: float = 0.0, sections: Sequence = (),
              max_steps: int = 200_000) -> FlowResult:
    """Integrate one trajectory of ``X_{H, sigma}`` over ``[0, T]``.

    ``tol`` is the per-step error tolerance (absolute and relative) of the
    embedded pair.  Raises :class:`IntegrationError` on step underflow.
    """
    prop = Propagator(H, sigma, tol, band_shift, max_steps)
    c = chart_index(start.chart)
    try:
        res = prop.run(start.coords()[None], np.array([c]), T, sections=sections, record=True)[0]
    except IntegrationError as err:
        raise IntegrationError(str(err), err.partial[0] if err.partial else None) from None
    if res is None:
        raise ValueError("zero duration")
    return res


def integrate_batch(H: Hamiltonian, sigma: MagneticForm, states: Sequence[CotangentState],
                    T, tol: float = 1e-10, **kw):
    """End states, times and events for many starts at once."""
    prop = Propagator(H, sigma, tol, kw.pop("band_shift", 0.0))
    x0 = np.array([s.coords() for s in states])
    c0 = np.array([chart_index(s.chart) for s in states])
    return prop.run(x0, c0, T, **kw)
