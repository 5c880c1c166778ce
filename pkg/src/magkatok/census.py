"""Poincare sections, Newton shooting and periodic-orbit censuses on an energy level.

Two kinds of section are used, both about the symmetry axis ``a`` of the
system and described by explicit coordinates on the level set:

* :class:`AxisSection` is ``{p(d/dtheta) = 0}`` (``v . a = 0``), crossed in
  the direction of increasing ``p_theta``.  A point is fixed by the
  colatitude and azimuth of ``q``; ``v`` is along ``+-d/dphi``.
* :class:`MeridianSection` is the half plane ``{q . e2 = 0, q . e1 > 0}``
  crossed in a chosen direction.  A point is fixed by the latitude ``psi``
  of ``q`` and the angle ``chi`` of ``v`` measured from ``e2``.

Orbits along a parallel (``v . a = 0`` all along) are tangent to the axis
section, so censuses watch all three sections (axis, meridian +, meridian -).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .dynamics import (
    CotangentState,
    Hamiltonian,
    Kinetic,
    MagneticForm,
    chart_tangent_to_ambient,
    chart_to_ambient,
    ham_vector_field,
)
from .integrator import Propagator
from .katok import ray_root
from .orbits import OrbitRecord, deduplicate
from .sphere import CHARTS, Z_AXIS, axis_frame_matrix, chart_index, preferred_chart

Array = np.ndarray

TRANSVERSE = 1e-6
NEAR_RETURN = 0.05
DISTINCT = 1e-4
CONVERGED = 1e-10
SAMPLES_PER_PERIOD = 256
# shoot() skips the axis section when the flow is this close to tangent
TANGENT_SWITCH = 1e-3
# Newton iterations allowed without halving the residual
STALL = 4


class NoReturnError(RuntimeError):
    """No section crossing within the time budget."""


# ---------------------------------------------------------------------------
# sections


def _wrap(x):
    return (x + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class AxisSection:
    axis: Array = field(default_factory=lambda: Z_AXIS.copy())
    direction: int = 1
    name: str = "p_theta=0"
    angular = (False, True)

    @property
    def frame(self) -> Array:
        return axis_frame_matrix(self.axis)

    def value(self, q, v):
        return -(v @ self.axis)

    def accept(self, q, v):
        return np.abs(q @ self.axis) < 1 - 1e-8

    def coords(self, q, v) -> Array:
        loc = q @ self.frame
        theta = np.arctan2(np.hypot(loc[:, 0], loc[:, 1]), loc[:, 2])
        return np.stack([theta, np.arctan2(loc[:, 1], loc[:, 0])], axis=1)

    def branch(self, q, v) -> Array:
        return np.where(np.einsum("ni,ni->n", v, np.cross(self.axis, q)) >= 0, 1.0, -1.0)

    def directions(self, xi, branch) -> tuple[Array, Array]:
        th, ph = xi[:, 0], xi[:, 1]
        F = self.frame
        q = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1) @ F.T
        ef = np.stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)], axis=1) @ F.T
        return q, branch[:, None] * ef


@dataclass(frozen=True)
class MeridianSection:
    axis: Array = field(default_factory=lambda: Z_AXIS.copy())
    direction: int = 1
    angular = (False, True)

    @property
    def name(self) -> str:
        return "phi=0" + ("+" if self.direction > 0 else "-")

    @property
    def frame(self) -> Array:
        return axis_frame_matrix(self.axis)

    def value(self, q, v):
        return q @ self.frame[:, 1]

    def accept(self, q, v):
        return q @ self.frame[:, 0] > 0

    def coords(self, q, v) -> Array:
        e1, e2, a = self.frame.T
        psi = np.arctan2(q @ a, q @ e1)
        t2 = -np.sin(psi)[:, None] * e1 + np.cos(psi)[:, None] * a
        chi = np.arctan2(np.einsum("ni,ni->n", v, t2), v @ e2)
        return np.stack([psi, chi], axis=1)

    def branch(self, q, v) -> Array:
        return np.ones(len(q))

    def directions(self, xi, branch) -> tuple[Array, Array]:
        e1, e2, a = self.frame.T
        psi, chi = xi[:, 0:1], xi[:, 1:2]
        q = np.cos(psi) * e1 + np.sin(psi) * a
        t2 = -np.sin(psi) * e1 + np.cos(psi) * a
        return q, np.cos(chi) * e2 + np.sin(chi) * t2


def default_sections(axis=None) -> list:
    a = Z_AXIS if axis is None else np.asarray(axis, dtype=float)
    return [AxisSection(a), MeridianSection(a, 1), MeridianSection(a, -1)]


@dataclass
class SectionSpec:
    """An energy level of ``(H, sigma)`` and a section on it.

    ``clock`` optionally maps ambient ``(q, v)`` rows to the rate of a
    reparametrised time; periods in that clock are reported alongside.
    """

    H: Hamiltonian
    sigma: MagneticForm
    energy: float
    section: object = None
    tol: float = 1e-11
    clock: Optional[Callable[[Array, Array], Array]] = None
    label: str = ""

    def __post_init__(self):
        if self.section is None:
            self.section = AxisSection(self.H.axis)

    def level_points(self, q: Array, u: Array) -> Array:
        """Covectors ``rho u`` on the level (``u`` unit, rows)."""
        if isinstance(self.H, Kinetic):
            # kinetic energies are quadratic along rays
            return np.sqrt(self.energy / self.H.ambient_value(q, u))[:, None] * u
        out = np.empty_like(u)
        for i in range(len(q)):
            g = lambda t, i=i: self.H.ambient_value(q[i:i + 1], t * u[i:i + 1])[0] - self.energy
            hi = 1.0
            while g(hi) <= 0:
                hi *= 2
            out[i] = ray_root(g, None, 0.0, hi) * u[i]
        return out

    def point(self, xi: Array, branch: Array, section=None) -> tuple[Array, Array]:
        sec = section or self.section
        q, u = sec.directions(np.atleast_2d(xi), np.atleast_1d(branch))
        return q, self.level_points(q, u)

    def propagator(self, tol: Optional[float] = None) -> Propagator:
        return Propagator(self.H, self.sigma, tol or self.tol)


def _to_chart(q: Array, v: Array) -> tuple[Array, Array]:
    from .dynamics import ambient_to_chart

    c = np.array([chart_index(preferred_chart(z)) for z in q])
    return ambient_to_chart(q, v, c), c


def _ambient(ev) -> tuple[Array, Array]:
    q, v = chart_to_ambient(ev.x[None], np.array([ev.chart]))
    return q[0], v[0]


# ---------------------------------------------------------------------------
# returns


@dataclass
class Returns:
    """Successive transverse crossings; tangential ones are skipped and counted."""

    crossings: list
    skipped_tangential: int = 0

    def __iter__(self):
        return iter(self.crossings)

    def __len__(self):
        return len(self.crossings)

    def __getitem__(self, i):
        return self.crossings[i]


def _run_returns(spec: SectionSpec, section, q: Array, v: Array, n_returns: Array, budget: Array,
                 tol: Optional[float] = None):
    """Integrate rows until their ``n_returns``-th transverse crossing (or the budget)."""
    x, c = _to_chart(q, v)
    prop = spec.propagator(tol)
    _, _, _, events = prop.run(x, c, budget, sections=[section], terminal=n_returns, t_ignore=1e-6)
    return events


def poincare_return(spec: SectionSpec, x: CotangentState, n_returns: int = 1,
                    budget: float = 1e3) -> Returns:
    """The first ``n_returns`` transverse crossings of ``spec.section`` after ``x``."""
    energy = spec.H(x)
    if abs(energy - spec.energy) > 1e-9:
        raise ValueError(f"start is off the level: H = {energy!r}, expected {spec.energy!r}")
    prop = spec.propagator()
    c = chart_index(x.chart)
    out, skipped = [], 0
    t0, start = 0.0, x
    while len(out) < n_returns:
        remaining = n_returns - len(out)
        _, _, _, events = prop.run(start.coords()[None], np.array([c]), budget - t0,
                                   sections=[spec.section], terminal=np.array([remaining]),
                                   t_ignore=1e-6)
        good = [e for e in events if e.transverse]
        skipped += len(events) - len(good)
        if not events:
            raise NoReturnError(f"no crossing of {spec.section.name} within t = {budget}")
        for e in good:
            out.append((e.state, t0 + e.t))
        if len(out) < n_returns:
            last = events[-1]
            t0 += last.t
            start = last.state
            c = last.chart
    return Returns(out[:n_returns], skipped)


# ---------------------------------------------------------------------------
# shooting


@dataclass
class ShotResult:
    converged: bool
    xi: Array
    period: float
    residual: float
    iterations: int
    singular: bool
    record: Optional[OrbitRecord] = None


def _return_map(spec: SectionSpec, section, xi: Array, branch: Array, n: Array,
                budget: Array, tol: float):
    """Section coordinates after ``n`` returns and the return times (NaN if lost)."""
    q, v = spec.point(xi, branch, section)
    events = _run_returns(spec, section, q, v, n, budget, tol)
    m = len(xi)
    counts = np.zeros(m, dtype=int)
    out = np.full((m, 2), np.nan)
    times = np.full(m, np.nan)
    for e in events:
        if not e.transverse:
            continue
        counts[e.row] += 1
        if counts[e.row] == n[e.row]:
            qe, ve = _ambient(e)
            out[e.row] = section.coords(qe[None], ve[None])[0]
            times[e.row] = e.t
    return out, times


def _displacement(section, xi_new, xi):
    d = xi_new - xi
    for j, ang in enumerate(section.angular):
        if ang:
            d[:, j] = _wrap(d[:, j])
    return d


def shoot_batch(spec: SectionSpec, section, xi0: Array, branch: Array, n_returns: Array,
                period_guess: Array, max_iter: int = 50, fd_step: float = 1e-6,
                trust: float = 0.2) -> list[ShotResult]:
    """Newton iteration on ``P^n(xi) - xi`` for many starts at once.

    The Jacobian is a forward-difference 2x2 matrix of the return map.  When
    it is numerically singular the step falls back to a damped
    (Levenberg-Marquardt) one.  Steps are capped by a trust radius that is
    halved whenever the residual grows.
    """
    xi = np.array(xi0, dtype=float)
    m = len(xi)
    n_returns = np.asarray(n_returns, dtype=int)
    budget = 1.5 * np.asarray(period_guess, dtype=float) + 1.0
    radius = np.full(m, trust)
    res = np.full(m, np.inf)
    D = np.full((m, 2), np.nan)
    T = np.full(m, np.nan)
    active = np.ones(m, dtype=bool)
    converged = np.zeros(m, dtype=bool)
    singular = np.zeros(m, dtype=bool)
    iters = np.zeros(m, dtype=int)
    stall = np.zeros(m, dtype=int)
    trial = xi.copy()
    tol = spec.tol
    for _ in range(max_iter + 1):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        # residual at the trial points
        new, times = _return_map(spec, section, trial[idx], branch[idx], n_returns[idx], budget[idx], tol)
        Dn = _displacement(section, new, trial[idx])
        rn = np.linalg.norm(Dn, axis=1)
        rn = np.where(np.isfinite(rn), rn, np.inf)
        better = rn < res[idx]
        acc = idx[better]
        # count iterations without a halving of the residual
        stall[acc] = np.where(rn[better] < 0.5 * res[acc], 0, stall[acc] + 1)
        xi[acc], D[acc], res[acc], T[acc] = trial[acc], Dn[better], rn[better], times[better]
        worse = idx[~better]
        radius[worse] *= 0.5
        stall[worse] += 1
        conv = idx[res[idx] < CONVERGED]
        converged[conv] = True
        active[conv] = False
        iters[idx] += 1
        dead = idx[(iters[idx] >= max_iter) | (radius[idx] < 1e-10) | (stall[idx] >= STALL)]
        active[dead] = False
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        # Jacobians at the current points
        k = len(idx)
        pert = np.concatenate([xi[idx] + fd_step * np.array([1.0, 0.0]),
                               xi[idx] + fd_step * np.array([0.0, 1.0])])
        br = np.concatenate([branch[idx], branch[idx]])
        nn = np.concatenate([n_returns[idx], n_returns[idx]])
        bb = np.concatenate([budget[idx], budget[idx]])
        newp, _ = _return_map(spec, section, pert, br, nn, bb, tol)
        Dp = _displacement(section, newp, pert)
        J = np.stack([(Dp[:k] - D[idx]) / fd_step, (Dp[k:] - D[idx]) / fd_step], axis=2)
        step = np.zeros((k, 2))
        for j in range(k):
            Jj, Dj = J[j], D[idx[j]]
            if not np.all(np.isfinite(Jj)):
                radius[idx[j]] *= 0.5
                continue
            if np.linalg.cond(Jj) < 1e8:
                step[j] = -np.linalg.solve(Jj, Dj)
            else:
                singular[idx[j]] = True
                JtJ = Jj.T @ Jj
                mu = 1e-3 * np.trace(JtJ) + 1e-14
                step[j] = -np.linalg.solve(JtJ + mu * np.eye(2), Jj.T @ Dj)
        norm = np.linalg.norm(step, axis=1)
        scale = np.minimum(1.0, radius[idx] / np.maximum(norm, 1e-300))
        trial[idx] = xi[idx] + scale[:, None] * step
    return [ShotResult(bool(converged[i]), xi[i].copy(), float(T[i]), float(res[i]), int(iters[i]),
                       bool(singular[i])) for i in range(m)]


def _finish(spec: SectionSpec, section, shots: list[ShotResult], branch: Array, n_returns: Array,
            cap: float) -> list[Optional[OrbitRecord]]:
    """Re-integrate converged orbits at tolerance 1e-12 and build records."""
    idx = [i for i, s in enumerate(shots) if s.converged]
    out: list[Optional[OrbitRecord]] = [None] * len(shots)
    if not idx:
        return out
    xi = np.array([shots[i].xi for i in idx])
    q, v = spec.point(xi, branch[idx], section)
    T = np.array([shots[i].period for i in idx])
    x, c = _to_chart(q, v)
    prop = Propagator(spec.H, spec.sigma, 1e-12)
    flows = prop.run(x, c, T, record=True)
    for j, i in enumerate(idx):
        fl = flows[j]
        start = CotangentState.from_ambient(q[j], v[j])
        defect = fl.final.distance(start)
        ts = np.linspace(0.0, T[j], SAMPLES_PER_PERIOD, endpoint=False)
        samples = fl.ambient(ts)
        clock = None
        if spec.clock is not None:
            tc = np.linspace(0.0, T[j], 4 * SAMPLES_PER_PERIOD, endpoint=False)
            amb = fl.ambient(tc)
            clock = float(np.mean(spec.clock(amb[:, :3], amb[:, 3:])) * T[j])
        out[i] = OrbitRecord(start, float(T[j]), float(spec.H(start)), float(defect), float(cap),
                             clock, section.name, int(n_returns[i]), samples,
                             lambda t, fl=fl, T=T[j]: fl.ambient(t % T)[0])
        shots[i].record = out[i]
    return out


def _section_rate(spec: SectionSpec, section, x: CotangentState, eps: float = 1e-7) -> float:
    """Rate of change of the section function along the flow at ``x``."""
    X = ham_vector_field(spec.H, spec.sigma, x)
    d = chart_tangent_to_ambient(x, X)
    qp, vp = x.q + eps * d[:3], x.v + eps * d[3:]
    qm, vm = x.q - eps * d[:3], x.v - eps * d[3:]
    return float((section.value(qp[None], vp[None])[0] - section.value(qm[None], vm[None])[0]) / (2 * eps))


def shoot(spec: SectionSpec, x0: CotangentState, period_guess: float, n_returns: int = 1,
          max_iter: int = 50) -> ShotResult:
    """Polish a periodic orbit of ``spec``'s section return map near ``x0``.

    ``x0`` is projected to the section's coordinates.  With an axis section
    the meridian section crossed by the flow is tried when the flow is
    nearly tangent to the axis section at ``x0`` or the first shot fails.  Returns a :class:`ShotResult`; ``converged``
    is False on divergence, ``record`` holds the :class:`OrbitRecord`
    otherwise.
    """
    q, v = x0.q[None], x0.v[None]
    meridian = MeridianSection(spec.H.axis, 1 if _section_rate(spec, MeridianSection(spec.H.axis), x0) >= 0 else -1)
    candidates = [spec.section]
    if isinstance(spec.section, AxisSection):
        # orbits along a parallel never cross the axis section
        if abs(_section_rate(spec, spec.section, x0)) < TANGENT_SWITCH:
            candidates = [meridian]
        else:
            candidates.append(meridian)
    n = np.array([n_returns])
    for sec in candidates:
        xi = sec.coords(q, v)
        br = sec.branch(q, v)
        shots = shoot_batch(spec, sec, xi, br, n, np.array([period_guess]), max_iter)
        if shots[0].converged:
            break
    _finish(spec, sec, shots, br, n, period_guess)
    return shots[0]


# ---------------------------------------------------------------------------
# census


@dataclass
class CensusResult:
    system: str
    energy: float
    period_cap: float
    seeds: int
    orbits: list
    totally_periodic: bool
    common_period: Optional[float]
    candidates: int
    converged: int
    diverged: int
    rng_seed: int = 0

    def to_json(self) -> str:
        out = {
            "system": self.system,
            "energy": self.energy,
            "period_cap": self.period_cap,
            "seeds": self.seeds,
            "rng_seed": self.rng_seed,
            "orbits": [o.as_dict() for o in self.orbits],
            "totally_periodic": self.totally_periodic,
            "common_period": self.common_period,
            "candidates": self.candidates,
            "converged_shots": self.converged,
            "diverged_shots": self.diverged,
        }
        return json.dumps(out, indent=2, sort_keys=True)


def level_seeds(spec: SectionSpec, n: int, rng_seed: int = 0) -> tuple[Array, Array]:
    """Quasi-uniform points of the level: scrambled Sobol in (cos theta, phi, fibre angle)."""
    sob = qmc.Sobol(d=3, scramble=True, seed=rng_seed)
    m = int(np.ceil(np.log2(max(n, 2))))
    u = sob.random_base2(m)[:n]
    z = 2 * u[:, 0] - 1
    ph = 2 * np.pi * u[:, 1]
    ang = 2 * np.pi * u[:, 2]
    F = axis_frame_matrix(spec.H.axis)
    st = np.sqrt(np.maximum(1 - z**2, 0))
    q = np.stack([st * np.cos(ph), st * np.sin(ph), z], axis=1) @ F.T
    e1 = np.cross(q, F[:, 0])
    bad = np.linalg.norm(e1, axis=1) < 1e-6
    e1[bad] = np.cross(q[bad], F[:, 1])
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(q, e1)
    u_dir = np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2
    return q, spec.level_points(q, u_dir)


def _near_returns(spec: SectionSpec, sections: list, q: Array, v: Array, cap: float,
                  near: float, tol: float, chunk: float):
    """First near-return on each section, per seed.

    A seed is retired once each section it has crossed has produced a near
    return, or at the period cap.
    """
    n = len(q)
    x, c = _to_chart(q, v)
    prop = Propagator(spec.H, spec.sigma, tol)
    first = [dict() for _ in sections]  # row -> (ambient vector, time, xi, branch)
    found = [dict() for _ in sections]  # row -> (xi, branch, n, T)
    counts = [np.zeros(n, dtype=int) for _ in sections]
    t_now = np.zeros(n)
    rows = np.arange(n)
    while len(rows) and t_now[rows[0]] < cap:
        dur = np.minimum(chunk, cap - t_now[rows])
        xe, ce, te, events = prop.run(x[rows], c[rows], dur, sections=sections, t_ignore=1e-9)
        for e in sorted(events, key=lambda e: e.t):
            if not e.transverse:
                continue
            r = rows[e.row]
            si = e.section
            qe, ve = _ambient(e)
            t_abs = t_now[r] + e.t
            counts[si][r] += 1
            if r not in first[si]:
                sec = sections[si]
                first[si][r] = (np.concatenate([qe, ve]), t_abs,
                                sec.coords(qe[None], ve[None])[0], sec.branch(qe[None], ve[None])[0])
            elif r not in found[si]:
                x0, t0, xi, br = first[si][r]
                if np.linalg.norm(np.concatenate([qe, ve]) - x0) < near and t_abs - t0 <= cap:
                    found[si][r] = (xi, br, counts[si][r] - 1, t_abs - t0)
        x[rows], c[rows] = xe, ce
        t_now[rows] += dur
        keep = []
        for r in rows:
            crossed = [si for si in range(len(sections)) if r in first[si]]
            done = crossed and all(r in found[si] for si in crossed)
            if not done and t_now[r] < cap - 1e-12:
                keep.append(r)
        rows = np.array(keep, dtype=int)
    return found


def _thin(section, found: dict, radius: float) -> list:
    """Rows whose candidates are not within ``radius`` of an earlier one with the same branch and return count."""
    kept: list = []
    for r in sorted(found):
        xi, br, n, _ = found[r]
        if all(found[k][2] != n or found[k][1] != br or np.linalg.norm(_displacement(section, (xi - found[k][0])[None], 0 * xi[None])) >= radius
               for k in kept):
            kept.append(r)
    return kept


def census(spec: SectionSpec, seeds: int = 256, period_cap: float = 100.0, rng_seed: int = 0,
           near: float = NEAR_RETURN, distinct: float = DISTINCT, sections: Optional[list] = None,
           search_tol: float = 1e-9, chunk: float = 10.0, system: str = "") -> CensusResult:
    """Distinct periodic orbits of the level found from quasi-random seeds.

    Every first near-return (phase distance < ``near``) of a seed on each
    section is polished by :func:`shoot_batch`; converged orbits are
    re-integrated for their closure defect and deduplicated by orbit
    distance.  ``totally_periodic`` is set when every seed's own first
    return closes without correction.
    """
    sections = sections or default_sections(spec.H.axis)
    q, v = level_seeds(spec, seeds, rng_seed)
    found = _near_returns(spec, sections, q, v, period_cap, near, search_tol, chunk)
    records: list[OrbitRecord] = []
    n_cand = n_conv = 0
    seed_periodic = np.zeros(seeds, dtype=bool)
    periods = []
    for si, sec in enumerate(sections):
        rows = _thin(sec, found[si], 0.5 * near)
        if not rows:
            continue
        xi = np.array([found[si][r][0] for r in rows])
        br = np.array([found[si][r][1] for r in rows])
        nr = np.array([found[si][r][2] for r in rows])
        Tg = np.array([found[si][r][3] for r in rows])
        shots = shoot_batch(spec, sec, xi, br, nr, Tg)
        _finish(spec, sec, shots, br, nr, period_cap)
        n_cand += len(rows)
        for r, s0, sh in zip(rows, xi, shots):
            if not sh.converged or sh.record is None or sh.record.period > period_cap:
                continue
            n_conv += 1
            records.append(sh.record)
            if np.linalg.norm(_displacement(sec, sh.xi[None], s0[None])) < 1e-6:
                seed_periodic[r] = True
                periods.append(sh.record.period)
    orbits = deduplicate(records, distinct)
    total = bool(seeds > 0 and seed_periodic.all())
    common = None
    if total and periods and np.ptp(periods) < 1e-6:
        common = float(np.mean(periods))
    return CensusResult(system or spec.label, float(spec.energy), float(period_cap), seeds, orbits,
                        total, common, n_cand, n_conv, n_cand - n_conv, rng_seed)
