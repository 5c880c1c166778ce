"""Cotangent states, twisted symplectic forms and Hamiltonian vector fields.

A covector ``p`` at ``q`` is stored through its round-metric dual ``v``
(an ambient tangent vector).  Canonical chart coordinates are
``x = (theta, phi, p_theta, p_phi)`` with ``p_theta = v . d_theta`` and
``p_phi = v . d_phi = sin(theta)^2 u_phi``.

Every Hamiltonian here is rotation invariant about an axis ``a`` and is
written as a function of three invariants::

    m2 = |p|^2,   w = p(d/dphi) = a . (q x v),   h = a . q

Each variant supplies its value and the three partials in closed form; the
chain rule through the chart jet gives the canonical partials.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .sphere import (
    CHARTS,
    FRAMES,
    Z_AXIS,
    SpherePoint,
    chart_index,
    polar_basis,
    polar_coords,
    preferred_chart,
)

Array = np.ndarray


class ZeroSectionError(ValueError):
    """Operation undefined on (or too close to) the zero section."""


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True)
class CotangentState:
    """Point ``(q, p)`` of T*S^2; ``v`` is the round-metric dual of ``p``."""

    q: Array
    v: Array
    chart: str = "A"

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        q = q / np.linalg.norm(q)
        v = np.asarray(self.v, dtype=float)
        v = v - (v @ q) * q
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)
        chart_index(self.chart)

    @classmethod
    def from_ambient(cls, q, v, chart: Optional[str] = None) -> "CotangentState":
        q = np.asarray(q, dtype=float)
        return cls(q, v, chart or preferred_chart(q / np.linalg.norm(q)))

    @classmethod
    def from_chart(cls, x, chart: str = "A") -> "CotangentState":
        q, v = chart_to_ambient(np.asarray(x, dtype=float)[None, :], np.array([chart_index(chart)]))
        return cls(q[0], v[0], chart)

    @property
    def point(self) -> SpherePoint:
        return SpherePoint(self.q, self.chart)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.v))

    def coords(self, chart: Optional[str] = None) -> Array:
        """Canonical chart coordinates in ``chart`` (default: own chart)."""
        c = chart_index(chart or self.chart)
        return ambient_to_chart(self.q[None], self.v[None], np.array([c]))[0]

    def with_chart(self, chart: str) -> "CotangentState":
        return CotangentState(self.q, self.v, chart)

    def as_vector(self) -> Array:
        return np.concatenate([self.q, self.v])

    def distance(self, other: "CotangentState") -> float:
        return float(np.linalg.norm(self.as_vector() - other.as_vector()))


def chart_to_ambient(x: Array, chart: Array) -> tuple[Array, Array]:
    """Batch map of chart coordinates (n, 4) to ambient ``(q, v)``."""
    frames = FRAMES[chart]
    q, et, ef = (
        np.einsum("nij,nj->ni", frames, vec)
        for vec in polar_basis(x[:, 0], x[:, 1], np.eye(3))
    )
    v = x[:, 2:3] * et + (x[:, 3:4] / np.sin(x[:, 0:1])) * ef
    return q, v


def ambient_to_chart(q: Array, v: Array, chart: Array) -> Array:
    frames = FRAMES[chart]
    ql = np.einsum("nji,nj->ni", frames, q)
    vl = np.einsum("nji,nj->ni", frames, v)
    theta, phi = polar_coords(ql, np.eye(3))
    _, et, ef = polar_basis(theta, phi, np.eye(3))
    pt = np.einsum("ni,ni->n", vl, et)
    pp = np.sin(theta) * np.einsum("ni,ni->n", vl, ef)
    return np.stack([theta, phi, pt, pp], axis=1)


def chart_tangent_to_ambient(state: CotangentState, dx: Array, chart: Optional[str] = None,
                             h: float = 1e-6) -> Array:
    """Ambient tangent ``(dq, dv)`` of a chart-coordinate displacement ``dx``."""
    c = np.array([chart_index(chart or state.chart)])
    x = state.coords(chart)
    qp, vp = chart_to_ambient((x + h * dx)[None], c)
    qm, vm = chart_to_ambient((x - h * dx)[None], c)
    return np.concatenate([qp[0] - qm[0], vp[0] - vm[0]]) / (2 * h)


# ---------------------------------------------------------------------------
# chart jet of the invariants


@dataclass
class AxisJet:
    """Invariants (h, w) about one axis and their chart partials."""

    h: Array
    dh: tuple  # four columns
    w: Array
    dw: tuple
    a_t: Array  # a . e_theta
    a_f: Array  # a . e_phi


_AXIS_CACHE: dict[bytes, Array] = {}


def _local_axis(a: Array) -> Array:
    """Axis components in each chart's frame, shape (2, 3)."""
    return np.einsum("cji,j->ci", FRAMES, a)


@dataclass
class ChartJet:
    """Trigonometric data and ``|p|^2`` with its partials at chart coordinates."""

    x: Array
    chart: Array
    st: Array
    ct: Array
    sp: Array
    cp: Array
    m2: Array
    dm2: tuple  # four columns

    @property
    def frames(self) -> Array:
        return FRAMES[self.chart]

    def ambient_basis(self) -> tuple[Array, Array, Array]:
        """Ambient ``q``, unit ``e_theta`` and unit ``e_phi``."""
        q, et, ef = polar_basis(self.x[:, 0], self.x[:, 1], np.eye(3))
        f = self.frames
        return tuple(np.einsum("nij,nj->ni", f, z) for z in (q, et, ef))

    def axis(self, a: Array) -> AxisJet:
        key = a.tobytes()
        memo = self.__dict__.setdefault("_axis_memo", {})
        if key in memo:
            return memo[key]
        if key not in _AXIS_CACHE:
            _AXIS_CACHE[key] = _local_axis(a)
        al = _AXIS_CACHE[key][self.chart]
        a0, a1, a2 = al[:, 0], al[:, 1], al[:, 2]
        st, ct, sp, cp = self.st, self.ct, self.sp, self.cp
        pt, pp = self.x[:, 2], self.x[:, 3]
        # rho = a0 cos(phi) + a1 sin(phi); d(a_f)/dphi = -rho
        rho = a0 * cp + a1 * sp
        a_t = ct * rho - a2 * st
        a_f = a1 * cp - a0 * sp
        h = st * rho + a2 * ct
        w = pt * a_f - pp * a_t / st
        dh = (a_t, st * a_f, 0.0, 0.0)
        dw = (
            pp * (h * st + a_t * ct) / st**2,
            -pt * rho - pp * ct * a_f / st,
            a_f,
            -a_t / st,
        )
        memo[key] = AxisJet(h, dh, w, dw, a_t, a_f)
        return memo[key]


def chart_jet(x: Array, chart: Array) -> ChartJet:
    theta, phi, pt, pp = x.T
    st, ct = np.sin(theta), np.cos(theta)
    m2 = pt**2 + (pp / st) ** 2
    dm2 = (-2 * pp**2 * ct / st**3, 0.0, 2 * pt, 2 * pp / st**2)
    return ChartJet(x, chart, st, ct, np.sin(phi), np.cos(phi), m2, dm2)


# ---------------------------------------------------------------------------
# magnetic forms


@dataclass(frozen=True)
class MagneticForm:
    """Closed two-form ``sigma = s mu + d(f beta)`` on the round sphere.

    ``f`` maps ambient points (n, 3) to values (n,); ``df`` (optional)
    returns an ambient gradient (n, 3).  Without ``df`` the differential is
    taken by central differences along the sphere.  ``beta`` is the metric
    dual of the rotation field about ``axis``.
    """

    s: float = 0.0
    f: Optional[Callable[[Array], Array]] = None
    df: Optional[Callable[[Array], Array]] = None
    axis: Array = None  # type: ignore[assignment]
    label: str = ""
    # optional h -> (f, df/dh) when f depends on q only through h = axis . q
    profile: Optional[Callable[[Array], tuple]] = None

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("magnetic strength s must be >= 0")
        a = Z_AXIS if self.axis is None else np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", a / np.linalg.norm(a))

    @property
    def is_zero(self) -> bool:
        return self.f is None and self.s == 0.0

    def _df_along(self, q: Array, u: Array, eps: float = 1e-6) -> Array:
        if self.df is not None:
            return np.einsum("ni,ni->n", self.df(q), u)
        qp = q + eps * u
        qm = q - eps * u
        qp /= np.linalg.norm(qp, axis=1, keepdims=True)
        qm /= np.linalg.norm(qm, axis=1, keepdims=True)
        return (self.f(qp) - self.f(qm)) / (2 * eps)

    def pair(self, q: Array, u: Array, w: Array) -> Array:
        """``sigma(u, w)`` for stacked ambient base points and tangents."""
        q, u, w = (np.atleast_2d(np.asarray(z, dtype=float)) for z in (q, u, w))
        mu = np.einsum("ni,ni->n", q, np.cross(u, w))
        out = self.s * mu
        if self.f is not None:
            rot = np.cross(self.axis, q)
            beta_u = np.einsum("ni,ni->n", rot, u)
            beta_w = np.einsum("ni,ni->n", rot, w)
            h = q @ self.axis
            # d(f beta) = df ^ beta + f d(beta),  d(beta) = 2 h mu
            out = out + (self._df_along(q, u) * beta_w - self._df_along(q, w) * beta_u
                         + 2 * self.f(q) * h * mu)
        return out

    def chart_coefficient(self, x: Array, jet: ChartJet) -> Array:
        """Coefficient ``B`` of ``sigma = B dtheta ^ dphi`` in the rows' charts."""
        out = self.s * jet.st
        if self.f is None:
            return out
        if self.profile is not None:
            # beta = a_f dtheta - sin(theta) a_t dphi and a_t^2 + a_f^2 = 1 - h^2
            h = jet.axis(self.axis).h
            f, fp = self.profile(h)
            return jet.st * (self.s + 2 * h * f - (1 - h**2) * fp)
        q, d_theta, e_phi = jet.ambient_basis()
        return out + self.pair(q, d_theta, jet.st[:, None] * e_phi) - self.s * jet.st


def magnetic_round(s: float) -> MagneticForm:
    return MagneticForm(s=s, label=f"{s}*mu")


# ---------------------------------------------------------------------------
# Hamiltonians


class Hamiltonian:
    """Rotation-invariant Hamiltonian ``H(m2, w, h)`` about ``axis``."""

    axis: Array = Z_AXIS
    needs_nonzero = False
    name = "H"

    def jet(self, m2: Array, w: Array, h: Array):
        """Value and partials ``(H, H_m2, H_w, H_h)``."""
        raise NotImplementedError

    def ambient_value(self, q: Array, v: Array) -> Array:
        q = np.atleast_2d(q)
        v = np.atleast_2d(v)
        m2 = np.einsum("ni,ni->n", v, v)
        w = np.einsum("ni,ni->n", v, np.cross(self.axis, q))
        h = q @ self.axis
        with np.errstate(divide="ignore"):
            return self.jet(m2, w, h)[0]

    def __call__(self, state: CotangentState) -> float:
        return float(self.ambient_value(state.q, state.v)[0])

    def chart_gradient(self, x: Array, chart: Array, jet: Optional[ChartJet] = None):
        """Value and canonical partials (n, 4) at chart coordinates."""
        jet = jet or chart_jet(x, chart)
        ax = jet.axis(self.axis)
        val, hm, hw, hh = self.jet(jet.m2, ax.w, ax.h)
        grad = np.empty((len(x), 4))
        for i in range(4):
            grad[:, i] = hm * jet.dm2[i] + hw * ax.dw[i] + hh * ax.dh[i]
        return val, grad

    def describe(self) -> dict:
        return {"hamiltonian": self.name}


class Kinetic(Hamiltonian):
    """Kinetic energy ``|p|^2 / 2`` of a cometric.

    ``metric`` is ``None`` for the round metric or any object with
    ``cometric_jet(m2, w, h) -> (|p|^2_g, d/dm2, d/dw, d/dh)``.
    """

    def __init__(self, metric=None):
        self.metric = metric
        if metric is not None:
            self.axis = metric.axis
        self.name = "kinetic" if metric is None else f"kinetic[{metric!r}]"

    def jet(self, m2, w, h):
        if self.metric is None:
            one = np.ones_like(m2)
            return 0.5 * m2, 0.5 * one, 0 * one, 0 * one
        n2, dm, dw, dh = self.metric.cometric_jet(m2, w, h)
        return 0.5 * n2, 0.5 * dm, 0.5 * dw, 0.5 * dh

    def describe(self):
        out = {"hamiltonian": "kinetic"}
        if self.metric is not None:
            out.update(self.metric.describe())
        return out


class Rs(Hamiltonian):
    """``R_s = sqrt(|p|^2 + s^2)``."""

    def __init__(self, s: float, axis=None):
        self.s = float(s)
        self.needs_nonzero = self.s == 0.0
        if axis is not None:
            self.axis = np.asarray(axis, dtype=float)
        self.name = f"R_{s}"

    def jet(self, m2, w, h):
        r = np.sqrt(m2 + self.s**2)
        zero = np.zeros_like(r)
        return r, 0.5 / r, zero, zero


class OmegaS(Hamiltonian):
    """``Omega_s = p(d/dphi) + s h``; generates the lifted rotation."""

    def __init__(self, s: float, axis=None):
        self.s = float(s)
        if axis is not None:
            self.axis = np.asarray(axis, dtype=float)
        self.name = f"Omega_{s}"

    def jet(self, m2, w, h):
        one = np.ones_like(m2)
        return w + self.s * h, 0 * one, one, self.s * one


class KatokH(Hamiltonian):
    """``H_{s,alpha} = R_s + alpha Omega_s``."""

    def __init__(self, s: float, alpha: float, axis=None):
        self.s, self.alpha = float(s), float(alpha)
        self.needs_nonzero = self.s == 0.0
        if axis is not None:
            self.axis = np.asarray(axis, dtype=float)
        self.name = f"H_{s},{alpha}"

    def jet(self, m2, w, h):
        r = np.sqrt(m2 + self.s**2)
        one = np.ones_like(r)
        a = self.alpha
        return r + a * (w + self.s * h), 0.5 / r, a * one, a * self.s * one

    def describe(self):
        return {"hamiltonian": "katok_h", "s": self.s, "alpha": self.alpha}


class WFamily(Hamiltonian):
    """``H_s = (R_s - s) / (1 + eps (s - Omega_s))`` on ``|p| < delta``."""

    def __init__(self, s: float, eps: float, axis=None):
        if s <= 0 or eps <= 0:
            raise ValueError("W family needs s > 0 and eps > 0")
        self.s, self.eps = float(s), float(eps)
        if axis is not None:
            self.axis = np.asarray(axis, dtype=float)
        self.name = f"W_{s},{eps}"

    @property
    def delta(self) -> float:
        return float(np.sqrt(1 / self.eps**2 + 2 * self.s / self.eps))

    def jet(self, m2, w, h):
        s, e = self.s, self.eps
        r = np.sqrt(m2 + s**2)
        num = r - s
        den = 1 + e * (s - w - s * h)
        val = num / den
        return val, 0.5 / r / den, num * e / den**2, num * e * s / den**2

    def describe(self):
        return {"hamiltonian": "w_family", "s": self.s, "epsilon": self.eps}


# ---------------------------------------------------------------------------
# forms on T*S^2


def one_forms(state: CotangentState, w: Array, s: float = 0.0) -> tuple[float, float, float, float]:
    """Frame one-forms on an ambient tangent ``w = (dq, dv)`` of T*S^2.

    Returns ``(lambda, zeta_X, zeta_V, lambda_s)`` where
    ``zeta_X(w) = g(d pi w, v)``, ``zeta_V(w) = g(K w, j v)`` with ``K`` the
    connection map, and ``lambda_s = zeta_X + s zeta_V / |p|^2``.
    """
    w = np.asarray(w, dtype=float)
    dq, dv = w[:3], w[3:]
    zx = float(dq @ state.v)
    # the normal part of dv is orthogonal to j v, so no explicit projection
    zv = float(dv @ np.cross(state.q, state.v))
    m2 = float(state.v @ state.v)
    if m2 == 0.0:
        if s > 0:
            raise ZeroSectionError("lambda_s is undefined on the zero section")
        return zx, zx, zv, zx
    return zx, zx, zv, zx + s * zv / m2


def lambda_s_batch(q: Array, v: Array, dq: Array, dv: Array, s: float) -> Array:
    zx = np.einsum("ni,ni->n", dq, v)
    if s == 0:
        return zx
    zv = np.einsum("ni,ni->n", dv, np.cross(q, v))
    return zx + s * zv / np.einsum("ni,ni->n", v, v)


def horizontal_lift(state: CotangentState, u: Array) -> Array:
    """Ambient tangent of T*S^2 moving the base along ``u`` with ``v`` parallel."""
    u = np.asarray(u, dtype=float)
    return np.concatenate([u, -(state.v @ u) * state.q])


def vertical_lift(state: CotangentState, u: Array) -> Array:
    return np.concatenate([np.zeros(3), np.asarray(u, dtype=float)])


def omega_pairing(sigma: MagneticForm, state: CotangentState, w1: Array, w2: Array,
                  chart: Optional[str] = None) -> float:
    """``(dp^dq - pi* sigma)(w1, w2)`` for chart-coordinate tangents."""
    c = np.array([chart_index(chart or state.chart)])
    x = state.coords(chart)[None]
    B = sigma.chart_coefficient(x, chart_jet(x, c))[0]
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    can = (w1[2] * w2[0] - w2[2] * w1[0]) + (w1[3] * w2[1] - w2[3] * w1[1])
    return float(can - B * (w1[0] * w2[1] - w1[1] * w2[0]))


def omega_ambient(sigma: MagneticForm, q: Array, w1: Array, w2: Array) -> Array:
    """Same form on ambient tangents ``(dq, dv)``; works on stacked rows."""
    q, w1, w2 = (np.atleast_2d(z) for z in (q, w1, w2))
    can = (np.einsum("ni,ni->n", w1[:, 3:], w2[:, :3])
           - np.einsum("ni,ni->n", w2[:, 3:], w1[:, :3]))
    return can - sigma.pair(q, w1[:, :3], w2[:, :3])


# ---------------------------------------------------------------------------
# Hamiltonian vector field


def vector_field(H: Hamiltonian, sigma: MagneticForm, x: Array, chart: Array) -> Array:
    """Batch Hamiltonian vector field in canonical chart coordinates.

    ``omega_sigma(X, .) = -dH`` with ``omega = dp^dq - B dtheta^dphi`` is
    block triangular, so the 4x4 solve reduces to::

        theta' = H_pt, phi' = H_pp, pt' = -H_th - B phi', pp' = -H_ph + B theta'
    """
    jet = chart_jet(x, chart)
    _, g = H.chart_gradient(x, chart, jet)
    B = sigma.chart_coefficient(x, jet) if not sigma.is_zero else 0.0
    out = np.empty_like(g)
    out[:, 0] = g[:, 2]
    out[:, 1] = g[:, 3]
    out[:, 2] = -g[:, 0] - B * g[:, 3]
    out[:, 3] = -g[:, 1] + B * g[:, 2]
    return out


def ham_vector_field(H: Hamiltonian, sigma: MagneticForm, state: CotangentState) -> Array:
    """Chart components of ``X_{H, sigma}`` at ``state`` in its chart."""
    c = chart_index(state.chart)
    theta = polar_coords(state.q, FRAMES[c])[0]
    if min(theta, np.pi - theta) < 1e-6:
        raise ValueError("state sits on its chart's pole; pick the other chart")
    if H.needs_nonzero and state.norm < 1e-12:
        raise ZeroSectionError(f"{H.name} is not differentiable on the zero section")
    return vector_field(H, sigma, state.coords()[None], np.array([c]))[0]


def ambient_velocity(state: CotangentState, xdot: Array) -> Array:
    """Ambient ``(dq, dv)`` of a chart velocity at ``state``."""
    return chart_tangent_to_ambient(state, xdot)


def magnetic_acceleration_residual(q: Array, qdot: Array, qddot: Array, s: float) -> Array:
    """Residual of ``q'' = -|q'|^2 q + s q x q'`` for the round magnetic flow."""
    return qddot + np.einsum("ni,ni->n", qdot, qdot)[:, None] * q - s * np.cross(q, qdot)


__all__ = [
    "CHARTS",
    "CotangentState",
    "Hamiltonian",
    "Kinetic",
    "KatokH",
    "MagneticForm",
    "OmegaS",
    "Rs",
    "WFamily",
    "ZeroSectionError",
    "ambient_to_chart",
    "chart_to_ambient",
    "ham_vector_field",
    "isometry_lift",
    "magnetic_round",
    "omega_ambient",
    "omega_pairing",
    "one_forms",
    "vector_field",
]


def isometry_lift(R: Array, state: CotangentState) -> CotangentState:
    """Cotangent lift of a rotation ``R``; metric duality makes it ``(Rq, Rv)``."""
    from .sphere import check_rotation

    R = check_rotation(R)
    return CotangentState.from_ambient(R @ state.q, R @ state.v)
