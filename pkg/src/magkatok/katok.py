"""Katok-type Hamiltonians, their exact flows, the Katok metrics and the W family.

Conventions: ``a`` is the rotation axis, ``h = a . q`` and ``|d/dphi|^2 =
1 - h^2``.  For ``0 <= alpha < 1``, ``k > 0`` and ``c = sqrt(2k + s^2) +
alpha s``::

    r = (c - alpha s h) / (1 - alpha^2 (1 - h^2)),    eta = alpha r beta
    y2 = (1 - alpha^2 (1 - h^2)) r^2 - s^2
    F(p)^2 = (|p|^2 - alpha^2 p(d/dphi)^2) / y2

so that the kinetic level ``{k F^2 = k}`` is the ``eta``-shift of the level
``{H_{s,alpha} = c}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import (
    CotangentState,
    KatokH,
    Kinetic,
    MagneticForm,
    OmegaS,
    Rs,
    WFamily,
    ZeroSectionError,
)
from .psi import psi_forward_batch, psi_inverse_batch
from .sphere import Z_AXIS, polar_basis, rotation_matrix

Array = np.ndarray

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class ParameterError(ValueError):
    """Parameters violate the standing hypotheses of a construction."""


# ---------------------------------------------------------------------------
# R_s, Omega_s, H_{s,alpha}


def R_s(s: float, state: CotangentState) -> float:
    return Rs(s)(state)


def Omega_s(s: float, state: CotangentState, axis=None) -> float:
    return OmegaS(s, axis)(state)


def H_salpha(s: float, alpha: float, state: CotangentState, axis=None) -> float:
    return KatokH(s, alpha, axis)(state)


def coercive_fibrewise(alpha: float) -> bool:
    return abs(alpha) < 1


def convex_fibrewise(alpha: float) -> bool:
    # R_s is strictly convex on each fibre and alpha Omega_s is affine there
    return True


def level_in_punctured(s: float, alpha: float, c: float) -> bool:
    """Whether ``{H_{s,alpha} = c}`` avoids the zero section and bounds a fibrewise ball."""
    return c > s * (1 + alpha)


def fibre_hessian(H, state: CotangentState, eps: float = 1e-4) -> Array:
    """Hessian of ``H`` along the fibre in an orthonormal tangent frame (2x2)."""
    q = state.q
    e1 = np.cross(q, [1.0, 0.0, 0.0] if abs(q[0]) < 0.9 else [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(q, e1)
    E = (e1, e2)
    qq = q[None]
    f = lambda v: H.ambient_value(qq, v[None])[0]
    out = np.empty((2, 2))
    v0 = state.v
    for i in range(2):
        for j in range(2):
            d = eps * E[i]
            e = eps * E[j]
            out[i, j] = (f(v0 + d + e) - f(v0 + d - e) - f(v0 - d + e) + f(v0 - d - e)) / (4 * eps**2)
    return out


def fibre_range(s: float, alpha: float, q: Array, m: float, n: int = 4096, axis=None) -> tuple[float, float]:
    """Min and max of ``H_{s,alpha}`` over the fibre circle ``{|p| = m}`` at ``q``."""
    q = np.asarray(q, dtype=float)
    e1 = np.cross(q, [1.0, 0.0, 0.0] if abs(q[0]) < 0.9 else [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(q, e1)
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    v = m * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2)
    vals = KatokH(s, alpha, axis).ambient_value(np.broadcast_to(q, v.shape), v)
    return float(vals.min()), float(vals.max())


# ---------------------------------------------------------------------------
# exact flow of H_{s,alpha}


def _geodesic_rotated(alpha: float, q: Array, v: Array, t: float, axis: Array) -> tuple[Array, Array]:
    """Flow of ``H_{0,alpha} = |p| + alpha p(d/dphi)``: unit-speed geodesic then rotation."""
    m = np.linalg.norm(v, axis=1, keepdims=True)
    u = v / m
    q1 = np.cos(t) * q + np.sin(t) * u
    v1 = m * (np.cos(t) * u - np.sin(t) * q)
    R = rotation_matrix(axis, alpha * t)
    return q1 @ R.T, v1 @ R.T


def closed_flow_batch(s: float, alpha: float, q: Array, v: Array, t: float,
                      axis=None) -> tuple[Array, Array]:
    axis = Z_AXIS if axis is None else np.asarray(axis, dtype=float)
    m = np.linalg.norm(v, axis=1)
    if np.any(m <= 0):
        raise ZeroSectionError("the flow of H_{s,alpha} is taken off the zero section")
    if s == 0:
        return _geodesic_rotated(alpha, q, v, t, axis)
    q0, v0 = psi_inverse_batch(s, q, v)
    q1, v1 = _geodesic_rotated(alpha, q0, v0, t, axis)
    return psi_forward_batch(s, q1, v1)


def closed_flow(s: float, alpha: float, state: CotangentState, t: float, axis=None) -> CotangentState:
    """Exact time-``t`` map of ``X_{H_{s,alpha}}`` for ``omega_{s mu}``.

    For ``s = 0`` this is unit-speed geodesic transport composed with the
    lifted rotation by ``alpha t``; for ``s > 0`` it is conjugated by
    ``Psi_s``.  Defined for ``|p| > 0``.
    """
    if state.norm <= 0:
        raise ZeroSectionError("closed_flow needs |p| > 0")
    q, v = closed_flow_batch(s, alpha, state.q[None], state.v[None], t, axis)
    return CotangentState.from_ambient(q[0], v[0])


def equatorial_orbits(s: float, alpha: float, c: float, axis=None) -> list[tuple[CotangentState, float]]:
    """The two orbits of ``H_{s,alpha}`` on the level ``c`` over the axis equator.

    Returns (state, period) for the co- and counter-rotating orbit.  For
    ``s > 0`` they are latitude circles, images of equatorial great circles
    under ``Psi_s``.
    """
    axis = Z_AXIS if axis is None else np.asarray(axis, dtype=float)
    from .sphere import axis_frame_matrix

    e1, e2, a = axis_frame_matrix(axis).T
    out = []
    for sgn in (1.0, -1.0):
        # H_{0,alpha} on the equator with u = sgn d/dphi equals m (1 + sgn alpha)
        m0 = _equatorial_radius(s, alpha, c, sgn)
        q0, v0 = e1[None], (sgn * m0 * e2)[None]
        q1, v1 = psi_forward_batch(s, q0, v0)
        out.append((CotangentState.from_ambient(q1[0], v1[0]), 2 * np.pi / (1 + sgn * alpha)))
    return out


def _equatorial_radius(s: float, alpha: float, c: float, sgn: float) -> float:
    # H_{s,alpha} o Psi_s = H_{0,alpha} = m (1 + sgn alpha) on the equatorial circle
    return c / (1 + sgn * alpha)


# ---------------------------------------------------------------------------
# Katok metric


@dataclass(frozen=True)
class KatokParams:
    """``(s, alpha, k)`` with the derived ``c``, ``r``, ``eta`` and metric data."""

    s: float
    alpha: float
    k: float
    axis: Array = None  # type: ignore[assignment]

    def __post_init__(self):
        a = Z_AXIS if self.axis is None else np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", a / np.linalg.norm(a))
        if self.s < 0:
            raise ParameterError("s must be >= 0")
        if not 0 <= self.alpha < 1:
            raise ParameterError("alpha must lie in [0, 1)")
        if self.k <= 0:
            raise ParameterError("k must be positive")
        if not self.c > self.s * (1 + self.alpha):
            raise ParameterError("c must exceed s (1 + alpha)")

    @property
    def c(self) -> float:
        return float(np.sqrt(2 * self.k + self.s**2) + self.alpha * self.s)

    def D(self, h):
        """``1 - alpha^2 |d/dphi|^2``."""
        return 1 - self.alpha**2 * (1 - h**2)

    def N(self, h):
        return self.c - self.alpha * self.s * h

    def r(self, h):
        return self.N(h) / self.D(h)

    def dr(self, h):
        """``dr/dh``."""
        a, s = self.alpha, self.s
        D = self.D(h)
        return (-a * s * D - 2 * a**2 * h * self.N(h)) / D**2

    def y2(self, h):
        return self.N(h) ** 2 / self.D(h) - self.s**2

    def eta(self, q: Array) -> Array:
        """``eta_q = alpha r beta`` as an ambient (metric-dual) vector, shape (n, 3)."""
        q = np.atleast_2d(q)
        h = q @ self.axis
        return (self.alpha * self.r(h))[:, None] * np.cross(self.axis, q)

    def cometric_jet(self, m2, w, h):
        """``|p|^2_g = 2k (m2 - alpha^2 w^2) / y2`` and its partials."""
        a, k = self.alpha, self.k
        y2 = self.y2(h)
        D, N = self.D(h), self.N(h)
        # y2' = (2 N N' D - N^2 D') / D^2 with N' = -alpha s, D' = 2 alpha^2 h
        dy2 = (2 * N * (-a * self.s) * D - N**2 * 2 * a**2 * h) / D**2
        num = m2 - a**2 * w**2
        val = 2 * k * num / y2
        return val, 2 * k / y2, -4 * k * a**2 * w / y2, -val * dy2 / y2

    def F2(self, q: Array, v: Array) -> Array:
        """Squared Finsler norm of covectors ``v`` at base points ``q``."""
        q, v = np.atleast_2d(q), np.atleast_2d(v)
        h = q @ self.axis
        w = np.einsum("ni,ni->n", v, np.cross(self.axis, q))
        m2 = np.einsum("ni,ni->n", v, v)
        return (m2 - self.alpha**2 * w**2) / self.y2(h)

    def metric_eigenvalues(self, h):
        """Eigenvalues of the metric on tangent vectors relative to the round one.

        In the orthonormal frame ``(e_theta, e_phi)`` the cometric is
        ``diag(2k / y2, 2k (1 - alpha^2 sin^2) / y2)``; the metric is its inverse.
        """
        y2 = self.y2(h)
        return y2 / (2 * self.k), y2 / (2 * self.k * self.D(h))

    def metric_deviation(self, h):
        """``metric_eigenvalues(h) - 1`` without cancellation.

        With ``R = sqrt(2k + s^2)`` and ``u = alpha s (1 - h)`` one has
        ``N = R + u`` and ``y2 - 2k = (2Ru + u^2 + R^2 alpha^2 sin^2) / D``.
        """
        a, s = self.alpha, self.s
        R = np.sqrt(2 * self.k + s**2)
        u = a * s * (1 - h)
        a2s = a**2 * (1 - h**2)
        D = self.D(h)
        d1 = (2 * R * u + u**2 + R**2 * a2s) / (2 * self.k * D)
        return d1, (d1 + a2s) / D

    def magnetic_form(self) -> MagneticForm:
        """``s mu + d(alpha r beta)`` with the closed-form differential of ``alpha r``."""
        a, ax = self.alpha, self.axis
        if a == 0:
            return MagneticForm(s=self.s, axis=ax, label=f"{self.s}*mu")

        def f(q):
            return a * self.r(q @ ax)

        def df(q):
            h = q @ ax
            return (a * self.dr(h))[:, None] * (ax[None, :] - h[:, None] * q)

        def profile(h):
            return a * self.r(h), a * self.dr(h)

        return MagneticForm(s=self.s, f=f, df=df, axis=ax, label=f"{self.s}*mu+d(alpha r beta)",
                            profile=profile)

    def hamiltonian(self) -> Kinetic:
        return Kinetic(KatokMetric(self))

    def describe(self) -> dict:
        return {"s": self.s, "alpha": self.alpha, "k": self.k, "c": self.c}


class KatokMetric:
    """Cometric of ``g_{s,alpha,k}`` in the form expected by :class:`Kinetic`."""

    def __init__(self, params: KatokParams):
        self.params = params
        self.axis = params.axis

    def cometric_jet(self, m2, w, h):
        return self.params.cometric_jet(m2, w, h)

    def describe(self):
        return {"metric": "katok", **self.params.describe()}

    def __repr__(self):
        p = self.params
        return f"katok(s={p.s}, alpha={p.alpha}, k={p.k})"


@dataclass(frozen=True)
class MetricAtPoint:
    """Katok metric data at one base point."""

    cometric: Array  # 2x2 in the orthonormal frame (e_theta, e_phi)
    eta: Array  # ambient vector
    F: Callable[[Array], float]


def katok_metric(params: KatokParams, q) -> MetricAtPoint:
    """Cometric coefficients, ``eta_q`` and the Finsler norm ``F_q`` at ``q``."""
    q = np.asarray(getattr(q, "ambient", q), dtype=float)
    h = float(q @ params.axis)
    y2 = params.y2(h)
    sin2 = 1 - h**2
    cm = (2 * params.k / y2) * np.diag([1.0, 1.0 - params.alpha**2 * sin2])
    return MetricAtPoint(cm, params.eta(q)[0], lambda v: float(np.sqrt(params.F2(q, v)[0])))


def katok_system(params: KatokParams) -> tuple[Kinetic, MagneticForm]:
    """The magnetic system ``(g_{s,alpha,k}, s mu + d(alpha r beta))``."""
    return params.hamiltonian(), params.magnetic_form()


def level_identity_defect(params: KatokParams, state: CotangentState) -> tuple[float, float]:
    """``|H_{s,alpha}(q, p/F(p) - eta) - c|`` and the root-side margin.

    The margin is ``r^2 F^2 - alpha^2 p(d/dphi)^2`` and must be positive.
    """
    if state.norm == 0:
        raise ZeroSectionError("level identity is stated off the zero section")
    q, v = state.q[None], state.v[None]
    F = np.sqrt(params.F2(q, v))
    P = v / F[:, None] - params.eta(q)
    H = KatokH(params.s, params.alpha, params.axis).ambient_value(q, P)[0]
    h = float(q[0] @ params.axis)
    w = float(v[0] @ np.cross(params.axis, q[0]))
    margin = params.r(h) ** 2 * F[0] ** 2 - params.alpha**2 * w**2
    return abs(H - params.c), float(margin)


def appendix_validate(params: KatokParams, n_theta: int = 512, n_phi: int = 1024,
                      n_dirs: int = 8) -> dict:
    """Grid check of the positivity and consistency statements behind ``F``.

    Returns minima of ``y2``, of the lower-bound chain margins, of the root
    margin and of ``|p|^2 D^2``, plus maxima of ``|y1|`` and of the quadratic
    residual ``y2 F^2 + 2 y1 F - y0``.
    """
    a, s, ax = params.alpha, params.s, params.axis
    th = (np.arange(n_theta) + 0.5) * np.pi / n_theta
    ph = np.arange(n_phi) * 2 * np.pi / n_phi
    T, P = np.meshgrid(th, ph, indexing="ij")
    from .sphere import axis_frame_matrix

    frame = axis_frame_matrix(ax)
    q, et, ef = polar_basis(T, P, frame)
    q, et, ef = (z.reshape(-1, 3) for z in (q, et, ef))
    h = q @ ax
    sin2 = 1 - h**2
    D = params.D(h)
    r = params.r(h)
    N = params.N(h)
    rot = np.cross(ax, q)
    eta = (a * r)[:, None] * rot
    eta_dphi = np.einsum("ni,ni->n", eta, rot)
    eta2 = np.einsum("ni,ni->n", eta, eta)
    coef = params.c + a * eta_dphi - a * s * h
    y2 = coef**2 - eta2 - s**2
    y2_closed = D * r**2 - s**2
    out = {
        "min_y2": float(y2.min()),
        "max_y2_closed_form_gap": float(np.max(np.abs(y2 - y2_closed))),
        "min_lower_bound_gap": float(np.min(y2 - s**2 * (1 / D - 1))),
        "min_lower_bound": float(np.min(s**2 * (1 / D - 1))),
        "min_c_minus_alpha_s_h_minus_s": float(np.min(N - s)),
        "max_y1": 0.0,
        "max_quad_residual": 0.0,
        "min_root_margin": np.inf,
        "min_p2_D2": np.inf,
        "max_coef_minus_r": float(np.max(np.abs(coef - r))),
    }
    for t in np.arange(n_dirs) * np.pi / n_dirs:
        v = np.cos(t) * et + np.sin(t) * ef
        m2 = np.einsum("ni,ni->n", v, v)
        w = np.einsum("ni,ni->n", v, rot)
        y0 = m2 - a**2 * w**2
        y1 = np.einsum("ni,ni->n", v, eta) - a * coef * w
        F = np.sqrt(y0 / y2_closed)
        quad = y2 * F**2 + 2 * y1 * F - y0
        out["max_y1"] = max(out["max_y1"], float(np.max(np.abs(y1))))
        out["max_quad_residual"] = max(out["max_quad_residual"], float(np.max(np.abs(quad))))
        out["min_root_margin"] = min(out["min_root_margin"], float(np.min(r**2 * F**2 - a**2 * w**2)))
        out["min_p2_D2"] = min(out["min_p2_D2"], float(np.min(m2 * D**2)))
    out["passed"] = bool(
        out["min_y2"] > 0
        and out["min_lower_bound_gap"] > 0
        and out["min_lower_bound"] >= -1e-15
        and out["max_y1"] < 1e-10
        and out["max_quad_residual"] < 1e-9
        and out["min_root_margin"] > 0
        and out["min_p2_D2"] > 0
    )
    return out


# ---------------------------------------------------------------------------
# radii along fibre rays


def ray_root(g: Callable[[float], float], dg: Optional[Callable[[float], float]], lo: float, hi: float,
             tol: float = 1e-12) -> float:
    """Root of an increasing function on ``[lo, hi]``: bisection then Newton polish."""
    glo, ghi = g(lo), g(hi)
    if not (glo < 0 < ghi):
        raise ValueError("level not bracketed along the ray")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-6 * max(1.0, hi):
            break
    x = 0.5 * (lo + hi)
    for _ in range(20):
        d = dg(x) if dg is not None else (g(x + 1e-7) - g(x - 1e-7)) / 2e-7
        step = g(x) / d
        x = min(max(x - step, lo), hi)
        if abs(step) < tol:
            break
    return x


def kinetic_level_radii(params: KatokParams, q: Array, u: Array) -> tuple[float, float]:
    """Radii ``rho`` with ``H_g(q, rho u) = k`` and ``H_{s,alpha}(q, rho u - eta_q) = c``."""
    q = np.asarray(q, float)[None]
    u = np.asarray(u, float)
    u = (u / np.linalg.norm(u))[None]
    Hg = params.hamiltonian()
    Hk = KatokH(params.s, params.alpha, params.axis)
    eta = params.eta(q)
    hi = 10 * np.sqrt(2 * params.k + params.s**2)
    g1 = lambda t: Hg.ambient_value(q, t * u)[0] - params.k
    g2 = lambda t: Hk.ambient_value(q, t * u - eta)[0] - params.c
    return ray_root(g1, None, 0.0, hi), ray_root(g2, None, 0.0, hi)


# ---------------------------------------------------------------------------
# reparametrisation to the H_{s,alpha} clock


def katok_clock_rate(params: KatokParams, q: Array, v: Array) -> Array:
    """Rate ``dtau/dt`` of the ``H_{s,alpha}`` time along kinetic trajectories.

    On the common level, ``dH_g = rate * d(H_{s,alpha} o shift)``; pairing
    both with the Liouville field gives ``rate = 2k / (grad_P H . p)``
    with ``P = p - eta``.
    """
    q, v = np.atleast_2d(q), np.atleast_2d(v)
    P = v - params.eta(q)
    grad = P / np.sqrt(np.einsum("ni,ni->n", P, P) + params.s**2)[:, None]
    grad = grad + params.alpha * np.cross(params.axis, q)
    return 2 * params.k / np.einsum("ni,ni->n", grad, v)


# ---------------------------------------------------------------------------
# W family


@dataclass(frozen=True)
class WParams:
    s: float
    eps: float
    shrink: Optional[float] = None

    def __post_init__(self):
        if self.s <= 0 or self.eps <= 0:
            raise ParameterError("W family needs s > 0 and eps > 0")

    @property
    def delta(self) -> float:
        """Radius where the denominator ``1 + eps (s - Omega_s)`` can first vanish."""
        return float(np.sqrt(1 / self.eps**2 + 2 * self.s / self.eps))

    @property
    def radius(self) -> float:
        """Shrunk domain radius; defaults to ``delta / 2``."""
        return self.delta / 2 if self.shrink is None else float(self.shrink)

    def hamiltonian(self) -> WFamily:
        return WFamily(self.s, self.eps)


def w_family(wp: WParams, state: CotangentState) -> float:
    if state.norm >= wp.delta:
        raise ParameterError("|p| must stay below delta_{s,eps}")
    return wp.hamiltonian()(state)


def vertical_hessian(wp: WParams, q, eps: float = 1e-4) -> Array:
    """Fibre Hessian of ``H_s`` at the zero section over ``q`` (orthonormal frame)."""
    q = np.asarray(getattr(q, "ambient", q), dtype=float)
    return fibre_hessian(wp.hamiltonian(), CotangentState(q, np.zeros(3)), eps)


def vertical_hessian_expected(wp: WParams, q) -> float:
    q = np.asarray(getattr(q, "ambient", q), dtype=float)
    return 1.0 / (wp.s * (1 + wp.eps * wp.s * (1 - q @ Z_AXIS)))


def w_level_radii(wp: WParams, k: float, q: Array, u: Array) -> tuple[float, float]:
    """Radii along ``q, u`` of ``{H_s = k}`` and ``{H_{s, eps k} = s (1 + eps k) + k}``."""
    q = np.asarray(q, float)[None]
    u = np.asarray(u, float)
    u = (u / np.linalg.norm(u))[None]
    H = wp.hamiltonian()
    Hk = KatokH(wp.s, wp.eps * k)
    level = wp.s * (1 + wp.eps * k) + k
    hi = wp.radius
    g1 = lambda t: H.ambient_value(q, t * u)[0] - k
    g2 = lambda t: Hk.ambient_value(q, t * u)[0] - level
    if g1(hi) <= 0 or g2(hi) <= 0:
        raise ParameterError(f"level k={k} leaves the domain |p| < {hi:.6g}")
    return ray_root(g1, None, 0.0, hi), ray_root(g2, None, 0.0, hi)


def w_level_identity_defect(wp: WParams, k: float, q: Array, u: Array) -> float:
    r1, r2 = w_level_radii(wp, k, q, u)
    return abs(r1 - r2)


def w_convexity_limit(wp: WParams, rng: np.random.Generator, samples: int = 64,
                      ks: Optional[Array] = None) -> float:
    """Largest tested ``k`` whose level passes a sampled fibre-convexity check.

    For each ``k`` the level's points on random rays must have positive
    definite fibre Hessian and lie inside the shrunk domain.
    """
    ks = np.geomspace(1e-4, 10.0, 30) if ks is None else np.asarray(ks)
    H = wp.hamiltonian()
    best = 0.0
    for k in ks:
        try:
            ok = True
            for _ in range(samples):
                q = rng.normal(size=3)
                q /= np.linalg.norm(q)
                u = rng.normal(size=3)
                u -= (u @ q) * q
                r1, _ = w_level_radii(wp, k, q, u)
                st = CotangentState(q, r1 * u / np.linalg.norm(u))
                if np.linalg.eigvalsh(fibre_hessian(H, st)).min() <= 0:
                    ok = False
                    break
        except (ParameterError, ValueError):
            ok = False
        if not ok:
            break
        best = float(k)
    return best


# ---------------------------------------------------------------------------
# sequences of magnetic Katok systems


@dataclass(frozen=True)
class SequenceSpec:
    """``k_n = k0 q^n`` and ``alpha_n = k_n^2 (sqrt 5 - 1)/2`` (or ``alpha_n = k_n``)."""

    s: float = 1.0
    k0: float = 1.0
    ratio: float = 0.5
    weak: bool = False  # alpha_n = k_n, enough when s = 0

    def k(self, n: int) -> float:
        return self.k0 * self.ratio**n

    def alpha(self, n: int) -> float:
        k = self.k(n)
        a = k if self.weak else k * k * GOLDEN
        return float(min(a, 1 - 1e-12))


def sequence_build(spec: SequenceSpec, n: int) -> KatokParams:
    return KatokParams(spec.s, spec.alpha(n), spec.k(n))


def convergence_report(spec: SequenceSpec, N: int, n_theta: int = 512) -> list[dict]:
    """Rows ``n, k_n, alpha_n, sup|g_n - g|, sup|alpha_n r_n beta|, ratio, |r_n - s|``.

    Suprema are taken over a colatitude grid (all quantities are axisymmetric).
    ``sup|g_n - g|`` is the largest eigenvalue deviation of the metric from
    the round one; ``ratio = y2 / (2 k_n)`` at the equator.
    """
    th = (np.arange(n_theta) + 0.5) * np.pi / n_theta
    th = np.concatenate([th, [np.pi / 2]])
    h = np.cos(th)
    rows = []
    for n in range(1, N + 1):
        p = sequence_build(spec, n)
        d1, d2 = p.metric_deviation(h)
        g_dev = float(max(np.max(np.abs(d1)), np.max(np.abs(d2))))
        eta_sup = float(np.max(np.abs(p.alpha * p.r(h) * np.sin(th))))
        rows.append({
            "n": n,
            "k": p.k,
            "alpha": p.alpha,
            "sup_metric_dev": g_dev,
            "sup_eta": eta_sup,
            "ratio": float(p.y2(0.0) / (2 * p.k)),
            "r_minus_s": float(abs(p.r(0.0) - p.s)),
        })
    return rows

