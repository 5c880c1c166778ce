"""The symplectomorphisms ``Psi_s`` from ``(|p| > s, dlambda)`` to ``(|p| > 0, dlambda - s mu)``.

``Psi_s`` is the time ``a_s(|p|)`` map of the rotated, unit-speed geodesic
flow followed by the fibre scaling by ``b_s(|p|)``, where::

    sin a_s(m) = -s / m,     b_s(m) = sqrt(1 - s^2 / m^2).

Geometrically, with ``u = v / |v|`` and ``Pi = q x u`` the pole of the
oriented great circle through ``(q, u)``, the base point moves towards
``Pi`` until its height over the equator of ``Pi`` is ``s / |v|`` and the
covector keeps the direction ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (
    CotangentState,
    MagneticForm,
    ZeroSectionError,
    chart_to_ambient,
    isometry_lift,
    lambda_s_batch,
    magnetic_round,
    omega_ambient,
)
from .sphere import check_rotation, chart_index

Array = np.ndarray

FD_STEP = 1e-5
BOUNDARY_GAP = 1e-4


class DomainError(ValueError):
    """Input outside the domain ``{|p| >= s}`` of ``Psi_s``."""


@dataclass(frozen=True)
class PsiParams:
    """Rotation angle ``a_s`` and scaling ``b_s`` as functions of ``|p|``."""

    s: float

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("s must be >= 0")

    @property
    def threshold(self) -> float:
        return self.s

    def _check(self, m):
        m = np.asarray(m, dtype=float)
        if np.any(m <= self.s):
            raise DomainError(f"|p| must exceed s={self.s}")
        return m

    def a(self, m):
        return -np.arcsin(self.s / self._check(m))

    def b(self, m):
        m = self._check(m)
        return np.sqrt(1.0 - (self.s / m) ** 2)


def positive_pole(q: Array, v: Array) -> Array:
    """``Pi(q, v)``: the great circle through ``(q, v)`` runs positively around it."""
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ZeroSectionError("Pi is undefined for the zero covector")
    return np.cross(q, v / n)


def phi_Y(logb: float, state: CotangentState) -> CotangentState:
    """Fibre scaling by ``exp(logb)``."""
    return CotangentState(state.q, np.exp(logb) * state.v, state.chart)


def phi_Hprime(a: float, state: CotangentState) -> CotangentState:
    """Time-``a`` map of the Hamiltonian ``H' = |p|`` rotated by a quarter turn.

    The base point runs at unit speed along the great circle through ``q``
    orthogonal to ``u = v/|v|``, moving away from ``Pi``; the covector is
    the constant ``|v| u``.
    """
    m = state.norm
    if m == 0:
        raise ZeroSectionError("phi_Hprime needs a nonzero covector")
    pole = positive_pole(state.q, state.v)
    q = np.cos(a) * state.q - np.sin(a) * pole
    return CotangentState.from_ambient(q, state.v)


def _forward_arrays(s: float, q: Array, v: Array) -> tuple[Array, Array]:
    m = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(m < s * (1 - 1e-14)):
        raise DomainError(f"|p| < s={s}: outside the domain of Psi_s")
    m = np.maximum(m, s)
    if s == 0:
        return q.copy(), v.copy()
    pole = np.cross(q, v / m)
    b = np.sqrt(np.maximum(1.0 - (s / m) ** 2, 0.0))
    return b * q + (s / m) * pole, b * v


def psi_forward(s: float, state: CotangentState) -> CotangentState:
    """``Psi_s`` in the explicit pole-frame form, extended by ``(Pi, 0)`` on ``|p| = s``."""
    q, v = _forward_arrays(s, state.q[None], state.v[None])
    return CotangentState.from_ambient(q[0], v[0])


def psi_forward_composed(s: float, state: CotangentState) -> CotangentState:
    """``Psi_s`` as ``Phi^Y_{log b_s} o Phi^{H'}_{a_s}``; needs ``|p| > s``."""
    par = PsiParams(s)
    m = state.norm
    return phi_Y(np.log(par.b(m)), phi_Hprime(par.a(m), state))


def psi_forward_batch(s: float, q: Array, v: Array) -> tuple[Array, Array]:
    return _forward_arrays(s, np.asarray(q, float), np.asarray(v, float))


def psi_inverse_batch(s: float, q: Array, v: Array) -> tuple[Array, Array]:
    m = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(m == 0):
        raise ZeroSectionError("psi_inverse needs a nonzero covector")
    if s == 0:
        return q.copy(), v.copy()
    u = v / m
    big = np.sqrt(m**2 + s**2)
    # pole of the preimage circle, then q = (s/big) Pi + (m/big) q_out
    pole = (s / big) * q + (m / big) * np.cross(q, u)
    q_out = (q - (s / big) * pole) * (big / m)
    return q_out, big * u


def psi_inverse(s: float, state: CotangentState) -> CotangentState:
    """Inverse of ``Psi_s`` on ``|p| > 0``; output has ``|p| = sqrt(|p|^2 + s^2)``."""
    q, v = psi_inverse_batch(s, state.q[None], state.v[None])
    return CotangentState.from_ambient(q[0], v[0])


def _chart_map(s: float, x: Array, chart: Array) -> Array:
    q, v = chart_to_ambient(x, chart)
    q2, v2 = psi_forward_batch(s, q, v)
    return np.concatenate([q2, v2], axis=1)


def _differentials(s: float, state: CotangentState, dirs: Array) -> tuple[Array, Array, Array]:
    """Ambient source tangents, their images under ``dPsi_s`` and the image point."""
    c = chart_index(state.chart)
    x = state.coords()
    n = len(dirs)
    ch = np.full(n, c)
    h = FD_STEP
    xp, xm = x + h * dirs, x - h * dirs
    qp, vp = chart_to_ambient(xp, ch)
    qm, vm = chart_to_ambient(xm, ch)
    src = np.concatenate([qp - qm, vp - vm], axis=1) / (2 * h)
    img = (_chart_map(s, xp, ch) - _chart_map(s, xm, ch)) / (2 * h)
    base = _chart_map(s, x[None], ch[:1])[0]
    return src, img, base


def _check_gap(s: float, state: CotangentState) -> None:
    if state.norm - s < BOUNDARY_GAP:
        raise DomainError("state too close to |p| = s for finite differences")


def pullback_defect(s: float, state: CotangentState, trials: int = 16,
                    rng: np.random.Generator | None = None) -> float:
    """Largest ``|lambda_s(dPsi_s w) - lambda(w)| / (1 + |w|)`` over random ``w``."""
    _check_gap(s, state)
    rng = rng or np.random.default_rng(0)
    dirs = rng.normal(size=(trials, 4))
    src, img, base = _differentials(s, state, dirs)
    qb = np.broadcast_to(base[:3], (trials, 3))
    vb = np.broadcast_to(base[3:], (trials, 3))
    lhs = lambda_s_batch(qb, vb, img[:, :3], img[:, 3:], s)
    rhs = src[:, :3] @ state.v
    return float(np.max(np.abs(lhs - rhs) / (1 + np.linalg.norm(dirs, axis=1))))


def omega_pullback_defect(s: float, state: CotangentState, trials: int = 16,
                          rng: np.random.Generator | None = None) -> float:
    """Largest ``|omega_{s mu}(dPsi w1, dPsi w2) - omega_0(w1, w2)|`` over random pairs."""
    _check_gap(s, state)
    rng = rng or np.random.default_rng(0)
    dirs = rng.normal(size=(2 * trials, 4))
    src, img, base = _differentials(s, state, dirs)
    qa = np.broadcast_to(state.q, (trials, 3))
    qb = np.broadcast_to(base[:3], (trials, 3))
    lhs = omega_ambient(magnetic_round(s), qb, img[:trials], img[trials:])
    rhs = omega_ambient(MagneticForm(), qa, src[:trials], src[trials:])
    return float(np.max(np.abs(lhs - rhs)))


def equivariance_defect(s: float, R: Array, state: CotangentState) -> float:
    """Distance between ``Psi_s(I(x))`` and ``I(Psi_s(x))`` for a rotation ``R``."""
    R = check_rotation(R)
    a = psi_forward(s, isometry_lift(R, state))
    b = isometry_lift(R, psi_forward(s, state))
    return a.distance(b)


__all__ = [
    "DomainError",
    "PsiParams",
    "equivariance_defect",
    "omega_pullback_defect",
    "phi_Hprime",
    "phi_Y",
    "positive_pole",
    "psi_forward",
    "psi_forward_batch",
    "psi_forward_composed",
    "psi_inverse",
    "psi_inverse_batch",
    "pullback_defect",
]
