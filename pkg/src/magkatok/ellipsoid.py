"""The ellipsoid ``E_alpha = {(1+alpha)|z1|^2/2 + (1-alpha)|z2|^2/2 = 1}`` and its Reeb flow.

With the Liouville form ``lambda = 1/2 sum (x dy - y dx)`` the Reeb flow is
``z1 -> exp(i(1+alpha)t) z1``, ``z2 -> exp(i(1-alpha)t) z2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .orbits import OrbitRecord

CONSTRAINT_TOL = 1e-9
DEFAULT_CAP = 100.0
# defect below which the scan counts a closed non-axis orbit
CLOSURE_THRESHOLD = 1e-4


class OffSurfaceError(ValueError):
    pass


@dataclass(frozen=True)
class EllipsoidState:
    z1: complex
    z2: complex
    alpha: float

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")

    @property
    def constraint(self) -> float:
        a = self.alpha
        return (1 + a) * abs(self.z1) ** 2 / 2 + (1 - a) * abs(self.z2) ** 2 / 2 - 1

    @classmethod
    def from_angles(cls, alpha: float, t: float, phase1: float = 0.0, phase2: float = 0.0) -> "EllipsoidState":
        """Point with ``(1+alpha)|z1|^2/2 = cos^2 t`` and ``(1-alpha)|z2|^2/2 = sin^2 t``."""
        r1 = np.sqrt(2 / (1 + alpha)) * np.cos(t)
        r2 = np.sqrt(2 / (1 - alpha)) * np.sin(t)
        return cls(complex(r1 * np.exp(1j * phase1)), complex(r2 * np.exp(1j * phase2)), alpha)

    def frequencies(self) -> tuple[float, float]:
        return 1 + self.alpha, 1 - self.alpha

    def as_vector(self) -> np.ndarray:
        return np.array([self.z1.real, self.z1.imag, self.z2.real, self.z2.imag])


def _check(state: EllipsoidState) -> None:
    if abs(state.constraint) > CONSTRAINT_TOL:
        raise OffSurfaceError(f"state is off the ellipsoid (defect {state.constraint:.3g})")


def reeb_flow(state: EllipsoidState, t: float) -> EllipsoidState:
    _check(state)
    w1, w2 = state.frequencies()
    return EllipsoidState(state.z1 * np.exp(1j * w1 * t), state.z2 * np.exp(1j * w2 * t), state.alpha)


def reeb_vector(state: EllipsoidState) -> np.ndarray:
    """Reeb field in real coordinates ``(x1, y1, x2, y2)``."""
    w1, w2 = state.frequencies()
    z1 = 1j * w1 * state.z1
    z2 = 1j * w2 * state.z2
    return np.array([z1.real, z1.imag, z2.real, z2.imag])


def liouville(state: EllipsoidState, X: np.ndarray) -> float:
    """``lambda = 1/2 sum (x dy - y dx)`` evaluated on ``X``."""
    x1, y1, x2, y2 = state.as_vector()
    return 0.5 * (x1 * X[1] - y1 * X[0] + x2 * X[3] - y2 * X[2])


def reeb_periodic_orbits(alpha: float, cap: float = DEFAULT_CAP) -> list[OrbitRecord]:
    """The two axis circles ``{z2 = 0}`` and ``{z1 = 0}``, sorted by period."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    out = []
    for t in (0.0, np.pi / 2):
        st = EllipsoidState.from_angles(alpha, t)
        w = st.frequencies()[0 if t == 0 else 1]
        T = 2 * np.pi / w
        defect = float(np.linalg.norm(reeb_flow(st, T).as_vector() - st.as_vector()))
        out.append(OrbitRecord(st, T, 1.0, defect, cap))
    return sorted(out, key=lambda r: r.period)


def return_defect(alpha: float, t) -> np.ndarray:
    """Phase-closure defect ``max_j |exp(i w_j t) - 1|`` of an orbit with both ``z_j != 0``.

    Normalising by ``|z_j|`` makes this independent of the starting point;
    it vanishes exactly at common periods of the two rotations.
    """
    t = np.asarray(t, dtype=float)
    d1 = np.abs(np.exp(1j * (1 + alpha) * t) - 1)
    d2 = np.abs(np.exp(1j * (1 - alpha) * t) - 1)
    return np.maximum(d1, d2)


def return_scan(alpha: float, cap: float = DEFAULT_CAP, t_min: float = 1.0,
                resolution: float = 1e-3) -> tuple[float, float]:
    """Smallest return defect of non-axis orbits over ``[t_min, cap]`` and where it occurs.

    The grid minimum is refined by a bounded scalar minimisation around the
    best grid point.
    """
    from scipy.optimize import minimize_scalar

    t = np.arange(t_min, cap + resolution, resolution)
    d = return_defect(alpha, t)
    i = int(np.argmin(d))
    lo, hi = t[max(i - 1, 0)], t[min(i + 1, len(t) - 1)]
    # the squared sum is smooth where the max is not
    smooth = lambda z: float(np.sum(np.abs(np.exp(1j * np.array([1 + alpha, 1 - alpha]) * z) - 1) ** 2))
    res = minimize_scalar(smooth, bounds=(lo, hi), method="bounded", options={"xatol": 1e-14})
    best = float(return_defect(alpha, res.x))
    if best < d[i]:
        return best, float(res.x)
    return float(d[i]), float(t[i])


def state_return_defect(state: EllipsoidState, cap: float = DEFAULT_CAP, t_min: float = 1.0,
                        resolution: float = 1e-3) -> float:
    """Smallest ``|z(t) - z(0)|`` over ``[t_min, cap]`` for one state."""
    _check(state)
    t = np.arange(t_min, cap + resolution, resolution)
    w1, w2 = state.frequencies()
    d = np.sqrt(abs(state.z1) ** 2 * np.abs(np.exp(1j * w1 * t) - 1) ** 2
                + abs(state.z2) ** 2 * np.abs(np.exp(1j * w2 * t) - 1) ** 2)
    return float(d.min())
