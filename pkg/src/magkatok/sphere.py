"""Round unit sphere: charts, metric, area form, axis fields and rotations.

Points and tangent vectors are stored in ambient R^3; chart coordinates are
derived on demand.  Two positively oriented polar charts are used:

* chart ``"A"`` is polar about +z with azimuth measured from +x,
* chart ``"B"`` is polar about +x with azimuth measured from +y.

Orientation is the outward one, so the area form is ``mu(u, w) = q . (u x w)``
and in either chart ``mu = sin(theta) dtheta ^ dphi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

Array = npt.NDArray[np.float64]

CHARTS = ("A", "B")
# columns are (e1, e2, axis) with e1 x e2 = axis
FRAMES = np.array(
    [
        np.eye(3),
        [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    ]
)
POLE_EPS = 1e-9
BAND = np.pi / 8
HYSTERESIS = np.pi / 16

Z_AXIS = np.array([0.0, 0.0, 1.0])


class GeometryError(ValueError):
    """Raised for inconsistent geometric input (base points, rotations)."""


def chart_index(chart: str) -> int:
    try:
        return CHARTS.index(chart)
    except ValueError:
        raise GeometryError(f"unknown chart {chart!r}") from None


def polar_coords(q: Array, frame: Array) -> tuple[Array, Array]:
    """Colatitude and azimuth of ambient points ``q`` (..., 3) in ``frame``."""
    loc = q @ frame
    rho = np.hypot(loc[..., 0], loc[..., 1])
    return np.arctan2(rho, loc[..., 2]), np.arctan2(loc[..., 1], loc[..., 0])


def polar_basis(theta, phi, frame: Array) -> tuple[Array, Array, Array]:
    """Ambient ``q``, unit ``e_theta`` and unit ``e_phi`` at chart coordinates."""
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    zero = np.zeros_like(st * sp)
    q = np.stack([st * cp, st * sp, ct + zero], axis=-1)
    et = np.stack([ct * cp, ct * sp, -st + zero], axis=-1)
    ef = np.stack([-sp + zero, cp + zero, zero], axis=-1)
    return q @ frame.T, et @ frame.T, ef @ frame.T


def preferred_chart(q: Array) -> str:
    """Chart A when the chart-A colatitude lies in [pi/8, 7pi/8], else B."""
    theta, _ = polar_coords(np.asarray(q, dtype=float), FRAMES[0])
    return "A" if BAND <= theta <= np.pi - BAND else "B"


def axis_frame_matrix(axis: Array) -> Array:
    """Right-handed frame (e1, e2, axis) as columns; +z gives the identity."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    ref = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = ref - (ref @ a) * a
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return np.column_stack([e1, e2, a])


@dataclass(frozen=True)
class SpherePoint:
    """A point of the unit sphere with a chart tag."""

    ambient: Array
    chart: str = "A"

    def __post_init__(self):
        x = np.asarray(self.ambient, dtype=float)
        n = np.linalg.norm(x)
        if abs(n - 1.0) > 1e-12:
            x = x / n
        object.__setattr__(self, "ambient", x)
        chart_index(self.chart)

    @classmethod
    def from_ambient(cls, x, chart: str | None = None) -> "SpherePoint":
        x = np.asarray(x, dtype=float)
        x = x / np.linalg.norm(x)
        return cls(x, chart or preferred_chart(x))

    @classmethod
    def from_coords(cls, theta: float, phi: float, chart: str = "A") -> "SpherePoint":
        q, _, _ = polar_basis(theta, phi, FRAMES[chart_index(chart)])
        return cls(q, chart)

    @property
    def frame(self) -> Array:
        return FRAMES[chart_index(self.chart)]

    @property
    def degenerate(self) -> bool:
        """True when the point sits on the axis of its own chart."""
        return bool(abs(abs(self.ambient @ self.frame[:, 2]) - 1.0) < POLE_EPS)

    @property
    def coords(self) -> tuple[float, float]:
        theta, phi = polar_coords(self.ambient, self.frame)
        if self.degenerate:
            phi = 0.0
        return float(theta), float(phi)

    def basis(self) -> tuple[Array, Array]:
        """Coordinate vectors ``d/dtheta`` and ``d/dphi`` in ambient form."""
        theta, phi = self.coords
        _, et, ef = polar_basis(theta, phi, self.frame)
        return et, np.sin(theta) * ef


def chart_convert(p: SpherePoint, target: str) -> SpherePoint:
    """Same ambient point, coordinates taken in ``target`` chart.

    On the target chart's axis the azimuth is undefined; it is reported as 0
    and ``degenerate`` is set on the returned point.
    """
    return SpherePoint(p.ambient, target)


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector at ``base`` stored in ambient form."""

    base: SpherePoint
    ambient: Array

    def __post_init__(self):
        u = np.asarray(self.ambient, dtype=float)
        q = self.base.ambient
        # project away roundoff normal component
        object.__setattr__(self, "ambient", u - (u @ q) * q)

    @classmethod
    def from_components(cls, base: SpherePoint, u_theta: float, u_phi: float) -> "TangentVector":
        d_theta, d_phi = base.basis()
        return cls(base, u_theta * d_theta + u_phi * d_phi)

    @property
    def components(self) -> tuple[float, float]:
        """Chart components ``(u_theta, u_phi)`` in the base point's chart."""
        theta, _ = self.base.coords
        d_theta, d_phi = self.base.basis()
        st2 = np.sin(theta) ** 2
        return float(self.ambient @ d_theta), float(self.ambient @ d_phi / st2)


def _same_base(p: SpherePoint, *vectors: TangentVector) -> None:
    for u in vectors:
        if np.linalg.norm(u.base.ambient - p.ambient) > 1e-12:
            raise GeometryError("tangent vectors are not based at the given point")


def round_pairings(p: SpherePoint, u: TangentVector, w: TangentVector) -> tuple[float, float]:
    """Round metric ``g(u, w)`` and area form ``mu(u, w)`` at ``p``.

    Evaluated from chart components; ``ambient_pairings`` gives the same
    numbers from the embedding.
    """
    _same_base(p, u, w)
    theta, _ = p.coords
    ut, uf = u.components
    wt, wf = w.components
    st = np.sin(theta)
    return ut * wt + st**2 * uf * wf, st * (ut * wf - uf * wt)


def ambient_pairings(p: SpherePoint, u: TangentVector, w: TangentVector) -> tuple[float, float]:
    _same_base(p, u, w)
    return float(u.ambient @ w.ambient), float(p.ambient @ np.cross(u.ambient, w.ambient))


def area_form(q: Array, u: Array, w: Array) -> Array:
    """``mu(u, w) = q . (u x w)`` for stacked ambient arrays."""
    return np.einsum("...i,...i->...", q, np.cross(u, w))


@dataclass(frozen=True)
class AxisFrame:
    """Rotation axis defining ``d/dphi``, its dual ``beta`` and ``h = cos(theta)``."""

    axis: Array = field(default_factory=lambda: Z_AXIS.copy())

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        if abs(np.linalg.norm(a) - 1.0) > 1e-12:
            a = a / np.linalg.norm(a)
        object.__setattr__(self, "axis", a)

    def rot(self, q: Array) -> Array:
        return np.cross(self.axis, q)

    def height(self, q: Array) -> Array:
        return np.asarray(q) @ self.axis


def axis_fields(frame: AxisFrame, p: SpherePoint) -> tuple[TangentVector, Array, float]:
    """Rotation field, its metric dual (as ambient vector) and the height ``h``.

    ``mu(rot, w) = dh(w)`` for every tangent ``w``.
    """
    rot = frame.rot(p.ambient)
    return TangentVector(p, rot), rot.copy(), float(frame.height(p.ambient))


def jrot(u: TangentVector) -> TangentVector:
    """Fibrewise rotation by +pi/2, oriented so that ``mu(u, j u) > 0``."""
    return TangentVector(u.base, np.cross(u.base.ambient, u.ambient))


def rotation_matrix(axis, angle: float) -> Array:
    """Right-handed rotation by ``angle`` about ``axis`` (Rodrigues)."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def random_rotation(rng: np.random.Generator) -> Array:
    """Haar-random proper rotation."""
    m, r = np.linalg.qr(rng.normal(size=(3, 3)))
    m = m * np.sign(np.diag(r))
    if np.linalg.det(m) < 0:
        m[:, 0] = -m[:, 0]
    return m


def check_rotation(R: Array) -> Array:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise GeometryError("rotation must be a 3x3 matrix")
    if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-10:
        raise GeometryError("matrix is not orthogonal")
    if abs(np.linalg.det(R) - 1.0) > 1e-10:
        raise GeometryError("matrix is not a proper rotation (det != +1)")
    return R


def great_circle(q: Array, u: Array, t) -> tuple[Array, Array]:
    """Unit-speed geodesic through ``q`` with unit initial velocity ``u``.

    Returns position and velocity at time(s) ``t``.
    """
    t = np.asarray(t, dtype=float)[..., None]
    return np.cos(t) * q + np.sin(t) * u, -np.sin(t) * q + np.cos(t) * u


def random_points(rng: np.random.Generator, n: int) -> Array:
    x = rng.normal(size=(n, 3))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_tangents(rng: np.random.Generator, q: Array, scale: float = 1.0) -> Array:
    w = rng.normal(size=q.shape) * scale
    return w - np.einsum("...i,...i->...", w, q)[..., None] * q
