"""Target surfaces and covariant calculus along maps.

Two targets are implemented:

* ``UnitSphere`` -- S^2 in R^3 with the induced metric. Points are 3-vectors,
  J_u V = u x V, and the covariant derivative of a field V along u is
  nabla_x V = V_x + (V, u_x) u.

* ``ConformalChart`` -- a coordinate patch of a surface with metric
  ds^2 = lambda(z, zbar) |dz|^2, lambda > 0. Points are complex numbers,
  tangent vectors are complex components in the d/dz basis, J is
  multiplication by i, g(V, W) = lambda * Re(V * conj(W)), and
  nabla_x V = V_x + (d/dz log lambda) z_x V. Gaussian curvature is
  kappa = -(2/lambda) d_z d_zbar log lambda.

The stereographic convention is fixed once: z = (u1 + i u2) / (1 - u3)
(projection from the north pole), whose inverse pushes the round chart
density lambda = 4 / (1 + |z|^2)^2 onto the sphere metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grids import GridSpec, derivative_bundle, spatial_derivative

SPHERE_TOL = 1e-12
TANGENT_TOL = 1e-8


class GeometryError(ValueError):
    """Input violates a geometric precondition (non-tangent vector, bad metric...)."""


class PoleError(GeometryError):
    """Stereographic projection evaluated at the north pole."""


class ChartRangeError(RuntimeError):
    """Map left the declared working region of a chart."""


# ---------------------------------------------------------------------------
# stereographic chart <-> sphere
# ---------------------------------------------------------------------------

def sphere_to_chart(u: np.ndarray) -> np.ndarray:
    """z = (u1 + i u2)/(1 - u3); rejects the north pole."""
    u = np.asarray(u, dtype=float)
    denom = 1.0 - u[..., 2]
    if np.any(np.abs(denom) < 1e-14):
        raise PoleError("stereographic chart undefined at the north pole")
    return (u[..., 0] + 1j * u[..., 1]) / denom


def chart_to_sphere(z: np.ndarray) -> np.ndarray:
    """Inverse stereographic projection onto the unit sphere."""
    z = np.asarray(z, dtype=complex)
    m = 1.0 + np.abs(z) ** 2
    u = np.stack([2.0 * z.real / m, 2.0 * z.imag / m, (np.abs(z) ** 2 - 1.0) / m], axis=-1)
    return u


def chart_tangent_to_sphere(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Push a chart tangent vector w at z to a sphere tangent vector.

    Uses the analytic Jacobian of chart_to_sphere, so the round density
    4/(1+|z|^2)^2 maps isometrically: |du(w)|^2 = lambda |w|^2.
    """
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    x, y = z.real, z.imag
    wx, wy = w.real, w.imag
    m = 1.0 + x * x + y * y
    du1 = ((2.0 * m - 4.0 * x * x) * wx - 4.0 * x * y * wy) / m**2
    du2 = (-4.0 * x * y * wx + (2.0 * m - 4.0 * y * y) * wy) / m**2
    du3 = (4.0 * x * wx + 4.0 * y * wy) / m**2
    return np.stack([du1, du2, du3], axis=-1)


def sphere_tangent_to_chart(u: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Inverse of chart_tangent_to_sphere at the point u (u not the pole)."""
    u = np.asarray(u, dtype=float)
    V = np.asarray(V, dtype=float)
    denom = 1.0 - u[..., 2]
    if np.any(np.abs(denom) < 1e-14):
        raise PoleError("stereographic chart undefined at the north pole")
    z = (u[..., 0] + 1j * u[..., 1]) / denom
    # d z(V) = (V1 + i V2)/(1 - u3) + (u1 + i u2) V3 / (1 - u3)^2
    return (V[..., 0] + 1j * V[..., 1]) / denom + z * V[..., 2] / denom


# ---------------------------------------------------------------------------
# chart metric densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChartMetric:
    """Conformal density lambda with analytic derivatives.

    lam, lam_z, lam_zzbar are callables of a complex array; lam is real
    positive, lam_z its d/dz derivative (d/dzbar is the conjugate since lam
    is real), lam_zzbar the mixed second derivative (real).
    """

    lam: Callable
    lam_z: Callable
    lam_zzbar: Callable
    name: str = "custom"


def round_metric() -> ChartMetric:
    """lambda = 4/(1+|z|^2)^2: the sphere seen through the stereographic chart."""
    def lam(z):
        return 4.0 / (1.0 + np.abs(z) ** 2) ** 2

    def lam_z(z):
        return -8.0 * np.conj(z) / (1.0 + np.abs(z) ** 2) ** 3

    def lam_zzbar(z):
        r2 = np.abs(z) ** 2
        return 8.0 * (2.0 * r2 - 1.0) / (1.0 + r2) ** 4

    return ChartMetric(lam, lam_z, lam_zzbar, name="round")


def perturbed_round_metric(eps: float = 0.2) -> ChartMetric:
    """Round density times (1 + eps * exp(-|z|^2)): nonconstant curvature."""
    base = round_metric()

    def bump(z):
        return np.exp(-np.abs(z) ** 2)

    def lam(z):
        return base.lam(z) * (1.0 + eps * bump(z))

    def lam_z(z):
        e = bump(z)
        return base.lam_z(z) * (1.0 + eps * e) + base.lam(z) * eps * (-np.conj(z)) * e

    def lam_zzbar(z):
        e = bump(z)
        r2 = np.abs(z) ** 2
        return (base.lam_zzbar(z) * (1.0 + eps * e)
                + base.lam_z(z) * eps * (-z) * e
                + np.conj(base.lam_z(z)) * eps * (-np.conj(z)) * e
                + base.lam(z) * eps * (r2 - 1.0) * e).real

    return ChartMetric(lam, lam_z, lam_zzbar, name=f"round_perturbed(eps={eps})")


CHART_METRICS = {
    "round": round_metric,
    "round_perturbed": perturbed_round_metric,
}


# ---------------------------------------------------------------------------
# target surfaces
# ---------------------------------------------------------------------------

class UnitSphere:
    """S^2 with the metric induced from R^3."""

    kind = "sphere"
    point_shape = (3,)

    def apply_J(self, u, V, check: bool = True):
        if check:
            self.require_tangent(u, V)
        return np.cross(u, V)

    def inner(self, u, V, W):
        return np.sum(np.asarray(V) * np.asarray(W), axis=-1)

    def project(self, points):
        points = np.asarray(points, dtype=float)
        return points / np.linalg.norm(points, axis=-1, keepdims=True)

    def tangent_project(self, u, V):
        return V - np.sum(V * u, axis=-1, keepdims=True) * u

    def membership_error(self, points):
        return float(np.max(np.abs(np.linalg.norm(points, axis=-1) - 1.0)))

    def require_tangent(self, u, V, tol: float = TANGENT_TOL):
        dev = np.max(np.abs(np.sum(np.asarray(V) * np.asarray(u), axis=-1)))
        if dev > tol:
            raise GeometryError(f"vector is not tangent to the sphere (deviation {dev:.3e})")

    def curvature(self, points):
        return np.ones(np.asarray(points).shape[:-1])

    def distance(self, p, q):
        return np.linalg.norm(np.asarray(p) - np.asarray(q), axis=-1)


class ConformalChart:
    """Coordinate patch with metric density lambda.

    region_radius, when set, bounds |z| for evolution (leaving it raises
    ChartRangeError from the flow drivers).
    """

    kind = "chart"
    point_shape = ()

    def __init__(self, metric: ChartMetric | None = None, region_radius: float | None = None):
        self.metric = metric if metric is not None else round_metric()
        self.region_radius = region_radius

    def lam(self, z):
        lam = self.metric.lam(np.asarray(z, dtype=complex))
        if np.any(lam <= 0.0):
            raise GeometryError("metric density lambda must be positive")
        return np.real(lam)

    def log_lam_z(self, z):
        z = np.asarray(z, dtype=complex)
        return self.metric.lam_z(z) / self.lam(z)

    def apply_J(self, u, V, check: bool = True):
        return 1j * np.asarray(V, dtype=complex)

    def inner(self, u, V, W):
        return self.lam(u) * np.real(np.asarray(V) * np.conj(np.asarray(W)))

    def project(self, points):
        return np.asarray(points, dtype=complex)

    def tangent_project(self, u, V):
        return np.asarray(V, dtype=complex)

    def membership_error(self, points):
        self.lam(points)  # positivity check
        if self.region_radius is not None:
            over = np.max(np.abs(points)) - self.region_radius
            return float(max(over, 0.0))
        return 0.0

    def require_tangent(self, u, V, tol: float = TANGENT_TOL):
        return None  # every complex number is a tangent component

    def in_region(self, points) -> bool:
        if self.region_radius is None:
            return True
        return bool(np.max(np.abs(points)) <= self.region_radius)

    def curvature(self, points):
        z = np.asarray(points, dtype=complex)
        lam = self.lam(z)
        lzz = np.real(self.metric.lam_zzbar(z))
        lz = self.metric.lam_z(z)
        # kappa = -(2/lam) d_z d_zbar log(lam)
        return -(2.0 / lam) * (lzz / lam - np.abs(lz) ** 2 / lam**2)

    def distance(self, p, q):
        return np.abs(np.asarray(p) - np.asarray(q))


def make_surface(kind: str, metric: str | ChartMetric | None = None,
                 region_radius: float | None = None, **metric_params):
    if kind == "sphere":
        return UnitSphere()
    if kind == "chart":
        if isinstance(metric, ChartMetric):
            return ConformalChart(metric, region_radius)
        name = metric or "round"
        if name not in CHART_METRICS:
            raise GeometryError(f"unknown chart metric {name!r} (have {sorted(CHART_METRICS)})")
        return ConformalChart(CHART_METRICS[name](**metric_params), region_radius)
    raise GeometryError(f"unknown target kind {kind!r}")


# ---------------------------------------------------------------------------
# fields along maps
# ---------------------------------------------------------------------------

@dataclass
class MapField:
    """A discretized map u(.) on a grid with an anchor value u*.

    points: (n, 3) float array on the sphere, (n,) complex array on a chart.
    base_point: the x -> -infinity anchor (defaults to the left-end value).
    """

    grid: GridSpec
    surface: object
    points: np.ndarray
    base_point: np.ndarray | complex | None = None

    def __post_init__(self):
        self.points = self.surface.project(self.points)
        if self.points.shape[0] != self.grid.n_points:
            raise GeometryError("points length does not match the grid")
        if self.base_point is None:
            self.base_point = self.points[0]

    def margin_deviation(self, margin: float) -> float:
        """Worst distance to u* within `margin` of both ends (the seam, for
        periodic grids); inf when the margin covers no grid point."""
        if margin <= 0.0:
            return float("inf")
        x = self.grid.x
        window = (x < self.grid.x_min + margin) | (x > self.grid.x_max - margin)
        if not np.any(window):
            return float("inf")
        dist = self.surface.distance(self.points, self.base_point)
        return float(np.max(dist[window]))

    def margin_flat(self, margin: float, tol: float = 1e-10) -> bool:
        """True when the map equals u* within `tol` on a margin at both ends
        (the decay-hypothesis proxy)."""
        return self.margin_deviation(margin) <= tol


@dataclass
class TangentField:
    """Vector field along a MapField (same array layout as the points)."""

    base: MapField
    vectors: np.ndarray

    def __post_init__(self):
        if self.vectors.shape[0] != self.base.grid.n_points:
            raise GeometryError("vectors length does not match the grid")


# ---------------------------------------------------------------------------
# covariant calculus
# ---------------------------------------------------------------------------

def map_velocity(u: MapField) -> TangentField:
    """u_x as a tangent field (grid derivative of the points)."""
    return TangentField(u, spatial_derivative(u.points, 1, u.grid))


def covariant_derivative_x(u: MapField, V: TangentField) -> TangentField:
    """nabla_x V along u."""
    surf = u.surface
    Vx = spatial_derivative(V.vectors, 1, u.grid)
    if surf.kind == "sphere":
        ux = spatial_derivative(u.points, 1, u.grid)
        out = Vx + surf.inner(u.points, V.vectors, ux)[:, None] * u.points
    else:
        zx = spatial_derivative(u.points, 1, u.grid)
        out = Vx + surf.log_lam_z(u.points) * zx * V.vectors
    return TangentField(u, out)


def covariant_tower(u: MapField):
    """(nabla_x u_x, nabla_x^2 u_x, nabla_x^3 u_x) on the sphere, closed forms.

    nabla_x u_x   = u_xx + |u_x|^2 u
    nabla_x^2 u_x = u_xxx + 3 (u_xx, u_x) u + |u_x|^2 u_x
    nabla_x^3 u_x = u_xxxx + 4 (u_xxx, u_x) u + 3 |u_xx|^2 u
                    + 5 (u_xx, u_x) u_x + |u_x|^2 u_xx + |u_x|^4 u
    """
    if u.surface.kind != "sphere":
        raise GeometryError("closed-form covariant towers are a sphere operation")
    pts = u.points
    d = derivative_bundle(pts, u.grid, 4)
    ux, uxx, uxxx, uxxxx = d[1], d[2], d[3], d[4]
    dot = lambda a, b: np.sum(a * b, axis=-1, keepdims=True)
    ux2 = dot(ux, ux)
    t1 = uxx + ux2 * pts
    t2 = uxxx + 3.0 * dot(uxx, ux) * pts + ux2 * ux
    t3 = (uxxxx + 4.0 * dot(uxxx, ux) * pts + 3.0 * dot(uxx, uxx) * pts
          + 5.0 * dot(uxx, ux) * ux + ux2 * uxx + ux2**2 * pts)
    return (TangentField(u, t1), TangentField(u, t2), TangentField(u, t3))


def chart_covariant_tower(u: MapField):
    """(nabla_x u_x, nabla_x^2 u_x, nabla_x^3 u_x) on a chart.

    nabla_x V = V_x + Gamma z_x V with Gamma = (log lambda)_z evaluated along
    the curve; each level differentiates the previous one on the grid, so no
    second derivatives of lambda are needed.
    """
    grid = u.grid
    z, zx, zxx = derivative_bundle(u.points, grid, 2)
    gamma_zx = u.surface.log_lam_z(z) * zx
    v1 = zxx + gamma_zx * zx
    v2 = spatial_derivative(v1, 1, grid) + gamma_zx * v1
    v3 = spatial_derivative(v2, 1, grid) + gamma_zx * v2
    return (TangentField(u, v1), TangentField(u, v2), TangentField(u, v3))


def gaussian_curvature(surface, points) -> np.ndarray:
    """kappa at each point of the map (1 on the unit sphere)."""
    return surface.curvature(points)


def metric_inner(surface, u, V, W):
    """g_u(V, W) pointwise."""
    return surface.inner(u, V, W)


def apply_J(surface, u, V, check: bool = True):
    """J_u V (90-degree rotation of the tangent plane)."""
    return surface.apply_J(u, V, check=check)
