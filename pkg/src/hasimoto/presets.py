"""Initial-data presets for maps and filaments.

Map presets build on an arbitrary target (sphere or chart); data written in
the stereographic chart is pushed to the sphere with the fixed convention
z = (u1 + i u2)/(1 - u3). Periodic presets are phrased in the scaled
variable xi = 2 pi (x - x_min)/(x_max - x_min) so any domain works.

The decaying presets (bump, gaussian_filament) are flat at the ends to
double precision, which is what the moving-frame gauge A(t) = 0 needs.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.special import erf

from .flows import FilamentState
from .geometry import MapField, chart_to_sphere
from .grids import GridSpec


def _scaled_angle(grid: GridSpec) -> np.ndarray:
    return 2.0 * np.pi * (grid.x - grid.x_min) / grid.length


def bump_profile(xi: np.ndarray, width: float = 10.0) -> np.ndarray:
    """exp(-width / (1 - cos xi)): flat to double precision near xi = 0, 2 pi."""
    denom = 1.0 - np.cos(xi)
    safe = np.where(denom > 1e-14, denom, 1.0)
    return np.where(denom > 1e-14, np.exp(-width / safe), 0.0)


def constant_map(grid: GridSpec, surface, point=None) -> MapField:
    """u identically the anchor point (default: chart origin / south pole)."""
    if surface.kind == "sphere":
        pt = np.array([0.0, 0.0, -1.0]) if point is None else np.asarray(point, dtype=float)
        pts = np.tile(pt, (grid.n_points, 1))
    else:
        pt = 0.0 + 0.0j if point is None else complex(point)
        pts = np.full(grid.n_points, pt, dtype=complex)
    return MapField(grid, surface, pts, pt)


def great_circle(grid: GridSpec, surface) -> MapField:
    """The equator, z = exp(i xi) in the chart; a closed geodesic (sphere)."""
    xi = _scaled_angle(grid)
    z = np.exp(1j * xi)
    if surface.kind == "sphere":
        return MapField(grid, surface, chart_to_sphere(z))
    return MapField(grid, surface, z)


def bump(grid: GridSpec, surface, amplitude: float = 0.3, width: float = 10.0,
         z_star: complex = 0.0 + 0.0j) -> MapField:
    """z = z* + amplitude exp(-width/(1 - cos xi)): the default decaying datum."""
    z = z_star + amplitude * bump_profile(_scaled_angle(grid), width)
    if surface.kind == "sphere":
        return MapField(grid, surface, chart_to_sphere(z), chart_to_sphere(z_star))
    return MapField(grid, surface, z, z_star)


def perturbed_geodesic(grid: GridSpec, surface, amplitude: float = 0.05,
                       width: float = 10.0) -> MapField:
    """The equator with a radial bump: nonconstant q, hypothesis-violating."""
    xi = _scaled_angle(grid)
    z = np.exp(1j * xi) * (1.0 + amplitude * bump_profile(xi, width))
    if surface.kind == "sphere":
        return MapField(grid, surface, chart_to_sphere(z))
    return MapField(grid, surface, z)


def circle(grid: GridSpec, radius: float = 1.0) -> FilamentState:
    """Arc-length circle of the given radius (grid length 2 pi radius closes it)."""
    s = grid.x / radius
    X = radius * np.stack([np.cos(s), np.sin(s), np.zeros_like(s)], axis=-1)
    return FilamentState(grid, X)


def helix(grid: GridSpec, r: float = 1.0, h: float = 1.0) -> FilamentState:
    """Arc-length helix; curvature r/(r^2+h^2), torsion h/(r^2+h^2)."""
    theta = 1.0 / np.sqrt(r * r + h * h)
    s = theta * grid.x
    X = np.stack([r * np.cos(s), r * np.sin(s), h * s], axis=-1)
    return FilamentState(grid, X)


def gaussian_filament(grid: GridSpec, amplitude: float = 1.0, width: float = 1.0) -> FilamentState:
    """Plane curve with Gaussian curvature profile kappa(x) = amplitude e^{-(x/width)^2}.

    Unit speed by construction: the tangent angle is the closed-form
    integral of kappa, and positions come from quadrature of the tangent on
    a refined grid (error far below the arc-length tolerance).
    """
    refine = 16
    x_f = np.linspace(grid.x_min, grid.x_max, refine * (grid.n_points - 1) + 1) \
        if grid.boundary == "line_truncated" else \
        grid.x_min + (grid.dx / refine) * np.arange(refine * grid.n_points)
    phi = amplitude * width * 0.5 * np.sqrt(np.pi) * (erf(x_f / width) + 1.0)
    T = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=-1)
    X_f = cumulative_simpson(T, dx=(x_f[1] - x_f[0]), axis=0, initial=0.0)
    return FilamentState(grid, X_f[::refine][:grid.n_points])


def random_bandlimited(grid: GridSpec, surface=None, seed: int = 0, k_max: int = 8,
                       amplitude: float = 0.1, z_star: complex = 0.0 + 0.0j):
    """Random band-limited chart field z* + sum_{1<=|k|<=k_max} c_k e^{i k xi}.

    Deterministic in the seed. With a surface argument returns a MapField
    (sphere data gets pushed through the chart); without one, the bare
    complex field (useful as a reduced-equation state).
    """
    rng = np.random.default_rng(seed)
    xi = _scaled_angle(grid)
    z = np.zeros(grid.n_points, dtype=complex)
    ks = [k for k in range(-k_max, k_max + 1) if k != 0]
    coeff = (rng.normal(size=len(ks)) + 1j * rng.normal(size=len(ks))) / np.sqrt(len(ks))
    for k, ck in zip(ks, coeff):
        z += ck * np.exp(1j * k * xi)
    z = z_star + amplitude * z
    if surface is None:
        return z
    if surface.kind == "sphere":
        return MapField(grid, surface, chart_to_sphere(z), chart_to_sphere(z_star))
    return MapField(grid, surface, z, z_star)


PRESETS = {
    "constant_map": (constant_map, "map", "point: anchor (default chart origin)"),
    "great_circle": (great_circle, "map", "(no parameters); the equator, a closed geodesic"),
    "bump": (bump, "map", "amplitude=0.3, width=10.0, z_star=0: decaying chart bump"),
    "perturbed_geodesic": (perturbed_geodesic, "map",
                           "amplitude=0.05, width=10.0: equator with a radial bump"),
    "circle": (circle, "filament", "radius=1.0"),
    "helix": (helix, "filament", "r=1.0, h=1.0: curvature r/(r^2+h^2), torsion h/(r^2+h^2)"),
    "gaussian_filament": (gaussian_filament, "filament",
                          "amplitude=1.0, width=1.0: Gaussian curvature profile"),
    "random_bandlimited": (random_bandlimited, "map",
                           "seed=0, k_max=8, amplitude=0.1: deterministic random chart field"),
}


def build_preset(name: str, grid: GridSpec, surface=None, **params):
    """Instantiate a preset by name; filament presets ignore the surface."""
    if name not in PRESETS:
        raise KeyError(
            f"unknown preset {name!r}; run the 'presets' command for the list")
    builder, kind, _ = PRESETS[name]
    if kind == "filament":
        return builder(grid, **params)
    return builder(grid, surface, **params)


def preset_catalog() -> str:
    """Deterministically ordered human-readable preset list."""
    lines = []
    for name in sorted(PRESETS):
        _, kind, doc = PRESETS[name]
        lines.append(f"{name:22s} [{kind}]  {doc}")
    return "\n".join(lines)
