"""Spatial grids, differentiation, and quadrature.

Two grid flavours are supported:

* ``periodic``        -- uniform grid on [x_min, x_max) with x_max identified
                         with x_min; derivatives are spectral (FFT).
* ``line_truncated``  -- uniform grid on [x_min, x_max] including both ends;
                         derivatives are centered finite differences
                         (4th-order by default) with one-sided stencils near
                         the ends.

All fields live on the grid as numpy arrays whose leading axis is x; extra
trailing axes (e.g. the 3 components of a sphere point) are differentiated
component-wise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid

PERIODIC = "periodic"
LINE = "line_truncated"

MAX_DERIVATIVE_ORDER = 4


class DiscretizationWarning(UserWarning):
    """Grid is coarse enough that a requested operation may be inaccurate."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform 1-D grid.

    n_points: number of stored samples.
    x_min, x_max: domain ends; for periodic grids x_max is excluded.
    boundary: "periodic" or "line_truncated".
    """

    n_points: int
    x_min: float
    x_max: float
    boundary: str = PERIODIC

    def __post_init__(self):
        if self.boundary not in (PERIODIC, LINE):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.x_max <= self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.boundary == PERIODIC and self.n_points < 16:
            raise ValueError("periodic (spectral) grids need n_points >= 16")
        if self.boundary == LINE and self.n_points < 16:
            raise ValueError("line grids need n_points >= 16 for the 4th-order stencils")

    @property
    def dx(self) -> float:
        if self.boundary == PERIODIC:
            return (self.x_max - self.x_min) / self.n_points
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def x(self) -> np.ndarray:
        if self.boundary == PERIODIC:
            return self.x_min + self.dx * np.arange(self.n_points)
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def wavenumbers(self) -> np.ndarray:
        """Fourier wavenumbers k such that d/dx <-> i*k (periodic only)."""
        if self.boundary != PERIODIC:
            raise ValueError("wavenumbers only exist on periodic grids")
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    def refined(self, factor: int = 2) -> "GridSpec":
        if self.boundary == PERIODIC:
            return GridSpec(self.n_points * factor, self.x_min, self.x_max, PERIODIC)
        return GridSpec((self.n_points - 1) * factor + 1, self.x_min, self.x_max, LINE)


# ---------------------------------------------------------------------------
# finite-difference machinery (line grids)
# ---------------------------------------------------------------------------

def fd_weights(offsets, order: int) -> np.ndarray:
    """Finite-difference weights on arbitrary integer offsets (Fornberg).

    Returns w such that f^(order)(0) ~= sum_j w[j] * f(offsets[j] * dx) / dx^order.
    order=0 gives interpolation weights.
    """
    offsets = np.asarray(offsets, dtype=float)
    n = len(offsets)
    if order >= n:
        raise ValueError("need more points than the derivative order")
    # Solve the Vandermonde moment conditions.
    rhs = np.zeros(n)
    rhs[order] = math.factorial(order)
    vand = np.vander(offsets, n, increasing=True).T
    return np.linalg.solve(vand, rhs)


@lru_cache(maxsize=None)
def _line_stencils(order: int, accuracy: int):
    """Interior and one-sided stencils for a given derivative order.

    Interior stencil is centered with width order + accuracy (+1 to keep it odd);
    boundary rows use the first/last `width` points.
    """
    width = order + accuracy
    if width % 2 == 0:
        width += 1
    half = width // 2
    center = fd_weights(np.arange(-half, half + 1), order)
    edge = []
    for i in range(half):
        edge.append(fd_weights(np.arange(width) - i, order))
    return half, center, np.array(edge)


def _fd_derivative(values: np.ndarray, order: int, dx: float, accuracy: int) -> np.ndarray:
    half, center, edge = _line_stencils(order, accuracy)
    n = values.shape[0]
    width = 2 * half + 1
    if n < width:
        raise ValueError(f"grid too short for order-{order} stencil (need {width} points)")
    out = np.empty_like(values, dtype=np.result_type(values, float))
    # interior: correlate along the leading axis
    for j in range(width):
        block = values[j:n - width + 1 + j]
        if j == 0:
            acc = center[0] * block
        else:
            acc += center[j] * block
    out[half:n - half] = acc
    # one-sided rows at both ends
    for i in range(half):
        out[i] = np.tensordot(edge[i], values[:width], axes=(0, 0))
        out[n - 1 - i] = np.tensordot(edge[i][::-1] * (-1) ** order, values[n - width:], axes=(0, 0))
    return out / dx**order


# ---------------------------------------------------------------------------
# spectral machinery (periodic grids)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _cached_multiplier(n: int, dx: float, order: int, real: bool) -> np.ndarray:
    if real:
        k = 2.0 * np.pi * np.fft.rfftfreq(n, d=dx)
    else:
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=dx)
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0  # odd derivative of the Nyquist mode
    mult.setflags(write=False)
    return mult


def _spectral_multiplier(grid: GridSpec, order: int, real: bool = False) -> np.ndarray:
    return _cached_multiplier(grid.n_points, grid.dx, order, real)


def spectral_derivatives(values: np.ndarray, grid: GridSpec, orders) -> dict:
    """Derivatives of several orders from a single forward FFT.

    Real fields go through rfft/irfft, complex ones through fft/ifft.
    """
    real_in = not np.iscomplexobj(values)
    shape_tail = (1,) * (values.ndim - 1)
    out = {}
    if real_in:
        spec = np.fft.rfft(values, axis=0)
        for m in orders:
            if m == 0:
                out[0] = values
                continue
            mult = _spectral_multiplier(grid, m, real=True).reshape((-1,) + shape_tail)
            out[m] = np.fft.irfft(spec * mult, n=grid.n_points, axis=0)
    else:
        spec = np.fft.fft(values, axis=0)
        for m in orders:
            if m == 0:
                out[0] = values
                continue
            mult = _spectral_multiplier(grid, m).reshape((-1,) + shape_tail)
            out[m] = np.fft.ifft(spec * mult, axis=0)
    return out


def spatial_derivative(values: np.ndarray, order: int, grid: GridSpec,
                       accuracy: int = 4) -> np.ndarray:
    """d^order/dx^order of a grid function (spectral or finite-difference)."""
    if not 1 <= order <= MAX_DERIVATIVE_ORDER:
        raise ValueError(f"derivative order {order} unsupported (1..{MAX_DERIVATIVE_ORDER})")
    values = np.asarray(values)
    if values.shape[0] != grid.n_points:
        raise ValueError("field length does not match grid")
    if grid.boundary == PERIODIC:
        return spectral_derivatives(values, grid, [order])[order]
    if grid.n_points < 4 * (order + accuracy):
        warnings.warn(
            f"only {grid.n_points} points for an order-{order} derivative; "
            "results may be dominated by truncation error",
            DiscretizationWarning, stacklevel=2)
    return _fd_derivative(values, order, grid.dx, accuracy)


def derivative_bundle(values: np.ndarray, grid: GridSpec, max_order: int,
                      accuracy: int = 4) -> list:
    """[f, f', ..., f^(max_order)] sharing one FFT on periodic grids."""
    if grid.boundary == PERIODIC:
        d = spectral_derivatives(values, grid, range(max_order + 1))
        return [d[m] for m in range(max_order + 1)]
    out = [np.asarray(values)]
    for m in range(1, max_order + 1):
        out.append(spatial_derivative(values, m, grid, accuracy))
    return out


# ---------------------------------------------------------------------------
# refinement (node + midpoint sampling for transport integrators)
# ---------------------------------------------------------------------------

def spectral_upsample(values: np.ndarray, factor: int = 2) -> np.ndarray:
    """Trigonometric interpolation onto a grid `factor` times finer."""
    values = np.asarray(values)
    n = values.shape[0]
    m = n * factor
    spec = np.fft.fft(values, axis=0)
    out_spec = np.zeros((m,) + values.shape[1:], dtype=complex)
    h = n // 2
    out_spec[:h] = spec[:h]
    if n % 2 == 0:
        out_spec[h] = 0.5 * spec[h]
        out_spec[m - h] = 0.5 * spec[h]
        out_spec[m - h + 1:] = spec[h + 1:]
    else:
        out_spec[m - h:] = spec[h:]
    out = np.fft.ifft(out_spec * factor, axis=0)
    return out.real if not np.iscomplexobj(values) else out


def _midpoint_interpolate(values: np.ndarray) -> np.ndarray:
    """4th-order midpoint values on a uniform line grid (cubic, one-sided at ends)."""
    n = values.shape[0]
    mid = np.empty((n - 1,) + values.shape[1:], dtype=values.dtype)
    if n >= 4:
        mid[1:-1] = (-values[:-3] + 9 * values[1:-2] + 9 * values[2:-1] - values[3:]) / 16.0
        w_edge = fd_weights(np.arange(4) - 0.5, 0)
        mid[0] = np.tensordot(w_edge, values[:4], axes=(0, 0))
        mid[-1] = np.tensordot(w_edge[::-1], values[-4:], axes=(0, 0))
    else:
        mid[:] = 0.5 * (values[:-1] + values[1:])
    return mid


def refine_with_derivative(values: np.ndarray, grid: GridSpec):
    """Sample a field and its x-derivative on nodes + midpoints.

    Returns (fine_values, fine_derivative): periodic grids give 2n samples
    (even indices = nodes), line grids 2n-1 samples. Used by the frame
    transport integrator, which needs coefficients at RK4 midpoints.
    """
    if grid.boundary == PERIODIC:
        fine = spectral_upsample(values, 2)
        fine_grid = grid.refined(2)
        dfine = spatial_derivative(fine, 1, fine_grid)
        return fine, dfine
    deriv = spatial_derivative(values, 1, grid)
    fine = np.empty((2 * grid.n_points - 1,) + values.shape[1:], dtype=values.dtype)
    fine[0::2] = values
    fine[1::2] = _midpoint_interpolate(values)
    dfine = np.empty_like(fine)
    dfine[0::2] = deriv
    dfine[1::2] = _midpoint_interpolate(deriv)
    return fine, dfine


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def integrate(values: np.ndarray, grid: GridSpec):
    """Integral over the domain: rectangle rule (exact for trig polynomials)
    on periodic grids, trapezoid on line grids."""
    if grid.boundary == PERIODIC:
        return np.sum(values, axis=0) * grid.dx
    return np.trapezoid(values, dx=grid.dx, axis=0)


def cumulative_integral(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Cumulative trapezoid from the left end; first entry 0."""
    return cumulative_trapezoid(values, dx=grid.dx, axis=0, initial=0.0)


def cumulative_integral_spectral(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Antiderivative from the left end, exact for resolved periodic data.

    F(x) = mean(f) (x - x0) + oscillatory antiderivative via 1/(ik); the
    trapezoid rule is only O(dx^2) here, which would cap refinement studies
    of the nonlocal terms at second order.
    """
    if grid.boundary != PERIODIC:
        return cumulative_integral(values, grid)
    values = np.asarray(values)
    spec = np.fft.fft(values, axis=0)
    k = 2.0 * np.pi * np.fft.fftfreq(grid.n_points, d=grid.dx)
    inv = np.zeros_like(k, dtype=complex)
    inv[1:] = 1.0 / (1j * k[1:])
    if grid.n_points % 2 == 0:
        inv[grid.n_points // 2] = 0.0
    mean = spec[0] / grid.n_points
    osc = np.fft.ifft(spec * inv.reshape((-1,) + (1,) * (values.ndim - 1)), axis=0)
    if not np.iscomplexobj(values):
        osc = osc.real
        mean = mean.real
    x_rel = (grid.x - grid.x_min).reshape((-1,) + (1,) * (values.ndim - 1))
    out = mean * x_rel + osc - osc[0]
    return out
