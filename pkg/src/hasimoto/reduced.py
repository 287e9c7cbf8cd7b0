"""Reduced complex evolution equations.

The moving-frame transform sends the geometric flows to complex-valued
equations on the line:

* cubic NLS            psi_t = i psi_xx + (i/2)|psi|^2 psi
* Hirota               ... + a {psi_xxx + (3/2)|psi|^2 psi_x}
* fourth-order reduced the C1/Cb equation produced by the classical
                       curvature/torsion transform of the core-deformation
                       filament flow
* t3rd / t4th          the general reductions of the third/fourth-order
                       map flows on a surface with Gaussian curvature
                       kappa(u), including nonlocal terms
                       integral_{-inf}^x (kappa)_x {...} dx'
* schrodinger_reduced  the a=b=0 special case of t3rd

Every product-rule derivative ((|q|^2 q)_x, (|q|^2)_xx, ...) is expanded
analytically into monomials in q, q_x, q_xx, ... before discretization, so
the coefficient identities

  t3rd(a, b=a/2, kappa=1)                    == hirota(a)
  t4th(a=C1, b=Cb-C1, c=2Cb+C1, kappa=1)     == fourth_reduced(C1, Cb)

hold to round-off on the grid, given shared derivative fields.

Nonlocal kinds cannot be evolved standalone: kappa(u) is data sampled along
a geometric trajectory (residual mode in the verify module). Standalone
evolution supports the constant-curvature kinds only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flows import RK4_IMAG_LIMIT, BlowUpError, EvolutionConfig
from .grids import (GridSpec, cumulative_integral, cumulative_integral_spectral,
                    derivative_bundle, integrate, spatial_derivative)

REDUCED_KINDS = ("nls", "hirota", "fourth_reduced", "t3rd", "t4th", "schrodinger_reduced")


class ConfigurationError(ValueError):
    """Inconsistent reduced-equation configuration."""


@dataclass(frozen=True)
class ReducedParams:
    """Kind, coefficients and curvature mode of a reduced equation.

    kappa_mode "constant" uses kappa0 and forbids nonlocal terms (their
    integrands carry (kappa)_x = 0); "field" requires kappa samples along a
    known map trajectory at evaluation time.
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    C1: float = 0.0
    Cb: float = 0.0
    kappa_mode: str = "constant"
    kappa0: float = 1.0
    nonlocal_terms: bool = False

    def __post_init__(self):
        if self.kind not in REDUCED_KINDS:
            raise ConfigurationError(f"unknown reduced kind {self.kind!r} (have {REDUCED_KINDS})")
        if self.kappa_mode not in ("constant", "field"):
            raise ConfigurationError(f"unknown kappa mode {self.kappa_mode!r}")
        if self.kappa_mode == "constant" and self.nonlocal_terms:
            raise ConfigurationError(
                "nonlocal terms require kappa_mode='field': constant curvature "
                "makes every nonlocal integrand vanish")

    @property
    def order(self) -> int:
        if self.kind in ("fourth_reduced", "t4th"):
            return 4
        if self.kind == "hirota" or (self.kind == "t3rd" and self.a != 0.0):
            return 3
        return 2


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------

def rhs_nls(psi: np.ndarray, grid: GridSpec) -> np.ndarray:
    """i psi_xx + (i/2) |psi|^2 psi."""
    psixx = spatial_derivative(psi, 2, grid)
    return 1j * psixx + 0.5j * np.abs(psi) ** 2 * psi


def rhs_hirota(psi: np.ndarray, grid: GridSpec, a: float) -> np.ndarray:
    """i psi_xx + (i/2)|psi|^2 psi + a {psi_xxx + (3/2)|psi|^2 psi_x}."""
    _, psix, psixx, psixxx = derivative_bundle(psi, grid, 3)
    mod2 = np.abs(psi) ** 2
    return 1j * psixx + 0.5j * mod2 * psi + a * (psixxx + 1.5 * mod2 * psix)


def rhs_fourth_reduced(psi: np.ndarray, grid: GridSpec, C1: float, Cb: float) -> np.ndarray:
    """The fourth-order filament reduction with constants (C1, Cb):

    i psi_xx + (i/2)|psi|^2 psi
      - i C1 {psi_xxxx + (3/2)(|psi|^2 psi_xx + psi_x^2 conj(psi))
              + ((3/8)|psi|^4 + (1/2)(|psi|^2)_xx) psi}
      + i (Cb + C1/2) {(|psi|^2 psi)_xx + (3/4)|psi|^4 psi}

    with (|psi|^2)_xx and (|psi|^2 psi)_xx expanded into monomials.
    """
    d = derivative_bundle(psi, grid, 4)
    psix, psixx, psixxxx = d[1], d[2], d[4]
    cpsi = np.conj(psi)
    mod2 = np.abs(psi) ** 2
    modx2 = np.abs(psix) ** 2
    # (|psi|^2)_xx = 2 Re(psi_xx conj(psi)) + 2 |psi_x|^2
    mod2_xx = 2.0 * np.real(psixx * cpsi) + 2.0 * modx2
    # (|psi|^2 psi)_xx = 2 conj(psi) psi_x^2 + 2 |psi|^2 psi_xx
    #                    + 4 psi |psi_x|^2 + psi^2 conj(psi)_xx
    cubic_xx = (2.0 * cpsi * psix**2 + 2.0 * mod2 * psixx
                + 4.0 * psi * modx2 + psi**2 * np.conj(psixx))
    out = 1j * psixx + 0.5j * mod2 * psi
    out -= 1j * C1 * (psixxxx + 1.5 * (mod2 * psixx + psix**2 * cpsi)
                      + (0.375 * mod2**2 + 0.5 * mod2_xx) * psi)
    out += 1j * (Cb + 0.5 * C1) * (cubic_xx + 0.75 * mod2**2 * psi)
    return out


def _kappa_arrays(params: ReducedParams, grid: GridSpec, kappa):
    """(kappa, kappa_x) as arrays; validates the residual-mode contract."""
    if params.kappa_mode == "constant":
        k = np.full(grid.n_points, params.kappa0)
        return k, np.zeros(grid.n_points)
    if kappa is None:
        raise ConfigurationError(
            "kappa_mode='field' needs kappa sampled along a map trajectory")
    kappa = np.asarray(kappa, dtype=float)
    return kappa, spatial_derivative(kappa, 1, grid)


def rhs_t3rd(q: np.ndarray, grid: GridSpec, params: ReducedParams, kappa=None) -> np.ndarray:
    """General third-order reduction:

    q_t = a q_xxx + i q_xx + (a kappa/2 + 2b)|q|^2 q_x - (a kappa/2 - b) q^2 conj(q)_x
          + i a [I(kappa_x Im(q conj(q)_x))] q - (i/2)[I(kappa_x |q|^2)] q
          + (i/2) kappa |q|^2 q

    with I(.) the cumulative integral from the left end.
    """
    kap, kap_x = _kappa_arrays(params, grid, kappa)
    _, qx, qxx, qxxx = derivative_bundle(q, grid, 3)
    mod2 = np.abs(q) ** 2
    a, b = params.a, params.b
    out = (a * qxxx + 1j * qxx
           + (0.5 * a * kap + 2.0 * b) * mod2 * qx
           - (0.5 * a * kap - b) * q**2 * np.conj(qx)
           + 0.5j * kap * mod2 * q)
    if params.nonlocal_terms:
        i1 = nonlocal_accumulate(kap_x * np.imag(q * np.conj(qx)), grid)
        i2 = nonlocal_accumulate(kap_x * mod2, grid)
        out += 1j * a * i1 * q - 0.5j * i2 * q
    return out


def rhs_t4th(q: np.ndarray, grid: GridSpec, params: ReducedParams, kappa=None) -> np.ndarray:
    """General fourth-order reduction:

    q_t = -i a q_xxxx + i q_xx
          + i(b + c/2 - a kappa/2)|q|^2 q_xx + i(c/2 - a kappa/2) q^2 conj(q)_xx
          + i(b + c/2) conj(q) q_x^2 + i(b + 3c/2 + a kappa/2) q |q_x|^2
          + (i/2) kappa |q|^2 q + i (b+c)/4 kappa |q|^4 q
          - i [I(kappa_x {(1/2)|q|^2 + (b+c)/4 |q|^4 + (a/2)|q_x|^2
                          - a Re(q_xx conj(q))})] q
    """
    kap, kap_x = _kappa_arrays(params, grid, kappa)
    d = derivative_bundle(q, grid, 4)
    qx, qxx, qxxxx = d[1], d[2], d[4]
    cq = np.conj(q)
    mod2 = np.abs(q) ** 2
    modx2 = np.abs(qx) ** 2
    a, b, c = params.a, params.b, params.c
    half_ak = 0.5 * a * kap
    out = (-1j * a * qxxxx + 1j * qxx
           + 1j * (b + 0.5 * c - half_ak) * mod2 * qxx
           + 1j * (0.5 * c - half_ak) * q**2 * np.conj(qxx)
           + 1j * (b + 0.5 * c) * cq * qx**2
           + 1j * (b + 1.5 * c + half_ak) * q * modx2
           + 0.5j * kap * mod2 * q
           + 0.25j * (b + c) * kap * mod2**2 * q)
    if params.nonlocal_terms:
        bracket = (0.5 * mod2 + 0.25 * (b + c) * mod2**2
                   + 0.5 * a * modx2 - a * np.real(qxx * cq))
        out -= 1j * nonlocal_accumulate(kap_x * bracket, grid) * q
    return out


def rhs_schrodinger_reduced(q: np.ndarray, grid: GridSpec, params: ReducedParams,
                            kappa=None) -> np.ndarray:
    """Schroedinger-map reduction (a = b = 0):

    q_t = i q_xx + (i/2) kappa |q|^2 q - (i/2) [I(|q|^2 kappa_x)] q
    """
    kap, kap_x = _kappa_arrays(params, grid, kappa)
    qxx = spatial_derivative(q, 2, grid)
    mod2 = np.abs(q) ** 2
    out = 1j * qxx + 0.5j * kap * mod2 * q
    if params.nonlocal_terms:
        out -= 0.5j * nonlocal_accumulate(mod2 * kap_x, grid) * q
    return out


def rhs_third_gauge(q: np.ndarray, grid: GridSpec, a: float, b: float,
                    alpha: np.ndarray) -> np.ndarray:
    """Intermediate third-order form with the frame rotation rate explicit:

    q_t = a q_xxx + i q_xx - i alpha q + b (|q|^2 q)_x,
    (|q|^2 q)_x expanded to 2|q|^2 q_x + q^2 conj(q)_x.
    """
    _, qx, qxx, qxxx = derivative_bundle(q, grid, 3)
    return (a * qxxx + 1j * qxx - 1j * alpha * q
            + b * (2.0 * np.abs(q) ** 2 * qx + q**2 * np.conj(qx)))


def rhs_fourth_gauge(q: np.ndarray, grid: GridSpec, a: float, b: float, c: float,
                     alpha: np.ndarray) -> np.ndarray:
    """Intermediate fourth-order form with alpha explicit:

    q_t = -i a q_xxxx + i q_xx + i b (|q|^2 q_x)_x + i (c/2)((|q|^2)_x q)_x
          - i alpha q, products expanded into monomials.
    """
    d = derivative_bundle(q, grid, 4)
    qx, qxx, qxxxx = d[1], d[2], d[4]
    cq = np.conj(q)
    mod2 = np.abs(q) ** 2
    modx2 = np.abs(qx) ** 2
    # (|q|^2 q_x)_x = |q|^2 q_xx + conj(q) q_x^2 + q |q_x|^2
    term_b = mod2 * qxx + cq * qx**2 + q * modx2
    # ((|q|^2)_x q)_x = |q|^2 q_xx + q^2 conj(q)_xx + conj(q) q_x^2 + 3 q |q_x|^2
    term_c = mod2 * qxx + q**2 * np.conj(qxx) + cq * qx**2 + 3.0 * q * modx2
    return (-1j * a * qxxxx + 1j * qxx + 1j * b * term_b + 0.5j * c * term_c
            - 1j * alpha * q)


def nonlocal_accumulate(integrand: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Cumulative integral from the left end (proxy for -infinity).

    Line grids use the cumulative trapezoid (O(dx^2)); periodic grids use
    the spectral antiderivative, exact for resolved data, so the nonlocal
    terms refine at the same order as everything else.
    """
    if grid.boundary == "periodic":
        return cumulative_integral_spectral(integrand, grid)
    return cumulative_integral(integrand, grid)


def reduced_rhs(q: np.ndarray, grid: GridSpec, params: ReducedParams, kappa=None) -> np.ndarray:
    if params.kind == "nls":
        return rhs_nls(q, grid)
    if params.kind == "hirota":
        return rhs_hirota(q, grid, params.a)
    if params.kind == "fourth_reduced":
        return rhs_fourth_reduced(q, grid, params.C1, params.Cb)
    if params.kind == "t3rd":
        return rhs_t3rd(q, grid, params, kappa)
    if params.kind == "t4th":
        return rhs_t4th(q, grid, params, kappa)
    return rhs_schrodinger_reduced(q, grid, params, kappa)


# ---------------------------------------------------------------------------
# evolution
# ---------------------------------------------------------------------------

def stable_dt_reduced(grid: GridSpec, params: ReducedParams, safety: float = 0.2) -> float:
    k_max = np.pi / grid.dx
    if params.order == 4:
        lead = abs(params.C1) if params.kind == "fourth_reduced" else abs(params.a)
        rho = lead * k_max**4 + k_max**2
    elif params.order == 3:
        rho = abs(params.a) * k_max**3 + k_max**2
    else:
        rho = k_max**2
    return min(safety * grid.dx**params.order, 0.9 * RK4_IMAG_LIMIT / rho)


@dataclass
class ReducedTrajectory:
    times: np.ndarray
    states: list
    grid: GridSpec
    params: ReducedParams
    mass: np.ndarray = field(default=None)


def evolve_reduced(q0: np.ndarray, params: ReducedParams, config: EvolutionConfig,
                   grid: GridSpec) -> ReducedTrajectory:
    """RK4 evolution of a constant-curvature reduced equation.

    Nonlocal kinds are refused: their kappa(u) needs the live map (see the
    verify module's residual mode). The mass integral |q|^2 dx is tracked
    per snapshot.
    """
    if params.kappa_mode != "constant":
        raise ConfigurationError(
            "standalone evolution supports constant-curvature kinds only")
    state = np.asarray(q0, dtype=complex).copy()
    dt_target = config.dt if config.dt is not None else stable_dt_reduced(grid, params, config.safety)
    stride = config.snapshot_stride
    n_chunks = max(1, int(np.ceil(config.t_final / (dt_target * stride))))
    n_steps = n_chunks * stride
    dt = config.t_final / n_steps

    times = [0.0]
    states = [state.copy()]
    mass = [float(integrate(np.abs(state) ** 2, grid))]
    for step in range(1, n_steps + 1):
        k1 = reduced_rhs(state, grid, params)
        k2 = reduced_rhs(state + 0.5 * dt * k1, grid, params)
        k3 = reduced_rhs(state + 0.5 * dt * k2, grid, params)
        k4 = reduced_rhs(state + dt * k3, grid, params)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(state)) or np.max(np.abs(state)) > config.blowup_threshold:
            raise BlowUpError(f"non-finite state at t={step * dt:g}",
                              last_valid_time=(step - 1) * dt)
        if step % stride == 0:
            times.append(step * dt)
            states.append(state.copy())
            mass.append(float(integrate(np.abs(state) ** 2, grid)))
    return ReducedTrajectory(np.array(times), states, grid, params, np.array(mass))
