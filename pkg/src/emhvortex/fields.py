"""Analytic fields on the Riemann sphere and the vortex configuration.

The Higgs field is ``phi = z**ell``, a section of ``O(N)`` vanishing to order
``ell`` at ``z = 0`` and ``N - ell`` at ``z = infinity``. With ``x = cos(theta)``
its pointwise Fubini-Study norm is

    Phi = |z|^(2 ell) / (1 + |z|^2)^N = ((1 - x)/2)^ell ((1 + x)/2)^(N - ell).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .grid import (
    SphereGrid,
    dbar_coefficient,
    ddbar_coefficient,
    integrate,
    laplacian_g0,
    normalized_legendre,
    poisson_solve_g0,
    stencil_laplacian,
    stencil_vfield_derivative,
    vfield_derivative,
)

# band used for identities between (0,1)-forms written in the chart z
FORM_BAND = 0.1 * np.pi


@dataclass(frozen=True)
class VortexConfig:
    """Problem instance ``(N, ell, tau, V)``; ``a = 2/N`` is derived, never chosen."""

    N: int
    ell: int
    tau: float = 1.0
    V: float = 4.0 * np.pi
    a: float | None = field(default=None, compare=False)
    epsilon: float = 1.0

    def __post_init__(self):
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 1:
            raise ValueError(f"vortex number N must be a positive integer, got {self.N!r}")
        if int(self.ell) != self.ell or not 0 <= self.ell <= self.N:
            raise ValueError(f"ell must be an integer in [0, N={self.N}], got {self.ell!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "ell", int(self.ell))
        for name in ("tau", "V", "epsilon"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive real, got {value!r}")
        quantized = 2.0 / self.N
        if self.a is not None and not math.isclose(self.a, quantized, rel_tol=1e-12, abs_tol=0.0):
            raise ValueError(f"a = {self.a!r} violates the quantization a = 2/N = {quantized!r}")
        object.__setattr__(self, "a", quantized)

    @property
    def bradlow_margin(self) -> float:
        """``V - 4 pi N / tau^2``; positive is necessary for a solution."""
        return self.V - 4.0 * np.pi * self.N / self.tau**2

    @property
    def symmetric(self) -> bool:
        return self.N == 2 * self.ell


def _check_volume(config: VortexConfig, grid: SphereGrid) -> None:
    if not math.isclose(config.V, grid.volume, rel_tol=1e-12):
        raise ValueError(f"config volume {config.V} does not match grid volume {grid.volume}")


# -- closed-form fields -------------------------------------------------------


def higgs_density_at(N: int, ell: int, theta: np.ndarray) -> np.ndarray:
    x = np.cos(theta)
    return ((1.0 - x) / 2.0) ** ell * ((1.0 + x) / 2.0) ** (N - ell)


def higgs_density(config: VortexConfig, grid: SphereGrid) -> np.ndarray:
    """``Phi = |phi|^2`` in the Fubini-Study metric ``(1 + |z|^2)^-N``."""
    return higgs_density_at(config.N, config.ell, grid.theta2d)


def psi_zero(config: VortexConfig, grid: SphereGrid) -> np.ndarray:
    """``ell - N |z|^2 / (1 + |z|^2)``."""
    return config.ell - config.N * (1.0 - grid.x) / 2.0


def psi_f(f: np.ndarray, config: VortexConfig, grid: SphereGrid) -> np.ndarray:
    """Hamiltonian of the radial field lifted to ``O(N)`` with metric ``exp(f) h_FS^N``."""
    return psi_zero(config, grid) + vfield_derivative(f, grid)


def phi_zero(grid: SphereGrid) -> np.ndarray:
    """Closed form of :func:`phi_eta` at ``eta = 0``: ``(V/2pi)(i/2)(|z|^2-1)/(|z|^2+1)``."""
    return -1j * grid.volume * grid.x / (4.0 * np.pi)


def phi_eta(eta: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """dbar-potential of ``exp(eta) i_v omega0``, normalized by ``int phi exp(eta) omega0 = 0``.

    Applying ``d_z`` to ``d_zbar phi = (i z rho / 2) exp(eta)`` gives the
    Poisson problem ``laplacian_g0 phi = 2i exp(eta) (x + z d_z eta)``.
    """
    eta = np.asarray(eta, dtype=float)
    weight = np.exp(eta)
    rhs = 2j * weight * (grid.x + vfield_derivative(eta, grid))
    w = poisson_solve_g0(rhs, grid)
    shift = integrate(w * weight, "omega0", grid) / integrate(weight, "omega0", grid)
    return w - shift


def phi_eta_residual(phi: np.ndarray, eta: np.ndarray, grid: SphereGrid, band: float = FORM_BAND) -> float:
    """Sup over the band of ``|d_zbar phi - (i z rho / 2) exp(eta)|``."""
    mask = grid.interior_mask(band)
    target = 0.5j * grid.nodes * grid.conformal_factor * np.exp(eta)
    return float(np.max(np.abs(dbar_coefficient(phi, grid) - target)[mask]))


# -- random smooth test fields ------------------------------------------------


class BandlimitedField:
    """Real combination of spherical harmonics of degree ``<= degree``, evaluable anywhere."""

    def __init__(self, coeffs: np.ndarray):
        self.coeffs = np.asarray(coeffs, dtype=complex)
        self.degree = self.coeffs.shape[1] - 1

    def __call__(self, theta, phi):
        theta = np.asarray(theta, dtype=float)
        phi = np.broadcast_to(np.asarray(phi, dtype=float), theta.shape)
        P = normalized_legendre(self.degree, self.degree, np.cos(theta).ravel())
        out = np.zeros(theta.size)
        for m in range(self.degree + 1):
            Um = P[m] @ self.coeffs[m]
            e = np.exp(1j * m * phi.ravel())
            out += (1.0 if m == 0 else 2.0) * np.real(Um * e)
        return out.reshape(theta.shape)

    def sample(self, grid: SphereGrid) -> np.ndarray:
        return self(grid.theta2d, grid.phi2d)

    def __add__(self, other: float) -> "BandlimitedField":
        c = self.coeffs.copy()
        c[0, 0] += other * np.sqrt(4.0 * np.pi)
        return BandlimitedField(c)


def random_field(seed: int, degree: int = 4, amplitude: float = 1.0) -> BandlimitedField:
    """Seeded smooth field with sup-norm ``amplitude`` (estimated on a fine grid)."""
    rng = np.random.default_rng(seed)
    c = np.zeros((degree + 1, degree + 1), dtype=complex)
    for m in range(degree + 1):
        for l in range(m, degree + 1):
            c[m, l] = rng.normal() + (1j * rng.normal() if m else 0.0)
    c /= np.arange(1, degree + 2)[None, :]
    fld = BandlimitedField(c)
    t, p = np.meshgrid(np.linspace(0, np.pi, 4 * degree + 9), np.linspace(0, 2 * np.pi, 8 * degree + 16))
    return BandlimitedField(c * amplitude / np.max(np.abs(fld(t, p))))


# -- structural identities ------------------------------------------------------


def _log_fs(N: int) -> Callable:
    # log h_FS^N = -N log(1 + |z|^2)
    return lambda t, p: -N * np.log1p(np.tan(t / 2.0) ** 2) + 0.0 * p


def _ddbar_log_h(f: np.ndarray, config: VortexConfig, grid: SphereGrid, mask: np.ndarray) -> np.ndarray:
    fs = 0.25 * grid.conformal_factor * stencil_laplacian(_log_fs(config.N), grid, mask)
    return ddbar_coefficient(f, grid) + fs


class StructureResiduals(NamedTuple):
    hamiltonian: float
    section: float
    mixed: float


def structure_residuals(
    f: np.ndarray,
    config: VortexConfig,
    grid: SphereGrid,
    f_func: Callable | None = None,
    band: float = FORM_BAND,
) -> StructureResiduals:
    """Band sup-norms of the three identities satisfied by ``psi_f``.

    * ``-i dbar psi_f = i_v (i dbar d log h)`` compared as ``d zbar`` coefficients,
    * ``i_v (d phi + phi d log h) = psi_f phi`` measured in the metric ``h``,
    * ``dbar(psi_f (e^f Phi - tau^2)) = -i_v (dbar d (e^f Phi) - tau^2 dbar d log h)``.

    Here ``h = exp(f) h_FS^N``. The left-hand sides use spectral derivatives of
    grid samples; the curvature of ``h_FS^N``, ``z d_z phi`` and (if ``f_func`` is
    given) ``z d_z f`` go through the independent log-chart stencil.
    """
    _check_volume(config, grid)
    mask = grid.interior_mask(band)
    z = grid.nodes
    psi = psi_f(f, config, grid)
    ddbar_log_h = _ddbar_log_h(f, config, grid, mask)

    lhs = -1j * dbar_coefficient(psi, grid)
    rhs = -1j * z * ddbar_log_h
    hamiltonian = np.max(np.abs(lhs - rhs)[mask])

    ell, N = config.ell, config.N
    section = lambda t, p: np.tan(t / 2.0) ** ell * np.exp(1j * ell * p)
    phi = section(grid.theta2d, grid.phi2d)
    v_phi = stencil_vfield_derivative(section, grid, mask)
    v_log_fs = stencil_vfield_derivative(_log_fs(N), grid, mask)
    v_f = stencil_vfield_derivative(f_func, grid, mask) if f_func is not None else vfield_derivative(f, grid)
    lhs = v_phi + phi * (v_log_fs + v_f)
    norm_h = np.exp(0.5 * f) * (1.0 + grid.abs_z2) ** (-0.5 * N)
    section_res = np.max((np.abs(lhs - psi * phi) * norm_h)[mask])

    density = np.exp(f) * higgs_density(config, grid)
    lhs = dbar_coefficient(psi * (density - config.tau**2), grid)
    rhs = z * (ddbar_coefficient(density, grid) - config.tau**2 * ddbar_log_h)
    mixed = np.max(np.abs(lhs - rhs)[mask])
    return StructureResiduals(float(hamiltonian), float(section_res), float(mixed))


def psi_zero_dbar_residual(config: VortexConfig, grid: SphereGrid, band: float = FORM_BAND) -> float:
    """Sup over the band of ``|dbar psi_0 - i N i_v omega_FS|`` as ``d zbar`` coefficients."""
    mask = grid.interior_mask(band)
    z = grid.nodes
    target = -config.N * z / (1.0 + grid.abs_z2) ** 2
    return float(np.max(np.abs(dbar_coefficient(psi_zero(config, grid), grid) - target)[mask]))


# -- epsilon normalization ----------------------------------------------------


class Normalized(NamedTuple):
    f: np.ndarray
    eta: np.ndarray
    V: float


def normalize_epsilon(u: np.ndarray, eta: np.ndarray, epsilon: float, grid: SphereGrid) -> Normalized:
    """Rewrite an ``epsilon``-solution as an ``epsilon = 1`` pair on a rescaled background.

    ``u`` is the smooth part ``f = u - log Phi``; the metric ``exp(eta) g0 / epsilon^2``
    has volume ``V_new`` and equals ``exp(eta') g0_new`` where ``g0_new`` is the
    round metric of volume ``V_new``. ``eta'`` is relative to ``g0_new``.
    """
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    eta = np.asarray(eta, dtype=float)
    V_new = float(integrate(np.exp(eta), "omega0", grid)) / epsilon**2
    eta_new = eta - 2.0 * math.log(epsilon) - math.log(V_new / grid.volume)
    return Normalized(np.asarray(u, dtype=float).copy(), eta_new, V_new)


def normalize_volume(eta: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """Shift ``eta`` by the constant making ``int exp(eta) omega0 = V``."""
    eta = np.asarray(eta, dtype=float)
    return eta + math.log(grid.volume / integrate(np.exp(eta), "omega0", grid))


def laplacian_fs(values: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """Laplacian of the Fubini-Study metric, ``(V / 2 pi) laplacian_g0``."""
    return grid.volume / (2.0 * np.pi) * laplacian_g0(values, grid)
