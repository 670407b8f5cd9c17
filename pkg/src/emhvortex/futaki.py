"""Classical and Einstein-Maxwell-Higgs Futaki invariants on the sphere."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .fields import (
    VortexConfig,
    _check_volume,
    higgs_density,
    higgs_density_at,
    normalize_volume,
    phi_eta,
    psi_f,
    random_field,
)
from .grid import SphereGrid, integrate, laplacian_g0, stencil_laplacian

VOLUME_RTOL = 1e-9


class VolumeConstraintError(ValueError):
    """``int exp(eta) omega0`` differs from the background volume."""


def _require_volume(eta: np.ndarray, grid: SphereGrid, rtol: float) -> None:
    vol = integrate(np.exp(eta), "omega0", grid)
    if abs(vol - grid.volume) > rtol * grid.volume:
        raise VolumeConstraintError(
            f"int exp(eta) omega0 = {vol!r} but V = {grid.volume!r}; shift eta by log(V / int exp(eta) omega0)"
        )


def classical_futaki(eta: np.ndarray, grid: SphereGrid, rtol: float = VOLUME_RTOL) -> complex:
    """``-int phi_eta (2K - laplacian eta) omega0`` for ``int exp(eta) omega0 = V``."""
    eta = np.asarray(eta, dtype=float)
    _require_volume(eta, grid, rtol)
    integrand = phi_eta(eta, grid) * (2.0 * grid.curvature - laplacian_g0(eta, grid))
    return -complex(integrate(integrand, "omega0", grid))


def emh_futaki(
    eta: np.ndarray,
    f: np.ndarray,
    config: VortexConfig,
    grid: SphereGrid,
    rtol: float = VOLUME_RTOL,
) -> complex:
    """Einstein-Maxwell-Higgs Futaki functional evaluated at the pair ``(eta, f)``."""
    _check_volume(config, grid)
    eta = np.asarray(eta, dtype=float)
    f = np.asarray(f, dtype=float)
    _require_volume(eta, grid, rtol)
    a, tau2, N, V = config.a, config.tau**2, config.N, config.V

    density = np.exp(f) * higgs_density(config, grid)
    lap_f = laplacian_g0(f, grid)
    vortex = 4.0 * np.pi * N / V - lap_f
    first = vortex + np.exp(eta) * (density - tau2)
    second = 2.0 * grid.curvature - laplacian_g0(eta + a / tau2 * density, grid) - a * vortex

    higgs_part = integrate(psi_f(f, config, grid) * first, "omega0", grid)
    metric_part = integrate(phi_eta(eta, grid) * second, "omega0", grid)
    return complex(2j * a / tau2 * higgs_part - metric_part)


def emh_futaki_closed(config: VortexConfig) -> complex:
    """``i a (V - 4 pi N / tau^2) (N - 2 ell)``."""
    return 1j * config.a * (config.V - 4.0 * math.pi * config.N / config.tau**2) * (config.N - 2 * config.ell)


def obstruction_threshold(config: VortexConfig) -> float:
    return 1e-9 * config.a * config.V * max(1.0, config.tau**-2)


def is_obstructed(config: VortexConfig) -> bool:
    return abs(emh_futaki_closed(config)) > obstruction_threshold(config)


@dataclass
class FutakiReport:
    value: complex
    closed_form: complex
    samples: list[tuple[str, complex]] = field(default_factory=list)
    max_spread: float = 0.0
    max_real_part: float = 0.0
    obstructed: bool = False
    tol: float = 0.0

    @property
    def passed(self) -> bool:
        return (
            self.max_spread <= self.tol
            and abs(self.value - self.closed_form) <= self.tol
            and self.max_real_part <= self.tol
        )

    @property
    def verdict(self) -> str:
        return "OBSTRUCTED" if self.obstructed else "UNOBSTRUCTED"

    def to_record(self) -> dict:
        return {
            "value": [self.value.real, self.value.imag],
            "closed_form": [self.closed_form.real, self.closed_form.imag],
            "max_spread": self.max_spread,
            "max_real_part": self.max_real_part,
            "tol": self.tol,
            "obstructed": self.obstructed,
            "verdict": self.verdict,
            "passed": self.passed,
            "samples": [{"label": lbl, "re": v.real, "im": v.imag} for lbl, v in self.samples],
        }


def sample_pair(seed: int, grid: SphereGrid, degree: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Seeded ``(eta, f)`` with ``eta`` shifted onto the volume constraint."""
    eta = random_field(2 * seed + 1, degree).sample(grid)
    f = random_field(2 * seed + 2, degree).sample(grid)
    return normalize_volume(eta, grid), f


def invariance_report(
    config: VortexConfig,
    grid: SphereGrid,
    n_samples: int = 10,
    seed: int = 0,
    tol: float | None = None,
) -> FutakiReport:
    """Evaluate the functional on ``(0, 0)`` and ``n_samples`` seeded pairs.

    ``tol`` defaults to ``1e-6 * (1 + |closed form|)``.
    """
    if int(n_samples) != n_samples or n_samples < 2:
        raise ValueError(f"n_samples must be an integer >= 2, got {n_samples!r}")
    closed = emh_futaki_closed(config)
    if tol is None:
        tol = 1e-6 * (1.0 + abs(closed))
    zero = np.zeros(grid.shape)
    samples = [("eta=0,f=0", emh_futaki(zero, zero, config, grid))]
    for k in range(n_samples):
        eta, f = sample_pair(seed + k, grid)
        samples.append((f"seed={seed + k}", emh_futaki(eta, f, config, grid)))
    values = np.array([v for _, v in samples])
    spread = max(abs(u - v) for u, v in combinations(values, 2))
    return FutakiReport(
        value=complex(values.mean()),
        closed_form=closed,
        samples=samples,
        max_spread=float(spread),
        max_real_part=float(np.max(np.abs(values.real))),
        obstructed=is_obstructed(config),
        tol=float(tol),
    )


def poincare_lelong_residual(N: int, ell: int, grid: SphereGrid, band: float | None = None) -> float:
    """Sup over the interior band of ``|laplacian_g0 log Phi + 4 pi N / V|``.

    ``log Phi`` is only evaluated near interior nodes, never at the poles.
    """
    mask = grid.interior_mask(band)

    def log_phi(t, p):
        return np.log(higgs_density_at(N, ell, t)) + 0.0 * p

    lap = stencil_laplacian(log_phi, grid, mask)
    return float(np.max(np.abs(lap + 4.0 * np.pi * N / grid.volume)[mask]))


def poincare_lelong_check(config: VortexConfig, grid: SphereGrid, band: float | None = None) -> float:
    _check_volume(config, grid)
    return poincare_lelong_residual(config.N, config.ell, grid, band)
