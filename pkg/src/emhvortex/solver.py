"""Newton-Krylov solver for the smooth vortex system at ``epsilon = 1``.

Unknowns are the smooth functions ``f = u - log Phi`` and the conformal factor
``eta`` of ``g = exp(eta) g0``. The residuals are

    r1 = lap f - exp(eta) (exp(f) Phi - tau^2) - 4 pi N / V
    r2 = lap(eta + (a/tau^2) exp(f) Phi) - 2K - a exp(eta) (exp(f) Phi - tau^2)

with ``K = 4 pi / V``. Because ``a = 2/N``, ``r2 - a r1`` is an exact
Laplacian, so the constant mode of ``r2`` carries no information; the Newton
system replaces it with the volume constraint ``int exp(eta) omega0 = V``.

Newton runs on spherical-harmonic coefficients (a Galerkin discretization);
each linear step is solved with GMRES preconditioned by the 2x2-per-mode
operator obtained by freezing the multipliers at their means.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.interpolate import BarycentricInterpolator
from scipy.sparse.linalg import LinearOperator, gmres

from .fields import VortexConfig, _check_volume, higgs_density, higgs_density_at
from .futaki import emh_futaki, emh_futaki_closed, is_obstructed
from .grid import SphereGrid, build_grid, integrate, laplacian_g0, mean

log = logging.getLogger(__name__)


class BradlowError(ValueError):
    """The volume violates ``V > 4 pi N / tau^2``; no solution can exist."""

    def __init__(self, margin: float):
        self.margin = margin
        super().__init__(f"Bradlow bound violated: tau^2 V - 4 pi N = {margin!r} <= 0")


@dataclass(frozen=True)
class SolveOptions:
    max_newton_iters: int = 40
    newton_tol: float = 1e-8
    linear_tol: float = 1e-10
    damping: float = 1.0
    continuation_steps: int = 0
    init_strategy: Literal["flat", "radial_seed"] = "flat"
    futaki_tol: float = 1e-7

    def __post_init__(self):
        for name in ("newton_tol", "linear_tol", "futaki_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping!r}")
        if self.max_newton_iters < 1 or self.continuation_steps < 0:
            raise ValueError("iteration counts must be non-negative (max_newton_iters >= 1)")
        if self.init_strategy not in ("flat", "radial_seed"):
            raise ValueError(f"unknown init_strategy {self.init_strategy!r}")


@dataclass
class SolveResult:
    f: np.ndarray
    eta: np.ndarray
    residual_1: float
    residual_2: float
    iterations: int
    converged: bool
    conserved_integral: float
    futaki_at_solution: complex
    certificate: complex | None = None
    trace: list[tuple[int, float, float]] = field(default_factory=list)
    message: str = ""


def bradlow_check(config: VortexConfig) -> float:
    """``tau^2 V - 4 pi N``; the solver refuses to run unless positive."""
    return config.tau**2 * config.V - 4.0 * math.pi * config.N


def residuals(f: np.ndarray, eta: np.ndarray, config: VortexConfig, grid: SphereGrid):
    """Node values ``(r1, r2)`` of the two equations."""
    _check_volume(config, grid)
    a, tau2 = config.a, config.tau**2
    density = np.exp(f) * higgs_density(config, grid)
    source = np.exp(eta) * (density - tau2)
    r1 = laplacian_g0(f, grid) - source - 4.0 * math.pi * config.N / config.V
    r2 = laplacian_g0(eta + a / tau2 * density, grid) - 2.0 * grid.curvature - a * source
    return r1, r2


def linearized_residuals(f: np.ndarray, eta: np.ndarray, config: VortexConfig, grid: SphereGrid):
    """Directional derivative of :func:`residuals` at ``(f, eta)`` as a function of ``(df, deta)``."""
    a, tau2 = config.a, config.tau**2
    E = np.exp(eta)
    P = np.exp(f) * higgs_density(config, grid)

    def jvp(df: np.ndarray, deta: np.ndarray):
        dsource = E * P * df + E * (P - tau2) * deta
        d1 = laplacian_g0(df, grid) - dsource
        d2 = laplacian_g0(deta + a / tau2 * P * df, grid) - a * dsource
        return d1, d2

    return jvp


def conserved_integral(f: np.ndarray, eta: np.ndarray, config: VortexConfig, grid: SphereGrid) -> float:
    """``int exp(eta) exp(f) Phi omega0``; equals ``tau^2 V - 4 pi N`` at a solution."""
    return float(integrate(np.exp(eta + f) * higgs_density(config, grid), "omega0", grid))


class _GalerkinSystem:
    """Residual and Jacobian of the coefficient-space Newton system.

    For ``N = 2 ell`` the dilations ``z -> exp(t) z`` fix both vortex points and
    move solutions along a one-parameter family, so the Jacobian has a kernel;
    its cokernel is spanned by the Futaki weights. The state is bordered with a
    balancing condition ``int x exp(eta) omega0 = 0`` and an unfolding parameter
    ``mu`` added to the dipole row of the second equation. At a solution the
    Futaki identity forces ``mu = 0``.
    """

    def __init__(self, config: VortexConfig, grid: SphereGrid):
        self.config = config
        self.grid = grid
        self.K = grid.n_coeffs
        self.lam = grid.real_eigenvalues()
        self.Phi = higgs_density(config, grid)
        self.x = grid.x
        self.y00 = 1.0 / math.sqrt(4.0 * math.pi)
        self.n = 2 * self.K + 1

    def fields(self, Y: np.ndarray):
        g, K = self.grid, self.K
        return g.synthesize(g.from_real(Y[:K])), g.synthesize(g.from_real(Y[K : 2 * K]))

    def coeffs(self, values: np.ndarray) -> np.ndarray:
        return self.grid.to_real(self.grid.analyze(values))

    def state(self, f: np.ndarray, eta: np.ndarray) -> np.ndarray:
        return np.concatenate([self.coeffs(f), self.coeffs(eta), [0.0]])

    def residual(self, Y: np.ndarray) -> np.ndarray:
        c, K = self.config, self.K
        f, eta = self.fields(Y)
        a, tau2 = c.a, c.tau**2
        E = np.exp(eta)
        P = np.exp(f) * self.Phi
        source = E * (P - tau2)
        R1 = self.lam * Y[:K] - self.coeffs(source)
        R1[0] -= 4.0 * math.pi * c.N / c.V / self.y00
        R2 = self.lam * (Y[K : 2 * K] + a / tau2 * self.coeffs(P)) - a * self.coeffs(source)
        R2[0] = mean(E, self.grid) - 1.0
        R2[1] += Y[-1]
        return np.concatenate([R1, R2, [mean(self.x * E, self.grid)]])

    def jacobian(self, Y: np.ndarray):
        c, K, lam, grid = self.config, self.K, self.lam, self.grid
        a, tau2 = c.a, c.tau**2
        f, eta = self.fields(Y)
        E = np.exp(eta)
        P = np.exp(f) * self.Phi

        def matvec(dY):
            dY = np.ravel(dY)
            df, deta = self.fields(dY)
            dsource = self.coeffs(E * P * df + E * (P - tau2) * deta)
            d1 = lam * dY[:K] - dsource
            d2 = lam * (dY[K : 2 * K] + a / tau2 * self.coeffs(P * df)) - a * dsource
            d2[0] = mean(E * deta, grid)
            d2[1] += dY[-1]
            return np.concatenate([d1, d2, [mean(self.x * E * deta, grid)]])

        alpha = float(mean(E * P, grid))
        beta = float(mean(E * (P - tau2), grid))
        gamma = float(mean(P, grid))
        # frozen-coefficient blocks [[A, B], [C, D]] per harmonic
        A = lam - alpha
        B = np.full(K, -beta)
        C = a / tau2 * gamma * lam - a * alpha
        D = lam - a * beta
        C[0], D[0] = 0.0, float(mean(E, grid)) * self.y00
        det = A * D - B * C

        def precond(r):
            r = np.ravel(r)
            r1, r2 = r[:K], r[K : 2 * K]
            return np.concatenate([(D * r1 - B * r2) / det, (A * r2 - C * r1) / det, r[-1:]])

        return LinearOperator((self.n, self.n), matvec=matvec), LinearOperator((self.n, self.n), matvec=precond)


def _flat_start(config: VortexConfig, grid: SphereGrid) -> tuple[np.ndarray, np.ndarray]:
    # constant f consistent with the conserved integral at eta = 0
    mean_phi = float(mean(higgs_density(config, grid), grid))
    level = (config.tau**2 * config.V - 4.0 * math.pi * config.N) / (config.V * mean_phi)
    return np.full(grid.shape, math.log(level)), np.zeros(grid.shape)


def _newton(
    config: VortexConfig,
    grid: SphereGrid,
    opts: SolveOptions,
    f: np.ndarray,
    eta: np.ndarray,
):
    system = _GalerkinSystem(config, grid)
    X = system.state(f, eta)
    trace: list[tuple[int, float, float]] = []
    message = "maximum Newton iterations reached"
    converged = False
    it = 0
    with np.errstate(over="ignore", invalid="ignore"):
        G = system.residual(X)
        for it in range(opts.max_newton_iters + 1):
            f, eta = system.fields(X)
            r1, r2 = residuals(f, eta, config, grid)
            n1, n2 = float(np.max(np.abs(r1))), float(np.max(np.abs(r2)))
            vol_err = max(abs(G[system.K]), abs(G[-1]))
            trace.append((it, n1, n2))
            log.info("newton %d: |r1| = %.3e  |r2| = %.3e  |vol| = %.3e", it, n1, n2, vol_err)
            if not (np.isfinite(n1) and np.isfinite(n2)):
                message = "non-finite iterate"
                break
            if max(n1, n2, vol_err) <= opts.newton_tol:
                converged = True
                message = "converged"
                break
            if it == opts.max_newton_iters:
                break
            J, M = system.jacobian(X)
            step, info = gmres(J, -G, M=M, rtol=opts.linear_tol, atol=0.0, restart=60, maxiter=20)
            if not np.all(np.isfinite(step)):
                message = "linear solve failed"
                break
            norm0 = np.linalg.norm(G)
            t = opts.damping
            while t >= 1e-6:
                X_try = X + t * step
                G_try = system.residual(X_try)
                if np.all(np.isfinite(G_try)) and np.linalg.norm(G_try) < (1.0 - 1e-4 * t) * norm0:
                    break
                t *= 0.5
            else:
                message = "line search stalled"
                break
            X = _reshift_volume(system, X_try)
            G = system.residual(X)
    f, eta = system.fields(X)
    return f, eta, it, converged, trace, message


def _reshift_volume(system: _GalerkinSystem, X: np.ndarray) -> np.ndarray:
    _, eta = system.fields(X)
    shift = -math.log(float(mean(np.exp(eta), system.grid)))
    X = X.copy()
    X[system.K] += shift / system.y00
    return X


def solve_coupled(config: VortexConfig, grid: SphereGrid, opts: SolveOptions | None = None) -> SolveResult:
    """Damped Newton-Krylov solve of the coupled system on ``grid``.

    Non-convergence is never read as non-existence. When ``N != 2 ell`` the
    result carries the closed-form Futaki value as the obstruction certificate.
    Raises :class:`BradlowError` when ``tau^2 V - 4 pi N <= 0``.
    """
    opts = opts or SolveOptions()
    _check_volume(config, grid)
    margin = bradlow_check(config)
    if margin <= 0:
        raise BradlowError(margin)

    if opts.init_strategy == "radial_seed" and config.symmetric:
        f, eta = radial_oracle(config).sample(grid)
    else:
        f, eta = _flat_start(config, grid)

    trace: list[tuple[int, float, float]] = []
    iterations = 0
    for V_stage in _continuation_path(config, opts.continuation_steps):
        stage_cfg = VortexConfig(config.N, config.ell, config.tau, V_stage)
        stage_grid = grid if V_stage == config.V else build_grid(grid.n_theta, grid.n_phi, V_stage)
        f, eta, it, converged, stage_trace, message = _newton(stage_cfg, stage_grid, opts, f, eta)
        trace.extend((iterations + i, r1, r2) for i, r1, r2 in stage_trace)
        iterations += it

    r1, r2 = residuals(f, eta, config, grid)
    n1, n2 = float(np.max(np.abs(r1))), float(np.max(np.abs(r2)))
    futaki = complex("nan")
    if np.all(np.isfinite(f)) and np.all(np.isfinite(eta)):
        try:
            futaki = emh_futaki(eta, f, config, grid, rtol=max(1e-6, opts.newton_tol))
        except ValueError:
            pass
    if converged and not abs(futaki) <= opts.futaki_tol * (1.0 + config.V):
        converged = False
        message = "residuals small but Futaki functional non-zero at the iterate"

    certificate = emh_futaki_closed(config) if is_obstructed(config) else None
    return SolveResult(
        f=f,
        eta=eta,
        residual_1=n1,
        residual_2=n2,
        iterations=iterations,
        converged=converged,
        conserved_integral=conserved_integral(f, eta, config, grid) if np.all(np.isfinite(f + eta)) else float("nan"),
        futaki_at_solution=futaki,
        certificate=certificate,
        trace=trace,
        message=message,
    )


def _continuation_path(config: VortexConfig, steps: int) -> list[float]:
    # flat starts converge near twice the Bradlow volume; walk from there to V
    if steps <= 0:
        return [config.V]
    start = min(config.V, 8.0 * math.pi * config.N / config.tau**2)
    path = [float(v) for v in np.geomspace(start, config.V, steps + 1)]
    path[-1] = config.V
    return path


# -- radial oracle -------------------------------------------------------------


def _chebyshev(M: int):
    x = np.cos(np.pi * np.arange(M + 1) / M)
    c = np.hstack([2.0, np.ones(M - 1), 2.0]) * (-1.0) ** np.arange(M + 1)
    dX = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dX + np.eye(M + 1))
    D -= np.diag(D.sum(axis=1))
    # Clenshaw-Curtis weights from the Chebyshev moments
    k = np.arange(M + 1)
    moments = np.where(k % 2 == 0, 2.0 / (1.0 - k.astype(float) ** 2 + (k == 1)), 0.0)
    T = np.polynomial.chebyshev.chebvander(x, M).T
    w = np.linalg.solve(T, moments)
    return x, D, w


@dataclass
class RadialProfile:
    """Axisymmetric solution sampled at Chebyshev points ``x = cos(theta)``."""

    x: np.ndarray
    f: np.ndarray
    eta: np.ndarray
    df_dtheta: np.ndarray
    residual: float
    conserved_integral: float
    iterations: int

    @property
    def theta(self) -> np.ndarray:
        return np.arccos(np.clip(self.x, -1.0, 1.0))

    def __call__(self, theta: np.ndarray):
        x = np.cos(np.asarray(theta, dtype=float))
        return BarycentricInterpolator(self.x, self.f)(x), BarycentricInterpolator(self.x, self.eta)(x)

    def sample(self, grid: SphereGrid):
        f, eta = self(grid.theta)
        return (np.broadcast_to(f[:, None], grid.shape).copy(), np.broadcast_to(eta[:, None], grid.shape).copy())


def radial_oracle(config: VortexConfig, n_radial: int = 96, tol: float = 1e-11, max_iters: int = 100) -> RadialProfile:
    """1-D Chebyshev collocation of the axisymmetric reduction (``N = 2 ell`` only).

    Integrating ``r2 - a r1`` (an exact Laplacian) gives
    ``eta = c + a f - (a/tau^2) exp(f) Phi`` for a constant ``c``. The unknowns
    are ``c`` and the values of ``f`` at the Chebyshev points with ``x >= 0``;
    ``f`` is extended evenly, which removes the dilation family and selects the
    solution symmetric under ``z -> 1/conj(z)``. The first equation is
    collocated at those points together with ``int exp(eta) omega0 = V``.
    """
    if not config.symmetric:
        raise ValueError(f"radial oracle needs N = 2 ell, got N={config.N}, ell={config.ell}")
    if bradlow_check(config) <= 0:
        raise BradlowError(bradlow_check(config))
    if n_radial < 8 or n_radial % 2:
        raise ValueError("n_radial must be an even integer >= 8")
    N, a, tau2, V = config.N, config.a, config.tau**2, config.V
    x, D, w = _chebyshev(n_radial)
    L = 4.0 * math.pi / V * D @ ((1.0 - x**2)[:, None] * D)
    Phi = higgs_density_at(N, config.ell, np.arccos(x))
    half = n_radial // 2 + 1
    idx = np.minimum(np.arange(n_radial + 1), n_radial - np.arange(n_radial + 1))
    extend = np.zeros((n_radial + 1, half))
    extend[np.arange(n_radial + 1), idx] = 1.0

    def unpack(Y):
        f = extend @ Y[:half]
        P = np.exp(f) * Phi
        eta = Y[half] + a * f - a / tau2 * P
        return f, P, eta, np.exp(eta)

    def residual(Y):
        f, P, _, E = unpack(Y)
        r = L @ f - E * (P - tau2) - 4.0 * math.pi * N / V
        return np.concatenate([r[:half], [w @ E / 2.0 - 1.0]])

    f0 = math.log((tau2 * V - 4.0 * math.pi * N) / (V * np.mean(Phi)))
    c0 = -math.log(w @ np.exp(a * f0 - a / tau2 * np.exp(f0) * Phi) / 2.0)
    Y = np.concatenate([np.full(half, f0), [c0]])
    R = residual(Y)
    it = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(1, max_iters + 1):
            if np.max(np.abs(R)) <= tol:
                break
            f, P, _, E = unpack(Y)
            dE = E * (a - a / tau2 * P)
            J = np.zeros((half + 1, half + 1))
            J[:half, :half] = ((L - np.diag(dE * (P - tau2) + E * P)) @ extend)[:half]
            J[:half, half] = -(E * (P - tau2))[:half]
            J[half, :half] = (w * dE / 2.0) @ extend
            J[half, half] = w @ E / 2.0
            step = np.linalg.solve(J, -R)
            norm0, t = np.linalg.norm(R), 1.0
            while t > 1e-8:
                R_try = residual(Y + t * step)
                if np.all(np.isfinite(R_try)) and np.linalg.norm(R_try) < (1.0 - 1e-4 * t) * norm0:
                    break
                t *= 0.5
            else:
                break
            Y, R = Y + t * step, R_try
    f, P, eta, E = unpack(Y)
    return RadialProfile(
        x=x,
        f=f,
        eta=eta,
        df_dtheta=-np.sqrt(1.0 - x**2) * (D @ f),
        residual=float(np.max(np.abs(R))),
        conserved_integral=float(V / 2.0 * w @ (E * P)),
        iterations=it,
    )
