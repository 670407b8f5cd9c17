import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from emhvortex.fields import VortexConfig, higgs_density, random_field
from emhvortex.futaki import emh_futaki_closed
from emhvortex.grid import build_grid, integrate
from emhvortex.solver import (
    BradlowError,
    SolveOptions,
    bradlow_check,
    conserved_integral,
    linearized_residuals,
    radial_oracle,
    residuals,
    solve_coupled,
)

V16 = 16 * math.pi


@pytest.fixture(scope="module")
def reference_solution(grid64, reference_config):
    return solve_coupled(reference_config, grid64)


class TestReferenceSolve:
    def test_converges(self, reference_solution):
        res = reference_solution
        assert res.converged, res.message
        assert res.residual_1 <= 1e-8 and res.residual_2 <= 1e-8
        assert res.certificate is None

    def test_conserved_integral(self, reference_solution):
        assert abs(reference_solution.conserved_integral - 8 * math.pi) <= 1e-6

    def test_volume_constraint(self, grid64, reference_solution):
        assert_allclose(integrate(np.exp(reference_solution.eta), "omega0", grid64), V16, rtol=1e-10)

    def test_futaki_vanishes(self, reference_solution):
        assert abs(reference_solution.futaki_at_solution) <= 1e-7

    def test_matches_radial_oracle(self, grid64, reference_config, reference_solution):
        f_r, eta_r = radial_oracle(reference_config).sample(grid64)
        assert np.max(np.abs(reference_solution.f - f_r)) <= 1e-6
        assert np.max(np.abs(reference_solution.eta - eta_r)) <= 1e-6

    def test_residuals_recomputed(self, grid64, reference_config, reference_solution):
        r1, r2 = residuals(reference_solution.f, reference_solution.eta, reference_config, grid64)
        assert max(np.max(np.abs(r1)), np.max(np.abs(r2))) <= 1e-8

    def test_trace_decreases(self, reference_solution):
        trace = reference_solution.trace
        assert [it for it, _, _ in trace] == list(range(len(trace)))
        final = max(trace[-1][1:])
        assert final < max(trace[0][1:]) * 1e-6

    def test_solution_is_axisymmetric(self, reference_solution):
        f = reference_solution.f
        assert np.max(np.abs(f - f[:, :1])) <= 1e-8


@pytest.mark.parametrize("seed", range(3))
def test_jacobian_matches_finite_differences(grid64, seed):
    cfg = VortexConfig(3, 1, 1.5, V16)
    f = random_field(100 + seed).sample(grid64)
    eta = random_field(200 + seed).sample(grid64)
    df = random_field(300 + seed).sample(grid64)
    deta = random_field(400 + seed).sample(grid64)
    h = 1e-6
    plus = residuals(f + h * df, eta + h * deta, cfg, grid64)
    minus = residuals(f - h * df, eta - h * deta, cfg, grid64)
    exact = linearized_residuals(f, eta, cfg, grid64)(df, deta)
    for p, m, e in zip(plus, minus, exact):
        fd = (p - m) / (2 * h)
        assert np.max(np.abs(fd - e)) <= 1e-5 * np.max(np.abs(e))


@pytest.mark.parametrize("seed", range(3))
def test_gauss_bonnet_combination_has_zero_mean(grid64, seed):
    # r2 - a r1 integrates to -8 pi + a 4 pi N = 0 for any fields
    cfg = VortexConfig(4, 1, 2.0, V16)
    f, eta = random_field(seed).sample(grid64), random_field(seed + 50).sample(grid64)
    r1, r2 = residuals(f, eta, cfg, grid64)
    assert abs(integrate(r2 - cfg.a * r1, "omega0", grid64)) <= 1e-9


def test_each_laplacian_side_has_zero_mean(grid64):
    cfg = VortexConfig(2, 1, 1.0, V16)
    f = random_field(9).sample(grid64)
    r1, _ = residuals(f, np.zeros(grid64.shape), cfg, grid64)
    # the Laplacian has zero mean, so int r1 omega0 = -int (e^f Phi - tau^2) omega0 - 4 pi N
    source = integrate(np.exp(f) * higgs_density(cfg, grid64) - 1.0, "omega0", grid64)
    assert_allclose(integrate(r1, "omega0", grid64), -source - 4 * math.pi * cfg.N, atol=1e-9)


@pytest.mark.parametrize("N,ell", [(1, 0), (2, 0), (3, 1)])
def test_obstructed_never_converges(N, ell):
    cfg = VortexConfig(N, ell, 1.0, V16)
    g = build_grid(32, 32, V16)
    res = solve_coupled(cfg, g, SolveOptions(max_newton_iters=15))
    assert not res.converged
    assert res.certificate == emh_futaki_closed(cfg)


def test_bradlow_refusal():
    cfg = VortexConfig(2, 1, 1.0, 8 * math.pi)
    assert bradlow_check(cfg) == 0.0
    with pytest.raises(BradlowError) as info:
        solve_coupled(cfg, build_grid(16, 16, cfg.V))
    assert info.value.margin == 0.0


def test_continuation_reaches_large_volume():
    cfg = VortexConfig(2, 1, 2.0, V16)
    g = build_grid(32, 32, V16)
    res = solve_coupled(cfg, g, SolveOptions(continuation_steps=4))
    assert res.converged, res.message
    assert_allclose(res.conserved_integral, bradlow_check(cfg), rtol=1e-8)


def test_radial_seed_init(grid64, reference_config):
    res = solve_coupled(reference_config, grid64, SolveOptions(init_strategy="radial_seed"))
    assert res.converged and res.iterations <= 2


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(newton_tol=0.0),
        dict(damping=0.0),
        dict(damping=1.5),
        dict(max_newton_iters=0),
        dict(continuation_steps=-1),
        dict(init_strategy="random"),
    ],
)
def test_solve_options_validation(kwargs):
    with pytest.raises(ValueError):
        SolveOptions(**kwargs)


@pytest.fixture(scope="module")
def profile():
    return radial_oracle(VortexConfig(2, 1, 1.0, V16))


class TestRadialOracle:
    def test_converged(self, profile):
        assert profile.residual <= 1e-11
        assert_allclose(profile.conserved_integral, 8 * math.pi, rtol=1e-10)

    def test_even(self, profile):
        assert_allclose(profile.f, profile.f[::-1], atol=1e-13)
        assert_allclose(profile.eta, profile.eta[::-1], atol=1e-12)

    def test_spectral_convergence(self, profile):
        theta = np.linspace(0.01, math.pi - 0.01, 101)
        ref = radial_oracle(VortexConfig(2, 1, 1.0, V16), n_radial=160)(theta)[0]
        errors = [
            np.max(np.abs(radial_oracle(VortexConfig(2, 1, 1.0, V16), n_radial=n)(theta)[0] - ref)) for n in (32, 48, 64)
        ]
        assert errors[0] > 100 * errors[1] > 1e4 * errors[2]
        assert np.max(np.abs(profile(theta)[0] - ref)) <= 1e-10

    def test_sample_shape(self, profile, grid64):
        f, eta = profile.sample(grid64)
        assert f.shape == eta.shape == grid64.shape

    def test_conserved_integral_on_grid(self, profile, grid64):
        f, eta = profile.sample(grid64)
        assert_allclose(conserved_integral(f, eta, VortexConfig(2, 1, 1.0, V16), grid64), 8 * math.pi, rtol=1e-9)

    @pytest.mark.parametrize("args", [(VortexConfig(2, 0, 1.0, V16), 64), (VortexConfig(2, 1, 1.0, V16), 7), (VortexConfig(2, 1, 1.0, V16), 63)])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            radial_oracle(*args)

    def test_rejects_bradlow(self):
        with pytest.raises(BradlowError):
            radial_oracle(VortexConfig(2, 1, 1.0, 8 * math.pi))
