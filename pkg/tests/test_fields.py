import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from emhvortex.fields import (
    BandlimitedField,
    VortexConfig,
    higgs_density,
    higgs_density_at,
    laplacian_fs,
    normalize_epsilon,
    normalize_volume,
    phi_eta,
    phi_eta_residual,
    phi_zero,
    psi_f,
    psi_zero,
    psi_zero_dbar_residual,
    random_field,
    structure_residuals,
)
from emhvortex.grid import build_grid, integrate

LATTICE = [(N, ell) for N in range(1, 9) for ell in range(N + 1)]


class TestVortexConfig:
    def test_a_is_derived(self):
        assert VortexConfig(4, 1).a == 0.5

    def test_matching_a_accepted(self):
        assert VortexConfig(3, 1, a=2 / 3).a == 2 / 3

    @pytest.mark.parametrize("a", [1.0, 0.0, -1.0, 2 / 3 + 1e-9])
    def test_wrong_a_rejected(self, a):
        with pytest.raises(ValueError, match="quantization"):
            VortexConfig(3, 1, a=a)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(N=0, ell=0),
            dict(N=2.5, ell=0),
            dict(N=True, ell=0),
            dict(N=2, ell=3),
            dict(N=2, ell=-1),
            dict(N=2, ell=1, tau=0.0),
            dict(N=2, ell=1, V=-1.0),
            dict(N=2, ell=1, epsilon=float("nan")),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            VortexConfig(**kwargs)

    @given(st.integers(1, 50), st.data())
    def test_symmetric_iff_balanced(self, N, data):
        ell = data.draw(st.integers(0, N))
        cfg = VortexConfig(N, ell)
        assert cfg.symmetric == (N == 2 * ell)
        assert cfg.a == 2 / N


class TestHiggsDensity:
    def test_ell_zero_at_origin(self):
        assert higgs_density_at(3, 0, np.array([0.0]))[0] == 1.0

    @pytest.mark.parametrize("N", [2, 4, 6])
    def test_balanced_maximum(self, N):
        theta = np.linspace(0, math.pi, 2001)
        Phi = higgs_density_at(N, N // 2, theta)
        assert_allclose(Phi.max(), 2.0**-N, rtol=1e-12)
        assert_allclose(theta[Phi.argmax()], math.pi / 2)

    @pytest.mark.parametrize("N,ell", LATTICE)
    def test_chart_symmetry(self, grid64, N, ell):
        # Phi_{ell,N}(z) = Phi_{N-ell,N}(1/conj(z))
        lhs = higgs_density(VortexConfig(N, ell, V=grid64.volume), grid64)
        rhs = grid64.mirror(higgs_density(VortexConfig(N, N - ell, V=grid64.volume), grid64))
        assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-300)

    def test_matches_fubini_study_norm(self, grid64):
        cfg = VortexConfig(5, 2, V=grid64.volume)
        s = grid64.abs_z2
        assert_allclose(higgs_density(cfg, grid64), s**2 / (1 + s) ** 5, rtol=1e-12)


class TestPsi:
    @pytest.mark.parametrize("N,ell", LATTICE)
    def test_psi0_mean(self, grid64, N, ell):
        cfg = VortexConfig(N, ell, V=grid64.volume)
        value = integrate(psi_zero(cfg, grid64), "fs", grid64)
        assert abs(value - math.pi * (2 * ell - N)) <= 1e-8 * max(1.0, math.pi * abs(2 * ell - N))

    @pytest.mark.parametrize("N,ell", LATTICE)
    def test_mixed_integral_vanishes(self, grid64, N, ell):
        cfg = VortexConfig(N, ell, V=grid64.volume)
        s = grid64.abs_z2
        integrand = higgs_density(cfg, grid64) * (psi_zero(cfg, grid64) - (s - 1) / (s + 1))
        assert abs(integrate(integrand, "fs", grid64)) <= 1e-8 * math.pi

    def test_psi0_pole_limits(self, grid64):
        cfg = VortexConfig(5, 2, V=grid64.volume)
        psi = psi_zero(cfg, grid64)
        assert_allclose(psi[0, 0], 2, atol=5e-3)
        assert_allclose(psi[-1, 0], 2 - 5, atol=5e-3)

    def test_psi_f_at_zero_is_psi0(self, grid64, reference_config):
        assert_allclose(psi_f(np.zeros(grid64.shape), reference_config, grid64), psi_zero(reference_config, grid64))

    def test_psi0_dbar(self, grid64):
        for N, ell in [(1, 0), (4, 1), (7, 3)]:
            assert psi_zero_dbar_residual(VortexConfig(N, ell, V=grid64.volume), grid64) <= 1e-8

    @pytest.mark.parametrize("seed", range(5))
    def test_structure_identities(self, grid64, seed):
        cfg = VortexConfig(3, 1, tau=1.5, V=grid64.volume)
        field = random_field(seed)
        res = structure_residuals(field.sample(grid64), cfg, grid64, f_func=field)
        assert max(res) <= 1e-6


class TestPhiEta:
    def test_zero_matches_closed_form(self, grid64):
        phi0 = phi_zero(grid64)
        assert_allclose(phi_eta(np.zeros(grid64.shape), grid64), phi0, atol=1e-12)
        # value at z -> 0 tends to -i V / (4 pi)
        assert_allclose(phi0[0, 0], -1j * grid64.volume / (4 * math.pi), rtol=1e-3)

    def test_phi0_eigenfunction(self, grid64):
        phi0 = phi_zero(grid64)
        assert np.max(np.abs(laplacian_fs(phi0, grid64) + 4 * phi0)) <= 1e-7 * grid64.volume / (2 * math.pi)

    @pytest.mark.parametrize("t", [2.0, 1 / 3])
    def test_scaling(self, grid64, t):
        eta = random_field(11).sample(grid64)
        assert_allclose(phi_eta(eta + math.log(t), grid64), t * phi_eta(eta, grid64), atol=1e-10)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10_000))
    def test_normalization_and_dbar(self, grid64, seed):
        eta = normalize_volume(random_field(seed).sample(grid64), grid64)
        phi = phi_eta(eta, grid64)
        assert abs(integrate(phi * np.exp(eta), "omega0", grid64)) <= 1e-10
        assert phi_eta_residual(phi, eta, grid64) <= 1e-8

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10_000))
    def test_axisymmetric_eta_gives_imaginary_potential(self, grid64, seed):
        c = random_field(seed).coeffs.copy()
        c[1:] = 0.0
        eta = BandlimitedField(c).sample(grid64)
        phi = phi_eta(eta, grid64)
        assert np.max(np.abs(phi.real)) <= 1e-11 * max(1.0, np.max(np.abs(phi)))


class TestNormalizeEpsilon:
    def test_identity(self, grid64):
        u = random_field(1).sample(grid64)
        out = normalize_epsilon(u, np.zeros(grid64.shape), 1.0, grid64)
        assert_allclose(out.V, grid64.volume, rtol=1e-14)
        assert_allclose(out.eta, 0.0, atol=1e-14)
        assert_allclose(out.f, u)

    def test_half(self, grid64):
        out = normalize_epsilon(np.zeros(grid64.shape), np.zeros(grid64.shape), 0.5, grid64)
        assert_allclose(out.V, 4 * grid64.volume, rtol=1e-14)
        # relative to the original g0 the conformal factor is the constant log 4
        assert_allclose(out.eta + math.log(out.V / grid64.volume), math.log(4), atol=1e-14)

    @pytest.mark.parametrize("eps", [0.3, 1.7])
    def test_volume_property(self, grid64, eps):
        eta = random_field(5).sample(grid64)
        out = normalize_epsilon(np.zeros(grid64.shape), eta, eps, grid64)
        g_new = grid64.with_volume(out.V)
        assert_allclose(integrate(np.exp(out.eta), "omega0", g_new), out.V, rtol=1e-12)

    def test_rejects_nonpositive(self, grid64):
        with pytest.raises(ValueError):
            normalize_epsilon(np.zeros(grid64.shape), np.zeros(grid64.shape), 0.0, grid64)


def test_random_field_is_seeded_and_bounded():
    a, b = random_field(3), random_field(3)
    g = build_grid(16, 16, 1.0)
    assert_allclose(a.sample(g), b.sample(g))
    assert np.max(np.abs(a.sample(g))) <= 1.0 + 1e-2
