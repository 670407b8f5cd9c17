"""Spectral discretization of the round sphere of volume V.

Nodes are Gauss-Legendre in ``x = cos(theta)`` times uniform longitude. The
chart coordinate is ``z = tan(theta/2) exp(i phi)``, so ``theta = 0`` is the
point ``z = 0`` and ``theta = pi`` is ``z = infinity``. Fields are plain
``(n_theta, n_phi)`` arrays of node values.

Differential operators act through a spherical-harmonic transform truncated at
degree ``lmax = n_theta - 1`` and order ``mmax = min(lmax, n_phi // 2 - 1)``.
With that truncation the Gauss-Legendre/trapezoid quadrature makes analysis
an exact left inverse of synthesis.

A second, independent route (:func:`stencil_laplacian`,
:func:`stencil_vfield_derivative`) differentiates closed-form callables with
high-order central differences in the logarithmic chart ``w = log z``. It is
used for fields with logarithmic singularities at the poles and as an oracle
for the spectral operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

ScalarField = np.ndarray
ComplexField = np.ndarray

Form = Literal["omega0", "fs"]

MIN_NODES = 8


class SolvabilityError(ValueError):
    """Raised when a Poisson right-hand side has non-zero mean."""

    def __init__(self, mean: complex, tol: float):
        self.mean = mean
        self.tol = tol
        super().__init__(f"Poisson rhs has mean {mean!r} (tolerance {tol:.3e}); no solution exists")


def normalized_legendre(lmax: int, mmax: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal associated Legendre functions without the Condon-Shortley phase.

    Returns ``P[m, j, l]`` for ``0 <= m <= mmax``, ``0 <= l <= lmax`` (zero for
    ``l < m``), normalized so that ``P_l^m(x) exp(i m phi)`` has unit norm on the
    unit sphere.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    out = np.zeros((mmax + 1, x.size, lmax + 1))
    pmm = np.full(x.size, np.sqrt(1.0 / (4.0 * np.pi)))
    for m in range(mmax + 1):
        if m > 0:
            pmm = pmm * np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s
        if m > lmax:
            break
        out[m, :, m] = pmm
        if m + 1 <= lmax:
            out[m, :, m + 1] = np.sqrt(2.0 * m + 3.0) * x * pmm
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            out[m, :, l] = a * (x * out[m, :, l - 1] - b * out[m, :, l - 2])
    return out


def legendre_sin_derivative(P: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``(1 - x^2) dP_l^m/dx`` from a table produced by :func:`normalized_legendre`."""
    mmax1, _, lmax1 = P.shape
    out = np.zeros_like(P)
    for m in range(mmax1):
        for l in range(m, lmax1):
            out[m, :, l] = -l * x * P[m, :, l]
            if l - 1 >= m:
                c = np.sqrt((2.0 * l + 1.0) / (2.0 * l - 1.0) * (l * l - m * m))
                out[m, :, l] += c * P[m, :, l - 1]
    return out


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Gauss-Legendre x uniform-longitude grid on the round sphere of volume ``volume``."""

    n_theta: int
    n_phi: int
    volume: float
    theta: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    gl_weights: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    conformal_factor: np.ndarray = field(repr=False)
    lmax: int = 0
    mmax: int = 0
    _P: np.ndarray = field(repr=False, default=None)
    _dP: np.ndarray = field(repr=False, default=None)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @property
    def x(self) -> np.ndarray:
        """``cos(theta)`` per node, broadcast to the grid shape."""
        return np.broadcast_to(np.cos(self.theta)[:, None], self.shape)

    @property
    def theta2d(self) -> np.ndarray:
        return np.broadcast_to(self.theta[:, None], self.shape)

    @property
    def phi2d(self) -> np.ndarray:
        return np.broadcast_to(self.phi[None, :], self.shape)

    @property
    def abs_z2(self) -> np.ndarray:
        """``|z|^2 = (1 - x) / (1 + x)``."""
        x = np.cos(self.theta)[:, None]
        return np.broadcast_to((1.0 - x) / (1.0 + x), self.shape)

    @property
    def curvature(self) -> float:
        """Gaussian curvature ``4 pi / V`` of the background metric."""
        return 4.0 * np.pi / self.volume

    @property
    def n_coeffs(self) -> int:
        m, _ = self._real_layout()
        return int(m.size + np.count_nonzero(m))

    def with_volume(self, volume: float) -> "SphereGrid":
        """Same nodes, rescaled background metric."""
        return build_grid(self.n_theta, self.n_phi, volume)

    def mirror(self, values: np.ndarray) -> np.ndarray:
        """Values at the chart-symmetric nodes ``z -> 1/conj(z)`` (``theta -> pi - theta``)."""
        return np.asarray(values)[::-1, :]

    def interior_mask(self, band: float | None = None) -> np.ndarray:
        """Nodes with ``band <= theta <= pi - band``.

        The default band is ``2 * pi / n_theta`` (two nominal colatitude steps).
        """
        if band is None:
            band = 2.0 * np.pi / self.n_theta
        t = self.theta2d
        return (t >= band) & (t <= np.pi - band)

    # -- transforms ---------------------------------------------------------

    def analyze(self, values: np.ndarray) -> np.ndarray:
        """Spherical-harmonic coefficients ``c[m, l]`` (complex, ``m >= 0``) of a real field."""
        values = np.asarray(values, dtype=float)
        U = np.fft.rfft(values, axis=1)[:, : self.mmax + 1] / self.n_phi
        return 2.0 * np.pi * np.einsum("jm,j,mjl->ml", U, self.gl_weights, self._P)

    def synthesize(self, coeffs: np.ndarray, table: np.ndarray | None = None) -> np.ndarray:
        P = self._P if table is None else table
        U = np.einsum("ml,mjl->jm", coeffs, P)
        spectrum = np.zeros((self.n_theta, self.n_phi // 2 + 1), dtype=complex)
        spectrum[:, : self.mmax + 1] = U
        return np.fft.irfft(spectrum, n=self.n_phi, axis=1) * self.n_phi

    def eigenvalues(self) -> np.ndarray:
        """Laplacian eigenvalue ``-l(l+1) 4 pi / V`` per ``(m, l)`` slot."""
        l = np.arange(self.lmax + 1)
        return np.broadcast_to(-l * (l + 1.0) * self.curvature, (self.mmax + 1, self.lmax + 1))

    def _real_layout(self):
        m, l = np.nonzero(np.arange(self.lmax + 1)[None, :] >= np.arange(self.mmax + 1)[:, None])
        return m, l

    def to_real(self, coeffs: np.ndarray) -> np.ndarray:
        """Pack complex coefficients into a real vector (``m = 0`` real parts, then Re/Im)."""
        m, l = self._real_layout()
        c = coeffs[m, l]
        pos = m > 0
        return np.concatenate([c.real, c.imag[pos]])

    def from_real(self, vec: np.ndarray) -> np.ndarray:
        m, l = self._real_layout()
        k = m.size
        pos = m > 0
        c = vec[:k].astype(complex)
        c[pos] += 1j * vec[k:]
        out = np.zeros((self.mmax + 1, self.lmax + 1), dtype=complex)
        out[m, l] = c
        return out

    def real_eigenvalues(self) -> np.ndarray:
        m, l = self._real_layout()
        lam = -l * (l + 1.0) * self.curvature
        return np.concatenate([lam, lam[m > 0]])

    def project(self, values: np.ndarray) -> np.ndarray:
        """Band-limit a field to the resolved harmonics."""
        return _apply_real(lambda u: self.synthesize(self.analyze(u)), values)


def _apply_real(op: Callable[[np.ndarray], np.ndarray], values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return op(values.real) + 1j * op(values.imag)
    return op(values)


def build_grid(n_theta: int, n_phi: int, V: float) -> SphereGrid:
    """Gauss-Legendre grid with ``n_theta`` colatitudes and ``n_phi`` longitudes.

    The measure ``weights`` sums to one; ``V * sum(weights * u)`` integrates ``u``
    against the area form of ``g0 = (V/pi) |dz|^2 / (1 + |z|^2)^2``.
    """
    for name, n in (("n_theta", n_theta), ("n_phi", n_phi)):
        if int(n) != n or n < MIN_NODES:
            raise ValueError(f"{name} must be an integer >= {MIN_NODES}, got {n!r}")
    if not (np.isfinite(V) and V > 0):
        raise ValueError(f"volume must be positive, got {V!r}")
    n_theta, n_phi, V = int(n_theta), int(n_phi), float(V)

    xg, wg = np.polynomial.legendre.leggauss(n_theta)
    # descending x so that theta increases from the z = 0 pole
    xg, wg = xg[::-1], wg[::-1]
    theta = np.arccos(xg)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    weights = (wg / (2.0 * n_phi))[:, None] * np.ones(n_phi)[None, :]
    r = np.tan(theta / 2.0)
    nodes = r[:, None] * np.exp(1j * phi)[None, :]
    rho = (V / np.pi) / (1.0 + r**2) ** 2
    conformal_factor = rho[:, None] * np.ones(n_phi)[None, :]

    lmax = n_theta - 1
    mmax = min(lmax, n_phi // 2 - 1)
    P = normalized_legendre(lmax, mmax, xg)
    dP = legendre_sin_derivative(P, xg)
    return SphereGrid(
        n_theta=n_theta,
        n_phi=n_phi,
        volume=V,
        theta=theta,
        phi=phi,
        gl_weights=wg,
        weights=weights,
        nodes=nodes,
        conformal_factor=conformal_factor,
        lmax=lmax,
        mmax=mmax,
        _P=P,
        _dP=dP,
    )


# -- quadrature ---------------------------------------------------------------


def integrate(values: np.ndarray, form: Form, grid: SphereGrid) -> complex | float:
    """Quadrature of ``values`` against ``omega0`` (mass V) or ``omega_FS`` (mass 2 pi)."""
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    if form == "omega0":
        mass = grid.volume
    elif form == "fs":
        mass = 2.0 * np.pi
    else:
        raise ValueError(f"unknown area form {form!r}")
    total = mass * np.sum(grid.weights * values)
    return complex(total) if np.iscomplexobj(total) else float(total)


def mean(values: np.ndarray, grid: SphereGrid):
    return np.sum(grid.weights * np.asarray(values))


# -- spectral operators -------------------------------------------------------


def laplacian_g0(values: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """Laplace-Beltrami operator of ``g0`` (negative eigenvalues)."""
    lam = grid.eigenvalues()
    return _apply_real(lambda u: grid.synthesize(lam * grid.analyze(u)), values)


def _sin_dtheta(u: np.ndarray, grid: SphereGrid) -> np.ndarray:
    # sin(theta) d/dtheta = -(1 - x^2) d/dx
    return -grid.synthesize(grid.analyze(u), table=grid._dP)


def _dphi(u: np.ndarray, grid: SphereGrid) -> np.ndarray:
    c = grid.analyze(u)
    m = np.arange(grid.mmax + 1)[:, None]
    return grid.synthesize(1j * m * c)


def vfield_derivative(values: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """``z d/dz`` of a field: ``(sin(theta) d_theta - i d_phi) / 2``."""
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return vfield_derivative(values.real, grid) + 1j * vfield_derivative(values.imag, grid)
    return 0.5 * (_sin_dtheta(values, grid) - 1j * _dphi(values, grid))


def vbar_derivative(values: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """``conj(z) d/dconj(z)`` of a field: ``(sin(theta) d_theta + i d_phi) / 2``."""
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return vbar_derivative(values.real, grid) + 1j * vbar_derivative(values.imag, grid)
    return 0.5 * (_sin_dtheta(values, grid) + 1j * _dphi(values, grid))


def dbar_coefficient(values: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """Coefficient of ``d conj(z)`` in the (0,1)-form ``dbar(values)`` (chart ``z``)."""
    return vbar_derivative(values, grid) / np.conj(grid.nodes)


def ddbar_coefficient(values: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """``d_z d_zbar`` of a field, i.e. ``(rho / 4) * laplacian_g0``."""
    return 0.25 * grid.conformal_factor * laplacian_g0(values, grid)


def poisson_solve_g0(rhs: np.ndarray, grid: SphereGrid, tol: float | None = None) -> np.ndarray:
    """Zero-mean solution ``w`` of ``laplacian_g0(w) = rhs``.

    Raises :class:`SolvabilityError` when the ``omega0``-mean of ``rhs`` exceeds
    ``tol`` (default ``1e-8 * max(1, max|rhs|)``).
    """
    rhs = np.asarray(rhs)
    scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
    if tol is None:
        tol = 1e-8 * max(1.0, scale)
    avg = mean(rhs, grid)
    if abs(avg) > tol:
        raise SolvabilityError(complex(avg), tol)
    lam = grid.eigenvalues()
    inv = np.zeros_like(lam)
    inv[:, 1:] = 1.0 / lam[:, 1:]
    return _apply_real(lambda u: grid.synthesize(inv * grid.analyze(u)), rhs)


# -- chart-stencil route --------------------------------------------------------

_STENCIL_HALF = 4


def _central_weights(order: int, half: int = _STENCIL_HALF) -> np.ndarray:
    offsets = np.arange(-half, half + 1, dtype=float)
    A = np.vander(offsets, increasing=True).T
    b = np.zeros(offsets.size)
    b[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(A, b)


_D1 = _central_weights(1)
_D2 = _central_weights(2)


def _log_chart_samples(func, theta, phi, h, direction):
    s = np.log(np.tan(theta / 2.0))
    out = []
    for k in range(-_STENCIL_HALF, _STENCIL_HALF + 1):
        if direction == "s":
            t = 2.0 * np.arctan(np.exp(s + k * h))
            out.append(func(t, phi))
        else:
            out.append(func(theta, phi + k * h))
    return out


def _stencil_apply(weights, samples, h, order):
    acc = sum(w * v for w, v in zip(weights, samples))
    return acc / h**order


def stencil_laplacian(
    func: Callable[[np.ndarray, np.ndarray], np.ndarray],
    grid: SphereGrid,
    mask: np.ndarray | None = None,
    h: float = 1e-2,
) -> np.ndarray:
    """``laplacian_g0`` of a closed-form ``func(theta, phi)`` at masked nodes.

    Uses 8th-order central differences in the chart ``w = log z = s + i phi``,
    where ``laplacian_g0 = (d_s^2 + d_phi^2) / (V sin^2(theta) / 4 pi)``. Only
    points near each node are evaluated, so functions singular at the poles are
    fine as long as the mask keeps away from them. Unmasked entries are NaN.
    """
    if mask is None:
        mask = grid.interior_mask()
    theta, phi = grid.theta2d[mask], grid.phi2d[mask]
    d_ss = _stencil_apply(_D2, _log_chart_samples(func, theta, phi, h, "s"), h, 2)
    d_pp = _stencil_apply(_D2, _log_chart_samples(func, theta, phi, h, "phi"), h, 2)
    rho_w = grid.volume * np.sin(theta) ** 2 / (4.0 * np.pi)
    out = np.full(grid.shape, np.nan, dtype=np.result_type(d_ss, float))
    out[mask] = (d_ss + d_pp) / rho_w
    return out


def stencil_vfield_derivative(
    func: Callable[[np.ndarray, np.ndarray], np.ndarray],
    grid: SphereGrid,
    mask: np.ndarray | None = None,
    h: float = 1e-3,
) -> np.ndarray:
    """``z d/dz`` of a closed-form ``func(theta, phi)`` at masked nodes (``d/dw`` in ``w = log z``)."""
    if mask is None:
        mask = grid.interior_mask()
    theta, phi = grid.theta2d[mask], grid.phi2d[mask]
    d_s = _stencil_apply(_D1, _log_chart_samples(func, theta, phi, h, "s"), h, 1)
    d_p = _stencil_apply(_D1, _log_chart_samples(func, theta, phi, h, "phi"), h, 1)
    out = np.full(grid.shape, np.nan, dtype=complex)
    out[mask] = 0.5 * (d_s - 1j * d_p)
    return out
