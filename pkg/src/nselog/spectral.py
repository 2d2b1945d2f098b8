"""Periodic-box Fourier analysis: transforms, multipliers, projections, norms.

Fields live on a cubic grid of n**3 points over a box of side ``length``
(default 2*pi).  Spectral coefficients use the real-input half-spectrum
layout of ``rfftn``, normalized so a pure mode exp(i k.x) has unit
coefficient.  All fields are immutable values; every operation returns a
new field, so sharing across threads is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Dict, Tuple

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid3",
    "SpectralField",
    "VectorField",
    "to_physical",
    "to_spectral",
    "frac_laplacian",
    "sobolev_norm",
    "lp_norm",
    "lp_projection",
    "leray_project",
    "grad_sup_norm",
    "advection_commutator",
    "derivative",
    "dealias",
    "divergence_max",
    "inner_l2",
    "vector_sobolev_norm",
    "vector_lp_norm",
    "vector_l2_norm",
    "smooth_cutoff_low",
    "smooth_cutoff_high",
]


@dataclass(frozen=True)
class Grid3:
    """Cubic periodic grid: n points per axis (even, >= 8), period ``length``."""

    n: int
    length: float = 2.0 * math.pi

    def __post_init__(self):
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"grid size must be even and >= 8, got {self.n}")
        if not self.length > 0:
            raise ValueError(f"grid length must be > 0, got {self.length}")

    @property
    def volume(self) -> float:
        return self.length ** 3

    @property
    def cell_volume(self) -> float:
        return (self.length / self.n) ** 3

    @property
    def wavenumber_scale(self) -> float:
        return 2.0 * math.pi / self.length

    @property
    def spectral_shape(self) -> Tuple[int, int, int]:
        return (self.n, self.n, self.n // 2 + 1)

    def axis_points(self) -> np.ndarray:
        return np.arange(self.n) * (self.length / self.n)

    def mesh(self):
        """Physical coordinates (X, Y, Z), each of shape (n, n, n)."""
        x = self.axis_points()
        return np.meshgrid(x, x, x, indexing="ij")


# Cached wavenumber machinery per (n, length): broadcastable KX/KY/KZ, |k|^2,
# Parseval weights for the half-spectrum, and the spherical 2/3 dealias mask.
_GRID_CACHE: Dict[Tuple[int, float], dict] = {}


def _grid_arrays(grid: Grid3) -> dict:
    key = (grid.n, grid.length)
    cached = _GRID_CACHE.get(key)
    if cached is not None:
        return cached
    n, scale = grid.n, grid.wavenumber_scale
    kfull = np.fft.fftfreq(n, d=1.0 / n) * scale
    khalf = np.fft.rfftfreq(n, d=1.0 / n) * scale
    kx = kfull.reshape(n, 1, 1)
    ky = kfull.reshape(1, n, 1)
    kz = khalf.reshape(1, 1, n // 2 + 1)
    k2 = kx ** 2 + ky ** 2 + kz ** 2
    weights = np.full(n // 2 + 1, 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0  # Nyquist plane stored once
    weights = weights.reshape(1, 1, n // 2 + 1)
    # strict inequality: an inclusive boundary shell would re-admit aliased
    # energy whenever the 2/3 cutoff lands on an integer wavenumber
    kcut = (2.0 / 3.0) * (n // 2) * scale
    dealias_mask = k2 < kcut ** 2 - 1e-12
    inv_k2 = np.zeros_like(k2)
    nonzero = k2 > 0
    inv_k2[nonzero] = 1.0 / k2[nonzero]
    cached = {"kx": kx, "ky": ky, "kz": kz, "k2": k2, "weights": weights,
              "dealias": dealias_mask, "inv_k2": inv_k2,
              "ik": (1j * kx, 1j * ky, 1j * kz)}
    _GRID_CACHE[key] = cached
    return cached


@dataclass(frozen=True)
class SpectralField:
    """Scalar field as half-spectrum coefficients on a Grid3.

    Hermitian symmetry (real physical field) is inherent in the layout; the
    coefficient of a pure mode exp(i k.x) is 1.
    """

    grid: Grid3
    coeffs: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        if self.coeffs.shape != self.grid.spectral_shape:
            raise ValueError(f"coefficient shape {self.coeffs.shape} does not "
                             f"match grid {self.grid.spectral_shape}")
        self.coeffs.setflags(write=False)

    def mean_coefficient(self) -> complex:
        return complex(self.coeffs[0, 0, 0])


@dataclass(frozen=True)
class VectorField:
    """Three scalar fields on one shared grid."""

    x: SpectralField
    y: SpectralField
    z: SpectralField
    divergence_free: bool = False

    def __post_init__(self):
        if not (self.x.grid == self.y.grid == self.z.grid):
            raise ValueError("vector components must share one grid")

    @property
    def grid(self) -> Grid3:
        return self.x.grid

    @property
    def components(self) -> Tuple[SpectralField, SpectralField, SpectralField]:
        return (self.x, self.y, self.z)

    @staticmethod
    def from_physical(grid: Grid3, ux: np.ndarray, uy: np.ndarray, uz: np.ndarray,
                      divergence_free: bool = False) -> "VectorField":
        return VectorField(to_spectral(ux, grid), to_spectral(uy, grid),
                           to_spectral(uz, grid), divergence_free)


def to_spectral(values: np.ndarray, grid: Grid3) -> SpectralField:
    """Forward transform of a real physical array (unit mode coefficients)."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (grid.n,) * 3:
        raise ValueError(f"physical shape {values.shape} does not match grid n={grid.n}")
    return SpectralField(grid, sfft.rfftn(values) / grid.n ** 3)


def to_physical(field: SpectralField) -> np.ndarray:
    """Inverse transform back to the real physical array."""
    n = field.grid.n
    return sfft.irfftn(field.coeffs * n ** 3, s=(n, n, n))


def _with_coeffs(field: SpectralField, coeffs: np.ndarray) -> SpectralField:
    return SpectralField(field.grid, coeffs)


def frac_laplacian(field: SpectralField, s: float) -> SpectralField:
    """Fractional Laplacian: per-mode multiplier |k|**(2s).

    The mean (k=0) is annihilated for s > 0 and untouched for s = 0; for
    s < 0 the homogeneous symbol is singular there, so a nonzero mean is
    rejected.
    """
    if s == 0:
        return field
    k2 = _grid_arrays(field.grid)["k2"]
    if s < 0:
        scale = np.max(np.abs(field.coeffs))
        if scale > 0 and abs(field.coeffs[0, 0, 0]) > 1e-13 * scale:
            raise ValueError("negative fractional power is undefined on a field "
                             "with nonzero mean")
    with np.errstate(divide="ignore"):
        mult = k2 ** s
    mult[0, 0, 0] = 0.0
    return _with_coeffs(field, field.coeffs * mult)


def derivative(field: SpectralField, axis: int) -> SpectralField:
    """Spectral partial derivative along axis 0, 1, or 2."""
    arrays = _grid_arrays(field.grid)
    k = arrays[("kx", "ky", "kz")[axis]]
    return _with_coeffs(field, field.coeffs * (1j * k))


def dealias(field: SpectralField) -> SpectralField:
    """Spherical 2/3-rule truncation."""
    return _with_coeffs(field, field.coeffs * _grid_arrays(field.grid)["dealias"])


def sobolev_norm(field: SpectralField, s: float) -> float:
    """Homogeneous Sobolev norm of order s via the discrete Parseval sum.

    s = 0 gives the L2 norm (mean included); s > 0 drops the mean; s < 0
    rejects a nonzero mean.
    """
    arrays = _grid_arrays(field.grid)
    power = arrays["weights"] * np.abs(field.coeffs) ** 2
    if s == 0:
        total = float(np.sum(power))
    else:
        if s < 0:
            scale = np.max(np.abs(field.coeffs))
            if scale > 0 and abs(field.coeffs[0, 0, 0]) > 1e-13 * scale:
                raise ValueError("negative-order norm undefined on a field with "
                                 "nonzero mean")
        k2 = arrays["k2"]
        with np.errstate(divide="ignore"):
            mult = k2 ** s
        mult[0, 0, 0] = 0.0
        total = float(np.sum(mult * power))
    return math.sqrt(field.grid.volume * total)


def lp_norm(field: SpectralField, p: float) -> float:
    """L^p norm by grid-point rectangle rule (exact for resolved trig
    polynomials at p = 2, approximate otherwise); p = inf is the grid max."""
    if p < 1:
        raise ValueError(f"p must be in [1, inf], got {p}")
    values = np.abs(to_physical(field))
    if math.isinf(p):
        return float(np.max(values))
    return float((np.mean(values ** p) * field.grid.volume) ** (1.0 / p))


def _chi(t: np.ndarray) -> np.ndarray:
    """exp(-1/t) for t > 0, 0 otherwise; the C-infinity cutoff kernel."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_cutoff_low(r: np.ndarray) -> np.ndarray:
    """Radial bump: 1 for r <= 1, 0 for r >= 2, smooth in between."""
    r = np.asarray(r, dtype=np.float64)
    lo = _chi(2.0 - r)
    hi = _chi(r - 1.0)
    with np.errstate(invalid="ignore"):
        out = np.where(r <= 1.0, 1.0, np.where(r >= 2.0, 0.0, lo / (lo + hi)))
    return out


def smooth_cutoff_high(r: np.ndarray) -> np.ndarray:
    """Complementary smoothstep: 0 for r <= 1, 1 for r >= 2."""
    return 1.0 - smooth_cutoff_low(r)


def _annulus_symbol(r: np.ndarray) -> np.ndarray:
    """psi(r) = phi(r) - phi(2r): supported on the dyadic annulus 1/2 < r < 2."""
    return smooth_cutoff_low(r) - smooth_cutoff_low(2.0 * r)


def lp_projection(field: SpectralField, j: int) -> SpectralField:
    """Dyadic frequency-annulus projection: multiplier psi(2**-j |k|)."""
    k2 = _grid_arrays(field.grid)["k2"]
    r = np.sqrt(k2) * (2.0 ** -j)
    return _with_coeffs(field, field.coeffs * _annulus_symbol(r))


def leray_project(v: VectorField) -> VectorField:
    """Remove the gradient part mode by mode; the k = 0 mode is untouched."""
    arrays = _grid_arrays(v.grid)
    kx, ky, kz, k2 = arrays["kx"], arrays["ky"], arrays["kz"], arrays["k2"]
    cx, cy, cz = (c.coeffs for c in v.components)
    k_dot_u = kx * cx + ky * cy + kz * cz
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(k2 > 0, k_dot_u / np.where(k2 > 0, k2, 1.0), 0.0)
    return VectorField(_with_coeffs(v.x, cx - kx * factor),
                       _with_coeffs(v.y, cy - ky * factor),
                       _with_coeffs(v.z, cz - kz * factor),
                       divergence_free=True)


def divergence_max(v: VectorField) -> Tuple[float, float]:
    """(max_k |k . u_hat|, max_k |u_hat|): the divergence-free residual pair."""
    arrays = _grid_arrays(v.grid)
    kx, ky, kz = arrays["kx"], arrays["ky"], arrays["kz"]
    cx, cy, cz = (c.coeffs for c in v.components)
    div = np.abs(kx * cx + ky * cy + kz * cz)
    mag = max(float(np.max(np.abs(c))) for c in (cx, cy, cz))
    return float(np.max(div)), mag


def inner_l2(a: SpectralField, b: SpectralField) -> float:
    """L2 inner product evaluated spectrally."""
    w = _grid_arrays(a.grid)["weights"]
    return a.grid.volume * float(np.sum(w * (a.coeffs * np.conj(b.coeffs)).real))


def grad_sup_norm(v: VectorField) -> float:
    """Sup over grid points of the Frobenius norm of the velocity gradient."""
    total = np.zeros((v.grid.n,) * 3)
    for comp in v.components:
        for axis in range(3):
            total += to_physical(derivative(comp, axis)) ** 2
    return float(np.sqrt(np.max(total)))


def vector_sobolev_norm(v: VectorField, s: float) -> float:
    return math.sqrt(sum(sobolev_norm(c, s) ** 2 for c in v.components))


def vector_l2_norm(v: VectorField) -> float:
    return vector_sobolev_norm(v, 0.0)


def vector_lp_norm(v: VectorField, p: float) -> float:
    """L^p norm of the pointwise Euclidean magnitude |u(x)|."""
    if p < 1:
        raise ValueError(f"p must be in [1, inf], got {p}")
    mag2 = sum(to_physical(c) ** 2 for c in v.components)
    mag = np.sqrt(mag2)
    if math.isinf(p):
        return float(np.max(mag))
    return float((np.mean(mag ** p) * v.grid.volume) ** (1.0 / p))


def _advect(u_phys, g: SpectralField) -> SpectralField:
    """(u . grad) g with 2/3 dealiasing applied around the product."""
    grid = g.grid
    out = np.zeros((grid.n,) * 3)
    for axis in range(3):
        out += u_phys[axis] * to_physical(dealias(derivative(g, axis)))
    return dealias(to_spectral(out, grid))


def advection_commutator(s: float, u: VectorField, g: VectorField) -> VectorField:
    """Commutator of the fractional Laplacian with advection by u, applied to g.

    Componentwise: |k|^{2s}-multiplier of (u.grad)g_c minus (u.grad) of the
    multiplied g_c, with identical dealiasing around both physical-space
    products (so constant advection commutes to roundoff).
    """
    u_phys = [to_physical(dealias(c)) for c in u.components]
    parts = []
    for comp in g.components:
        comp_d = dealias(comp)
        first = frac_laplacian(_advect(u_phys, comp_d), s)
        second = _advect(u_phys, frac_laplacian(comp_d, s))
        parts.append(_with_coeffs(comp, first.coeffs - second.coeffs))
    return VectorField(*parts)
