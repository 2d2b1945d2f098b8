"""Log-improved norm functional, the admissibility predicate on initial data,
and synthesis of the radial Fourier profiles that separate the spaces."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .nestedlog import DeltaSequence, psi, truncated_product
from .spectral import (
    Grid3,
    SpectralField,
    VectorField,
    _grid_arrays,
    divergence_max,
    frac_laplacian,
    smooth_cutoff_high,
    vector_lp_norm,
    vector_sobolev_norm,
)

__all__ = [
    "NormInfiniteError",
    "CriterionVerdict",
    "LogDecay",
    "LogGrowth",
    "loglebesgue_norm",
    "admissibility",
    "synth_radial_profile",
]

_BRACKET_SHRINK = 2.0 ** -40  # scan start relative to max(A, 1)
_BRACKET_GROWTH_BITS = 512    # overflow bound: max(A, 1) * 2**512


class NormInfiniteError(ValueError):
    """The infimum set of the log-improved norm is empty below the overflow
    bound (the divergent-exponent regime)."""


@dataclass(frozen=True)
class CriterionVerdict:
    """Outcome of the initial-data admissibility check.

    ``admissible`` holds exactly when lhs <= threshold = C0 * psi_value;
    ``margin`` is threshold - lhs (positive when admissible).
    """

    lhs: float
    h_half_norm: float
    psi_value: float
    threshold: float
    admissible: bool
    margin: float

    def as_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "h_half_norm": self.h_half_norm,
            "psi_value": self.psi_value,
            "threshold": self.threshold,
            "admissible": self.admissible,
            "margin": self.margin,
        }


def loglebesgue_norm(A: float, deltas: DeltaSequence, tol: float = 1e-8) -> float:
    """Smallest M whose log-damped value M * prod(1 + L_j(M))**(-delta_j)
    reaches A.

    A geometric scan (factor 2 from max(A,1) * 2**-40 upward) finds the first
    sign change of phi(M) - A; bisection then resolves M to relative ``tol``.
    The damped map need not be monotone for large leading exponents, so the
    first crossing is what implements the infimum.  If no crossing appears
    below the overflow bound the norm is infinite (divergent regime).
    """
    if A < 0:
        raise ValueError(f"norm argument must be >= 0, got {A}")
    if not tol > 0:
        raise ValueError(f"tolerance must be > 0, got {tol}")
    if A == 0.0:
        return 0.0
    inner_tol = max(1e-12, tol * 1e-3)

    def phi(m: float) -> float:
        return m / truncated_product(m, deltas, 1, inner_tol).value

    base = max(A, 1.0)
    m = base * _BRACKET_SHRINK
    # for very small A the scan floor may already be past the target;
    # phi(m) <= m -> 0, so halving always reaches the other side
    while phi(m) >= A:
        m *= 0.5
    hit = None
    overflow_bound = base * 2.0 ** _BRACKET_GROWTH_BITS
    while m <= overflow_bound:
        m_next = m * 2.0
        if phi(m_next) >= A:
            hit = (m, m_next)
            break
        m = m_next
    if hit is None:
        raise NormInfiniteError(
            f"no M below max(A,1)*2**{_BRACKET_GROWTH_BITS} reaches A={A}; "
            "the log-improved norm is infinite for this exponent sequence")
    lo, hi = hit
    while hi - lo > tol * lo:
        mid = math.sqrt(lo) * math.sqrt(hi)  # lo*hi may underflow for tiny A
        if not lo < mid < hi:
            break  # bracket exhausted at float resolution
        if phi(mid) >= A:
            hi = mid
        else:
            lo = mid
    return hi


def admissibility(u0: VectorField, q: float, deltas: DeltaSequence, C0: float,
                  tol: float = 1e-8) -> CriterionVerdict:
    """Check the quarter-Laplacian L^q size of u0 against the nested-log
    envelope of its critical norm.

    Requires divergence-free, mean-free data and q > 3.  Inadmissibility is a
    verdict, not an error.
    """
    if not q > 3:
        raise ValueError(f"q must be > 3, got {q}")
    if not C0 > 0:
        raise ValueError(f"C0 must be > 0, got {C0}")
    div, mag = divergence_max(u0)
    if mag > 0 and div > 1e-8 * mag:
        raise ValueError(f"initial data is not divergence-free "
                         f"(residual {div / mag:.3e} relative)")
    mean = max(abs(c.mean_coefficient()) for c in u0.components)
    if mag > 0 and mean > 1e-10 * mag:
        raise ValueError("initial data must be mean-free")

    quarter = VectorField(*[frac_laplacian(c, 0.25) for c in u0.components])
    lhs = vector_lp_norm(quarter, q)
    h_half = vector_sobolev_norm(u0, 0.5)
    psi_value = psi(h_half, deltas, tol)
    threshold = C0 * psi_value
    return CriterionVerdict(
        lhs=lhs,
        h_half_norm=h_half,
        psi_value=psi_value,
        threshold=threshold,
        admissible=lhs <= threshold,
        margin=threshold - lhs,
    )


@dataclass(frozen=True)
class LogDecay:
    """Profile (log(e + r))**(-beta): decays, lands inside the log-improved space."""
    beta: float


@dataclass(frozen=True)
class LogGrowth:
    """Profile (log(e + r))**alpha: grows, built to escape the space."""
    alpha: float


def synth_radial_profile(kind: Union[LogDecay, LogGrowth], exponent_p: float,
                         s: float, grid: Grid3) -> SpectralField:
    """Radial spectral profile |k|**-(3/p + s) times a log factor.

    Coefficients are real, depend on |k| only, vanish for |k| <= 1 (smooth
    cutoff up to |k| = 2, reusing the dyadic bump kernel), and the mean is
    zero.  Parameter ranges that overflow the discrete coefficients are
    rejected; escape to non-finite norms is the construction's purpose, so the
    error names the offending exponent.
    """
    if not exponent_p > 0:
        raise ValueError(f"integrability exponent must be > 0, got {exponent_p}")
    kmax = (grid.n // 2) * grid.wavenumber_scale
    if kmax <= 2.0:
        raise ValueError(f"grid does not resolve the |k| = 2 transition "
                         f"(kmax = {kmax})")
    arrays = _grid_arrays(grid)
    r = np.sqrt(arrays["k2"])
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        envelope = np.where(r > 0, r, 1.0) ** (-(3.0 / exponent_p + s))
        logs = np.log(math.e + r)
        if isinstance(kind, LogDecay):
            factor = logs ** (-kind.beta)
        elif isinstance(kind, LogGrowth):
            factor = logs ** kind.alpha
        else:
            raise TypeError(f"unknown profile kind: {kind!r}")
        coeffs = smooth_cutoff_high(r) * envelope * factor
    coeffs[0, 0, 0] = 0.0
    if not np.isfinite(coeffs).all():
        raise ValueError(f"profile coefficients overflow for {kind!r}; the "
                         "requested growth is not representable on this grid")
    return SpectralField(grid, coeffs.astype(np.complex128))
