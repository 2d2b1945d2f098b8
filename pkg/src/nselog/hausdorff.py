"""Exceptional-set extraction from gradient fields and dimension bounds.

Grid measure is cell count times cell volume throughout.  The analytic
dimension bound subtracts a nested-log series whose leading term carries
1/epsilon, so it collapses to the zero clamp for most exponent choices at
small epsilon; the unclamped value is always reported alongside so that
behavior stays visible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .nestedlog import DeltaSequence, DivergentDeltaError, log_fixed_point
from .spectral import Grid3

__all__ = [
    "ExceptionalSet",
    "BoxCountResult",
    "DimBoundRow",
    "lambda_threshold",
    "dim_bound",
    "dim_bound_detail",
    "dim_bound_scan",
    "box_counting_dim",
]


@dataclass(frozen=True)
class ExceptionalSet:
    """Cells where the gradient magnitude strictly exceeds the threshold
    lambda, chosen as the smallest grid value keeping the set measure below
    epsilon."""

    epsilon: float
    lam: float
    mask: np.ndarray
    measure: float


class BoxCountResult(NamedTuple):
    dimension: float
    fit_residual: float
    empty: bool
    counts: Tuple[int, ...]


class DimBoundRow(NamedTuple):
    epsilon: float
    bound_unclamped: float
    bound: float


def lambda_threshold(gradmag: np.ndarray, epsilon: float, grid: Grid3) -> ExceptionalSet:
    """Exceedance threshold: smallest value from the sorted multiset of grid
    gradient magnitudes whose strict-exceedance measure is below epsilon.

    Ties collapse to one candidate value, so the selection is deterministic:
    the largest order statistic carrying that value is the one used.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if gradmag.shape != (grid.n,) * 3:
        raise ValueError(f"field shape {gradmag.shape} does not match grid "
                         f"n={grid.n}")
    cell = grid.cell_volume
    vals = np.sort(gradmag.ravel())
    m = vals.size
    counts_gt = m - np.searchsorted(vals, vals, side="right")
    allowed = epsilon / cell
    idx = int(np.argmax(counts_gt < allowed))  # counts_gt is nonincreasing
    lam = float(vals[idx])
    mask = gradmag > lam
    return ExceptionalSet(epsilon=epsilon, lam=lam, mask=mask,
                          measure=float(mask.sum()) * cell)


def _dim_series_terms(deltas: DeltaSequence, inv_eps: float, tol: float,
                      term_cap: Optional[int]):
    """Partial sum of delta_j/(1+delta_j) * L_{j-1}(1/eps)/(1+L_j(1/eps)),
    plus a certified tail remainder for infinite convergent generators.

    Past the fixed-point freeze the per-term log ratio is pinned between the
    monotone envelope values, and delta/(1+delta) is bracketed by
    [delta - delta**2, delta], so the remainder lies between
    (mass_lo - sq_mass_hi) * ratio_lo and mass_hi * ratio_hi.  Iteration
    stops once that bracket is narrower than tol and its midpoint is added.
    """
    infinite_tail = term_cap is None and not deltas.finitely_supported
    if infinite_tail and deltas.tail_mass_bounds(1) is None:
        raise DivergentDeltaError(
            "dimension-bound series over a divergent tail needs an explicit "
            "term cap")
    lstar = log_fixed_point()
    ell_prev = inv_eps  # L_0
    total = 0.0
    j = 0
    terms_used = 0
    max_terms = 100_000
    while True:
        j += 1
        if term_cap is not None and terms_used >= term_cap:
            break
        if deltas.finitely_supported and j > deltas.support:
            break
        ell = math.log(math.e + ell_prev)  # L_j
        d = deltas.delta(j)
        term = (d / (1.0 + d)) * ell_prev / (1.0 + ell)
        total += term
        terms_used += 1
        ell_prev = ell
        if infinite_tail and j > 10:
            m_lo, m_hi = deltas.tail_mass_bounds(j)
            sq_hi = deltas.tail_sq_mass_hi(j)
            ratio_hi = max(ell_prev, lstar) / (1.0 + min(ell, lstar))
            ratio_lo = min(ell_prev, lstar) / (1.0 + max(ell, lstar))
            if sq_hi is not None:
                r_lo = max(m_lo - sq_hi, 0.0) * ratio_lo
                r_hi = m_hi * ratio_hi
                if r_hi - r_lo <= tol * max(total, 1.0):
                    total += 0.5 * (r_lo + r_hi)
                    break
        if j >= max_terms:
            raise ValueError(f"dimension series did not settle within {max_terms} terms")
    return total, terms_used


def dim_bound_detail(deltas: DeltaSequence, epsilon: float, tol: float = 1e-10,
                     term_cap: Optional[int] = None) -> DimBoundRow:
    """(epsilon, unclamped, clamped) dimension bound 3 - series."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    total, _ = _dim_series_terms(deltas, 1.0 / epsilon, tol, term_cap)
    unclamped = 3.0 - total
    return DimBoundRow(epsilon, unclamped, min(3.0, max(0.0, unclamped)))


def dim_bound(deltas: DeltaSequence, epsilon: float, tol: float = 1e-10,
              term_cap: Optional[int] = None) -> float:
    """Analytic upper bound for the exceptional-set dimension, clamped to
    [0, 3] (the unclamped value is available from dim_bound_detail)."""
    return dim_bound_detail(deltas, epsilon, tol, term_cap).bound


def dim_bound_scan(deltas: DeltaSequence, eps_grid: Sequence[float],
                   tol: float = 1e-10,
                   term_cap: Optional[int] = None) -> List[DimBoundRow]:
    """Bound over an epsilon grid, rows ordered by decreasing epsilon.

    Every series term is nondecreasing in 1/epsilon, so the sampled bounds
    must be nonincreasing as epsilon shrinks; that is asserted (with float
    slack) before returning.
    """
    eps_sorted = sorted(set(float(e) for e in eps_grid), reverse=True)
    if not eps_sorted:
        raise ValueError("empty epsilon grid")
    rows = [dim_bound_detail(deltas, eps, tol, term_cap) for eps in eps_sorted]
    slack = 1e-9 + 10.0 * tol
    for a, b in zip(rows, rows[1:]):
        if b.bound_unclamped > a.bound_unclamped + slack:
            raise AssertionError(
                f"dimension bound failed sampled monotonicity between "
                f"eps={a.epsilon} and eps={b.epsilon}")
    return rows


def box_counting_dim(mask: np.ndarray, scales: Sequence[int]) -> BoxCountResult:
    """Least-squares slope of log N(r) against log(1/r) over dyadic box sizes.

    An empty mask reports dimension 0 with the ``empty`` flag set; fewer than
    three scales is rejected.
    """
    scales = sorted(set(int(s) for s in scales))
    if len(scales) < 3:
        raise ValueError(f"need at least 3 scales, got {len(scales)}")
    n = mask.shape[0]
    if mask.shape != (n, n, n):
        raise ValueError(f"mask must be cubic, got {mask.shape}")
    for s in scales:
        if s < 1 or n % s != 0:
            raise ValueError(f"scale {s} does not divide the grid size {n}")
    if not mask.any():
        return BoxCountResult(0.0, 0.0, True, tuple(0 for _ in scales))
    counts = []
    for s in scales:
        blocks = mask.reshape(n // s, s, n // s, s, n // s, s)
        counts.append(int(blocks.any(axis=(1, 3, 5)).sum()))
    log_inv_r = np.log(1.0 / np.array(scales, dtype=float))
    log_n = np.log(np.array(counts, dtype=float))
    slope, intercept = np.polyfit(log_inv_r, log_n, 1)
    fit = slope * log_inv_r + intercept
    residual = float(np.sqrt(np.mean((fit - log_n) ** 2)))
    return BoxCountResult(float(slope), residual, False, tuple(counts))
