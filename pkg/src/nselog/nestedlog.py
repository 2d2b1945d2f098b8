"""Nested logarithms, certified infinite products, and the scalar formulas built on them.

Everything in this module is a pure function of floats and small immutable
value objects, safe to share across threads.  The central object is
:class:`DeltaSequence`, the exponent sequence attached to every nested-log
product; its series classification is symbolic (derived from the generator),
never guessed from partial sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence, Tuple

from scipy.special import zeta as _hurwitz_zeta

__all__ = [
    "SumClass",
    "DeltaSequence",
    "CriticalConstants",
    "ProductValue",
    "InterpExponents",
    "DivergentDeltaError",
    "nested_log",
    "log_fixed_point",
    "truncated_product",
    "psi",
    "f1_inf",
    "f2_inf",
    "h_func",
    "alpha",
    "phi_threshold",
    "optimal_deltas",
    "interp_exponents",
    "delta_sequence_from_record",
]

# Relative padding absorbed into certified bounds to cover exp/log roundoff.
# Certification is at working (double) precision, not arbitrary precision.
_FP_PAD = 1e-14


def _exp(x: float) -> float:
    """exp saturating to +inf instead of raising on overflow."""
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf

# Largest j for which j! fits in a double; beyond it delta_j/j! underflows.
_MAX_FLOAT_FACTORIAL = 170


class DivergentDeltaError(ValueError):
    """An infinite product/series over a divergent delta tail was requested
    without an explicit term cap."""


class SumClass(Enum):
    CONVERGENT = "Convergent"
    DIVERGENT = "Divergent"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class DeltaSequence:
    """Exponent sequence delta_j (j >= 1) given by a symbolic generator.

    kind is one of "constant", "power_law", "factorial_weighted", "explicit".
    ``support`` is the last index with a (possibly) nonzero entry, or None for
    an infinite sequence.  ``sum_class`` / ``factorial_sum_class`` classify
    sum(delta_j) and sum(delta_j / j!); they are fixed by the generator:

    * constant(d>0):        Divergent / Convergent
    * power_law(a, p):      Convergent iff p > 1 / Convergent
    * factorial_weighted:   Convergent / Convergent   (finitely supported)
    * explicit:             Unknown / Unknown         (finitely supported)
    """

    kind: str
    params: Tuple[float, ...]
    values: Tuple[float, ...]
    sum_class: SumClass
    factorial_sum_class: SumClass
    support: Optional[int]

    # -- constructors -------------------------------------------------------

    @staticmethod
    def constant(delta: float) -> "DeltaSequence":
        if not delta > 0:
            raise ValueError(f"constant generator requires delta > 0, got {delta}")
        return DeltaSequence("constant", (float(delta),), (), SumClass.DIVERGENT,
                             SumClass.CONVERGENT, None)

    @staticmethod
    def power_law(a: float, p: float) -> "DeltaSequence":
        """delta_j = a * j**(-p)."""
        if not a > 0:
            raise ValueError(f"power_law generator requires a > 0, got {a}")
        sum_class = SumClass.CONVERGENT if p > 1 else SumClass.DIVERGENT
        return DeltaSequence("power_law", (float(a), float(p)), (), sum_class,
                             SumClass.CONVERGENT, None)

    @staticmethod
    def factorial_weighted(total: float, n: int) -> "DeltaSequence":
        """delta_j = total * j! / sum_{k=1..n} k! for j <= n, 0 beyond."""
        if not total > 0:
            raise ValueError(f"factorial_weighted requires total > 0, got {total}")
        if n < 1:
            raise ValueError(f"factorial_weighted requires n >= 1, got {n}")
        denom = sum(math.factorial(k) for k in range(1, n + 1))
        vals = tuple(float(Fraction(math.factorial(j), denom) * Fraction(total))
                     for j in range(1, n + 1))
        return DeltaSequence("factorial_weighted", (float(total), float(n)), vals,
                             SumClass.CONVERGENT, SumClass.CONVERGENT, n)

    @staticmethod
    def explicit(values: Sequence[float]) -> "DeltaSequence":
        vals = tuple(float(v) for v in values)
        if any(v < 0 for v in vals):
            raise ValueError("explicit delta entries must be >= 0")
        return DeltaSequence("explicit", (), vals, SumClass.UNKNOWN,
                             SumClass.UNKNOWN, len(vals))

    # -- evaluation ---------------------------------------------------------

    def delta(self, j: int) -> float:
        """delta_j for j >= 1 (0.0 beyond a finite support)."""
        if j < 1:
            raise ValueError(f"delta index must be >= 1, got {j}")
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "power_law":
            a, p = self.params
            return a * float(j) ** (-p)
        if j <= len(self.values):
            return self.values[j - 1]
        return 0.0

    @property
    def finitely_supported(self) -> bool:
        return self.support is not None

    def tail_mass_bounds(self, after_j: int) -> Optional[Tuple[float, float]]:
        """Certified [lo, hi] for sum_{j > after_j} delta_j, or None if infinite.

        For power_law tails the Hurwitz zeta value is used, clamped to the
        monotone integral bounds so a certified bracket survives even if the
        special-function evaluation were off by more than its usual few ulps.
        """
        if self.support is not None:
            return (s := math.fsum(self.values[after_j:]), s)
        if self.kind == "constant":
            return None
        a, p = self.params
        if p <= 1:
            return None
        n = float(after_j)
        int_hi = a * n ** (1.0 - p) / (p - 1.0) if after_j > 0 else math.inf
        int_lo = a * (n + 1.0) ** (1.0 - p) / (p - 1.0)
        z = a * float(_hurwitz_zeta(p, after_j + 1))
        lo = max(int_lo, z * (1.0 - 1e-12))
        hi = min(int_hi, z * (1.0 + 1e-12))
        if not lo <= hi:  # special-function disagreement; fall back to integrals
            lo, hi = int_lo, int_hi
        return (lo, hi)

    def tail_sq_mass_hi(self, after_j: int) -> Optional[float]:
        """Certified upper bound for sum_{j > after_j} delta_j**2, or None."""
        if self.support is not None:
            return math.fsum(v * v for v in self.values[after_j:])
        if self.kind == "constant":
            return None
        a, p = self.params
        if 2.0 * p <= 1.0:
            return None
        z = a * a * float(_hurwitz_zeta(2.0 * p, after_j + 1)) * (1.0 + 1e-12)
        if after_j > 0:
            z = min(z, a * a * float(after_j) ** (1.0 - 2.0 * p) / (2.0 * p - 1.0))
        return z

    def as_record(self) -> dict:
        """Round-trippable plain-dict form (the CLI config representation)."""
        if self.kind == "constant":
            return {"kind": "constant", "delta": self.params[0]}
        if self.kind == "power_law":
            return {"kind": "power_law", "a": self.params[0], "p": self.params[1]}
        if self.kind == "factorial_weighted":
            return {"kind": "factorial_weighted", "total": self.params[0],
                    "n": int(self.params[1])}
        return {"kind": "explicit", "values": list(self.values)}


def delta_sequence_from_record(record: dict) -> DeltaSequence:
    """Build a DeltaSequence from a config record like {kind="power_law", a=1, p=2}."""
    rec = dict(record)
    kind = rec.pop("kind", None)
    builders = {
        "constant": (DeltaSequence.constant, ("delta",)),
        "power_law": (DeltaSequence.power_law, ("a", "p")),
        "factorial_weighted": (DeltaSequence.factorial_weighted, ("total", "n")),
        "explicit": (DeltaSequence.explicit, ("values",)),
    }
    if kind not in builders:
        raise ValueError(f"unknown delta generator kind: {kind!r}")
    builder, keys = builders[kind]
    missing = [k for k in keys if k not in rec]
    extra = [k for k in rec if k not in keys]
    if missing or extra:
        raise ValueError(f"delta generator {kind!r}: missing keys {missing}, "
                         f"unknown keys {extra}")
    return builder(*(rec[k] for k in keys))


@dataclass(frozen=True)
class CriticalConstants:
    """Free constants of the critical-exponent formulas: per-term weights c_j
    (default all 1.0) and the threshold prefactor C_q."""

    c: Tuple[float, ...] = ()
    C_q: float = 1.0

    def __post_init__(self):
        if any(not v > 0 for v in self.c) or not self.C_q > 0:
            raise ValueError("critical constants must be strictly positive")

    def c_at(self, j: int) -> float:
        return self.c[j - 1] if j <= len(self.c) else 1.0


@dataclass(frozen=True)
class ProductValue:
    """A truncated infinite product with a certified enclosure.

    ``lower <= value <= upper`` always.  For finitely supported sequences the
    enclosure is exact (lower == upper == partial product).  For infinite
    convergent tails the enclosure brackets the infinite product at working
    precision, with relative width <= the requested tolerance.  When a
    divergent tail is truncated via an explicit term cap, the partial product
    is reported with lower == upper == value: a truncation, not an enclosure.
    """

    value: float
    lower: float
    upper: float
    terms_used: int


class InterpExponents(NamedTuple):
    theta: float
    alpha: float
    K: float


def nested_log(j: int, x: float) -> float:
    """j-fold nested logarithm: identity at j=0, then log(e + previous)."""
    if j < 0:
        raise ValueError(f"nesting depth must be >= 0, got {j}")
    if x < 0:
        raise ValueError(f"argument must be >= 0, got {x}")
    val = float(x)
    for _ in range(j):
        val = math.log(math.e + val)
    return val


def log_fixed_point() -> float:
    """The limit of the nested-log iteration: the root of l = log(e + l).

    Computed once by direct iteration to the floating-point fixed point
    (the map is a contraction with rate ~0.42); residual is a few ulps.
    """
    global _LSTAR
    if _LSTAR is None:
        val = 1.0
        for _ in range(200):
            nxt = math.log(math.e + val)
            if nxt == val:
                break
            val = nxt
        _LSTAR = val
    return _LSTAR


_LSTAR: Optional[float] = None


def truncated_product(x: float, deltas: DeltaSequence, start_j: int, tol: float,
                      term_cap: Optional[int] = None) -> ProductValue:
    """prod_{j >= start_j} (1 + L_j(x))**delta_j with a certified enclosure.

    Terms are accumulated in log space.  Once the iterates L_j(x) have frozen
    at the fixed point, every remaining log-factor lies between
    log(1 + l*) and log(1 + L_{N+1}(x)) (the iteration is monotone toward
    l*), so the tail contributes between m_lo*min and m_hi*max of those, with
    [m_lo, m_hi] the certified remaining delta mass.  Iteration stops once the
    enclosure's relative width is <= tol.

    A divergent tail is refused unless ``term_cap`` is given; a term cap
    switches to a plain partial product over at most that many terms.
    """
    if x < 0:
        raise ValueError(f"argument must be >= 0, got {x}")
    if start_j < 1:
        raise ValueError(f"start index must be >= 1, got {start_j}")
    if not tol > 0:
        raise ValueError(f"tolerance must be > 0, got {tol}")

    ell = nested_log(start_j, x)  # L_j(x) for the current j
    log_sum = 0.0
    terms = 0

    if term_cap is not None:
        for j in range(start_j, start_j + term_cap):
            log_sum += deltas.delta(j) * math.log1p(ell)
            ell = math.log(math.e + ell)
            terms += 1
        val = _exp(log_sum)
        return ProductValue(val, val, val, terms)

    if deltas.finitely_supported:
        for j in range(start_j, deltas.support + 1):
            log_sum += deltas.delta(j) * math.log1p(ell)
            ell = math.log(math.e + ell)
            terms += 1
        val = _exp(log_sum)
        return ProductValue(val, val, val, terms)

    if deltas.tail_mass_bounds(start_j) is None:
        raise DivergentDeltaError(
            f"delta tail from j={start_j} is not certifiably convergent "
            f"({deltas.kind} generator, sum_class={deltas.sum_class.value}); "
            "supply an explicit term cap to force a plain truncation")

    lstar_factor = math.log1p(log_fixed_point())
    width_goal = math.log1p(tol)
    max_terms = 200_000
    j = start_j
    while True:
        log_sum += deltas.delta(j) * math.log1p(ell)
        ell = math.log(math.e + ell)  # now L_{j+1}(x)
        terms += 1
        m_lo, m_hi = deltas.tail_mass_bounds(j)
        next_factor = math.log1p(ell)
        f_lo = min(lstar_factor, next_factor)
        f_hi = max(lstar_factor, next_factor)
        if m_hi * f_hi - m_lo * f_lo <= width_goal:
            break
        j += 1
        if terms >= max_terms:
            raise ValueError(
                f"certified enclosure did not reach tol={tol} within "
                f"{max_terms} terms (residual width "
                f"{m_hi * f_hi - m_lo * f_lo:.3e} in log space)")

    lower = _exp(log_sum + m_lo * f_lo) * (1.0 - _FP_PAD)
    upper = _exp(log_sum + m_hi * f_hi) * (1.0 + _FP_PAD)
    return ProductValue(math.sqrt(lower * upper), lower, upper, terms)


def psi(r: float, deltas: DeltaSequence, tol: float = 1e-10) -> float:
    """Reciprocal of the full nested-log product: the admissibility envelope.

    Lies in (0, 1], equals 1 for an empty sequence, and is nonincreasing in r.
    """
    return 1.0 / truncated_product(r, deltas, 1, tol).value


def f1_inf(Z: float, deltas: DeltaSequence, tol: float = 1e-10) -> float:
    """First commutator weight: L_1(Z) / prod_{j>=2} (1 + L_j(Z))**delta_j."""
    return nested_log(1, Z) / truncated_product(Z, deltas, 2, tol).value


def f2_inf(Z: float, deltas: DeltaSequence, tol: float = 1e-10) -> float:
    """Second commutator weight, the exact reciprocal of the first."""
    return truncated_product(Z, deltas, 2, tol).value / nested_log(1, Z)


def h_func(r: float, deltas: DeltaSequence, tol: float = 1e-10) -> float:
    """Growth-suppression function of the limiting ODE:
    f1(sqrt(r))**2 + f2(sqrt(r))**4.  Strictly positive."""
    if r < 0:
        raise ValueError(f"argument must be >= 0, got {r}")
    root = math.sqrt(r)
    return f1_inf(root, deltas, tol) ** 2 + f2_inf(root, deltas, tol) ** 4


def alpha(deltas: DeltaSequence, n: int,
          consts: Optional[CriticalConstants] = None) -> float:
    """Critical exponent 1 / (1 + sum_{j=1..n} c_j * delta_j / j!).

    Strictly decreasing in n (when delta_{n+1} > 0) and in every delta_j;
    equals 1 for n = 0.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    consts = consts or CriticalConstants()
    total = 0.0
    for j in range(1, n + 1):
        if j > _MAX_FLOAT_FACTORIAL:
            break  # terms below ~1e-306; they cannot move the sum
        total += consts.c_at(j) * deltas.delta(j) / float(math.factorial(j))
    return 1.0 / (1.0 + total)


def phi_threshold(s: float, q: float, deltas: DeltaSequence, n: int,
                  consts: Optional[CriticalConstants] = None) -> float:
    """Regularity threshold C_q * (s - 1/2)**alpha; 0 at s = 1/2 by continuity."""
    if s < 0.5:
        raise ValueError(f"s must be >= 1/2, got {s}")
    if not q > 3:
        raise ValueError(f"q must be > 3, got {q}")
    consts = consts or CriticalConstants()
    if s == 0.5:
        return 0.0
    return consts.C_q * (s - 0.5) ** alpha(deltas, n, consts)


def optimal_deltas(total: float, n: int) -> DeltaSequence:
    """Factorially weighted allocation delta_j = total * j! / sum_{k<=n} k!,
    the mass split that drives the critical exponent down fastest for a fixed
    budget sum(delta_j) = total."""
    return DeltaSequence.factorial_weighted(total, n)


def interp_exponents(q: float) -> InterpExponents:
    """Interpolation exponents for gradient control at integrability q > 3.

    theta = (3/2) q / (3q - 2), alpha = (3/2)(1/2 - 1/q), and the ODE growth
    power K = max(2 + theta(1-alpha), 2(1 + theta(1-alpha))) > 1.
    """
    if not q > 3:
        raise ValueError(f"q must be > 3, got {q}")
    theta = 1.5 * q / (3.0 * q - 2.0)
    a = 1.5 * (0.5 - 1.0 / q)
    t = theta * (1.0 - a)
    K = max(2.0 + t, 2.0 * (1.0 + t))
    return InterpExponents(theta, a, K)
