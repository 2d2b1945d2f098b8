"""Adaptive integration of the limiting growth ODE, its saturation threshold,
and the Osgood comparison bound.

The ODE is dZ/dt = C (1 + Z**K) H(Z) with H the nested-log suppression
function; its right-hand side is strictly positive, so trajectories are
strictly increasing and numerical overflow is reported as finite-time
blow-up (a legitimate outcome, not an error).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad
from scipy.optimize import brentq

from .nestedlog import DeltaSequence, h_func

__all__ = [
    "OdeParams",
    "OdeTrajectory",
    "ZStarResult",
    "integrate",
    "z_star",
    "osgood_bound",
    "ode_rhs",
]

Z_OVERFLOW = 1e100
ZSTAR_GRID_START = 1e-6
ZSTAR_GRID_RATIO = 1.05

# Dormand-Prince 5(4) tableau
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)


@dataclass(frozen=True)
class OdeParams:
    C: float
    K: float
    deltas: DeltaSequence
    Z0: float
    constant_rhs_test_hook: bool = False
    product_tol: float = 1e-10

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be > 0, got {self.C}")
        if not self.K > 1:
            raise ValueError(f"K must be > 1, got {self.K}")
        if not self.Z0 > 0:
            raise ValueError(f"Z0 must be > 0, got {self.Z0}")


@dataclass
class OdeTrajectory:
    """Accepted samples plus step diagnostics.

    ``blowup`` brackets the escape time when the trajectory overflowed before
    t_end; ``non_physical_hook`` marks constant-rhs test trajectories.
    """

    t: np.ndarray
    z: np.ndarray
    rhs: np.ndarray
    dt: np.ndarray
    accepted: int
    rejected: int
    max_error_estimate: float
    blowup: Optional[Tuple[float, float]] = None
    non_physical_hook: bool = False


@dataclass(frozen=True)
class ZStarResult:
    found: bool
    z: Optional[float]
    epsilon: float
    search_cap: float
    grid_left_neighbor: Optional[float] = None


def ode_rhs(params: OdeParams) -> Callable[[float], float]:
    """Right-hand side C (1 + Z^K) H(Z); the test hook replaces it by C."""
    if params.constant_rhs_test_hook:
        return lambda z: params.C
    C, K, deltas, tol = params.C, params.K, params.deltas, params.product_tol

    def rhs(z: float) -> float:
        try:
            growth = 1.0 + z ** K
        except OverflowError:
            return math.inf
        return C * growth * h_func(z, deltas, tol)

    return rhs


def integrate(params: OdeParams, t_end: float, tol: float = 1e-8) -> OdeTrajectory:
    """Embedded 5(4) pair with proportional step control at relative ``tol``.

    Samples are the accepted steps.  The positive right-hand side makes Z
    strictly increasing; that is asserted as a sanity check on every step.
    """
    if t_end < 0:
        raise ValueError(f"t_end must be >= 0, got {t_end}")
    if not tol > 0:
        raise ValueError(f"tolerance must be > 0, got {tol}")
    f = ode_rhs(params)
    t, z = 0.0, params.Z0
    f0 = f(z)
    if not f0 > 0:
        raise RuntimeError(f"right-hand side must be positive, got {f0} at Z0")
    ts, zs, rhss, dts = [t], [z], [f0], [0.0]
    accepted = rejected = 0
    max_err = 0.0
    blowup = None

    dt = min(t_end, 0.01 * z / f0) if t_end > 0 else 0.0
    if t_end > 0 and dt <= 0:
        dt = t_end * 1e-6

    while t < t_end * (1.0 - 1e-15):
        dt = min(dt, t_end - t)
        ks = [f0]
        bad = False
        for row in _DP_A[1:]:
            stage_z = z + dt * sum(a * k for a, k in zip(row, ks))
            if not math.isfinite(stage_z) or stage_z > Z_OVERFLOW:
                bad = True
                break
            ks.append(f(stage_z))
        if not bad:
            z5 = z + dt * sum(b * k for b, k in zip(_DP_B5, ks))
            z4 = z + dt * sum(b * k for b, k in zip(_DP_B4, ks))
            err = abs(z5 - z4) / (tol * max(abs(z), abs(z5)))
            bad = not math.isfinite(z5) or z5 > Z_OVERFLOW
        if bad:
            if dt <= 1e-15 * max(t, 1.0):
                blowup = (t, t + dt)
                break
            dt *= 0.2
            rejected += 1
            continue
        if err <= 1.0:
            if not z5 > z:
                raise RuntimeError(
                    f"trajectory failed to increase at t={t} (rhs sign error)")
            t += dt
            z = z5
            f0 = ks[-1]  # FSAL: the last stage sits exactly at the new point
            ts.append(t)
            zs.append(z)
            rhss.append(f0)
            dts.append(dt)
            accepted += 1
            max_err = max(max_err, err * tol)
        else:
            rejected += 1
        dt *= min(5.0, max(0.2, 0.9 * (max(err, 1e-16)) ** -0.2))

    return OdeTrajectory(np.array(ts), np.array(zs), np.array(rhss),
                         np.array(dts), accepted, rejected, max_err,
                         blowup=blowup,
                         non_physical_hook=params.constant_rhs_test_hook)


def z_star(C: float, K: float, deltas: DeltaSequence, eps: float,
           search_cap: float, constant_rhs_test_hook: bool = False,
           product_tol: float = 1e-10) -> ZStarResult:
    """Smallest Z (geometric grid, ratio 1.05, bisection-refined) where the
    growth rate C (1 + Z^K) H(Z) drops below eps.

    Exhausting the grid below ``search_cap`` yields a not-found result; that
    outcome is data, not an error.
    """
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if not search_cap > ZSTAR_GRID_START:
        raise ValueError(f"search_cap must exceed {ZSTAR_GRID_START}")
    params = OdeParams(C=C, K=K, deltas=deltas, Z0=1.0,
                       constant_rhs_test_hook=constant_rhs_test_hook,
                       product_tol=product_tol)
    g = ode_rhs(params)
    prev = None
    zv = ZSTAR_GRID_START
    while zv <= search_cap:
        if g(zv) < eps:
            if prev is None:
                return ZStarResult(True, zv, eps, search_cap, None)
            lo, hi = prev, zv
            while hi - lo > 1e-12 * hi:
                mid = math.sqrt(lo * hi)
                if g(mid) < eps:
                    hi = mid
                else:
                    lo = mid
            return ZStarResult(True, hi, eps, search_cap, prev)
        prev = zv
        zv *= ZSTAR_GRID_RATIO
    return ZStarResult(False, None, eps, search_cap, prev)


_MODULI = ("linear", "loglinear")


def _gamma_big(r: float) -> float:
    return r * math.log(math.e + r)


def osgood_bound(rho0: float, times: Sequence[float], gamma_values: Sequence[float],
                 modulus: str = "linear") -> np.ndarray:
    """Upper-bound samples G^{-1}(G(rho0) + int_0^t gamma) for the integral
    inequality with modulus Gamma.

    ``modulus`` is "linear" (Gamma(r) = r, the closed-form exponential bound)
    or "loglinear" (Gamma(r) = r log(e + r), evaluated by adaptive quadrature
    and bisection).  ``gamma_values`` are samples of gamma on ``times``;
    the running integral uses the trapezoid rule.  rho0 = 0 propagates to the
    identically-zero bound.
    """
    if rho0 < 0:
        raise ValueError(f"rho0 must be >= 0, got {rho0}")
    if modulus not in _MODULI:
        raise ValueError(f"modulus must be one of {_MODULI}, got {modulus!r}")
    times = np.asarray(times, dtype=float)
    gamma_values = np.asarray(gamma_values, dtype=float)
    if times.shape != gamma_values.shape or times.ndim != 1 or len(times) < 2:
        raise ValueError("times and gamma_values must be matching 1-D samples")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    running = np.concatenate(([0.0], cumulative_trapezoid(gamma_values, times)))
    if rho0 == 0.0:
        return np.zeros_like(times)
    if modulus == "linear":
        return rho0 * np.exp(running)

    def G(r: float) -> float:
        val, _ = quad(lambda s: 1.0 / _gamma_big(s), 1.0, r, limit=200)
        return val

    g0 = G(rho0)
    out = np.empty_like(times)
    for i, integral in enumerate(running):
        target = g0 + integral
        lo = hi = max(rho0, 1e-300)
        while G(hi) < target:
            hi *= 4.0
            if hi > 1e290:
                raise OverflowError("comparison bound escaped the double range")
        while G(lo) > target:
            lo /= 4.0
        if lo == hi:
            out[i] = lo
        else:
            out[i] = brentq(lambda r: G(r) - target, lo, hi, rtol=1e-13)
    return out
