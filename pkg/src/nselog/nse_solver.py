"""Pseudo-spectral incompressible Navier-Stokes integration with monitoring.

Time scheme: integrating-factor RK4.  The viscous semigroup is applied
exactly through the per-mode factor exp(-nu |k|^2 dt); the projected,
dealiased advection term -P[(u.grad)u] is the only part integrated by the
Runge-Kutta stages, so pressure is never formed.  Divergence and mean are
re-cleaned after every step.

Each monitoring sample carries the norms entering the regularity criteria,
the energy-identity residual, and the empirical constant of the commutator
inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft as sfft

from .nestedlog import DeltaSequence, f1_inf, f2_inf, h_func
from .spectral import (
    Grid3,
    SpectralField,
    VectorField,
    _grid_arrays,
    advection_commutator,
    frac_laplacian,
    grad_sup_norm,
    inner_l2,
    to_physical,
    to_spectral,
    vector_sobolev_norm,
)

__all__ = [
    "FixedDt",
    "CflDt",
    "SolverConfig",
    "SolverState",
    "DiagnosticsRow",
    "BlowUpError",
    "CommutatorCheck",
    "IdentityResidualSeries",
    "taylor_green",
    "shear_mode",
    "random_divergence_free",
    "step",
    "run",
    "diagnostics_row",
    "energy_identity_residual",
    "commutator_bound_check",
    "TRAJECTORY_COLUMNS",
]

GRAD_SUP_ABORT = 1e12

TRAJECTORY_COLUMNS = ("t", "Y", "energy", "grad_l2_sq", "lap_l2_sq", "grad_sup",
                      "Z", "H_of_Y", "identity_residual", "commutator_ratio")


@dataclass(frozen=True)
class FixedDt:
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")


@dataclass(frozen=True)
class CflDt:
    number: float = 0.5

    def __post_init__(self):
        if not self.number > 0:
            raise ValueError(f"CFL number must be > 0, got {self.number}")


@dataclass(frozen=True)
class SolverConfig:
    nu: float
    t_end: float
    dt_policy: Union[FixedDt, CflDt]
    deltas: DeltaSequence
    dealias: bool = True
    monitor_stride: int = 1
    sigma: float = 0.1
    q: float = 4.0
    product_tol: float = 1e-10

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"viscosity must be > 0, got {self.nu}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")
        if not 0 < self.sigma < 0.5:
            raise ValueError(f"sigma must lie in (0, 1/2), got {self.sigma}")
        if not self.q > 3:
            raise ValueError(f"q must be > 3, got {self.q}")
        if self.monitor_stride < 1:
            raise ValueError(f"monitor_stride must be >= 1, got {self.monitor_stride}")


@dataclass(frozen=True)
class SolverState:
    t: float
    u: VectorField


@dataclass(frozen=True)
class DiagnosticsRow:
    t: float
    Y: float
    energy: float
    grad_l2_sq: float
    lap_l2_sq: float
    grad_sup: float
    Z: float
    H_of_Y: float
    identity_residual: float
    commutator_ratio: float

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, name) for name in TRAJECTORY_COLUMNS)


class CommutatorCheck(NamedTuple):
    lhs: float
    rhs: float
    ratio: float


class IdentityResidualSeries(NamedTuple):
    times: np.ndarray
    residuals: np.ndarray
    stencil_order: int


class BlowUpError(RuntimeError):
    """Raised when the trajectory leaves the representable regime; carries the
    partial trajectory and the last valid state."""

    def __init__(self, message: str, rows: List[DiagnosticsRow],
                 last_state: Optional[SolverState]):
        super().__init__(message)
        self.rows = rows
        self.last_state = last_state


# -- initial data -----------------------------------------------------------

def taylor_green(amplitude: float, grid: Grid3) -> SolverState:
    """2D Taylor-Green vortex embedded in the 3D box; decays exactly as
    amplitude * exp(-2 nu t) under the full equations."""
    X, Y, _ = grid.mesh()
    v = VectorField.from_physical(grid,
                                  amplitude * np.cos(X) * np.sin(Y),
                                  -amplitude * np.sin(X) * np.cos(Y),
                                  np.zeros_like(X))
    return SolverState(0.0, _clean(v))


def shear_mode(amplitude: float, k: int, grid: Grid3) -> SolverState:
    """Single shear mode amplitude*sin(k z) in x; its self-advection vanishes."""
    _, _, Z = grid.mesh()
    v = VectorField.from_physical(grid, amplitude * np.sin(k * Z),
                                  np.zeros_like(Z), np.zeros_like(Z))
    return SolverState(0.0, _clean(v))


def random_divergence_free(grid: Grid3, kmax: float, amplitude: float,
                           seed: int) -> SolverState:
    """Seeded band-limited divergence-free field, normalized to the requested
    sup amplitude; used for randomized test data."""
    rng = np.random.default_rng(seed)
    arrays = _grid_arrays(grid)
    comps = []
    for _ in range(3):
        f = to_spectral(rng.standard_normal((grid.n,) * 3), grid)
        coeffs = np.where(arrays["k2"] <= kmax ** 2 + 1e-12, f.coeffs, 0.0)
        coeffs[0, 0, 0] = 0.0
        comps.append(SpectralField(grid, coeffs))
    v = _clean(VectorField(*comps))
    sup = max(np.max(np.abs(to_physical(c))) for c in v.components)
    if sup > 0:
        scale = amplitude / sup
        v = VectorField(*[SpectralField(grid, c.coeffs * scale)
                          for c in v.components], divergence_free=True)
    return SolverState(0.0, v)


def _clean(v: VectorField) -> VectorField:
    """Leray-project and strip the mean, returning a flagged field."""
    arrays = _grid_arrays(v.grid)
    stacked = np.stack([c.coeffs for c in v.components])
    cleaned = _project(stacked, arrays)
    return _wrap(v.grid, cleaned)


def _wrap(grid: Grid3, stacked: np.ndarray) -> VectorField:
    return VectorField(*[SpectralField(grid, stacked[i].copy()) for i in range(3)],
                       divergence_free=True)


def _project(stacked: np.ndarray, arrays: dict) -> np.ndarray:
    kx, ky, kz = arrays["kx"], arrays["ky"], arrays["kz"]
    factor = (kx * stacked[0] + ky * stacked[1] + kz * stacked[2]) * arrays["inv_k2"]
    out = np.empty_like(stacked)
    out[0] = stacked[0] - kx * factor
    out[1] = stacked[1] - ky * factor
    out[2] = stacked[2] - kz * factor
    out[:, 0, 0, 0] = 0.0
    return out


def _nonlinear(stacked: np.ndarray, grid: Grid3, arrays: dict, mask,
               work: Optional[dict] = None) -> np.ndarray:
    """-P[(u.grad)u] in spectral space, dealiased around the products.

    The three velocity components and nine derivative fields go through one
    batched inverse transform; the three convective products return through
    one batched forward transform.  The 1/n^3 transform normalization is
    folded into the final scaling.  ``work`` holds reusable scratch buffers
    for a single-owner stepping loop.
    """
    n = grid.n
    n3 = n ** 3
    iks = arrays["ik"]
    if work is None:
        work = {}
    spec = work.get("spec")
    if spec is None:
        spec = work["spec"] = np.empty((12,) + stacked.shape[1:], dtype=np.complex128)
    conv = work.get("conv")
    if conv is None:
        conv = work["conv"] = np.empty((3, n, n, n))
    np.multiply(stacked, mask, out=spec[:3])
    for c in range(3):
        for j in range(3):
            np.multiply(spec[c], iks[j], out=spec[3 + 3 * c + j])
    phys = sfft.irfftn(spec, s=(n, n, n), axes=(1, 2, 3))
    for c in range(3):
        base = 3 + 3 * c
        np.multiply(phys[0], phys[base], out=conv[c])
        conv[c] += phys[1] * phys[base + 1]
        conv[c] += phys[2] * phys[base + 2]
    out = sfft.rfftn(conv, axes=(1, 2, 3))
    out *= mask
    out *= -float(n3)
    return _project(out, arrays)


_EXP_CACHE: dict = {}


def _viscous_factors(dt: float, nu: float, grid: Grid3, arrays: dict):
    key = (grid.n, grid.length, nu, dt)
    hit = _EXP_CACHE.get(key)
    if hit is None:
        if len(_EXP_CACHE) > 64:
            _EXP_CACHE.clear()
        half = np.exp(-nu * arrays["k2"] * (dt / 2.0))
        hit = (half, half * half)
        _EXP_CACHE[key] = hit
    return hit


def _step_arrays(stacked: np.ndarray, dt: float, nu: float, grid: Grid3,
                 arrays: dict, mask, work: Optional[dict] = None) -> np.ndarray:
    """One integrating-factor RK4 step on stacked coefficients."""
    half, full = _viscous_factors(dt, nu, grid, arrays)
    with np.errstate(invalid="ignore", over="ignore"):  # blow-up checked after
        n1 = _nonlinear(stacked, grid, arrays, mask, work)
        n2 = _nonlinear(half * (stacked + (dt / 2.0) * n1), grid, arrays, mask, work)
        n3 = _nonlinear(half * stacked + (dt / 2.0) * n2, grid, arrays, mask, work)
        n4 = _nonlinear(full * stacked + dt * half * n3, grid, arrays, mask, work)
        new = full * stacked + (dt / 6.0) * (full * n1 + 2.0 * half * (n2 + n3) + n4)
    return _project(new, arrays)


def _dt_for(policy, stacked: np.ndarray, grid: Grid3, remaining: float) -> float:
    if isinstance(policy, FixedDt):
        return min(policy.dt, remaining)
    n3 = grid.n ** 3
    sup = 0.0
    for i in range(3):
        sup = max(sup, float(np.max(np.abs(
            sfft.irfftn(stacked[i] * n3, s=(grid.n,) * 3)))))
    dx = grid.length / grid.n
    dt = policy.number * dx / max(sup, 1e-12)
    return min(dt, remaining)


def step(state: SolverState, config: SolverConfig,
         dt: Optional[float] = None) -> SolverState:
    """Advance one step (dt from the config policy unless given explicitly)."""
    grid = state.u.grid
    arrays = _grid_arrays(grid)
    mask = arrays["dealias"] if config.dealias else 1.0
    stacked = np.stack([c.coeffs for c in state.u.components])
    if dt is None:
        dt = _dt_for(config.dt_policy, stacked, grid, max(config.t_end - state.t, 0.0))
        if dt <= 0:
            dt = _dt_for(config.dt_policy, stacked, grid, math.inf)
    new = _step_arrays(stacked, dt, config.nu, grid, arrays, mask)
    if not np.isfinite(new).all():
        raise BlowUpError(f"non-finite coefficients after step at t={state.t}",
                          [], state)
    return SolverState(state.t + dt, _wrap(grid, new))


# -- diagnostics ------------------------------------------------------------

def _grad_l2_sq_physical(u: VectorField) -> float:
    """|grad u|^2 integrated by the grid rectangle rule (redundant check
    against the spectral Y; the two agree to roundoff)."""
    arrays = _grid_arrays(u.grid)
    n3 = u.grid.n ** 3
    total = 0.0
    for comp in u.components:
        for k in (arrays["kx"], arrays["ky"], arrays["kz"]):
            g = sfft.irfftn(comp.coeffs * (1j * k) * n3, s=(u.grid.n,) * 3)
            total += float(np.mean(g ** 2))
    return total * u.grid.volume


def commutator_bound_check(state: SolverState, config: SolverConfig) -> CommutatorCheck:
    """Both sides of the commutator inequality at unit constant.

    lhs is the L2 size of the half-Laplacian advection commutator; rhs is
    grad-sup times (sqrt(Y) * F1(Z) + lap-norm * F2(Z)).  The ratio lhs/rhs is
    the empirical constant (0 for a vanishing field or commutator).
    """
    u = state.u
    comm = advection_commutator(0.5, u, u)
    lhs = vector_sobolev_norm(comm, 0.0)
    gsup = grad_sup_norm(u)
    if gsup == 0.0:
        return CommutatorCheck(lhs, 0.0, 0.0)
    Z = vector_sobolev_norm(u, 1.0 + 2.0 * config.sigma)
    half_norm = vector_sobolev_norm(u, 1.0)
    lap_norm = vector_sobolev_norm(u, 2.0)
    rhs = gsup * (half_norm * f1_inf(Z, config.deltas, config.product_tol)
                  + lap_norm * f2_inf(Z, config.deltas, config.product_tol))
    ratio = lhs / rhs if rhs > 0 else 0.0
    return CommutatorCheck(lhs, rhs, ratio)


def _identity_rhs(u: VectorField) -> float:
    """-2 integral of [half-Laplacian, advection]u . (half-Laplacian u)."""
    comm = advection_commutator(0.5, u, u)
    return -2.0 * sum(inner_l2(c, frac_laplacian(g, 0.5))
                      for c, g in zip(comm.components, u.components))


def diagnostics_row(state: SolverState, config: SolverConfig,
                    identity_residual: float = 0.0) -> DiagnosticsRow:
    u = state.u
    Y = vector_sobolev_norm(u, 1.0) ** 2
    check = commutator_bound_check(state, config)
    return DiagnosticsRow(
        t=state.t,
        Y=Y,
        energy=vector_sobolev_norm(u, 0.0) ** 2,
        grad_l2_sq=_grad_l2_sq_physical(u),
        lap_l2_sq=vector_sobolev_norm(u, 2.0) ** 2,
        grad_sup=grad_sup_norm(u),
        Z=vector_sobolev_norm(u, 1.0 + 2.0 * config.sigma),
        H_of_Y=h_func(Y, config.deltas, config.product_tol),
        identity_residual=identity_residual,
        commutator_ratio=check.ratio,
    )


def _derivative_series(ts: np.ndarray, ys: np.ndarray) -> Tuple[np.ndarray, int]:
    """dY/dt on the sample times: fourth-order central where five uniform
    samples surround the point, second-order (one-sided at the ends) otherwise."""
    dydt = np.gradient(ys, ts, edge_order=2)
    order = 2
    if len(ts) >= 5:
        h = np.diff(ts)
        if np.allclose(h, h[0], rtol=1e-9, atol=1e-15):
            hh = h[0]
            for i in range(2, len(ts) - 2):
                dydt[i] = (-ys[i + 2] + 8 * ys[i + 1] - 8 * ys[i - 1]
                           + ys[i - 2]) / (12.0 * hh)
            order = 4
    return dydt, order


def _residuals_from_series(ts, ys, laps, rhss, nu) -> Tuple[np.ndarray, int]:
    dydt, order = _derivative_series(np.asarray(ts), np.asarray(ys))
    lhs = dydt + 2.0 * nu * np.asarray(laps)
    rhs = np.asarray(rhss)
    denom = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1.0)
    return np.abs(lhs - rhs) / denom, order


def energy_identity_residual(states: Sequence[SolverState], nu: float) -> IdentityResidualSeries:
    """Residual of the fractional-energy balance along stored states.

    Needs at least 3 uniformly spaced states; dY/dt uses a fourth-order
    central stencil when 5+ samples are available.  The residual is
    |LHS - RHS| / max(|LHS|, |RHS|, 1) per sample.
    """
    if len(states) < 3:
        raise ValueError(f"need at least 3 states, got {len(states)}")
    ts = np.array([s.t for s in states])
    h = np.diff(ts)
    if not np.allclose(h, h[0], rtol=1e-9, atol=1e-15):
        raise ValueError("states must be uniformly spaced in time")
    ys = [vector_sobolev_norm(s.u, 1.0) ** 2 for s in states]
    laps = [vector_sobolev_norm(s.u, 2.0) ** 2 for s in states]
    rhss = [_identity_rhs(s.u) for s in states]
    residuals, order = _residuals_from_series(ts, ys, laps, rhss, nu)
    return IdentityResidualSeries(ts, residuals, order)


def run(config: SolverConfig, initial: SolverState) -> Tuple[List[DiagnosticsRow], SolverState]:
    """Integrate to t_end, emitting a diagnostics row every monitor_stride
    steps (plus the initial and final states).

    On blow-up (non-finite coefficients or grad-sup beyond the abort
    threshold) the partial trajectory travels with the raised BlowUpError.
    """
    grid = initial.u.grid
    arrays = _grid_arrays(grid)
    mask = arrays["dealias"] if config.dealias else 1.0
    stacked = np.stack([c.coeffs for c in initial.u.components])

    samples: List[dict] = []

    def sample(state: SolverState):
        row = diagnostics_row(state, config)
        samples.append({"row": row, "rhs": _identity_rhs(state.u)})
        if row.grad_sup > GRAD_SUP_ABORT:
            raise BlowUpError(
                f"gradient sup-norm {row.grad_sup:.3e} exceeded abort threshold "
                f"at t={state.t}", _finalize(samples, config.nu), state)

    state = SolverState(initial.t, _wrap(grid, _project(stacked, arrays)))
    stacked = np.stack([c.coeffs for c in state.u.components])
    sample(state)

    t = state.t
    steps_done = 0
    work: dict = {}
    while t < config.t_end - 1e-14:
        dt = _dt_for(config.dt_policy, stacked, grid, config.t_end - t)
        try:
            stacked = _step_arrays(stacked, dt, config.nu, grid, arrays, mask, work)
        except FloatingPointError:
            raise BlowUpError(f"floating-point failure at t={t}",
                              _finalize(samples, config.nu),
                              SolverState(t, _wrap(grid, stacked)))
        t += dt
        steps_done += 1
        if not np.isfinite(stacked).all():
            raise BlowUpError(f"non-finite coefficients at t={t}",
                              _finalize(samples, config.nu), None)
        if steps_done % config.monitor_stride == 0 or t >= config.t_end - 1e-14:
            sample(SolverState(t, _wrap(grid, stacked)))

    rows = _finalize(samples, config.nu)
    return rows, SolverState(t, _wrap(grid, stacked))


def _finalize(samples: List[dict], nu: float) -> List[DiagnosticsRow]:
    """Fill identity residuals across the collected samples."""
    if not samples:
        return []
    if len(samples) < 3:
        return [s["row"] for s in samples]
    ts = [s["row"].t for s in samples]
    ys = [s["row"].Y for s in samples]
    laps = [s["row"].lap_l2_sq for s in samples]
    rhss = [s["rhs"] for s in samples]
    residuals, _ = _residuals_from_series(ts, ys, laps, rhss, nu)
    return [replace(s["row"], identity_residual=float(r))
            for s, r in zip(samples, residuals)]
