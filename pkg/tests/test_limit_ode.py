import math

import numpy as np
import pytest

from nselog.limit_ode import (
    OdeParams,
    integrate,
    ode_rhs,
    osgood_bound,
    z_star,
)
from nselog.nestedlog import DeltaSequence

E = math.e
EMPTY = DeltaSequence.explicit([])


def rk4_oracle(f, z0, t_end, dt):
    """Plain fixed-step RK4, independent of the adaptive path."""
    z = z0
    steps = round(t_end / dt)
    for _ in range(steps):
        k1 = f(z)
        k2 = f(z + 0.5 * dt * k1)
        k3 = f(z + 0.5 * dt * k2)
        k4 = f(z + dt * k3)
        z += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return z


def empty_h(z):
    # with no exponents the suppression function is L1(sqrt(z))^2 + L1^-4
    l1 = math.log(E + math.sqrt(z))
    return l1 ** 2 + l1 ** -4


class TestIntegrate:
    def test_constant_rhs_hook_linear_growth(self):
        params = OdeParams(C=2.0, K=2.0, deltas=EMPTY, Z0=1.0,
                           constant_rhs_test_hook=True)
        traj = integrate(params, t_end=3.0, tol=1e-10)
        assert traj.non_physical_hook
        assert traj.z[-1] == pytest.approx(1.0 + 2.0 * 3.0, rel=1e-10)
        assert traj.blowup is None

    def test_k2_battery_against_rk4_oracle(self):
        params = OdeParams(C=1.0, K=2.0, deltas=EMPTY, Z0=1.0)
        traj = integrate(params, t_end=0.1, tol=1e-10)
        f = lambda z: 1.0 * (1.0 + z * z) * empty_h(z)
        oracle = rk4_oracle(f, 1.0, 0.1, 1e-5)
        assert traj.t[-1] == pytest.approx(0.1, abs=1e-14)
        assert traj.z[-1] == pytest.approx(oracle, rel=1e-8)

    def test_monotone_increasing(self):
        params = OdeParams(C=0.5, K=2.75, deltas=DeltaSequence.power_law(1.0, 2.0),
                           Z0=0.3)
        traj = integrate(params, t_end=0.5, tol=1e-8)
        assert np.all(np.diff(traj.z) > 0)
        assert np.all(traj.rhs > 0)

    def test_tightening_tol_improves_accuracy(self):
        params = OdeParams(C=1.0, K=2.0, deltas=EMPTY, Z0=1.0)
        f = lambda z: (1.0 + z * z) * empty_h(z)
        reference = rk4_oracle(f, 1.0, 0.1, 1e-6)
        errs = []
        for tol in (1e-4, 1e-6, 1e-8, 1e-10):
            traj = integrate(params, t_end=0.1, tol=tol)
            errs.append(abs(traj.z[-1] - reference) / reference)
        assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))

    def test_blowup_reported_with_bracket(self):
        # strong superlinear growth escapes in finite time
        params = OdeParams(C=50.0, K=4.0, deltas=EMPTY, Z0=10.0)
        traj = integrate(params, t_end=50.0, tol=1e-8)
        assert traj.blowup is not None
        t_lo, t_hi = traj.blowup
        assert 0.0 <= t_lo <= t_hi <= 50.0
        assert traj.z[-1] <= 1e100

    def test_zero_t_end(self):
        params = OdeParams(C=1.0, K=2.0, deltas=EMPTY, Z0=1.0)
        traj = integrate(params, t_end=0.0)
        assert len(traj.t) == 1 and traj.t[0] == 0.0

    def test_step_diagnostics_recorded(self):
        params = OdeParams(C=1.0, K=2.0, deltas=EMPTY, Z0=1.0)
        traj = integrate(params, t_end=0.1, tol=1e-8)
        assert traj.accepted == len(traj.t) - 1
        assert traj.max_error_estimate <= 1e-8

    def test_param_validation(self):
        with pytest.raises(ValueError):
            OdeParams(C=0.0, K=2.0, deltas=EMPTY, Z0=1.0)
        with pytest.raises(ValueError):
            OdeParams(C=1.0, K=1.0, deltas=EMPTY, Z0=1.0)
        with pytest.raises(ValueError):
            OdeParams(C=1.0, K=2.0, deltas=EMPTY, Z0=0.0)


class TestZStar:
    def test_constant_mode_returns_first_grid_point(self):
        res = z_star(1.0, 2.0, EMPTY, eps=2.0, search_cap=10.0,
                     constant_rhs_test_hook=True)
        assert res.found
        assert res.z == pytest.approx(1e-6)
        assert res.grid_left_neighbor is None

    def test_unreachable_eps_not_found(self):
        res = z_star(1.0, 2.0, EMPTY, eps=1e-12, search_cap=100.0)
        assert not res.found
        assert res.z is None
        assert res.search_cap == 100.0

    def test_defining_inequality_and_left_neighbor(self):
        deltas = DeltaSequence.power_law(1.0, 2.0)
        params = OdeParams(C=1.0, K=2.75, deltas=deltas, Z0=1.0)
        g = ode_rhs(params)
        for eps in (0.1, 1.3, 2.5, 10.0):
            res = z_star(1.0, 2.75, deltas, eps=eps, search_cap=1e4)
            scan = np.geomspace(1e-6, 1e4, 4000)
            scan_hits = [z for z in scan if g(z) < eps]
            if res.found:
                assert g(res.z) < eps
                if res.grid_left_neighbor is not None:
                    assert g(res.grid_left_neighbor) >= eps
                    # the dense scan agrees on the crossing location
                    assert scan_hits and scan_hits[0] <= res.z * 1.06
            else:
                assert not scan_hits

    def test_invalid_eps(self):
        with pytest.raises(ValueError):
            z_star(1.0, 2.0, EMPTY, eps=0.0, search_cap=10.0)


class TestOsgoodBound:
    def test_gronwall_closed_form(self):
        times = np.linspace(0.0, 2.0, 41)
        rng = np.random.default_rng(7)
        for _ in range(100):
            rho0 = float(rng.uniform(0.01, 10.0))
            g = float(rng.uniform(0.0, 3.0))
            T = float(rng.uniform(0.1, 2.0))
            ts = np.linspace(0.0, T, 33)
            bound = osgood_bound(rho0, ts, np.full_like(ts, g), "linear")
            exact = rho0 * np.exp(g * ts)
            assert np.max(np.abs(bound - exact) / exact) <= 1e-8

    def test_zero_gamma_is_constant(self):
        ts = np.linspace(0.0, 1.0, 11)
        bound = osgood_bound(3.5, ts, np.zeros_like(ts), "loglinear")
        assert np.max(np.abs(bound - 3.5)) <= 1e-9

    def test_zero_rho0_stays_zero(self):
        ts = np.linspace(0.0, 1.0, 11)
        bound = osgood_bound(0.0, ts, np.ones_like(ts), "loglinear")
        assert np.all(bound == 0.0)

    def test_loglinear_against_ode_oracle(self):
        # the bound solves d rho/dt = gamma * rho * log(e + rho) exactly
        ts = np.linspace(0.0, 1.0, 21)
        bound = osgood_bound(1.0, ts, np.ones_like(ts), "loglinear")
        f = lambda r: r * math.log(E + r)
        oracle = rk4_oracle(f, 1.0, 1.0, 1e-5)
        assert bound[-1] == pytest.approx(oracle, rel=1e-6)
        assert np.all(np.diff(bound) > 0)

    def test_input_validation(self):
        ts = np.linspace(0.0, 1.0, 5)
        with pytest.raises(ValueError):
            osgood_bound(-1.0, ts, np.ones_like(ts))
        with pytest.raises(ValueError):
            osgood_bound(1.0, ts, np.ones(4))
        with pytest.raises(ValueError):
            osgood_bound(1.0, ts[::-1], np.ones_like(ts))
        with pytest.raises(ValueError):
            osgood_bound(1.0, ts, np.ones_like(ts), "cubic")
