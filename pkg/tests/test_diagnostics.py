import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from conftest import gaussian_state
from owc.coupling import TraceRecord
from owc.diagnostics import (
    closed_box_energy,
    convergence_study,
    energy_monitor,
    integrate_boundary_ode,
    linear_ode_solution,
    mass_drift,
    ode_scaling_test,
    spatial_norm,
    symmetrizer_energy,
    time_norm,
    trace_norms,
)
from owc.model import BoundaryState, DomainLayout, FieldState, InitialSpec
from owc.solver import SolverConfig, run
from owc.swe_core import CellState


class TestNorms:
    def test_spatial_l2(self, layout):
        u = FieldState(layout, np.ones(layout.n_total), np.zeros(layout.n_total))
        assert spatial_norm(u, 0) == pytest.approx(math.sqrt(4.0 + 2.5 + 3.5))

    @given(st.floats(0.1, 10.0), st.integers(0, 2))
    def test_homogeneous(self, lam, m):
        from owc.model import PhysicalParams

        lay = DomainLayout(PhysicalParams(), 4.0, 20, 12, 18)
        u = gaussian_state(lay, 0.02, -1.0, 0.5)
        v = FieldState(lay, lam * u.zeta, lam * u.q)
        assert spatial_norm(v, m) == pytest.approx(lam * spatial_norm(u, m), rel=1e-12)

    def test_monotone_in_m(self, layout):
        u = gaussian_state(layout, 0.02, -1.0, 0.5)
        n = [spatial_norm(u, m) for m in range(3)]
        assert n[0] < n[1] < n[2]

    def test_bad_m(self, layout):
        with pytest.raises(ValueError):
            spatial_norm(FieldState.rest(layout), 3)

    def test_time_norm_linear(self):
        t = np.linspace(0.0, 1.0, 1001)
        # int t^2 + int 1 = 4/3
        assert time_norm(t, t, 1) == pytest.approx(2.0 / math.sqrt(3.0), rel=1e-6)
        assert time_norm(t, t, 1) == pytest.approx(1.1547005, abs=1e-6)
        assert time_norm(t, t, 0) == pytest.approx(1.0 / math.sqrt(3.0), rel=1e-6)

    def test_time_norm_top_derivative(self):
        t = np.linspace(0.0, 1.0, 11)
        assert time_norm(t, t, 1, top_derivative=np.ones_like(t)) == pytest.approx(time_norm(t, t, 1), rel=1e-2)

    def _record(self, scale=1.0):
        rec = TraceRecord()
        for t in np.linspace(0, 1, 50):
            s = scale * math.sin(3 * t)
            c = CellState(0.1 * s, s, 1.0)
            rec.append(t, c, c, c, c, BoundaryState(0.1 * s, 10 * s))
        return rec

    def test_trace_norms(self, p):
        a, b = trace_norms(self._record(1.0), 1, p), trace_norms(self._record(2.0), 1, p)
        for k in ("step", "seaward_wall", "chamber_wall", "G"):
            assert b[k] == pytest.approx(2 * a[k], rel=1e-12)
        assert trace_norms(self._record(0.0), 1, p)["G_ext"] == 0.0
        assert trace_norms(self._record(1.0), 0)["step"] < a["step"]

    def test_trace_norms_empty(self):
        with pytest.raises(ValueError):
            trace_norms(TraceRecord())


class TestEnergy:
    def test_rest(self, p, rest):
        res = run(rest, p, SolverConfig(t_end=0.05))
        m = energy_monitor(res, p)
        assert np.all(m["energy"] == 0) and np.all(m["E_S"] == 0)
        assert mass_drift(res) == 0.0

    def test_quadratic(self, p, layout):
        u = gaussian_state(layout, 0.01, -1.0, 0.5)
        v = FieldState(layout, 2 * u.zeta, 2 * u.q)
        assert symmetrizer_energy(v, p) == pytest.approx(4 * symmetrizer_energy(u, p), rel=1e-14)

    def test_reflection_invariant(self, p, layout):
        u = gaussian_state(layout, 0.01, -1.0, 0.5)
        u.q[:] = 0.01 * np.cos(layout.x)
        v = FieldState(layout, u.zeta, -u.q)
        assert symmetrizer_energy(v, p) == pytest.approx(symmetrizer_energy(u, p), rel=1e-14)
        assert symmetrizer_energy(v, p, frozen=u) != pytest.approx(symmetrizer_energy(u, p, frozen=u))

    def test_closed_box_non_increasing(self):
        t, e = closed_box_energy(n=200, t_end=1.0)
        assert np.all(np.diff(e) <= 1e-12 * e[0])
        assert e[-1] > 0.5 * e[0]

    def test_energy_bounded_in_device(self, p, layout):
        res = run((gaussian_state(layout, 0.02, -1.5, 0.5), BoundaryState()), p, SolverConfig(t_end=1.0, snapshot_every=10))
        m = energy_monitor(res, p)
        assert np.max(m["ratio"]) <= 1.0 + 1e-9
        assert np.all(np.isfinite(m["E_S"]))


def _oracle(p, traces, T):
    zl, ql, zr, qr = traces

    def f(t, G):
        J = (p.g * zr + qr**2 / (2 * (p.h_0 + zr) ** 2)) - (p.g * zl + ql**2 / (2 * (p.h_0 + zl) ** 2))
        return [-J / p.alpha - G[1] / (p.alpha * p.rho), -p.gamma_1 * G[1] + p.gamma_2 * G[0]]

    return solve_ivp(f, (0, T), [0.0, 0.0], method="Radau", rtol=1e-12, atol=1e-14).y[:, -1]


class TestOdeScaling:
    def test_zero_traces(self, p):
        rep = ode_scaling_test(p, (0, 0, 0, 0), [0.1, 0.05, 0.025])
        assert rep.ok
        assert all(n == 0.0 for n in rep.norms)

    @pytest.mark.parametrize("traces", [(0.0, 0.0, 0.1, 0.0), (0.05, 0.02, -0.03, 0.01)])
    def test_analytic_solutions_agree(self, p, traces):
        T = 0.05
        exact = linear_ode_solution(p, traces, (0.0, 0.0), T)[0]
        ref = _oracle(p, traces, T)
        assert exact == pytest.approx(ref, rel=1e-8, abs=1e-12)
        _, G, _ = integrate_boundary_ode(p, traces, T, n_steps=2000)
        assert G[-1] == pytest.approx(ref, rel=1e-8, abs=1e-12)

    def test_sqrt_scaling(self, p):
        rep = ode_scaling_test(p, (0.0, 0.0, 0.1, 0.0), [0.1, 0.05, 0.025, 0.0125], n_steps=2000)
        assert rep.ok
        assert rep.exponent >= 0.45
        assert rep.analytic_error <= 1e-6
        n = rep.norms
        assert n[2] <= n[0] / 2

    def test_callable_traces(self, p):
        rep = ode_scaling_test(p, lambda t: (0.0, 0.0, 0.1 * math.cos(t), 0.0), [0.1, 0.05, 0.025], n_steps=1000)
        assert rep.analytic_error is None and rep.ok

    @pytest.mark.parametrize("T", [[0.1, 0.05], [0.05, 0.1, 0.01], [2.0, 1.0, 0.5]])
    def test_bad_T(self, p, T):
        with pytest.raises(ValueError):
            ode_scaling_test(p, (0, 0, 0, 0), T)


class TestConvergence:
    def test_rest_has_zero_error(self, p):
        rep = convergence_study(p, SolverConfig(t_end=0.05), [1, 2, 4], InitialSpec(), DomainLayout(p, 4.0, 8, 5, 7))
        assert all(e == 0.0 for e in rep.errors)
        assert "zero error" in rep.notes[0]

    def test_rusanov_order_positive(self, p):
        init = InitialSpec("gaussian", 0.02, -1.5, 0.7)
        rep = convergence_study(p, SolverConfig(t_end=0.3), [1, 2, 4], init, DomainLayout(p, 4.0, 20, 12, 18))
        assert rep.errors[1] < rep.errors[0]
        assert 0.3 < rep.fitted_order < 1.5

    @pytest.mark.parametrize("levels", [[1, 2], [1, 3, 4]])
    def test_bad_levels(self, p, levels):
        with pytest.raises(ValueError):
            convergence_study(p, SolverConfig(t_end=0.01), levels, InitialSpec())
