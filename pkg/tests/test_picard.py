import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gaussian_state
from owc.coupling import boundary_data_V
from owc.errors import NoConvergence
from owc.model import BoundaryState, DomainLayout, FieldState
from owc.solver import PicardHistory, SolverConfig, cfl_dt, linearized_step, picard_solve, run, sidewall_data, step

CFG = SolverConfig(scheme="rusanov", ode_stepper="euler")


@pytest.fixture
def wave(layout):
    u = gaussian_state(layout, 0.02, -1.0, 0.5)
    u.q[:] = 0.01 * np.sin(layout.x)
    return u


class TestSidewallData:
    def test_inverse_of_V(self):
        assert sidewall_data(boundary_data_V(BoundaryState(0.3))) == (0.3, 0.3)
        assert sidewall_data([0.2, 1.0]) == (0.9, 1.1)


class TestLinearizedStep:
    def test_rest(self, p, rest):
        u, _ = rest
        out = linearized_step(0.01, u, u, [0.0, 0.0], p, CFG)
        assert np.all(out.zeta == 0) and np.all(out.q == 0)

    @given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 1000))
    def test_linearity(self, a, b, seed):
        from owc.model import PhysicalParams

        p = PhysicalParams()
        lay = DomainLayout(p, 4.0, 20, 12, 18)
        frozen = gaussian_state(lay, 0.02, -1.0, 0.5)
        rng = np.random.default_rng(seed)
        s1 = FieldState(lay, 1e-3 * rng.normal(size=lay.n_total), 1e-3 * rng.normal(size=lay.n_total))
        s2 = FieldState(lay, 1e-3 * rng.normal(size=lay.n_total), 1e-3 * rng.normal(size=lay.n_total))
        V1, V2 = 1e-3 * rng.normal(size=2), 1e-3 * rng.normal(size=2)
        dt = 0.5 * cfl_dt(frozen, p, 0.45)
        for bc in ("wall", "nonreflecting", "inflow"):
            cfg = CFG.with_(left_bc=bc)
            L1 = linearized_step(dt, frozen, s1, V1, p, cfg, left_data=1e-3)
            L2 = linearized_step(dt, frozen, s2, V2, p, cfg, left_data=-2e-3)
            comb = FieldState(lay, a * s1.zeta + b * s2.zeta, a * s1.q + b * s2.q)
            L12 = linearized_step(dt, frozen, comb, a * V1 + b * V2, p, cfg, left_data=a * 1e-3 - b * 2e-3)
            assert np.allclose(L12.zeta, a * L1.zeta + b * L2.zeta, rtol=0, atol=1e-12)
            assert np.allclose(L12.q, a * L1.q + b * L2.q, rtol=0, atol=1e-12)

    def test_fixed_point_is_direct_step(self, p, wave):
        G = BoundaryState(0.0, 0.0)
        dt = 0.5 * cfl_dt(wave, p, 0.45)
        direct, _ = step(dt, (wave, G), p, CFG)
        lin = linearized_step(dt, wave, wave, boundary_data_V(G), p, CFG, G)
        assert np.allclose(lin.zeta, direct.zeta, rtol=0, atol=1e-14)
        assert np.allclose(lin.q, direct.q, rtol=0, atol=1e-14)

    def test_transport_at_frozen_rest(self, p):
        # d'Alembert: a hump at rest splits into halves moving at +-sqrt(g h_s)
        lay = DomainLayout(p, 4.0, 160, 50, 70)
        rest = FieldState.rest(lay)
        u = FieldState.from_functions(lay, lambda x: 0.01 * np.exp(-(((x + 2.0) / 0.2) ** 2)))
        c = np.sqrt(p.g * p.h_s)
        dx = lay.dx("minus")
        dt = 0.4 * dx / c
        n = int(round(0.1 / dt))
        dt = 0.1 / n
        for _ in range(n):
            u = linearized_step(dt, rest, u, [0.0, 0.0], p, CFG)
        z, _ = u.domain("minus")
        x = lay.centers("minus")
        left, right = x < -2.0, x > -2.0
        xl = x[left][np.argmax(z[left])]
        xr = x[right][np.argmax(z[right])]
        assert abs(xl - (-2.0 - 0.1 * c)) <= dx
        assert abs(xr - (-2.0 + 0.1 * c)) <= dx


class TestPicard:
    def test_rest_converges_immediately(self, p, rest):
        res, hist = picard_solve(rest, p, SolverConfig(t_end=0.05, picard_tol=1e-12))
        assert hist.converged and hist.differences == [0.0]
        assert np.all(res.state.zeta == 0)

    def test_contracts_and_matches_direct(self, p):
        lay = DomainLayout(p, 4.0, 40, 25, 35)
        u = gaussian_state(lay, 0.01, -1.0, 0.5)
        cfg = SolverConfig(t_end=0.1, picard_tol=1e-12)
        res, hist = picard_solve((u, BoundaryState()), p, cfg)
        assert hist.converged
        assert all(r <= 0.5 for r in hist.ratios)
        direct = run((u, BoundaryState()), p, CFG.with_(t_end=0.1, dt=res.extras["dt"]))
        assert np.allclose(res.state.zeta, direct.state.zeta, rtol=0, atol=1e-11)
        assert np.allclose(res.state.q, direct.state.q, rtol=0, atol=1e-11)
        assert res.G.q_i == pytest.approx(direct.G.q_i, abs=1e-11)

    def test_no_convergence_carries_history(self, p):
        lay = DomainLayout(p, 4.0, 40, 25, 35)
        u = gaussian_state(lay, 0.01, -1.0, 0.5)
        with pytest.raises(NoConvergence) as ei:
            picard_solve((u, BoundaryState()), p, SolverConfig(t_end=0.05, picard_max_iter=2, picard_tol=1e-300))
        assert len(ei.value.history) == 2
        assert ei.value.max_iter == 2

    def test_history_helpers(self):
        h = PicardHistory([1.0, 0.1, 0.09, 0.01, 0.0])
        assert h.ratios == pytest.approx([0.1, 0.9, 1 / 9, 0.0])
        assert h.longest_contracting_run(0.5) == 2
