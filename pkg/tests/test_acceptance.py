"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest

from owc.cli import main
from owc.coupling import compatibility_check
from owc.diagnostics import chamber_identity, convergence_study, mass_drift, ode_scaling_test
from owc.errors import AssumptionViolated, NoConvergence, ValidationError
from owc.io import parse_config
from owc.model import BoundaryState, DomainLayout, FieldState, InitialSpec, PhysicalParams, check_initial_data
from owc.solver import Forcing, SolverConfig, cfl_dt, low_norm, picard_solve, step
from owc.solver import run as simulate
from owc.swe_core import CellState, boundary_matrix, eigen, jacobian, lopatinskii, symmetrizer

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}")
        assert ok, detail

    return emit


@pytest.fixture
def p():
    return PhysicalParams()


def test_01_algebraic_structure(report):
    t0 = time.perf_counter()
    worst_eig = worst_sym = 0.0
    spd = True
    for h, fr in itertools.product(np.linspace(0.2, 3.0, 50), np.linspace(-0.95, 0.95, 50)):
        u = CellState(h - 1.0, fr * h * math.sqrt(9.81 * h), 1.0)
        A = jacobian(u)
        lp, lm, ep, em = eigen(u)
        worst_eig = max(worst_eig, np.abs(A @ ep - lp * ep).max(), np.abs(A @ em - lm * em).max())
        S = symmetrizer(u)
        SA = S @ A
        worst_sym = max(worst_sym, np.abs(S - S.T).max(), np.abs(SA - SA.T).max())
        spd &= bool(np.all(np.linalg.eigvalsh(S) > 0))
    M = boundary_matrix()
    L, _ = lopatinskii(CellState(0.1, 0.2, 1.0), CellState(-0.05, 0.3, 1.0))
    det = L[0, 0] * L[1, 1] - L[0, 1] * L[1, 0]
    elapsed = time.perf_counter() - t0
    ok = (
        worst_eig <= 1e-12 and worst_sym <= 1e-12 and spd
        and np.array_equal(M, [[0, -1, 0, 1], [0, 0.5, 0, 0.5]])
        and np.array_equal(L, [[-1, 1], [0.5, 0.5]]) and det == -1.0
        and elapsed < 1.0
    )
    report(1, "algebraic structure", ok,
           f"eig residual {worst_eig:.1e}, symmetry {worst_sym:.1e}, det L = {det:g}, {elapsed:.2f} s")


def test_02_rest_state_preservation(report, p):
    t0 = time.perf_counter()
    lay = DomainLayout(p, 4.0, 400, 250, 350)
    u, G = FieldState.rest(lay), BoundaryState()
    cfg = SolverConfig()
    dt = cfl_dt(u, p, cfg.cfl)
    change = gmax = 0.0
    for _ in range(1000):
        un, G = step(dt, (u, G), p, cfg)
        change = max(change, np.abs(un.zeta - u.zeta).max(), np.abs(un.q - u.q).max())
        gmax = max(gmax, abs(G.q_i), abs(G.P_ch))
        u = un
    elapsed = time.perf_counter() - t0
    ok = lay.n_total == 1000 and change <= 1e-12 and gmax <= 1e-14 and elapsed < 10.0
    report(2, "rest-state preservation", ok, f"max cell change {change:.1e}, max |G| {gmax:.1e}, {elapsed:.1f} s")


def test_03_constant_pressure_reduction(report, p):
    pc = p.with_(constant_pressure=True)
    lay = DomainLayout(pc, 4.0, 80, 50, 70)
    cfg = SolverConfig(t_end=1.0, left_bc="inflow", forcing=Forcing(0.01, 2.0))
    # a hump next to the seaward wall makes q_i move within the run
    u0, G0 = InitialSpec("gaussian", 0.02, 1.25, 0.2).build(lay)
    res = simulate((u0, G0), pc, cfg)
    worst = float(np.max(np.abs(res.traces["P_ch"])))
    moved = float(np.max(np.abs(res.traces["q_i"])))
    ok = pc.gamma_2 == 0.0 and worst <= 1e-13 and moved > 1e-4
    report(3, "constant-pressure reduction", ok, f"max |P_ch| {worst:.1e} with max |q_i| {moved:.2e}")


def test_04_chamber_identity(report, p):
    t0 = time.perf_counter()
    resid, amp = [], []
    for k in (1, 2, 4):
        lay = DomainLayout(p, 4.0, 60 * k, 40 * k, 200 * k)
        cfg = SolverConfig(t_end=2.0, left_bc="inflow", forcing=Forcing(0.01, 2.0), ode_stepper="rk2")
        ci = chamber_identity(simulate((FieldState.rest(lay), BoundaryState()), p, cfg), p)
        resid.append(ci["max_residual"])
        amp.append(ci["amplitude"])
    elapsed = time.perf_counter() - t0
    ratios = [resid[i] / resid[i + 1] for i in range(2)]
    rel = resid[-1] / amp[-1]
    ok = all(r >= 1.7 for r in ratios) and rel <= 1e-3 and elapsed <= 120
    report(4, "chamber identity", ok,
           f"residuals {', '.join(f'{r:.2e}' for r in resid)} (ratios {ratios[0]:.2f}, {ratios[1]:.2f}), "
           f"finest relative {rel:.1e}, {elapsed:.1f} s")


def test_05_mass_conservation(report, p):
    lay = DomainLayout(p, 4.0, 80, 50, 70)
    u, G = InitialSpec("gaussian", 0.02, -1.5, 0.5).build(lay)
    res = simulate((u, G), p, SolverConfig(t_end=1.0, left_bc="wall"))
    drift = mass_drift(res)
    report(5, "mass conservation", drift <= 1e-8, f"relative drift {drift:.1e}")


def test_06_compatibility_gate(report, p):
    lay = DomainLayout(p, 4.0, 80, 50, 70)
    rest = FieldState.rest(lay)
    n_rest = [max(v or 0.0 for v in compatibility_check(rest, BoundaryState(), k, p).norms) for k in (0, 1)]
    bad = FieldState.rest(lay)
    bad.q[lay.slices["plus_r"]] = 0.1
    rep = compatibility_check(bad, BoundaryState(), 0, p)
    try:
        simulate((bad, BoundaryState()), p, SolverConfig(t_end=0.01))
        refused = False
    except ValidationError:
        refused = True
    ok = max(n_rest) <= 1e-12 and refused and np.allclose(rep.r0, [0.1, 0.05], rtol=0, atol=1e-12)
    report(6, "compatibility gate", ok,
           f"rest residuals {n_rest[0]:.1e}/{n_rest[1]:.1e}, violating datum r0 = ({rep.r0[0]:.12g}, {rep.r0[1]:.12g}), "
           f"refused={refused}")


def _direct_trajectory(u0, G0, p, dt, n):
    cfg = SolverConfig(scheme="rusanov", ode_stepper="euler", cfl=0.99)
    Z, Q, Gq, GP = [u0.zeta], [u0.q], [G0.q_i], [G0.P_ch]
    u, G = u0, G0
    for _ in range(n):
        u, G = step(dt, (u, G), p, cfg)
        Z.append(u.zeta)
        Q.append(u.q)
        Gq.append(G.q_i)
        GP.append(G.P_ch)
    return np.array(Z), np.array(Q), np.array(Gq), np.array(GP)


def test_07_picard_contraction(report, p):
    t0 = time.perf_counter()
    lay = DomainLayout(p, 4.0, 40, 25, 35)
    u0, G0 = InitialSpec("gaussian", 0.01, -1.0, 0.5).build(lay)
    tol = 1e-12
    T, runs = 0.2, []
    while T >= 0.0125:
        try:
            res, hist = picard_solve((u0, G0), p, SolverConfig(t_end=T, picard_tol=tol, picard_max_iter=40))
            runs.append((T, res, hist))
            if hist.longest_contracting_run(0.5) >= 4:
                break
        except NoConvergence:  # not contracting yet: shorten the window
            pass
        T /= 2
    assert runs, "no Picard run converged"
    T, res, hist = runs[-1]
    Z, Q, Gq, GP = res.extras["iterates"]
    dt = res.extras["dt"]
    Zd, Qd, Gqd, GPd = _direct_trajectory(u0, G0, p, dt, res.n_steps)
    agree = low_norm(Z - Zd, Q - Qd, Gq - Gqd, GP - GPd, lay.dx_cells, dt, p)
    elapsed = time.perf_counter() - t0
    run_len = hist.longest_contracting_run(0.5)
    ok = run_len >= 4 and agree <= 10 * tol and elapsed <= 120
    report(7, "Picard contraction", ok,
           f"T={T:g}: ratios {' '.join(f'{r:.1e}' for r in hist.ratios)} ({run_len} consecutive <= 0.5), "
           f"|picard - direct| = {agree:.1e}, {elapsed:.1f} s")


def test_08_ode_sqrt_T_scaling(report, p):
    rep = ode_scaling_test(p, (0.0, 0.0, 0.1, 0.0), [0.1, 0.05, 0.025, 0.0125])
    ok = rep.exponent >= 0.45 and rep.analytic_error <= 1e-6
    report(8, "ODE sqrt(T) scaling", ok, f"fitted exponent {rep.exponent:.3f}, analytic error {rep.analytic_error:.1e}")


def test_09_convergence_order(report, p):
    t0 = time.perf_counter()
    base = DomainLayout(p, 4.0, 40, 25, 35)
    init = InitialSpec("gaussian", 0.02, -1.5, 0.7)
    cfg = SolverConfig(t_end=0.6, cfl=0.4, ode_stepper="rk2")
    levels = [4, 8, 16, 32]
    rus = convergence_study(p, cfg.with_(scheme="rusanov"), levels, init, base, workers=4)
    mus = convergence_study(p, cfg.with_(scheme="muscl_rusanov"), levels, init, base, workers=4)
    elapsed = time.perf_counter() - t0
    ok = 0.8 <= rus.fitted_order <= 1.2 and 1.6 <= mus.fitted_order <= 2.2 and elapsed <= 300
    report(9, "convergence order", ok,
           f"rusanov {rus.fitted_order:.3f} (pairs {', '.join(f'{o:.2f}' for o in rus.orders)}), "
           f"muscl_rusanov {mus.fitted_order:.3f} (pairs {', '.join(f'{o:.2f}' for o in mus.orders)}), "
           f"{len(levels)} levels, {elapsed:.1f} s")


def test_10_assumption_monitoring(report, tmp_path):
    cfg_path = CONFIGS / "near_critical.cfg"
    b = parse_config(cfg_path)
    u0, G0 = b.build_initial()
    pre = check_initial_data(b.params, u0)
    c1 = pre.values["c_1"]
    try:
        simulate((u0, G0), b.params, b.solver)
        err = None
    except AssumptionViolated as e:
        err = e
    code = main(["--config", str(cfg_path), "--quiet", "--out", str(tmp_path), "simulate"])
    ok = (
        pre.ok and abs(c1 - 0.01) <= 1e-3
        and err is not None and err.t > 0 and err.location is not None
        and np.all(np.isfinite(err.last_state[0].zeta)) and np.all(np.isfinite(err.last_state[0].q))
        and code == 3
    )
    where = "none" if err is None else f"t={err.t:.3f} s at x={err.location:g} ({err.where})"
    report(10, "assumption monitoring", ok, f"initial margin c_1={c1:.4f}, aborted {where}, exit code {code}")
