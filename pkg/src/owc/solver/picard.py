"""Picard iteration on the coupled system with frozen coefficients.

Each sweep solves, on a fixed time grid, the *linear* scheme obtained by
freezing every state-dependent coefficient at the previous iterate, with
side-wall data V(G) from a boundary ODE whose right-hand side is
evaluated on the previous iterate as well. The linear scheme is the exact
Roe-matrix factorisation of the forward-Euler Rusanov update, so a fixed
point of the iteration is the direct solution on the same grid.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .. import coupling
from ..coupling import TraceRecord
from ..errors import CriticalFlow, DryState, NoConvergence, NoSolution, ValidationError
from ..model import BoundaryState, FieldState, PhysicalParams
from ..swe_core import invariant_mean_coeffs_v, max_speed_v, roe_coeffs_v
from .direct import SimulationResult, SolverConfig, Traces, _cell_inner, _closures, cfl_dt, physical_energy, preflight

NAMES = ("minus", "plus_l", "plus_r")


def _rest_roe(z, q, h_rest, g):
    """Second row of A with F(u) = A u exactly, A the Roe matrix between rest and u."""
    return roe_coeffs_v(0.0 * z, 0.0 * q, z, q, h_rest, g)


def _face_flux(zf_frozen, qf_frozen, z, q, h_rest, g):
    a21, a22 = _rest_roe(zf_frozen, qf_frozen, h_rest, g)
    return q, a21 * z + a22 * q


def _mean_row(face, inner, sign, g):
    a, b = invariant_mean_coeffs_v(face.zeta, face.q, inner.zeta, inner.q, face.h_rest, g, sign)
    return float(a), float(b)


def sidewall_data(V_data) -> tuple[float, float]:
    """Discharges at the seaward and chamber walls from V = (jump q, mean q)."""
    V1, V2 = float(V_data[0]), float(V_data[1])
    return V2 - 0.5 * V1, V2 + 0.5 * V1


def linearized_step(
    dt: float,
    u_frozen: FieldState,
    state: FieldState,
    V_data,
    p: PhysicalParams,
    cfg: SolverConfig | None = None,
    G_frozen: BoundaryState | None = None,
    left_data: float = 0.0,
    frozen_traces: Traces | None = None,
) -> FieldState:
    """One forward-Euler step of the frozen-coefficient linear system.

    The result is linear in (``state``, ``V_data``, ``left_data``); all
    coefficients come from ``u_frozen`` (and ``G_frozen`` for the frozen
    side-wall faces). ``left_data`` is the prescribed elevation when the
    left end is an inflow boundary.
    """
    cfg = cfg or SolverConfig()
    g = p.g
    lay = u_frozen.layout
    G_frozen = G_frozen or BoundaryState()
    if frozen_traces is None:
        frozen_traces = _closures(_cell_inner(u_frozen.zeta, u_frozen.q, lay), G_frozen.q_i, u_frozen.t, lay, p, cfg)
    ft = frozen_traces
    fin = _cell_inner(u_frozen.zeta, u_frozen.q, lay)
    sin = _cell_inner(state.zeta, state.q, lay)
    q_l, q_r = sidewall_data(V_data)

    # side walls: prescribed discharge, outgoing invariant linearised about the frozen pair
    a, b = _mean_row(ft.lw, fin["plus_l_r"], 1.0, g)
    u_lw = (sin["plus_l_r"].zeta - (b / a) * (q_l - sin["plus_l_r"].q), q_l)
    a, b = _mean_row(ft.rw, fin["plus_r_l"], -1.0, g)
    u_rw = (sin["plus_r_l"].zeta - (b / a) * (q_r - sin["plus_r_l"].q), q_r)

    # step: both outgoing invariants, 2x2 solve
    aL, bL = _mean_row(ft.step_l, fin["minus_r"], 1.0, g)
    aR, bR = _mean_row(ft.step_r, fin["plus_l_l"], -1.0, g)
    sL, sR = sin["minus_r"], sin["plus_l_l"]
    mat = np.array([[aL, bL], [aR, bR]])
    rhs_ = np.array([aL * sL.zeta + bL * sL.q, aR * sR.zeta + bR * sR.q])
    u_step = tuple(np.linalg.solve(mat, rhs_))

    in_l = sin["minus_l"]
    if cfg.left_bc == "nonreflecting":
        rest = type(ft.left_end)(0.0, 0.0, p.h_s)
        a1, b1 = _mean_row(ft.left_end, rest, 1.0, g)
        a2, b2 = _mean_row(ft.left_end, fin["minus_l"], -1.0, g)
        mat = np.array([[a1, b1], [a2, b2]])
        u_left = tuple(np.linalg.solve(mat, np.array([0.0, a2 * in_l.zeta + b2 * in_l.q])))
    elif cfg.left_bc == "inflow":
        a2, b2 = _mean_row(ft.left_end, fin["minus_l"], -1.0, g)
        u_left = (left_data, in_l.q - (a2 / b2) * (left_data - in_l.zeta))
    else:
        u_left = None

    def wall_flux(inner_f, inner_s, hr, outward):
        # Rusanov flux between the inner state and its mirror image
        zf, qf = inner_f.zeta, inner_f.q
        s = float(max_speed_v(zf, qf, hr, g))
        f_in = _face_flux(zf, qf, inner_s.zeta, inner_s.q, hr, g)
        f_gh = _face_flux(zf, -qf, inner_s.zeta, -inner_s.q, hr, g)
        d = (0.0, -2.0 * inner_s.q)  # mirror minus inner
        if outward:  # wall on the right: (inner, ghost)
            return tuple(float(0.5 * (x + y) - 0.5 * s * dd) for x, y, dd in zip(f_in, f_gh, d))
        return tuple(float(0.5 * (x + y) + 0.5 * s * dd) for x, y, dd in zip(f_gh, f_in, d))

    def bface(face_f, u_face):
        f1, f2 = _face_flux(face_f.zeta, face_f.q, u_face[0], u_face[1], face_f.h_rest, g)
        return float(f1), float(f2)

    if u_left is None:
        left_f = wall_flux(fin["minus_l"], in_l, p.h_s, False)
    else:
        left_f = bface(ft.left_end, u_left)
    bflux = {
        "minus": (left_f, bface(ft.step_l, u_step)),
        "plus_l": (bface(ft.step_r, u_step), bface(ft.lw, u_lw)),
        "plus_r": (bface(ft.rw, u_rw), wall_flux(fin["plus_r_r"], sin["plus_r_r"], p.h_0, True)),
    }
    zeta_new = np.empty_like(state.zeta)
    q_new = np.empty_like(state.q)
    for name in NAMES:
        sl = lay.slices[name]
        hr = lay.h_rest_of(name)
        zf, qf = u_frozen.zeta[sl], u_frozen.q[sl]
        z, q = state.zeta[sl], state.q[sl]
        a21, a22 = _rest_roe(zf, qf, hr, g)
        F2c = a21 * z + a22 * q
        sp = max_speed_v(zf, qf, hr, g)
        s = np.maximum(sp[:-1], sp[1:])
        f1 = 0.5 * (q[:-1] + q[1:]) - 0.5 * s * (z[1:] - z[:-1])
        f2 = 0.5 * (F2c[:-1] + F2c[1:]) - 0.5 * s * (q[1:] - q[:-1])
        (l1, l2), (r1, r2) = bflux[name]
        F1 = np.concatenate(([l1], f1, [r1]))
        F2 = np.concatenate(([l2], f2, [r2]))
        lam = dt / lay.dx(name)
        zeta_new[sl] = z - lam * (F1[1:] - F1[:-1])
        q_new[sl] = q - lam * (F2[1:] - F2[:-1])
    return FieldState(lay, zeta_new, q_new, state.t + dt)


@dataclass
class PicardHistory:
    """Low-norm differences D_n between successive iterates and their ratios."""

    differences: list
    converged: bool = False

    @property
    def ratios(self) -> list:
        d = self.differences
        return [d[i + 1] / d[i] if d[i] > 0 else 0.0 for i in range(len(d) - 1)]

    def longest_contracting_run(self, bound: float = 0.5) -> int:
        best = cur = 0
        for r in self.ratios:
            cur = cur + 1 if r <= bound else 0
            best = max(best, cur)
        return best


def low_norm(dz, dq, dGq, dGP, dx_cells, dt, p: PhysicalParams) -> float:
    """max_k |du_k|_{L2(dx)} + |dG|_{L2(0,T)} on the fixed time grid.

    P_ch is measured as water head P_ch/(rho g) so both parts are in metres-based units.
    """
    space = np.sqrt(np.sum((dz**2 + dq**2) * dx_cells, axis=1))
    gsq = dGq**2 + (dGP / (p.rho * p.g)) ** 2
    gnorm = math.sqrt(max(float(trapezoid(gsq, dx=dt)), 0.0))
    return float(np.max(space)) + gnorm


def picard_grid(u0: FieldState, p: PhysicalParams, cfg: SolverConfig) -> tuple[int, float]:
    dt = cfg.dt if cfg.dt is not None else cfl_dt(u0, p, cfg.cfl)
    n = max(1, math.ceil(cfg.t_end / dt - 1e-12))
    return n, cfg.t_end / n


def picard_solve(initial, p: PhysicalParams, cfg: SolverConfig, force: bool = False):
    """Picard iteration up to ``cfg.t_end`` on a fixed forward-Euler/Rusanov grid.

    Returns ``(SimulationResult, PicardHistory)`` once the low-norm
    difference drops below ``cfg.picard_tol``. Raises NoConvergence with the
    history otherwise, including when an iterate leaves the wet
    subcritical regime.
    """
    u0, G0 = initial
    reports = preflight(initial, p)
    if not force and not all(r.ok for r in reports):
        raise ValidationError(reports)
    cfg = cfg.with_(scheme="rusanov", ode_stepper="euler")
    lay = u0.layout
    N, dt = picard_grid(u0, p, cfg)
    times = u0.t + dt * np.arange(N + 1)
    Z = np.tile(u0.zeta, (N + 1, 1))
    Q = np.tile(u0.q, (N + 1, 1))
    Gq = np.full(N + 1, G0.q_i)
    GP = np.full(N + 1, G0.P_ch)
    hist = PicardHistory([])
    wall0 = time.perf_counter()
    dxc = lay.dx_cells
    for it in range(cfg.picard_max_iter):
        Zn, Qn = np.empty_like(Z), np.empty_like(Q)
        Gqn, GPn = np.empty_like(Gq), np.empty_like(GP)
        Zn[0], Qn[0], Gqn[0], GPn[0] = u0.zeta, u0.q, G0.q_i, G0.P_ch
        cur = FieldState(lay, u0.zeta.copy(), u0.q.copy(), times[0])
        try:
            for k in range(N):
                fz = FieldState(lay, Z[k], Q[k], times[k])
                ft = _closures(_cell_inner(Z[k], Q[k], lay), Gq[k], times[k], lay, p, cfg)
                dqi, dP = coupling.theta_raw(Gq[k], GP[k], ft.lw.zeta, ft.lw.q, ft.rw.zeta, ft.rw.q, p)
                Gqn[k + 1] = Gqn[k] + dt * dqi
                GPn[k + 1] = GPn[k] + dt * dP
                V = coupling.boundary_data_V(BoundaryState(Gqn[k], GPn[k]))
                with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                    cur = linearized_step(dt, fz, cur, V, p, cfg, BoundaryState(Gq[k], GP[k]),
                                          cfg.forcing.target(times[k]), ft)
                Zn[k + 1], Qn[k + 1] = cur.zeta, cur.q
        except (DryState, CriticalFlow, NoSolution, np.linalg.LinAlgError) as e:
            raise NoConvergence(it + 1, hist.differences) from e
        if not (np.all(np.isfinite(Zn)) and np.all(np.isfinite(Qn)) and np.all(np.isfinite(Gqn))):
            raise NoConvergence(it + 1, hist.differences)
        D = low_norm(Zn - Z, Qn - Q, Gqn - Gq, GPn - GP, dxc, dt, p)
        hist.differences.append(D)
        Z, Q, Gq, GP = Zn, Qn, Gqn, GPn
        if D <= cfg.picard_tol:
            hist.converged = True
            break
    else:
        raise NoConvergence(cfg.picard_max_iter, hist.differences)

    rec = TraceRecord()
    series = {k: [] for k in ("t", "mass", "chamber_mean", "energy", "left_energy_flux", "dt")}
    for k in range(N + 1):
        fs = FieldState(lay, Z[k], Q[k], times[k])
        tr = _closures(_cell_inner(Z[k], Q[k], lay), Gq[k], times[k], lay, p, cfg)
        rec.append(times[k], tr.step_l, tr.step_r, tr.lw, tr.rw, BoundaryState(Gq[k], GP[k], times[k]), tr.end.zeta)
        le = tr.left_end
        series["t"].append(times[k])
        series["mass"].append(fs.mass())
        series["chamber_mean"].append(fs.chamber_mean())
        series["energy"].append(physical_energy(fs, p.g))
        series["left_energy_flux"].append(le.q * (le.q**2 / (2.0 * (p.h_s + le.zeta) ** 2) + p.g * le.zeta))
        series["dt"].append(dt if k < N else 0.0)
    final = FieldState(lay, Z[-1].copy(), Q[-1].copy(), times[-1])
    res = SimulationResult(
        state=final,
        G=BoundaryState(float(Gq[-1]), float(GP[-1]), times[-1]),
        traces=rec,
        series={k: np.asarray(v) for k, v in series.items()},
        snapshots=[u0.copy(), final.copy()],
        n_steps=N,
        wall_time=time.perf_counter() - wall0,
        params=p,
        config=cfg,
        initial=u0.copy(),
        G0=G0,
        extras={"iterates": (Z, Q, Gq, GP), "dt": dt},
    )
    return res, hist
