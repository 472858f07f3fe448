"""Explicit finite-volume integration of the coupled PDE-ODE system.

Each exterior sub-domain is updated conservatively with interior fluxes
from :mod:`owc.solver.schemes`. Fluxes on interfaces and walls come from
the closures in :mod:`owc.coupling`; the boundary ODE for (q_i, P_ch) is
advanced inside the same Runge-Kutta stages, so traces entering it are the
face states of the current stage.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .. import coupling
from ..coupling import TraceRecord
from ..errors import (
    AssumptionViolated,
    CflViolation,
    CriticalFlow,
    DryState,
    NoSolution,
    ValidationError,
)
from ..model import (
    BoundaryState,
    DomainLayout,
    FieldState,
    PhysicalParams,
    check_initial_data,
    validate_params,
)
from ..swe_core import CellState, flux_v, invariants_v, max_speed_v
from .schemes import INTERIOR_FLUX, SCHEMES, muscl_faces

LEFT_BCS = ("wall", "nonreflecting", "inflow")
STEPPERS = ("euler", "rk2", "rk4")


@dataclass(frozen=True)
class Forcing:
    """Prescribed elevation A sin(omega t) at the wave-maker end."""

    amplitude: float = 0.0
    omega: float = 1.0

    def target(self, t: float) -> float:
        return self.amplitude * math.sin(self.omega * t)


@dataclass(frozen=True)
class SolverConfig:
    """Time-integration settings.

    ``dt`` fixes the step (checked against the CFL bound every step);
    otherwise the step is ``cfl`` times the CFL limit. ``h_min`` and
    ``c1_min`` are the runtime thresholds for depth and g h - v^2.
    """

    cfl: float = 0.45
    t_end: float = 1.0
    scheme: str = "rusanov"
    ode_stepper: str = "rk2"
    picard: bool = False
    picard_max_iter: int = 40
    picard_tol: float = 1e-10
    record_every: int = 1
    dt: float | None = None
    snapshot_every: int = 0
    left_bc: str = "wall"
    forcing: Forcing = field(default_factory=Forcing)
    h_min: float = 0.0
    c1_min: float = 0.0

    def __post_init__(self):
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.ode_stepper not in STEPPERS:
            raise ValueError(f"unknown ode_stepper {self.ode_stepper!r}")
        if self.left_bc not in LEFT_BCS:
            raise ValueError(f"unknown left_bc {self.left_bc!r}")
        if self.picard_max_iter < 1 or not self.picard_tol > 0:
            raise ValueError("picard_max_iter >= 1 and picard_tol > 0 required")
        if self.record_every < 1 or self.snapshot_every < 0:
            raise ValueError("record_every >= 1 and snapshot_every >= 0 required")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")

    def with_(self, **changes) -> "SolverConfig":
        from dataclasses import replace

        return replace(self, **changes)


class Traces(NamedTuple):
    left_end: CellState
    step_l: CellState
    step_r: CellState
    lw: CellState
    rw: CellState
    end: CellState


@dataclass(frozen=True)
class SimulationResult:
    state: FieldState
    G: BoundaryState
    traces: TraceRecord
    series: dict
    snapshots: list
    n_steps: int
    wall_time: float
    params: PhysicalParams
    config: SolverConfig
    initial: FieldState
    G0: BoundaryState
    extras: dict = field(default_factory=dict)


def _tag(err, where: str, x: float):
    if not hasattr(err, "where"):
        err.where, err.location = where, x
    return err


# semi-discrete right-hand side ----------------------------------------------

def _left_end_face(inner: CellState, t: float, p: PhysicalParams, cfg: SolverConfig) -> CellState:
    if cfg.left_bc == "wall":
        return coupling.wall_closure(inner)
    if cfg.left_bc == "nonreflecting":
        return coupling.nonreflecting_closure(inner, p)
    _, rm = invariants_v(inner.zeta, inner.q, inner.h_rest, p.g)
    return coupling.inflow_closure(cfg.forcing.target(t), float(rm), p)


def _closures(inner: dict, q_i: float, t: float, layout: DomainLayout, p: PhysicalParams, cfg: SolverConfig) -> Traces:
    """Face states on all sub-domain ends from the adjacent inner states."""
    b = layout.bounds
    try:
        left_end = _left_end_face(inner["minus_l"], t, p, cfg)
    except (DryState, CriticalFlow, NoSolution) as e:
        raise _tag(e, "left end", b["minus"][0])
    try:
        step_l, step_r = coupling.step_interface_state(inner["minus_r"], inner["plus_l_l"], p)
    except (DryState, CriticalFlow, NoSolution) as e:
        raise _tag(e, "step", 0.0)
    G = BoundaryState(q_i, 0.0)
    try:
        lw = coupling.wall_face(inner["plus_l_r"], G.q_i, p.g, "left")
    except (DryState, CriticalFlow, NoSolution) as e:
        raise _tag(e, "seaward wall", b["plus_l"][1])
    try:
        rw = coupling.wall_face(inner["plus_r_l"], G.q_i, p.g, "right")
    except (DryState, CriticalFlow, NoSolution) as e:
        raise _tag(e, "chamber wall", b["plus_r"][0])
    end = coupling.wall_closure(inner["plus_r_r"])
    return Traces(left_end, step_l, step_r, lw, rw, end)


def _cell_inner(zeta, q, layout: DomainLayout) -> dict:
    out = {}
    for name in ("minus", "plus_l", "plus_r"):
        sl = layout.slices[name]
        hr = layout.h_rest_of(name)
        z, qq = zeta[sl], q[sl]
        out[name + "_l"] = CellState(float(z[0]), float(qq[0]), hr)
        out[name + "_r"] = CellState(float(z[-1]), float(qq[-1]), hr)
    return out


def _ghost(face: CellState, inner: CellState) -> tuple[float, float]:
    return 2.0 * face.zeta - inner.zeta, 2.0 * face.q - inner.q


def rhs(zeta, q, q_i, P_ch, t, layout: DomainLayout, p: PhysicalParams, cfg: SolverConfig):
    """Time derivatives of all cell values and of (q_i, P_ch), plus the face traces."""
    g = p.g
    names = ("minus", "plus_l", "plus_r")
    inner = _cell_inner(zeta, q, layout)
    if cfg.scheme == "muscl_rusanov":
        prov = _closures(inner, q_i, t, layout, p, cfg)
        # ghost cells beyond each end: mirror at walls, extrapolated through the face otherwise
        ghosts = {
            "minus_l": _ghost(prov.left_end, inner["minus_l"]) if cfg.left_bc != "wall"
            else (inner["minus_l"].zeta, -inner["minus_l"].q),
            "minus_r": _ghost(prov.step_l, inner["minus_r"]),
            "plus_l_l": _ghost(prov.step_r, inner["plus_l_l"]),
            "plus_l_r": _ghost(prov.lw, inner["plus_l_r"]),
            "plus_r_l": _ghost(prov.rw, inner["plus_r_l"]),
            "plus_r_r": (inner["plus_r_r"].zeta, -inner["plus_r_r"].q),
        }
        faces = {}
        for name in names:
            sl = layout.slices[name]
            gl, gr = ghosts[name + "_l"], ghosts[name + "_r"]
            zL, zR = muscl_faces(zeta[sl], gl[0], gr[0])
            qL, qR = muscl_faces(q[sl], gl[1], gr[1])
            faces[name] = (zL, qL, zR, qR)
            hr = layout.h_rest_of(name)
            inner[name + "_l"] = CellState(float(zL[0]), float(qL[0]), hr)
            inner[name + "_r"] = CellState(float(zR[-1]), float(qR[-1]), hr)
    else:
        faces = {}
        for name in names:
            sl = layout.slices[name]
            faces[name] = (zeta[sl], q[sl], zeta[sl], q[sl])
    tr = _closures(inner, q_i, t, layout, p, cfg)
    iflux = INTERIOR_FLUX[cfg.scheme]

    def face_flux(u: CellState):
        f1, f2 = flux_v(u.zeta, u.q, u.h_rest, g)
        return float(f1), float(f2)

    def wall_flux(a: CellState, b: CellState, hr: float):
        f1, f2 = iflux(a.zeta, a.q, b.zeta, b.q, hr, g)
        return float(f1), float(f2)

    m_l, m_r = inner["minus_l"], inner["plus_r_r"]
    if cfg.left_bc == "wall":
        left_f = wall_flux(tr.left_end, m_l, p.h_s)
    else:
        left_f = face_flux(tr.left_end)
    bflux = {
        "minus": (left_f, face_flux(tr.step_l)),
        "plus_l": (face_flux(tr.step_r), face_flux(tr.lw)),
        "plus_r": (face_flux(tr.rw), wall_flux(m_r, tr.end, p.h_0)),
    }
    dz = np.empty_like(zeta)
    dq = np.empty_like(q)
    for name in names:
        sl = layout.slices[name]
        hr = layout.h_rest_of(name)
        zL, qL, zR, qR = faces[name]
        f1, f2 = iflux(zR[:-1], qR[:-1], zL[1:], qL[1:], hr, g)
        (a1, a2), (b1, b2) = bflux[name]
        F1 = np.concatenate(([a1], f1, [b1]))
        F2 = np.concatenate(([a2], f2, [b2]))
        dx = layout.dx(name)
        dz[sl] = -(F1[1:] - F1[:-1]) / dx
        dq[sl] = -(F2[1:] - F2[:-1]) / dx
    dqi, dP = coupling.theta_raw(q_i, P_ch, tr.lw.zeta, tr.lw.q, tr.rw.zeta, tr.rw.q, p)
    return dz, dq, dqi, dP, tr


# time stepping ---------------------------------------------------------------

def cfl_dt(u: FieldState, p: PhysicalParams, cfl: float) -> float:
    """Largest stable step cfl * min(dx / max|lambda|), also bounded by the ODE rates."""
    lay = u.layout
    with np.errstate(invalid="ignore", divide="ignore"):
        s = max_speed_v(u.zeta, u.q, lay.h_rest, p.g)
    if not np.all(np.isfinite(s)):
        raise DryState("non-finite wave speed")
    dt = cfl * float(np.min(lay.dx_cells / s))
    rate = max(p.gamma_1, math.sqrt(max(p.gamma_2 / (p.alpha * p.rho), 0.0)))
    if rate > 0:
        dt = min(dt, cfl / rate)
    return dt


def _advance(zeta, q, qi, P, t, dt, layout, p, cfg):
    """One step of the configured stepper on (zeta, q, q_i, P_ch); also returns first-stage traces."""

    def f(y, tt):
        dz, dq, da, db, tr = rhs(y[0], y[1], y[2], y[3], tt, layout, p, cfg)
        return (dz, dq, da, db), tr

    def axpy(y, a, k):
        return tuple(yi + a * ki for yi, ki in zip(y, k))

    y0 = (zeta, q, qi, P)
    k1, tr0 = f(y0, t)
    if cfg.ode_stepper == "euler":
        return (*axpy(y0, dt, k1), tr0)
    if cfg.ode_stepper == "rk2":
        y1 = axpy(y0, dt, k1)
        k2, _ = f(y1, t + dt)
        y2 = axpy(y1, dt, k2)
        return (*(0.5 * (a + b) for a, b in zip(y0, y2)), tr0)
    k2, _ = f(axpy(y0, 0.5 * dt, k1), t + 0.5 * dt)
    k3, _ = f(axpy(y0, 0.5 * dt, k2), t + 0.5 * dt)
    k4, _ = f(axpy(y0, dt, k3), t + dt)
    w = dt / 6.0
    out = tuple(y + w * (a + 2.0 * b + 2.0 * c + d) for y, a, b, c, d in zip(y0, k1, k2, k3, k4))
    return (*out, tr0)


def step(dt: float, state, p: PhysicalParams, cfg: SolverConfig):
    """Advance (FieldState, BoundaryState) by ``dt``.

    Raises CflViolation when dt exceeds the CFL limit of the current state.
    """
    u, G = state
    limit = cfl_dt(u, p, cfg.cfl)
    if dt > limit * (1.0 + 1e-12):
        raise CflViolation(f"dt={dt:.6g} exceeds CFL limit {limit:.6g}")
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        z, q, qi, P, _ = _advance(u.zeta, u.q, G.q_i, G.P_ch, u.t, dt, u.layout, p, cfg)
    t = u.t + dt
    return FieldState(u.layout, z, q, t), BoundaryState(float(qi), float(P), t)


def monitor(u: FieldState, G: BoundaryState, p: PhysicalParams, cfg: SolverConfig):
    """Raise AssumptionViolated if the state left the wet subcritical regime."""
    lay = u.layout
    if not G.finite:
        raise AssumptionViolated(u.t, lay.bounds["plus_l"][1], "interior", "non-finite q_i or P_ch")
    h = lay.h_rest + u.zeta
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        margin = p.g * h - (u.q / h) ** 2
    bad = ~np.isfinite(h) | ~np.isfinite(u.q) | ~(h > cfg.h_min) | ~(margin > cfg.c1_min)
    if np.any(bad):
        i = int(np.argmax(bad))
        detail = f"h={h[i]:.6g}, g h - v^2={margin[i]:.6g}"
        raise AssumptionViolated(u.t, float(lay.x[i]), str(lay.tags[i]), detail)


def physical_energy(u: FieldState, g: float) -> float:
    h = u.h
    return float(np.sum((u.q**2 / (2.0 * h) + 0.5 * g * u.zeta**2) * u.layout.dx_cells))


def preflight(initial, p: PhysicalParams) -> list:
    u0, G0 = initial
    reports = [validate_params(p), check_initial_data(p, u0)]
    if reports[0].ok and reports[1].ok:
        for order in (0, 1):
            reports.append(coupling.compatibility_check(u0, G0, order, p))
    return reports


def run(initial, p: PhysicalParams, cfg: SolverConfig, force: bool = False) -> SimulationResult:
    """Integrate from ``initial`` to ``cfg.t_end``.

    Refuses to start (ValidationError) when any pre-run check fails, unless
    ``force``. Loss of depth or subcriticality mid-run raises
    AssumptionViolated carrying the time, location and last good state.
    """
    u, G = initial
    reports = preflight(initial, p)
    if not force and not all(r.ok for r in reports):
        raise ValidationError(reports)
    lay = u.layout
    u0, G0 = u.copy(), BoundaryState(G.q_i, G.P_ch, G.t)
    rec = TraceRecord()
    series = {k: [] for k in ("t", "mass", "chamber_mean", "energy", "left_energy_flux", "dt")}
    snaps = [u.copy()]
    t0 = time.perf_counter()
    t_end = cfg.t_end
    n = 0
    zeta, q, qi, P, t = u.zeta.copy(), u.q.copy(), G.q_i, G.P_ch, u.t

    def record(tr: Traces, dt_used: float):
        cur = FieldState(lay, zeta, q, t)
        rec.append(t, tr.step_l, tr.step_r, tr.lw, tr.rw, BoundaryState(qi, P, t), zeta_end=tr.end.zeta)
        le = tr.left_end
        h_le = p.h_s + le.zeta
        series["t"].append(t)
        series["mass"].append(cur.mass())
        series["chamber_mean"].append(cur.chamber_mean())
        series["energy"].append(physical_energy(cur, p.g))
        series["left_energy_flux"].append(le.q * (le.q**2 / (2.0 * h_le**2) + p.g * le.zeta))
        series["dt"].append(dt_used)

    def fail(e, when):
        err = AssumptionViolated(when, getattr(e, "location", None), getattr(e, "where", "?"), str(e))
        err.last_state = (FieldState(lay, zeta, q, t), BoundaryState(qi, P, t))
        return err

    while t < t_end * (1.0 - 1e-12):
        cur = FieldState(lay, zeta, q, t)
        try:
            limit = cfl_dt(cur, p, cfg.cfl)
        except DryState as e:
            raise fail(e, t) from e
        if cfg.dt is not None:
            if cfg.dt > limit * (1.0 + 1e-12):
                raise CflViolation(f"dt={cfg.dt:.6g} exceeds CFL limit {limit:.6g} at t={t:.6g}")
            dt = cfg.dt
        else:
            dt = limit
        dt = min(dt, t_end - t)
        try:
            with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                zn, qn, qin, Pn, tr = _advance(zeta, q, qi, P, t, dt, lay, p, cfg)
        except (DryState, CriticalFlow, NoSolution) as e:
            raise fail(e, t) from e
        if n % cfg.record_every == 0:
            record(tr, dt)
        nxt_t = t + dt if t_end - (t + dt) > 1e-12 * t_end else t_end
        new_u, new_G = FieldState(lay, zn, qn, nxt_t), BoundaryState(float(qin), float(Pn), nxt_t)
        try:
            monitor(new_u, new_G, p, cfg)
        except AssumptionViolated as e:
            e.last_state = (FieldState(lay, zeta, q, t), BoundaryState(qi, P, t))
            raise
        zeta, q, qi, P, t = zn, qn, float(qin), float(Pn), nxt_t
        n += 1
        if cfg.snapshot_every and n % cfg.snapshot_every == 0:
            snaps.append(FieldState(lay, zeta.copy(), q.copy(), t))
    try:
        _, _, _, _, tr = rhs(zeta, q, qi, P, t, lay, p, cfg)
    except (DryState, CriticalFlow, NoSolution) as e:
        raise fail(e, t) from e
    record(tr, 0.0)
    final = FieldState(lay, zeta, q, t)
    if snaps[-1].t != t:
        snaps.append(final.copy())
    return SimulationResult(
        state=final,
        G=BoundaryState(qi, P, t),
        traces=rec,
        series={k: np.asarray(v, dtype=float) for k, v in series.items()},
        snapshots=snaps,
        n_steps=n,
        wall_time=time.perf_counter() - t0,
        params=p,
        config=cfg,
        initial=u0,
        G0=G0,
    )
