"""Boundary and transmission relations of the OWC model.

Covers continuity over the step at x=0, the side-wall transmission
conditions at x = l_0 -+ r together with the boundary ODE for
G = (q_i, P_ch), the solid wall at x = l_1, the wave-maker end of the
truncated domain, and the compatibility conditions of the initial data.

Boundary closures return the *face state* seen by the adjacent
sub-domain. Characteristic closures keep the invariant carried out of the
sub-domain and impose the transmission condition on the rest.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CriticalFlow, DimensionMismatch, DryState, NoSolution, SupercriticalInflow
from .model import BoundaryState, FieldState, PhysicalParams
from .swe_core import CellState, boundary_matrix, invariants_v, sqrt_gh_diff_v

TRACE_COLUMNS = (
    "t",
    "zeta_step_l", "q_step_l", "zeta_step_r", "q_step_r",
    "zeta_lw", "q_lw", "zeta_rw", "q_rw",
    "q_i", "P_ch",
)

SOLVE_RTOL = 1e-12


def jump(f_left: float, f_right: float) -> float:
    return f_right - f_left


def average(f_left: float, f_right: float) -> float:
    return 0.5 * (f_left + f_right)


@dataclass
class OdeInputs:
    zeta_l: float
    q_l: float
    zeta_r: float
    q_r: float
    G: BoundaryState


def bernoulli_head(zeta, q, h_0, g):
    """g zeta + q^2 / (2 (h_0 + zeta)^2), the quantity whose jump drives q_i."""
    h = h_0 + zeta
    return g * zeta + q * q / (2.0 * h * h)


def theta(inputs: OdeInputs, p: PhysicalParams) -> tuple[float, float]:
    """Right-hand side (dq_i/dt, dP_ch/dt) of the boundary ODE."""
    for z in (inputs.zeta_l, inputs.zeta_r):
        if not p.h_0 + z > 0:
            raise DryState(f"wall trace h={p.h_0 + z!r} <= 0")
    return theta_raw(inputs.G.q_i, inputs.G.P_ch, inputs.zeta_l, inputs.q_l, inputs.zeta_r, inputs.q_r, p)


def theta_raw(q_i, P_ch, zeta_l, q_l, zeta_r, q_r, p: PhysicalParams) -> tuple[float, float]:
    head_jump = bernoulli_head(zeta_r, q_r, p.h_0, p.g) - bernoulli_head(zeta_l, q_l, p.h_0, p.g)
    dq = -head_jump / p.alpha - P_ch / (p.alpha * p.rho)
    dP = -p.gamma_1 * P_ch + p.gamma_2 * q_i
    return dq, dP


def boundary_data_V(G: BoundaryState) -> np.ndarray:
    """V(G) = (0, q_i): target of (jump of q, mean of q) at the side walls."""
    return np.array([0.0, G.q_i])


def jacobian_V() -> np.ndarray:
    return np.array([[0.0, 0.0], [1.0, 0.0]])


def step_transmission(left_trace: CellState, right_trace: CellState) -> np.ndarray:
    """Residual of continuity of (zeta, q) over the step."""
    return np.array([right_trace.zeta - left_trace.zeta, right_trace.q - left_trace.q])


def wall_closure(inner_trace: CellState) -> CellState:
    """Mirror ghost for a solid wall: same zeta, opposite q."""
    return CellState(inner_trace.zeta, -inner_trace.q, inner_trace.h_rest)


# scalar root finding ---------------------------------------------------------

def _solve_monotone(f: Callable[[float], tuple[float, float]], x0: float, lo: float, hi: float, tol: float) -> float:
    """Safeguarded Newton on a bracketed monotone function.

    ``f`` returns (value, derivative). Raises NoSolution when the bracket
    does not change sign.
    """
    fx, dfx = f(x0)
    if fx == 0.0:
        return x0
    flo, _ = f(lo)
    fhi, _ = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise NoSolution(f"no sign change on [{lo:.6g}, {hi:.6g}]")
    increasing = fhi > 0
    x = x0 if lo < x0 < hi else 0.5 * (lo + hi)
    if x != x0:
        fx, dfx = f(x)
    for _ in range(200):
        if (fx > 0) == increasing:
            hi = x
        else:
            lo = x
        step = fx / dfx if dfx != 0 else math.inf
        xn = x - step
        if not (lo < xn < hi) or not math.isfinite(xn):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= tol or hi - lo <= tol:
            return xn
        x = xn
        fx, dfx = f(x)
        if fx == 0.0:
            return x
    raise NoSolution("root finder did not converge")


def _check_subcritical(zeta: float, q: float, h_rest: float, g: float, what: str, cls=CriticalFlow):
    h = h_rest + zeta
    if not h > 0:
        raise DryState(f"{what}: h={h:.6g} <= 0")
    if not g * h > (q / h) ** 2:
        raise cls(f"{what}: supercritical state zeta={zeta:.6g}, q={q:.6g}")


# closures --------------------------------------------------------------------

def inflow_closure(target_zeta: float, outgoing_invariant: float, p: PhysicalParams) -> CellState:
    """Face state at the wave-maker end of E_minus.

    ``outgoing_invariant`` is the rest-offset R_minus of the interior state;
    the face keeps it while its elevation is prescribed.
    """
    h_rest = p.h_s
    if not h_rest + target_zeta > 0:
        raise DryState(f"inflow target gives h={h_rest + target_zeta:.6g}")
    h = h_rest + target_zeta
    q = h * (outgoing_invariant + 2.0 * float(sqrt_gh_diff_v(target_zeta, h_rest, p.g)))
    _check_subcritical(target_zeta, q, h_rest, p.g, "inflow", SupercriticalInflow)
    return CellState(target_zeta, q, h_rest)


def nonreflecting_closure(inner: CellState, p: PhysicalParams) -> CellState:
    """Face state at the left end with no incoming wave (incoming invariant at rest)."""
    _, rm = invariants_v(inner.zeta, inner.q, inner.h_rest, p.g)
    c_rest = math.sqrt(p.g * inner.h_rest)
    c = c_rest - 0.25 * float(rm)
    if not c > 0:
        raise NoSolution("non-reflecting closure: no wet state")
    # difference of squares keeps the rest state exact
    zeta = (c - c_rest) * (c + c_rest) / p.g
    q = 0.5 * float(rm) * (inner.h_rest + zeta)
    return CellState(zeta, q, inner.h_rest)


def wall_face(inner: CellState, q_face: float, g: float, side: str) -> CellState:
    """Face state with prescribed discharge keeping the outgoing invariant.

    side="left" is the face at the right end of a sub-domain lying to the
    left of the wall (R_plus leaves), side="right" the opposite.
    """
    h_r = inner.h_rest
    _check_subcritical(inner.zeta, inner.q, h_r, g, f"{side} wall inner state")
    rp, rm = invariants_v(inner.zeta, inner.q, h_r, g)
    sgn = 1.0 if side == "left" else -1.0
    target = float(rp if side == "left" else rm)

    def f(z):
        h = h_r + z
        val = q_face / h + sgn * 2.0 * g * z / (math.sqrt(g * h) + math.sqrt(g * h_r)) - target
        der = -q_face / (h * h) + sgn * math.sqrt(g / h)
        return val, der

    h_crit = (q_face * q_face / g) ** (1.0 / 3.0)
    h_lo = max(h_crit * (1.0 + 1e-9), 1e-6 * h_r)
    z = _solve_monotone(f, inner.zeta, h_lo - h_r, 10.0 * h_r - h_r, SOLVE_RTOL * h_r)
    _check_subcritical(z, q_face, h_r, g, f"{side} wall face")
    return CellState(z, q_face, h_r)


def sidewall_closure(left_inner: CellState, right_inner: CellState, G: BoundaryState, p: PhysicalParams):
    """Face states at x = l_0 - r (left) and x = l_0 + r (right).

    Both carry q = q_i; zeta follows from the invariant leaving each
    sub-domain (R_plus on the left, R_minus on the right).
    """
    return wall_face(left_inner, G.q_i, p.g, "left"), wall_face(right_inner, G.q_i, p.g, "right")


def step_interface_state(left_inner: CellState, right_inner: CellState, p: PhysicalParams):
    """Single-valued (zeta*, q*) at the step from both outgoing invariants.

    Returns the interface state as seen from E_minus (rest depth h_s) and
    from E_plus_l (rest depth h_0).
    """
    g, hs, h0 = p.g, left_inner.h_rest, right_inner.h_rest
    _check_subcritical(left_inner.zeta, left_inner.q, hs, g, "step left inner state")
    _check_subcritical(right_inner.zeta, right_inner.q, h0, g, "step right inner state")
    rp, _ = invariants_v(left_inner.zeta, left_inner.q, hs, g)
    _, rm = invariants_v(right_inner.zeta, right_inner.q, h0, g)
    rp, rm = float(rp), float(rm)

    def f(z):
        hl, hr = hs + z, h0 + z
        cl, cr = math.sqrt(g * hl), math.sqrt(g * hr)
        ul = rp - 2.0 * g * z / (cl + math.sqrt(g * hs))
        ur = rm + 2.0 * g * z / (cr + math.sqrt(g * h0))
        return hl * ul - hr * ur, (ul - cl) - (ur + cr)

    z0 = 0.5 * (left_inner.zeta + right_inner.zeta)
    lo = -h0 * (1.0 - 1e-6)
    z = _solve_monotone(f, z0, lo, 9.0 * h0, SOLVE_RTOL * h0)
    q = (hs + z) * (rp - 2.0 * g * z / (math.sqrt(g * (hs + z)) + math.sqrt(g * hs)))
    _check_subcritical(z, q, hs, g, "step interface")
    _check_subcritical(z, q, h0, g, "step interface")
    return CellState(z, q, hs), CellState(z, q, h0)


# diagnostics -----------------------------------------------------------------

def interior_pressure(G: BoundaryState, dq_i_dt: float, p: PhysicalParams) -> tuple[float, float, float]:
    """Linear surface pressure under the structure, anchored at P_atm on the seaward wall.

    Returns (P(l_0 - r), P(l_0 + r), slope).
    """
    slope = -(p.rho / p.h_w) * dq_i_dt
    p_left = p.P_atm
    return p_left, p_left + slope * 2.0 * p.r, slope


def _edge_value(f: np.ndarray, at_end: bool) -> float:
    """Quadratic extrapolation of cell-centre values to the domain edge."""
    a, b, c = (f[-1], f[-2], f[-3]) if at_end else (f[0], f[1], f[2])
    return (15.0 * a - 10.0 * b + 3.0 * c) / 8.0


def _edge_slope(f: np.ndarray, dx: float, at_end: bool) -> float:
    """Second-order one-sided derivative at the domain edge from three centres."""
    if at_end:
        return (2.0 * f[-1] - 3.0 * f[-2] + f[-3]) / dx
    return (-2.0 * f[0] + 3.0 * f[1] - f[2]) / dx


@dataclass
class CompatibilityReport:
    order: int
    r0: np.ndarray
    r1: np.ndarray | None
    tol: float

    @property
    def norms(self) -> tuple[float, float | None]:
        n1 = None if self.r1 is None else float(np.linalg.norm(self.r1))
        return float(np.linalg.norm(self.r0)), n1

    @property
    def ok(self) -> bool:
        n0, n1 = self.norms
        return n0 <= self.tol and (n1 is None or n1 <= self.tol)

    def __str__(self) -> str:
        n0, n1 = self.norms
        s = f"compatibility_check(order={self.order}): {'PASS' if self.ok else 'FAIL'} |r0|={n0:.3e}"
        if n1 is not None:
            s += f" |r1|={n1:.3e}"
        return s + f" (tol {self.tol:.1e})"


def wall_traces(u0: FieldState) -> tuple[tuple[float, float], tuple[float, float]]:
    zl, ql = u0.domain("plus_l")
    zr, qr = u0.domain("plus_r")
    left = (_edge_value(zl, True), _edge_value(ql, True))
    right = (_edge_value(zr, False), _edge_value(qr, False))
    return left, right


def compatibility_check(u0: FieldState, G0: BoundaryState, order: int, p: PhysicalParams, tol: float = 1e-8) -> CompatibilityReport:
    """Residuals of the order-0 and order-1 corner compatibility conditions at the side walls."""
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    for name in ("plus_l", "plus_r"):
        if u0.layout.counts[name] < 3:
            raise DimensionMismatch("need at least three cells next to each wall")
    M = boundary_matrix()
    (zl, ql), (zr, qr) = wall_traces(u0)
    trace = np.array([zl, ql, zr, qr])
    r0 = M @ trace - boundary_data_V(G0)
    r1 = None
    if order >= 1:
        lay = u0.layout
        u1 = []
        for name, at_end, (z, q) in (("plus_l", True, (zl, ql)), ("plus_r", False, (zr, qr))):
            zc, qc = u0.domain(name)
            dx = lay.dx(name)
            dz, dq = _edge_slope(zc, dx, at_end), _edge_slope(qc, dx, at_end)
            h = p.h_0 + z
            if not h > 0:
                raise DryState("wall trace is dry")
            v = q / h
            u1 += [-dq, -((p.g * h - v * v) * dz + 2.0 * v * dq)]
        G1 = np.array(theta_raw(G0.q_i, G0.P_ch, zl, ql, zr, qr, p))
        r1 = M @ np.array(u1) - jacobian_V() @ G1
    return CompatibilityReport(order, r0, r1, tol)


# trace bookkeeping -----------------------------------------------------------

@dataclass
class TraceRecord:
    """Append-only time series of interface traces and G."""

    rows: list[tuple[float, ...]] = field(default_factory=list)
    zeta_end: list[float] = field(default_factory=list)

    def append(self, t, step_l: CellState, step_r: CellState, lw: CellState, rw: CellState, G: BoundaryState, zeta_end: float = math.nan):
        if self.rows and t < self.rows[-1][0]:
            raise ValueError("trace times must be non-decreasing")
        self.rows.append((t, step_l.zeta, step_l.q, step_r.zeta, step_r.q, lw.zeta, lw.q, rw.zeta, rw.q, G.q_i, G.P_ch))
        self.zeta_end.append(zeta_end)

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, column: str) -> np.ndarray:
        i = TRACE_COLUMNS.index(column)
        return np.array([r[i] for r in self.rows], dtype=float)

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow([f"{v:.17g}" for v in r])

    @classmethod
    def from_csv(cls, path) -> "TraceRecord":
        rec = cls()
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if tuple(header) != TRACE_COLUMNS:
                raise ValueError(f"unexpected trace columns {header}")
            for row in rd:
                rec.rows.append(tuple(float(v) for v in row))
                rec.zeta_end.append(math.nan)
        return rec
