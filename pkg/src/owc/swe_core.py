"""Pointwise algebra of the 1D shallow water system in (zeta, q) variables.

Fluxes, Jacobians, eigenstructure, Riemann invariants, the boundary matrix
of the 4x4 side-wall problem, symmetrizers and the Lopatinskii matrix.
Scalar entry points take a :class:`CellState`; the ``*_v`` helpers work on
numpy arrays and are what the solver calls per cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CriticalFlow, DryState, NotDissipative, Singular

DEFAULT_G = 9.81
KAPPA_0 = 0.4


@dataclass(frozen=True)
class CellState:
    zeta: float
    q: float
    h_rest: float

    @property
    def h(self) -> float:
        return self.h_rest + self.zeta


def _depth(u: CellState) -> float:
    h = u.h
    if not h > 0:
        raise DryState(f"h={h!r} <= 0")
    return h


def _subcritical(u: CellState, g: float) -> tuple[float, float, float]:
    h = _depth(u)
    v = u.q / h
    c2 = g * h
    if not c2 > v * v:
        raise CriticalFlow(f"g h={c2:.6g} <= (q/h)^2={v * v:.6g}")
    return h, v, math.sqrt(c2)


# vectorised kernels ---------------------------------------------------------

def flux_v(zeta, q, h_rest, g):
    """Rest-offset conservative flux (q, q^2/h + g (h^2 - h_rest^2)/2)."""
    h = h_rest + zeta
    return q, q * q / h + 0.5 * g * zeta * (2.0 * h_rest + zeta)


def speeds_v(zeta, q, h_rest, g):
    """Characteristic speeds (v - c, v + c)."""
    h = h_rest + zeta
    v = q / h
    c = np.sqrt(g * h)
    return v - c, v + c


def max_speed_v(zeta, q, h_rest, g):
    h = h_rest + zeta
    return np.abs(q / h) + np.sqrt(g * h)


def sqrt_gh_diff_v(zeta, h_rest, g):
    """sqrt(g h) - sqrt(g h_rest) without cancellation."""
    h = h_rest + zeta
    return g * zeta / (np.sqrt(g * h) + np.sqrt(g * h_rest))


def invariants_v(zeta, q, h_rest, g):
    """Rest-offset Riemann invariants q/h +- 2 (sqrt(g h) - sqrt(g h_rest))."""
    h = h_rest + zeta
    d = 2.0 * sqrt_gh_diff_v(zeta, h_rest, g)
    return q / h + d, q / h - d


def roe_coeffs_v(zl, ql, zr, qr, h_rest, g):
    """Second row (a21, a22) of the Roe matrix.

    F(u_r) - F(u_l) = [[0, 1], [a21, a22]] (u_r - u_l) holds exactly for the
    rest-offset flux when both states share ``h_rest``.
    """
    hl = h_rest + zl
    hr = h_rest + zr
    sl = np.sqrt(hl)
    sr = np.sqrt(hr)
    ubar = (ql / sl + qr / sr) / (sl + sr)
    return 0.5 * g * (hl + hr) - ubar * ubar, 2.0 * ubar


def invariant_mean_coeffs_v(za, qa, zb, qb, h_rest, g, sign):
    """Mean-value row (a, b) with R(u_a) - R(u_b) = a (zeta_a - zeta_b) + b (q_a - q_b).

    ``sign`` is +1 for R_plus and -1 for R_minus. The identity is exact.
    """
    ha = h_rest + za
    hb = h_rest + zb
    a = -qb / (ha * hb) + sign * 2.0 * g / (np.sqrt(g * ha) + np.sqrt(g * hb))
    return a, 1.0 / ha


# scalar operations ----------------------------------------------------------

def flux(u: CellState, g: float = DEFAULT_G) -> np.ndarray:
    _depth(u)
    f1, f2 = flux_v(u.zeta, u.q, u.h_rest, g)
    return np.array([f1, f2], dtype=float)


def jacobian(u: CellState, g: float = DEFAULT_G) -> np.ndarray:
    h = _depth(u)
    return np.array([[0.0, 1.0], [g * h - u.q**2 / h**2, 2.0 * u.q / h]])


def eigen(u: CellState, g: float = DEFAULT_G):
    """Eigenvalues and unit right eigenvectors of the Jacobian.

    Returns ``(lam_plus, lam_minus, e_plus, e_minus)`` with
    ``lam_pm = q/h +- sqrt(g h)`` and ``e_pm`` proportional to (1, lam_pm).
    """
    _, v, c = _subcritical(u, g)
    lp, lm = v + c, v - c
    ep = np.array([1.0, lp]) / math.hypot(1.0, lp)
    em = np.array([1.0, lm]) / math.hypot(1.0, lm)
    return lp, lm, ep, em


def left_eigenvectors(u: CellState, g: float = DEFAULT_G):
    """Rows l_pm = (+-sqrt(g h) - q/h, 1) with l_pm A = lam_pm l_pm."""
    _, v, c = _subcritical(u, g)
    return np.array([c - v, 1.0]), np.array([-c - v, 1.0])


def riemann_invariants(u: CellState, g: float = DEFAULT_G, offset: bool = False) -> tuple[float, float]:
    """R_pm = q/h +- 2 sqrt(g h); with ``offset`` the rest value is removed."""
    h = _depth(u)
    if offset:
        rp, rm = invariants_v(u.zeta, u.q, u.h_rest, g)
        return float(rp), float(rm)
    c = math.sqrt(g * h)
    return u.q / h + 2.0 * c, u.q / h - 2.0 * c


def boundary_matrix() -> np.ndarray:
    """M u = (jump of q, mean of q) for u = (zeta^-, q^-, zeta^+, q^+)."""
    return np.array([[0.0, -1.0, 0.0, 1.0], [0.0, 0.5, 0.0, 0.5]])


def boundary_data(q_i: float) -> np.ndarray:
    return np.array([0.0, q_i])


def system_matrix_4x4(u_minus: CellState, u_plus: CellState, g: float = DEFAULT_G) -> np.ndarray:
    """diag(-A(u^-), A(u^+)) of the unfolded side-wall problem."""
    A4 = np.zeros((4, 4))
    A4[:2, :2] = -jacobian(u_minus, g)
    A4[2:, 2:] = jacobian(u_plus, g)
    return A4


def lopatinskii(u_minus: CellState, u_plus: CellState, g: float = DEFAULT_G, scaling: str = "second"):
    """Lopatinskii matrix L = M E and the spectral norm of its inverse.

    E stacks the eigenvector of A(u^-) for q/h - sqrt(g h) above the one of
    A(u^+) for q/h + sqrt(g h). With ``scaling="second"`` both eigenvectors
    are scaled to second component 1; ``"unit"`` keeps them normalised.
    """
    _, _, _, em = eigen(u_minus, g)
    _, _, ep, _ = eigen(u_plus, g)
    if scaling == "second":
        em = em / em[1]
        ep = ep / ep[1]
    elif scaling != "unit":
        raise ValueError(f"unknown scaling {scaling!r}")
    E = np.zeros((4, 2))
    E[:2, 0] = em
    E[2:, 1] = ep
    L = boundary_matrix() @ E
    det = L[0, 0] * L[1, 1] - L[0, 1] * L[1, 0]
    if abs(det) < 1e-12:
        raise Singular(f"det L = {det:.3g}")
    inv_norm = float(np.linalg.norm(np.linalg.inv(L), 2))
    return L, inv_norm


def symmetrizer(u: CellState, g: float = DEFAULT_G) -> np.ndarray:
    """Friedrichs symmetrizer [[g h + (q/h)^2, -q/h], [-q/h, 1]]."""
    h, v, _ = _subcritical(u, g)
    return np.array([[g * h + v * v, -v], [-v, 1.0]])


def kreiss_symmetrizer_4x4(u_minus: CellState, u_plus: CellState, g: float = DEFAULT_G, eps: float = 0.25) -> np.ndarray:
    """Block symmetrizer that is maximal dissipative for the side-wall problem.

    Each block is sum_k w_k l_k^T l_k over left eigenvectors, with weight 1/2
    on the characteristic leaving through x=0 and eps/2 on the incoming one.
    ``eps=1`` gives back diag(S(u^-), S(u^+)).
    """
    lp_m, lm_m = left_eigenvectors(u_minus, g)
    lp_p, lm_p = left_eigenvectors(u_plus, g)
    S4 = np.zeros((4, 4))
    # x>0 block A(u+): lam_plus enters, lam_minus leaves
    S4[2:, 2:] = 0.5 * (eps * np.outer(lp_p, lp_p) + np.outer(lm_p, lm_p))
    # unfolded block -A(u-): -lam_minus enters, -lam_plus leaves
    S4[:2, :2] = 0.5 * (np.outer(lp_m, lp_m) + eps * np.outer(lm_m, lm_m))
    return S4


@dataclass(frozen=True)
class DissipativityCertificate:
    c_2: float
    C_2: float
    kernel_min: float


def _kernel_basis(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    _, s, vt = np.linalg.svd(M)
    rank = int(np.sum(s > 1e-12 * s[0]))
    return vt[rank:].T, vt[:rank].T


def boundary_dissipativity(S4: np.ndarray, A4: np.ndarray, M: np.ndarray | None = None) -> DissipativityCertificate:
    """Certify v^T S A v <= -c_2 |v|^2 + C_2 |M v|^2 for all v.

    ``kernel_min`` is the minimum of -v^T S A v / |v|^2 over ker M; the
    certificate uses c_2 = kernel_min / 2 and the smallest admissible C_2,
    obtained from the Schur complement of the kernel block.
    """
    M = boundary_matrix() if M is None else M
    Q = 0.5 * ((S4 @ A4) + (S4 @ A4).T)
    N, R = _kernel_basis(M)
    kmin = float(np.linalg.eigvalsh(-(N.T @ Q @ N))[0])
    if not kmin > 0:
        raise NotDissipative(f"min over ker M of -v^T S A v / |v|^2 = {kmin:.3g}")
    c2 = 0.5 * kmin
    Qc = Q + c2 * np.eye(Q.shape[0])
    Qnn = N.T @ Qc @ N
    Qnr = N.T @ Qc @ R
    Qrr = R.T @ Qc @ R
    schur = Qrr - Qnr.T @ np.linalg.solve(Qnn, Qnr)
    P = R.T @ M.T @ M @ R
    w, V = np.linalg.eigh(P)
    P_isqrt = V @ np.diag(w**-0.5) @ V.T
    C2 = float(np.linalg.eigvalsh(P_isqrt @ schur @ P_isqrt)[-1])
    return DissipativityCertificate(c2, max(C2, np.finfo(float).tiny), kmin)
