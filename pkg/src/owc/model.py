"""Physical parameters, device geometry and field containers.

The fluid domain (-L_ext, l_1) is split into three exterior sub-domains
where the shallow water equations are solved, plus the interior region
under the structure where only the discharge q_i(t) evolves::

    E_minus = (-L_ext, 0)      rest depth h_s
    E_plus_l = (0, l_0 - r)    rest depth h_0
    I        = (l_0 - r, l_0 + r)  zeta fixed to zeta_w, q = q_i(t)
    E_plus_r = (l_0 + r, l_1)  rest depth h_0, air pressure P_atm + P_ch(t)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import DimensionMismatch

DOMAINS = ("minus", "plus_l", "plus_r")


@dataclass(frozen=True)
class PhysicalParams:
    """Physical and device constants, SI units.

    ``K`` is the turbine resistance parameter; its unit is whatever makes
    ``gamma_1 = gamma * P_atm / (h_ch * K)`` a rate in 1/s.
    ``constant_pressure`` vents the chamber: both rates vanish and P_ch
    keeps its initial value.
    """

    g: float = 9.81
    rho: float = 1000.0
    h_s: float = 1.5
    h_0: float = 1.0
    zeta_w: float = -0.5
    l_0: float = 3.0
    r: float = 0.5
    l_1: float = 7.0
    gamma: float = 1.4
    P_atm: float = 101325.0
    h_ch: float = 2.0
    K: float = 14185.5
    constant_pressure: bool = False

    @property
    def h_w(self) -> float:
        """Water column height under the flat-bottomed structure."""
        return self.h_0 + self.zeta_w

    @property
    def s(self) -> float:
        return self.h_s - self.h_0

    @property
    def alpha(self) -> float:
        return 2.0 * self.r / self.h_w if self.h_w != 0 else math.inf

    @property
    def chamber_len(self) -> float:
        return self.l_1 - (self.l_0 + self.r)

    @property
    def gamma_1(self) -> float:
        if self.constant_pressure:
            return 0.0
        return self.gamma * self.P_atm / (self.h_ch * self.K) if self.h_ch * self.K != 0 else math.inf

    @property
    def gamma_2(self) -> float:
        if self.constant_pressure:
            return 0.0
        den = self.h_ch * self.chamber_len
        return self.gamma * self.P_atm / den if den != 0 else math.inf

    def with_(self, **changes) -> "PhysicalParams":
        return replace(self, **changes)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


@dataclass
class ValidationReport:
    """Outcome of a consistency check; empty ``violations`` means pass."""

    name: str
    violations: list[str] = field(default_factory=list)
    values: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        vals = ", ".join(f"{k}={v:.6g}" for k, v in self.values.items())
        head = f"{self.name}: {status}" + (f" ({vals})" if vals else "")
        return "\n".join([head] + [f"  - {v}" for v in self.violations])


def validate_params(p: PhysicalParams) -> ValidationReport:
    rep = ValidationReport("validate_params")
    # labels name the config keys involved
    checks = [
        (p.h_0 > 0, "h_0 > 0"),
        (p.s > 0, "h_s > h_0 (step height s = h_s - h_0 must be positive)"),
        (p.l_0 - p.r > 0, "l_0 - r > 0"),
        (p.r > 0, "r > 0"),
        (p.l_0 + p.r < p.l_1, "l_0 + r < l_1"),
        (p.h_w > 0, "zeta_w > -h_0 (structure must not touch the bottom)"),
        (p.h_w < p.h_0, "zeta_w < 0 (structure must be immersed)"),
        (p.gamma > 1, "gamma > 1"),
        (p.K > 0, "K > 0"),
        (p.h_ch > 0, "h_ch > 0"),
        (p.P_atm > 0, "P_atm > 0"),
        (p.rho > 0, "rho > 0"),
        (p.g > 0, "g > 0"),
    ]
    for name in PhysicalParams.field_names():
        if not math.isfinite(getattr(p, name)):
            rep.violations.append(f"{name} finite")
    rep.violations.extend(label for ok, label in checks if not ok)
    rep.values.update(s=p.s, h_w=p.h_w, alpha=p.alpha, gamma_1=p.gamma_1, gamma_2=p.gamma_2)
    return rep


@dataclass(frozen=True)
class DomainLayout:
    """Cell discretisation of the three exterior sub-domains.

    Cells are uniform inside each sub-domain and never straddle an
    interface. Flat arrays are ordered minus, plus_l, plus_r.
    """

    p: PhysicalParams
    L_ext: float = 4.0
    n_minus: int = 80
    n_pl: int = 50
    n_pr: int = 70

    def __post_init__(self):
        for name in ("n_minus", "n_pl", "n_pr"):
            if int(getattr(self, name)) < 4:
                raise ValueError(f"{name} must be >= 4")
        if self.L_ext <= 0:
            raise ValueError("L_ext must be positive")
        for a, b in self.bounds.values():
            if not b > a:
                raise ValueError("sub-domain with non-positive length")

    @property
    def bounds(self) -> dict[str, tuple[float, float]]:
        p = self.p
        return {
            "minus": (-self.L_ext, 0.0),
            "plus_l": (0.0, p.l_0 - p.r),
            "plus_r": (p.l_0 + p.r, p.l_1),
        }

    @property
    def counts(self) -> dict[str, int]:
        return {"minus": int(self.n_minus), "plus_l": int(self.n_pl), "plus_r": int(self.n_pr)}

    @property
    def n_total(self) -> int:
        return sum(self.counts.values())

    @property
    def slices(self) -> dict[str, slice]:
        out, start = {}, 0
        for name in DOMAINS:
            n = self.counts[name]
            out[name] = slice(start, start + n)
            start += n
        return out

    def dx(self, name: str) -> float:
        a, b = self.bounds[name]
        return (b - a) / self.counts[name]

    def edges(self, name: str) -> np.ndarray:
        a, b = self.bounds[name]
        return np.linspace(a, b, self.counts[name] + 1)

    def centers(self, name: str) -> np.ndarray:
        e = self.edges(name)
        return 0.5 * (e[:-1] + e[1:])

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.centers(n) for n in DOMAINS])

    @property
    def dx_cells(self) -> np.ndarray:
        return np.concatenate([np.full(self.counts[n], self.dx(n)) for n in DOMAINS])

    def h_rest_of(self, name: str) -> float:
        return self.p.h_s if name == "minus" else self.p.h_0

    @property
    def h_rest(self) -> np.ndarray:
        return np.concatenate([np.full(self.counts[n], self.h_rest_of(n)) for n in DOMAINS])

    @property
    def tags(self) -> np.ndarray:
        return np.concatenate([np.full(self.counts[n], n) for n in DOMAINS])

    def refined(self, factor: int) -> "DomainLayout":
        return replace(self, n_minus=self.n_minus * factor, n_pl=self.n_pl * factor, n_pr=self.n_pr * factor)


@dataclass
class FieldState:
    """Cell values of (zeta, q) on all exterior cells at time ``t``."""

    layout: DomainLayout
    zeta: np.ndarray
    q: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.zeta = np.asarray(self.zeta, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        n = self.layout.n_total
        if self.zeta.shape != (n,) or self.q.shape != (n,):
            raise DimensionMismatch(f"expected {n} cells, got {self.zeta.shape} and {self.q.shape}")

    @classmethod
    def rest(cls, layout: DomainLayout, t: float = 0.0) -> "FieldState":
        return cls(layout, np.zeros(layout.n_total), np.zeros(layout.n_total), t)

    @classmethod
    def from_functions(cls, layout: DomainLayout, zeta_fn, q_fn=None, t: float = 0.0) -> "FieldState":
        """Evaluate initial profiles at cell centres."""
        x = layout.x
        zeta = np.asarray(zeta_fn(x), dtype=float) * np.ones_like(x)
        q = np.zeros_like(x) if q_fn is None else np.asarray(q_fn(x), dtype=float) * np.ones_like(x)
        return cls(layout, zeta, q, t)

    def domain(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        sl = self.layout.slices[name]
        return self.zeta[sl], self.q[sl]

    @property
    def h(self) -> np.ndarray:
        return self.layout.h_rest + self.zeta

    def copy(self) -> "FieldState":
        return FieldState(self.layout, self.zeta.copy(), self.q.copy(), self.t)

    def mass(self) -> float:
        return float(np.sum(self.zeta * self.layout.dx_cells))

    def chamber_mean(self) -> float:
        z, _ = self.domain("plus_r")
        return float(np.mean(z))


@dataclass
class BoundaryState:
    """G = (q_i, P_ch): interior discharge [m^2/s] and chamber pressure variation [Pa]."""

    q_i: float = 0.0
    P_ch: float = 0.0
    t: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.q_i, self.P_ch], dtype=float)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.q_i) and math.isfinite(self.P_ch)


def check_initial_data(
    p: PhysicalParams,
    u0: FieldState,
    c0_min: float | None = None,
    c1_min: float | None = None,
) -> ValidationReport:
    """Check depth positivity and subcriticality of initial data cell-wise.

    Returns the attained minima ``c_0 = min h`` and
    ``c_1 = min(g h - q^2/h^2)`` over all exterior cells. Defaults for the
    thresholds are ``1e-3 h_0`` and ``1e-3 g h_0``.
    """
    # rest depths come from p, not from the layout's own params
    h_rest = np.concatenate([np.full(u0.layout.counts[n], p.h_s if n == "minus" else p.h_0) for n in DOMAINS])
    if u0.zeta.shape != h_rest.shape:
        raise DimensionMismatch("state does not match layout")
    c0_min = 1e-3 * p.h_0 if c0_min is None else c0_min
    c1_min = 1e-3 * p.g * p.h_0 if c1_min is None else c1_min
    h = h_rest + u0.zeta
    rep = ValidationReport("check_initial_data")
    c0 = float(np.min(h))
    with np.errstate(divide="ignore", invalid="ignore"):
        margin = np.where(h > 0, p.g * h - u0.q**2 / h**2, -np.inf)
    c1 = float(np.min(margin))
    rep.values.update(c_0=c0, c_1=c1)
    if not (np.all(np.isfinite(u0.zeta)) and np.all(np.isfinite(u0.q))):
        rep.violations.append("non-finite initial values")
    if not c0 >= c0_min:
        i = int(np.argmin(h))
        rep.violations.append(f"h>=c_0: min h={c0:.6g} < {c0_min:.6g} at x={u0.layout.x[i]:.6g}")
    if not c1 >= c1_min:
        i = int(np.argmin(margin))
        rep.violations.append(f"g h - q^2/h^2 >= c_1: min={c1:.6g} < {c1_min:.6g} at x={u0.layout.x[i]:.6g}")
    return rep


INITIAL_KINDS = ("rest", "gaussian", "file")


@dataclass(frozen=True)
class InitialSpec:
    """Recipe for initial data.

    ``gaussian`` sets zeta = amplitude * exp(-((x - center) / width)^2) with
    q = 0; ``file`` interpolates columns x, zeta, q of a CSV file onto the
    cell centres. ``q_i0`` and ``P_ch0`` initialise G.
    """

    kind: str = "rest"
    amplitude: float = 0.0
    center: float = 0.0
    width: float = 1.0
    path: str = ""
    q_i0: float = 0.0
    P_ch0: float = 0.0

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"unknown initial kind {self.kind!r}")
        if self.kind == "gaussian" and not self.width > 0:
            raise ValueError("gaussian width must be positive")
        if self.kind == "file" and not self.path:
            raise ValueError("file initial data needs a path")

    def build(self, layout: DomainLayout) -> tuple[FieldState, BoundaryState]:
        G = BoundaryState(self.q_i0, self.P_ch0)
        if self.kind == "rest":
            return FieldState.rest(layout), G
        if self.kind == "gaussian":
            a, c, w = self.amplitude, self.center, self.width
            return FieldState.from_functions(layout, lambda x: a * np.exp(-(((x - c) / w) ** 2))), G
        data = np.loadtxt(self.path, delimiter=",", skiprows=1, usecols=(0, 1, 2), ndmin=2)
        order = np.argsort(data[:, 0])
        x, z, q = data[order, 0], data[order, 1], data[order, 2]
        xc = layout.x
        return FieldState(layout, np.interp(xc, x, z), np.interp(xc, x, q)), G
