"""Exception types raised across the package."""

from __future__ import annotations


class OWCError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(OWCError, ValueError):
    pass


class DryState(OWCError):
    """Water depth h = h_rest + zeta is not positive."""


class CriticalFlow(OWCError):
    """Flow is critical or supercritical (g h <= q^2 / h^2)."""


class SupercriticalInflow(CriticalFlow):
    pass


class Singular(OWCError):
    pass


class NotDissipative(OWCError):
    pass


class NoSolution(OWCError):
    """A boundary reconstruction equation has no wet subcritical root."""


class CflViolation(OWCError):
    pass


class ValidationError(OWCError):
    """Raised when a run is refused because pre-run checks failed."""

    def __init__(self, reports):
        self.reports = list(reports)
        lines = [str(r) for r in self.reports if not r.ok]
        super().__init__("validation failed:\n" + "\n".join(lines))


class AssumptionViolated(OWCError):
    """Depth or subcriticality was lost during a run.

    Attributes:
        t: simulation time of the failure [s]
        location: x coordinate of the offending cell or interface [m], or None
        where: short label of the sub-domain or interface
    """

    def __init__(self, t: float, location: float | None, where: str, detail: str = ""):
        self.t = t
        self.location = location
        self.where = where
        self.detail = detail
        loc = "?" if location is None else f"{location:.6g}"
        super().__init__(f"assumption violated at t={t:.6g} s, x={loc} m ({where}): {detail}")


class NoConvergence(OWCError):
    def __init__(self, max_iter: int, history):
        self.max_iter = max_iter
        self.history = list(history)
        super().__init__(f"Picard iteration did not converge in {max_iter} iterations")


class ParseError(OWCError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class UnknownKey(ParseError):
    pass


class MissingKey(ParseError):
    pass
