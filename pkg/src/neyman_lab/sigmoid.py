"""Sigmoid families, the sigmoidal regularizer and Condition-1 verification.

Both shipped sigmoids are evaluated through their lower tail
``min(phi(u), 1 - phi(u)) = phi(-|u|)`` so that probabilities close to 0 or 1
keep full relative precision. All functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "SigmoidKind", "SigmoidSpec", "ARCTAN", "ALGEBRAIC", "ConditionReport",
    "phi", "phi_inv", "inv_phi_derivs", "psi", "dpsi", "d2psi", "big_psi",
    "bregman_psi", "verify_condition", "default_grid",
]


class SigmoidKind(enum.Enum):
    ARCTAN = "arctan"
    ALGEBRAIC = "algebraic"


@dataclass(frozen=True)
class SigmoidSpec:
    """A sigmoid together with its Condition-1 constants ``(b1, b2, b3)``.

    Use :data:`ARCTAN` and :data:`ALGEBRAIC` (or :meth:`of`) for the
    verified constants. Other constants are accepted so that deliberately
    falsified specs can be checked.
    """

    kind: SigmoidKind
    b1: float
    b2: float
    b3: float

    def __post_init__(self):
        if not isinstance(self.kind, SigmoidKind):
            object.__setattr__(self, "kind", SigmoidKind(self.kind))
        if min(self.b1, self.b2, self.b3) <= 0:
            raise ValueError("sigmoid constants must be positive")

    @classmethod
    def of(cls, kind) -> "SigmoidSpec":
        kind = SigmoidKind(kind) if not isinstance(kind, SigmoidKind) else kind
        return ARCTAN if kind is SigmoidKind.ARCTAN else ALGEBRAIC

    @property
    def name(self) -> str:
        return self.kind.value


ARCTAN = SigmoidSpec(SigmoidKind.ARCTAN, math.pi, 2 ** 2.5 * math.pi / 3, 2 / math.pi)
ALGEBRAIC = SigmoidSpec(SigmoidKind.ALGEBRAIC, 2.0, 8.0, 1.0)


def _lower_tail(spec: SigmoidSpec, a):
    """phi(-a) for a >= 0."""
    if spec.kind is SigmoidKind.ARCTAN:
        with np.errstate(divide="ignore"):
            return np.arctan(1.0 / a) / np.pi
    return 0.5 / (1.0 + a)


def phi(spec: SigmoidSpec, u):
    """The sigmoid ``phi(u)``, a strictly increasing map onto (0, 1)."""
    u = np.asarray(u, dtype=float)
    low = _lower_tail(spec, np.abs(u))
    out = np.where(u < 0, low, 1.0 - low)
    return out[()] if out.ndim == 0 else out


def phi_inv(spec: SigmoidSpec, p):
    """Inverse sigmoid. Raises ``DomainError`` unless every ``p`` is in (0, 1)."""
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0) & (p < 1)):
        raise DomainError("phi_inv requires 0 < p < 1")
    q = np.minimum(p, 1.0 - p)
    if spec.kind is SigmoidKind.ARCTAN:
        a = np.where(q == 0.5, 0.0, 1.0 / np.tan(np.pi * q))
    else:
        a = 0.5 / q - 1.0
    out = np.where(p < 0.5, -a, a)
    return out[()] if out.ndim == 0 else out


def _atan_series(w2):
    """sum_{k>=1} (-1)^(k+1) w^(2k) / (2k+1), ten terms, given w^2 < 0.01."""
    total = np.zeros_like(w2)
    term = np.ones_like(w2)
    for k in range(1, 11):
        term = term * w2
        total = total + (-1) ** (k + 1) * term / (2 * k + 1)
    return total


def _one_minus_atan_ratio(w):
    """1 - arctan(w)/w for w > 0, without cancellation for small w."""
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.atleast_1d(1.0 - np.arctan(w) / w)
    small = np.atleast_1d(w < 0.1)
    if small.any():
        out[small] = _atan_series(np.atleast_1d(w)[small] ** 2)
    return out.reshape(w.shape)


def _derivs(spec: SigmoidSpec, u, right_at_zero: bool = False):
    u = np.asarray(u, dtype=float)
    if spec.kind is SigmoidKind.ARCTAN:
        # s = arctan(u) + pi/2 = pi * phi(u)
        a = np.abs(u)
        with np.errstate(divide="ignore"):
            tail = np.arctan(1.0 / a)
        s = np.where(u < 0, tail, np.pi - tail)
        one_u2 = 1.0 + u * u
        d1 = -np.pi / (one_u2 * s * s)
        # 1 + u*s; for u < 0 this is 1 - arctan(w)/w with w = 1/|u|
        with np.errstate(divide="ignore"):
            w = 1.0 / a
        bracket = np.where(u < 0, _one_minus_atan_ratio(np.where(u < 0, w, 1.0)), 1.0 + u * s)
        d2 = 2.0 * np.pi * bracket / (one_u2 * one_u2 * s ** 3)
    else:
        pos = u > 0 if not right_at_zero else u >= 0
        den = 2.0 * np.where(pos, u, 0.0) + 1.0
        d1 = np.where(pos, -2.0 / den ** 2, -2.0)
        d2 = np.where(pos, 8.0 / den ** 3, 0.0)
    return d1, d2


def inv_phi_derivs(spec: SigmoidSpec, u):
    """First and second derivatives of ``u -> 1/phi(u)`` in closed form.

    The derivatives of ``u -> 1/(1 - phi(u))`` follow by reflection:
    ``(-d1(-u), d2(-u))``. For the algebraic sigmoid the one-sided value
    from the left is returned at ``u = 0``.
    """
    d1, d2 = _derivs(spec, u)
    if np.ndim(d1) == 0:
        return float(d1), float(d2)
    return d1, d2


def psi(u):
    """Cubic-plus-quadratic regularizer ``u^2/2 + |u|^3``."""
    u = np.asarray(u, dtype=float)
    out = 0.5 * u * u + np.abs(u) ** 3
    return out[()] if out.ndim == 0 else out


def dpsi(u):
    u = np.asarray(u, dtype=float)
    out = u + 3.0 * u * np.abs(u)
    return out[()] if out.ndim == 0 else out


def d2psi(u):
    u = np.asarray(u, dtype=float)
    out = 1.0 + 6.0 * np.abs(u)
    return out[()] if out.ndim == 0 else out


def big_psi(spec: SigmoidSpec, p):
    """The probability-space regularizer ``psi(phi_inv(p))``."""
    return psi(phi_inv(spec, p))


def bregman_psi(v, u):
    """Bregman divergence ``psi(v) - psi(u) - dpsi(u) (v - u)``.

    Evaluated in a factored form that has no cancellation, so the result
    is nonnegative in floating point as well.
    """
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    av, au = np.abs(v), np.abs(u)
    diff2 = (v - u) ** 2
    same = (u * v) >= 0
    cubic = np.where(same, diff2 * (av + 2.0 * au), av ** 3 + 2.0 * au ** 3 + 3.0 * au * au * av)
    out = 0.5 * diff2 + cubic
    return out[()] if out.ndim == 0 else out


# -- Condition 1 verification ---------------------------------------------------

CLAUSES = ("Monotone", "Symmetry", "Convexity", "Bound3a", "Bound3b", "Bound3c")
VERIFY_TOL = 1e-9


@dataclass
class ConditionReport:
    kind: SigmoidKind
    grid_size: int
    max_violation: float
    violated_clause: str | None
    clause_violations: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violated_clause is None

    def table(self) -> str:
        lines = [f"sigmoid={self.kind.value} grid_size={self.grid_size}",
                 f"{'clause':<10} {'max_violation':>14}"]
        for c in CLAUSES:
            lines.append(f"{c:<10} {self.clause_violations.get(c, 0.0):>14.3e}")
        lines.append(f"result: {'PASS' if self.passed else 'FAIL (' + self.violated_clause + ')'}")
        return "\n".join(lines)


def default_grid(n: int = 10_001, half_width: float = 50.0) -> np.ndarray:
    return np.linspace(-half_width, half_width, n)


def verify_condition(spec: SigmoidSpec, grid=None, tol: float = VERIFY_TOL) -> ConditionReport:
    """Check every clause of the sigmoid condition on a grid.

    Violations are measured in absolute terms; clauses 2 and 3 carry a
    slack of ``tol`` to absorb rounding. The clause with the largest
    violation is reported when it exceeds ``tol``.
    """
    u = default_grid() if grid is None else np.asarray(grid, dtype=float)
    p = phi(spec, u)
    d1, d2 = _derivs(spec, u)
    # one-sided (right) second derivative for the u >= 0 lower bound
    _, d2r = _derivs(spec, u, right_at_zero=True)
    d2_refl = _derivs(spec, -u)[1]

    v = {}
    steps = np.diff(p)
    v["Monotone"] = float(max(0.0, -steps.min())) if steps.size else 0.0
    v["Symmetry"] = float(np.max(np.abs(p + phi(spec, -u) - 1.0)))
    v["Convexity"] = float(max(0.0, -min(d2.min(), d2_refl.min())))
    v["Bound3a"] = float(max(0.0, np.max(-d1 - spec.b1)))
    v["Bound3b"] = float(max(0.0, np.max(d2 - spec.b2 / (1.0 + np.abs(u)) ** 3)))
    nonneg = u >= 0
    if np.any(nonneg):
        v["Bound3c"] = float(max(0.0, np.max(spec.b3 / (1.0 + u[nonneg]) ** 3 - d2r[nonneg])))
    else:
        v["Bound3c"] = 0.0

    worst = max(CLAUSES, key=lambda c: v[c])
    max_violation = v[worst]
    violated = worst if max_violation > tol else None
    return ConditionReport(spec.kind, int(u.size), max_violation, violated, v)
