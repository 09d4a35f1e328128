"""Small dense linear algebra, scalar root finding and seeded random streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import BracketFailure, NotPositiveDefinite

SPD_PIVOT_RTOL = 1e-14
ROOT_FTOL = 1e-10
ROOT_XTOL = 1e-13
BRACKET_LIMIT = 1e9


class SymmetricMatrix:
    """A d x d symmetric matrix, kept exactly symmetric on every write.

    Parameters
    ----------
    dim : int
        Matrix dimension, at least 1.
    entries : array_like, optional
        Initial entries. Must be symmetric; defaults to the zero matrix.
    """

    def __init__(self, dim: int, entries=None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = int(dim)
        if entries is None:
            self.entries = np.zeros((dim, dim))
        else:
            a = np.array(entries, dtype=float, copy=True).reshape(dim, dim)
            if not np.array_equal(a, a.T):
                raise ValueError("entries are not symmetric")
            self.entries = a

    def add_outer(self, x, weight: float = 1.0) -> None:
        """In-place ``entries += weight * x x^T`` (mirrored, so symmetry is exact)."""
        x = np.asarray(x, dtype=float)
        upd = weight * np.outer(x, x)
        upd = np.triu(upd) + np.triu(upd, 1).T
        self.entries += upd

    def shifted(self, c: float) -> np.ndarray:
        """Return ``entries + c * I`` as a plain array."""
        return self.entries + c * np.eye(self.dim)

    def copy(self) -> "SymmetricMatrix":
        return SymmetricMatrix(self.dim, self.entries)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __repr__(self):
        return f"SymmetricMatrix(dim={self.dim})"


def _as_array(m) -> np.ndarray:
    if isinstance(m, SymmetricMatrix):
        return m.entries
    return np.asarray(m, dtype=float)


def cholesky_factor(m) -> np.ndarray:
    """Lower Cholesky factor of ``m`` with the rank-collapse pivot check.

    Raises
    ------
    NotPositiveDefinite
        If the factorization fails or a squared pivot falls below
        ``1e-14 * trace(m) / dim``.
    """
    a = _as_array(m)
    d = a.shape[0]
    try:
        low = linalg.cholesky(a, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    floor = SPD_PIVOT_RTOL * max(np.trace(a), 0.0) / d
    pivots = np.diag(low) ** 2
    if pivots.min() <= floor:
        raise NotPositiveDefinite(
            f"pivot {pivots.min():.3e} below threshold {floor:.3e}")
    return low


def solve_spd(m, rhs) -> np.ndarray:
    """Solve ``m x = rhs`` for symmetric positive definite ``m``.

    ``rhs`` may be a vector or a matrix of right-hand sides (one per column).
    """
    low = cholesky_factor(m)
    return linalg.cho_solve((low, True), np.asarray(rhs, dtype=float))


def spd_inverse(m) -> np.ndarray:
    """Explicit inverse of an SPD matrix through its Cholesky factor."""
    a = _as_array(m)
    inv = solve_spd(a, np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


def min_eigenvalue(m) -> float:
    """Smallest eigenvalue of a symmetric matrix (full symmetric eigensolve)."""
    a = _as_array(m)
    return float(np.linalg.eigvalsh(a)[0])


def minimize_scalar_convex(dfn: Callable[[float], float], bracket_hint: float = 0.0,
                           ftol: float = ROOT_FTOL, xtol: float = ROOT_XTOL,
                           limit: float = BRACKET_LIMIT) -> float:
    """Minimize a strictly convex coercive scalar function given its derivative.

    The root of the nondecreasing ``dfn`` is bracketed by doubling outward
    from ``bracket_hint`` and then refined by bisection. A secant (Illinois)
    step replaces the midpoint whenever it lands strictly inside the bracket.

    Parameters
    ----------
    dfn : callable
        Continuous, nondecreasing derivative of the objective.
    bracket_hint : float
        Starting point of the outward bracket search.
    ftol, xtol : float
        Stop when ``|dfn(u)| <= ftol * (1 + |dfn(0)|)`` or the bracket is
        narrower than ``xtol``.
    limit : float
        Give up bracketing once ``|u|`` exceeds this.

    Returns
    -------
    float
        The approximate minimizer.
    """
    scale = 1.0 + abs(dfn(0.0))
    ftol_abs = ftol * scale

    x0 = float(bracket_hint)
    f0 = dfn(x0)
    if abs(f0) <= ftol_abs:
        return x0

    step = 1.0
    direction = -1.0 if f0 > 0 else 1.0
    xa, fa = x0, f0
    while True:
        xb = x0 + direction * step
        if abs(xb) > limit:
            raise BracketFailure(f"no sign change of derivative within |u| <= {limit:g}")
        fb = dfn(xb)
        if abs(fb) <= ftol_abs:
            return xb
        if (fb > 0) != (fa > 0):
            break
        xa, fa = xb, fb
        step *= 2.0

    if xa < xb:
        lo, flo, hi, fhi = xa, fa, xb, fb
    else:
        lo, flo, hi, fhi = xb, fb, xa, fa
    # invariant: flo < 0 < fhi
    side = 0
    for _ in range(400):
        if hi - lo <= xtol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        x = lo - flo * (hi - lo) / (fhi - flo)
        if not (lo < x < hi) or not math.isfinite(x):
            x = mid
        fx = dfn(x)
        if abs(fx) <= ftol_abs:
            return x
        if fx < 0:
            lo, flo = x, fx
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = x, fx
            if side == 1:
                flo *= 0.5
            side = 1
        # guarantee geometric shrinkage: follow up with a bisection step
        mid = 0.5 * (lo + hi)
        if lo < mid < hi:
            fm = dfn(mid)
            if abs(fm) <= ftol_abs:
                return mid
            if fm < 0:
                lo, flo = mid, fm
            else:
                hi, fhi = mid, fm
            side = 0
    return lo if abs(flo) <= abs(fhi) else hi


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by ``(seed, stream_id)``.

    Two streams with equal keys produce identical variates. Streams are
    meant to be owned by a single replication and never shared.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0 <= self.seed < 2**64 and 0 <= self.stream_id < 2**64):
            raise ValueError("seed and stream_id must be 64-bit unsigned")
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        object.__setattr__(self, "generator", np.random.Generator(np.random.PCG64(ss)))

    def uniform(self, size=None):
        return self.generator.random(size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def rademacher(self, size=None):
        return 2.0 * self.generator.integers(0, 2, size=size) - 1.0


def as_generator(rng) -> np.random.Generator:
    """Accept an ``RngStream``, a numpy ``Generator`` or an int seed."""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return RngStream(int(rng)).generator
