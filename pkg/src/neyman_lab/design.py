"""The Sigmoid-FTRL adaptive design as an explicit per-subject state machine.

For each arriving subject the design

1. updates the running covariate radius and the step size ``eta``,
2. fits inverse-propensity-weighted ridge predictors for both arms,
3. picks the assignment probability by minimizing the estimated
   probability loss plus the sigmoidal regularizer,
4. samples the assignment and finally records the observed outcome.

``step`` performs 1-3 plus sampling; ``record_outcome`` performs 4. ``run``
drives a whole sequence. The vectorized many-replication counterpart lives
in :mod:`neyman_lab.engine`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import DimensionMismatch, OutOfOrder, ParseError
from .numerics import SymmetricMatrix, minimize_scalar_convex, solve_spd
from .sigmoid import ARCTAN, SigmoidSpec, _derivs, d2psi, dpsi, phi

P_FLOOR = 1e-12


@dataclass(frozen=True)
class DesignConfig:
    horizon_T: int
    dim_d: int
    sigmoid: SigmoidSpec = ARCTAN
    p_floor: float = P_FLOOR

    def __post_init__(self):
        if self.horizon_T < 1 or self.dim_d < 1:
            raise ValueError("horizon_T and dim_d must be >= 1")
        if not (0 < self.p_floor < 1e-6):
            raise ValueError("p_floor must lie in (0, 1e-6)")


@dataclass
class DesignState:
    """Mutable state of one running experiment. Single owner, never shared."""

    config: DesignConfig
    t: int
    gram: SymmetricMatrix
    cross1: np.ndarray
    cross0: np.ndarray
    ahat1: float = 0.0
    ahat0: float = 0.0
    r_max: float = 1.0
    eta: float = float("nan")
    clamp_count: int = 0
    pending: tuple | None = field(default=None, repr=False)


@dataclass(frozen=True)
class StepRecord:
    t: int
    p: float
    z: int
    y_obs: float
    pred1: float
    pred0: float
    eta: float
    r: float
    ahat1_before: float
    ahat0_before: float


RUNLOG_HEADER = ("t", "p", "z", "y_obs", "pred1", "pred0", "eta", "r",
                 "ahat1_before", "ahat0_before")


@dataclass
class RunLog:
    """Everything the experimenter observed during one run, one record per subject."""

    config: DesignConfig
    steps: list = field(default_factory=list)
    clamp_count: int = 0

    def __len__(self):
        return len(self.steps)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.steps], dtype=float)

    @property
    def p(self):
        return self.column("p")

    @property
    def z(self):
        return self.column("z")

    @property
    def y_obs(self):
        return self.column("y_obs")

    @property
    def pred1(self):
        return self.column("pred1")

    @property
    def pred0(self):
        return self.column("pred0")

    def to_csv(self, path_or_buf=None) -> str | None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RUNLOG_HEADER)
        for s in self.steps:
            w.writerow([s.t, repr(float(s.p)), s.z, repr(float(s.y_obs)), repr(float(s.pred1)),
                        repr(float(s.pred0)), repr(float(s.eta)), repr(float(s.r)),
                        repr(float(s.ahat1_before)), repr(float(s.ahat0_before))])
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return None

    @classmethod
    def from_csv(cls, source, config: DesignConfig) -> "RunLog":
        """Parse a RunLog CSV (a path or any text stream)."""
        if hasattr(source, "read"):
            text = source.read()
        else:
            with open(source, newline="") as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != RUNLOG_HEADER:
            raise ParseError("unexpected RunLog header", row=1)
        steps = []
        for i, row in enumerate(rows[1:], start=2):
            if len(row) != len(RUNLOG_HEADER):
                raise ParseError("wrong number of fields", row=i)
            try:
                steps.append(StepRecord(int(row[0]), float(row[1]), int(row[2]),
                                        *(float(v) for v in row[3:])))
            except ValueError as exc:
                raise ParseError(str(exc), row=i) from None
        return cls(config, steps)


def new_state(config: DesignConfig) -> DesignState:
    d = config.dim_d
    return DesignState(config=config, t=1, gram=SymmetricMatrix(d),
                       cross1=np.zeros(d), cross0=np.zeros(d))


def observe_covariate(state: DesignState, x_t) -> np.ndarray:
    """Update the running radius and the step size from a new covariate."""
    x = np.asarray(x_t, dtype=float).reshape(-1)
    if x.shape[0] != state.config.dim_d:
        raise DimensionMismatch(f"covariate has length {x.shape[0]}, expected {state.config.dim_d}")
    state.r_max = max(state.r_max, float(np.linalg.norm(x)))
    state.eta = 1.0 / (math.sqrt(state.config.horizon_T) * state.r_max ** 2)
    return x


def fit_predictors(state: DesignState):
    """Ridge fits ``(gram + eta^-1 I)^-1 cross_k`` for both arms."""
    if not math.isfinite(state.eta):
        raise OutOfOrder("covariate for the current subject has not been observed")
    m = state.gram.shifted(1.0 / state.eta)
    sol = solve_spd(m, np.column_stack([state.cross1, state.cross0]))
    return sol[:, 0], sol[:, 1]


def probability_foc(sigmoid: SigmoidSpec, a1, a0, eta, u):
    """Derivative in ``u`` of ``a1/phi(u) + a0/(1-phi(u)) + psi(u)/eta``."""
    d1_pos = _derivs(sigmoid, u)[0]
    d1_neg = _derivs(sigmoid, -np.asarray(u, dtype=float))[0]
    return a1 * d1_pos - a0 * d1_neg + dpsi(u) / eta


def probability_foc_slope(sigmoid: SigmoidSpec, a1, a0, eta, u):
    d2_pos = _derivs(sigmoid, u)[1]
    d2_neg = _derivs(sigmoid, -np.asarray(u, dtype=float))[1]
    return a1 * d2_pos + a0 * d2_neg + d2psi(u) / eta


def probability_objective(sigmoid: SigmoidSpec, a1, a0, eta, p):
    """``a1/p + a0/(1-p) + Psi(p)/eta`` evaluated in probability space."""
    from .sigmoid import big_psi
    p = np.asarray(p, dtype=float)
    return a1 / p + a0 / (1.0 - p) + big_psi(sigmoid, p) / eta


def _select(sigmoid: SigmoidSpec, a1: float, a0: float, eta: float, p_floor: float):
    if a1 == a0:
        return 0.5, False
    u = minimize_scalar_convex(lambda v: float(probability_foc(sigmoid, a1, a0, eta, v)), 0.0)
    p = float(phi(sigmoid, u))
    clamped = p < p_floor or p > 1.0 - p_floor
    return min(max(p, p_floor), 1.0 - p_floor), clamped


def select_probability(sigmoid: SigmoidSpec, a1: float, a0: float, eta: float,
                       p_floor: float = P_FLOOR) -> float:
    """Assignment probability minimizing the regularized estimated loss.

    Solves the monotone first-order condition in the sigmoid's
    unconstrained coordinate and maps back with ``phi``.
    """
    return _select(sigmoid, float(a1), float(a0), float(eta), p_floor)[0]


def _foc_and_slope(sigmoid: SigmoidSpec, a1, a0, eta, u):
    d1p, d2p = _derivs(sigmoid, u)
    d1n, d2n = _derivs(sigmoid, -u)
    f = a1 * d1p - a0 * d1n + dpsi(u) / eta
    fp = a1 * d2p + a0 * d2n + d2psi(u) / eta
    return f, fp


def _solve_probability_coordinate(sigmoid: SigmoidSpec, a1, a0, eta, u0=None,
                                  max_iter: int = 100):
    """Vectorized safeguarded Newton solve of the first-order condition.

    The root is bracketed analytically: because ``-(1/phi)' <= b1`` the
    derivative is positive beyond ``sqrt(eta*a1*b1/3)`` and negative below
    ``-sqrt(eta*a0*b1/3)``. ``u0`` is an optional warm start; each entry is
    solved independently of the others.
    """
    a1, a0 = np.broadcast_arrays(np.asarray(a1, dtype=float), np.asarray(a0, dtype=float))
    eta = np.broadcast_to(np.asarray(eta, dtype=float), a1.shape)
    hi = np.sqrt(eta * a1 * sigmoid.b1 / 3.0)
    lo = -np.sqrt(eta * a0 * sigmoid.b1 / 3.0)
    u = np.zeros(a1.shape) if u0 is None else np.clip(np.asarray(u0, dtype=float), lo, hi)
    active = hi > lo
    for _ in range(max_iter):
        if not active.any():
            break
        f, fp = _foc_and_slope(sigmoid, a1, a0, eta, u)
        hi = np.where(active & (f > 0), u, hi)
        lo = np.where(active & (f < 0), u, lo)
        newton = u - f / fp
        inside = (newton > lo) & (newton < hi)
        # quadratic convergence: once a Newton step is below 1e-12 the
        # iterate it produces is accurate to rounding; a vanishing step may
        # land on the bracket end itself
        tol = 1e-12 * (1.0 + np.abs(u))
        small = np.abs(newton - u) <= tol
        nxt = np.where(inside | small, newton, 0.5 * (lo + hi))
        done = (f == 0) | small | (hi - lo <= 1e-15 * (1.0 + np.abs(u)))
        u = np.where(active, nxt, u)
        active = active & ~done
    return u


def select_probability_batch(sigmoid: SigmoidSpec, a1, a0, eta, p_floor: float = P_FLOOR,
                             u0=None, return_u: bool = False):
    """Array version of :func:`select_probability`. Returns ``(p, clamped)``.

    With ``return_u`` the unconstrained coordinate is returned as a third
    element, suitable as the next warm start ``u0``.
    """
    u = _solve_probability_coordinate(sigmoid, a1, a0, eta, u0)
    p = phi(sigmoid, u)
    clamped = (p < p_floor) | (p > 1.0 - p_floor)
    p = np.clip(p, p_floor, 1.0 - p_floor)
    return (p, clamped, u) if return_u else (p, clamped)


def step(state: DesignState, x_t, uniform_draw: float):
    """Process the covariate of the current subject and draw its assignment.

    Returns ``(z, p, pred1, pred0)``. The outcome is consumed separately by
    :func:`record_outcome`.
    """
    if state.pending is not None:
        raise OutOfOrder(f"outcome for subject {state.t} not yet recorded")
    if state.t > state.config.horizon_T:
        raise OutOfOrder("horizon exhausted")
    x = observe_covariate(state, x_t)
    beta1, beta0 = fit_predictors(state)
    pred1 = float(x @ beta1)
    pred0 = float(x @ beta0)
    cfg = state.config
    p, clamped = _select(cfg.sigmoid, state.ahat1, state.ahat0, state.eta, cfg.p_floor)
    state.clamp_count += int(clamped)
    z = 1 if uniform_draw < p else 0
    state.pending = (state.t, z, p, pred1, pred0, state.eta, state.r_max, state.ahat1, state.ahat0)
    return z, p, pred1, pred0


def record_outcome(state: DesignState, x_t, z: int, p: float, y_obs: float,
                   pred1: float, pred0: float) -> StepRecord:
    """Fold the observed outcome of the current subject into the state."""
    if state.pending is None:
        raise OutOfOrder(f"no assignment pending for subject {state.t}")
    t, z_p, p_p, *_ = state.pending
    if (z, p) != (z_p, p_p):
        raise OutOfOrder("outcome does not match the pending assignment")
    x = np.asarray(x_t, dtype=float).reshape(-1)
    _, _, _, _, _, eta, r, a1_before, a0_before = state.pending
    state.gram.add_outer(x)
    if z == 1:
        state.cross1 = state.cross1 + x * (y_obs / p)
        state.ahat1 += (y_obs - pred1) ** 2 / p
    else:
        state.cross0 = state.cross0 + x * (y_obs / (1.0 - p))
        state.ahat0 += (y_obs - pred0) ** 2 / (1.0 - p)
    state.pending = None
    state.t += 1
    state.eta = float("nan")
    return StepRecord(t, p, z, float(y_obs), pred1, pred0, eta, r, a1_before, a0_before)


def run(config: DesignConfig, sequence, rng) -> RunLog:
    """Run the design over a full potential-outcome sequence.

    Only the realized outcome of each subject is passed to the state; the
    other potential outcome is never touched.
    """
    if sequence.T != config.horizon_T or sequence.d != config.dim_d:
        raise DimensionMismatch("sequence does not match the design configuration")
    gen = numerics.as_generator(rng)
    state = new_state(config)
    log = RunLog(config)
    for i in range(config.horizon_T):
        x = sequence.X[i]
        z, p, pred1, pred0 = step(state, x, gen.random())
        y = sequence.y1[i] if z == 1 else sequence.y0[i]
        log.steps.append(record_outcome(state, x, z, p, float(y), pred1, pred0))
    log.clamp_count = state.clamp_count
    return log
