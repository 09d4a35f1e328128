"""Non-adaptive comparison designs: the fair coin and the infeasible Neyman allocation."""

from __future__ import annotations

import enum

import numpy as np

from .design import DesignConfig, RunLog, StepRecord
from .numerics import as_generator
from .oracle import OracleSummary, summarize


class BaselineKind(enum.Enum):
    BERNOULLI_HALF = "bernoulli_half"
    ORACLE_NEYMAN = "oracle_neyman"


def run_baseline(kind: BaselineKind, sequence, rng, summary: OracleSummary | None = None) -> RunLog:
    """Run a fixed design over ``sequence`` and log it like the adaptive design.

    ``BERNOULLI_HALF`` assigns with probability one half and predicts zero,
    which makes the AIPW estimator the Horvitz-Thompson estimator.
    ``ORACLE_NEYMAN`` assigns with the Neyman probability and predicts with
    the least-squares fits on both full outcome vectors. It needs ``T > d``;
    a precomputed ``summary`` may be passed to skip the fit.

    Uniform draws are taken one per subject in order, exactly as in
    :func:`neyman_lab.design.run`.
    """
    kind = BaselineKind(kind)
    gen = as_generator(rng)
    T, d = sequence.T, sequence.d
    if kind is BaselineKind.BERNOULLI_HALF:
        p = np.full(T, 0.5)
        pred1 = np.zeros(T)
        pred0 = np.zeros(T)
    else:
        summary = summary if summary is not None else summarize(sequence)
        p = np.full(T, summary.p_star)
        pred1 = sequence.X @ summary.beta_ols_1
        pred0 = sequence.X @ summary.beta_ols_0
    log = RunLog(DesignConfig(T, d))
    nan = float("nan")
    for i in range(T):
        z = 1 if gen.random() < p[i] else 0
        y = sequence.y1[i] if z == 1 else sequence.y0[i]
        log.steps.append(StepRecord(i + 1, float(p[i]), z, float(y), float(pred1[i]),
                                    float(pred0[i]), nan, nan, 0.0, 0.0))
    return log
