"""Adaptive Neyman allocation by follow-the-regularized-leader with sigmoidal regularization.

Library modules: :mod:`numerics`, :mod:`sigmoid`, :mod:`design`,
:mod:`estimator`, :mod:`oracle`, :mod:`sequences`, :mod:`baselines`,
:mod:`engine`, :mod:`identities` and :mod:`harness`.
"""

from .baselines import BaselineKind, run_baseline
from .design import DesignConfig, RunLog, run, select_probability
from .engine import Ensemble, simulate
from .estimator import aipw_estimate, infer, variance_bound_estimate, wald_ci
from .oracle import regret_components, summarize
from .sequences import (PotentialOutcomeSequence, check_assumptions, gen_lower_bound_degenerate_covariates,
                        gen_lower_bound_main, gen_lower_bound_unbounded, gen_stationary,
                        load_csv, save_csv)
from .sigmoid import ALGEBRAIC, ARCTAN, SigmoidKind, SigmoidSpec, verify_condition

__version__ = "0.1.0"
