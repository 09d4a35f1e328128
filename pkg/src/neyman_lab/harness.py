"""Experiment orchestration behind the ``neyman-lab`` command line.

Every command turns an :class:`ExperimentConfig` into a header and a list
of rows. Rows depend only on the configuration and the base seed: the
replication streams are fixed in advance and results are gathered in
replication order, so the worker count never changes the output.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from . import identities
from .engine import DESIGNS, Ensemble, mean_se, simulate
from .errors import ConfigError
from .numerics import RngStream
from .sequences import GENERATORS, check_assumptions, load_csv
from .sigmoid import CLAUSES, SigmoidKind, SigmoidSpec, verify_condition

COMMANDS = ("simulate", "sweep_regret", "coverage", "verify_sigmoid", "check_sequence", "identities")
ENSEMBLES = ("lower_bound_main", "lower_bound_unbounded", "degenerate_covariates")
# stream id reserved for drawing a fixed sequence; replication ids stay below it
SEQUENCE_STREAM = 2 ** 63


@dataclass
class ExperimentConfig:
    command: str = "simulate"
    generator: str = "stationary"
    sequence_path: str | None = None
    sigmoid: str = "arctan"
    design: str = "ftrl"
    T_list: tuple = (200,)
    replications: int = 100
    base_seed: int = 0
    output_path: str | None = None
    workers: int = 1
    alpha: tuple = (0.05,)
    d: int = 2
    noise_sd: float = 1.0
    effect: float = 1.0
    rho: float = 0.0
    sd_ratio: float = 1.0
    gamma0: float = 1.0
    c2: float = 10.0
    b1: float | None = None
    b2: float | None = None
    b3: float | None = None
    grid_size: int = 10_001
    corrupt_pi: float = 1.0
    chunk_size: int = 1000
    json: bool = False

    def validate(self) -> "ExperimentConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.T_list:
            raise ConfigError("T list must not be empty")
        if any(t < 1 for t in self.T_list):
            raise ConfigError("every T must be >= 1")
        if self.command == "sweep_regret" and list(self.T_list) != sorted(set(self.T_list)):
            raise ConfigError("T list must be strictly ascending for sweeps")
        if self.chunk_size < 1:
            raise ConfigError("chunk_size must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0 <= self.base_seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.design not in DESIGNS:
            raise ConfigError(f"unknown design {self.design!r}; expected one of {DESIGNS}")
        if self.sequence_path is None and self.generator not in GENERATORS:
            raise ConfigError(f"unknown generator {self.generator!r}; expected one of {tuple(GENERATORS)}")
        if any(not 0 < a < 1 for a in self.alpha):
            raise ConfigError("alpha must lie in (0, 1)")
        try:
            SigmoidKind(self.sigmoid)
        except ValueError:
            raise ConfigError(f"unknown sigmoid {self.sigmoid!r}") from None
        return self


# -- config parsing -------------------------------------------------------------

def _list(text, conv):
    return tuple(conv(v) for v in str(text).replace(",", " ").split())


_PARSERS = {
    "T_list": lambda v: _list(v, int),
    "alpha": lambda v: _list(v, float),
    "json": lambda v: str(v).strip().lower() in ("1", "true", "yes", "on"),
}
_ALIASES = {"t": "T_list", "t_list": "T_list", "reps": "replications", "seed": "base_seed",
            "out": "output_path", "output": "output_path", "sequence": "sequence_path",
            "rho_target": "rho"}


def _coerce(key: str, value):
    name = _ALIASES.get(key.lower(), key.lower() if key != "T_list" else key)
    by_name = {f.name: f for f in fields(ExperimentConfig)}
    if name not in by_name:
        raise ConfigError(f"unknown config key {key!r}")
    if value is None:
        return name, None
    try:
        if name in _PARSERS:
            return name, _PARSERS[name](value)
        default = by_name[name].default
        if isinstance(default, bool):
            return name, _PARSERS["json"](value)
        if isinstance(default, int):
            return name, int(value)
        if isinstance(default, float) or name in ("b1", "b2", "b3"):
            return name, float(value)
        return name, str(value).strip()
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from None


def load_config(path) -> dict:
    """Read a flat INI file. Keys may sit in any single section or at top level."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not text.lstrip().startswith("["):
        text = "[experiment]\n" + text
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    out = {}
    for section in cp.sections():
        for key, value in cp.items(section):
            name, v = _coerce(key, value)
            out[name] = v
    return out


def build_config(command: str, file_values: dict, overrides: dict) -> ExperimentConfig:
    values = dict(file_values)
    for key, value in overrides.items():
        if value is not None:
            name, v = _coerce(key, value) if isinstance(value, str) else (key, value)
            values[name] = v
    values["command"] = command
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


# -- sequence sources -----------------------------------------------------------

def sigmoid_of(cfg: ExperimentConfig) -> SigmoidSpec:
    base = SigmoidSpec.of(cfg.sigmoid)
    return replace(base, b1=cfg.b1 or base.b1, b2=cfg.b2 or base.b2, b3=cfg.b3 or base.b3)


def source_for(cfg: ExperimentConfig, T: int):
    """A fixed sequence, or an :class:`Ensemble` for the randomized hard families."""
    if cfg.sequence_path:
        try:
            seq = load_csv(cfg.sequence_path)
        except OSError as exc:
            raise ConfigError(f"cannot read sequence file: {exc}") from None
        return seq
    if cfg.generator in ENSEMBLES:
        return Ensemble(cfg.generator, (("T", T),))
    gen = RngStream(cfg.base_seed, SEQUENCE_STREAM).generator
    return GENERATORS["stationary"](T, cfg.d, noise_sd=cfg.noise_sd, effect=cfg.effect,
                                    rho_target=cfg.rho, rng=gen, sd_ratio=cfg.sd_ratio)


def _sample_sequence(cfg, T):
    src = source_for(cfg, T)
    if isinstance(src, Ensemble):
        return src.draw(RngStream(cfg.base_seed, 0).generator)
    return src


def _batch(cfg, T):
    return simulate(cfg.design, source_for(cfg, T), cfg.replications, cfg.base_seed,
                    sigmoid=sigmoid_of(cfg), alpha=cfg.alpha[0], workers=cfg.workers,
                    chunk_size=cfg.chunk_size)


# -- commands -------------------------------------------------------------------

SIMULATE_HEADER = ("rep", "T", "tau", "tau_hat", "ci_low", "ci_high", "e2_1", "e2_0", "vb_hat",
                   "g_sum", "r_prob", "r_pred", "regret", "clamp_count")


def cmd_simulate(cfg: ExperimentConfig):
    T = cfg.T_list[0]
    res = _batch(cfg, T)
    lo, hi = res.ci
    rows = []
    for j in range(res.reps):
        rows.append([j, res.T, res.tau[j], res.tau_hat[j], lo[j], hi[j], res.e2_1[j], res.e2_0[j],
                     res.vb_hat[j], res.g_sum[j], res.r_prob[j], res.r_pred[j], res.regret[j],
                     int(res.clamp_count[j])])
    return SIMULATE_HEADER, rows


SWEEP_HEADER = ("T", "reps", "mean_regret", "se_regret", "mean_r_prob", "mean_r_pred",
                "scaled_regret", "se_scaled_regret", "regret_var_estimate", "slope_loglog")


def loglog_slope(Ts, means) -> float:
    """Least-squares slope of ``log(mean)`` on ``log(T)`` over positive means."""
    pts = [(math.log(t), math.log(m)) for t, m in zip(Ts, means) if m > 0]
    if len(pts) < 2:
        return float("nan")
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def cmd_sweep_regret(cfg: ExperimentConfig, progress=None):
    rows = []
    means = []
    for T in cfg.T_list:
        res = _batch(cfg, T)
        m, se = mean_se(res.regret)
        var_est = float("nan")
        if res.reps >= 10_000:
            var_est = float(res.T * np.mean((res.tau_hat - res.tau) ** 2) - np.mean(res.v_star_T))
        rt = math.sqrt(res.T)
        rows.append([res.T, res.reps, m, se, float(np.mean(res.r_prob)) / res.T,
                     float(np.mean(res.r_pred)) / res.T, m * rt, se * rt, var_est, ""])
        means.append(m)
        if progress is not None:
            print(f"T={res.T} mean_regret={m:.6g} se={se:.3g}", file=progress, flush=True)
    rows.append(["", "", "", "", "", "", "", "", "", loglog_slope([r[0] for r in rows], means)])
    return SWEEP_HEADER, rows


COVERAGE_HEADER = ("T", "reps", "alpha", "empirical_coverage", "se_coverage", "mean_width")


def cmd_coverage(cfg: ExperimentConfig):
    rows = []
    for T in cfg.T_list:
        res = _batch(cfg, T)
        for a in cfg.alpha:
            res.alpha = a
            cov = res.covered
            lo, hi = res.ci
            c = float(cov.mean())
            rows.append([res.T, res.reps, a, c, math.sqrt(c * (1 - c) / res.reps),
                         float(np.mean(hi - lo))])
    return COVERAGE_HEADER, rows


VERIFY_HEADER = ("sigmoid", "b1", "b2", "b3", "grid_size", "clause", "max_violation", "passed")


def cmd_verify_sigmoid(cfg: ExperimentConfig):
    spec = sigmoid_of(cfg)
    grid = np.linspace(-50.0, 50.0, cfg.grid_size)
    rep = verify_condition(spec, grid)
    rows = []
    for c in CLAUSES:
        v = rep.clause_violations[c]
        rows.append([spec.name, spec.b1, spec.b2, spec.b3, rep.grid_size, c, v,
                     int(not (rep.violated_clause == c))])
    rows.append([spec.name, spec.b1, spec.b2, spec.b3, rep.grid_size, "ALL", rep.max_violation,
                 int(rep.passed)])
    return VERIFY_HEADER, rows


CHECK_HEADER = ("label", "T", "d", "c0_hat", "c1_hat", "sigma_min", "r_max", "r_over_T14",
                "rho", "gamma0", "c2", "well_invertible", "ols_error")


def cmd_check_sequence(cfg: ExperimentConfig):
    rows = []
    for T in cfg.T_list:
        seq = _sample_sequence(cfg, T)
        rep = check_assumptions(seq, cfg.gamma0, cfg.c2)
        smin = min((s for t, s in rep.sigma_min_profile if t >= cfg.gamma0 * math.sqrt(seq.T)),
                   default=float("nan"))
        rows.append([seq.label, seq.T, seq.d, rep.c0_hat, rep.c1_hat, smin, rep.r_max,
                     rep.r_over_T14, rep.rho, rep.gamma0, rep.c2, int(rep.well_invertible),
                     rep.ols_error or ""])
        if cfg.sequence_path:
            break
    return CHECK_HEADER, rows


def cmd_identities(cfg: ExperimentConfig):
    T = cfg.T_list[0]
    runs = min(cfg.replications, 10)
    res = identities.run_suite(T=T, runs=runs, seed=cfg.base_seed, pi_scale=cfg.corrupt_pi)
    return identities.CSV_HEADER, [r.csv_row() for r in res]


RUNNERS = {
    "simulate": cmd_simulate,
    "sweep_regret": cmd_sweep_regret,
    "coverage": cmd_coverage,
    "verify_sigmoid": cmd_verify_sigmoid,
    "check_sequence": cmd_check_sequence,
    "identities": cmd_identities,
}


def run_command(cfg: ExperimentConfig, progress=None):
    if cfg.command == "sweep_regret":
        return cmd_sweep_regret(cfg, progress)
    return RUNNERS[cfg.command](cfg)
