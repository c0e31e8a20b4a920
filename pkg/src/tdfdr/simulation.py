"""Simulation studies: two-group (normal/gamma) and AR(1) regression with knockoffs.

Every repetition ``k`` draws from its own stream ``(seed, k)`` so results do
not depend on how repetitions are scheduled.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .core import CompetitionResult, RngHandle, format_float, make_rng, parallel_map
from .density import kde_fit, select_bandwidth
from .estimator import fit_fdr, posterior_nonnull, select_at
from .exceptions import BadScenario, ConfigError, DimensionError, TooFewInClass
from .knockoff import construct_knockoffs, knockoff_select, knockoff_stats, normalize_columns, to_competition
from .two_group import TwoGroupData, compete, td_select

__all__ = [
    "SimulationConfig",
    "GroundTruth",
    "RepMetrics",
    "MetricsReport",
    "n_nonnull",
    "generate_two_group",
    "generate_regression",
    "oracle_fdr",
    "run_repetition",
    "run_experiment",
    "write_outputs",
]

SCENARIOS = ("normal", "gamma", "regression")


def n_nonnull(m, pi0) -> int:
    """``round(m (1 - pi0))`` with halves rounded up."""
    return int(math.floor(m * (1.0 - pi0) + 0.5 + 1e-9))


@dataclass(frozen=True)
class SimulationConfig:
    scenario: str
    m: int
    pi0: float
    effect: float
    group_size: int = 5
    n: int | None = None
    rho: float = 0.0
    n_perm: int = 19
    grid_size: int = 200
    reps: int = 20
    seed: int = 0
    thresholds: tuple = (0.05, 0.1, 0.2)
    epsilon: float = 1e-4
    l_max: int = 200
    signals_first: bool = False
    two_sided: bool = False

    def __post_init__(self):
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        need(self.scenario in SCENARIOS, "scenario", f"must be one of {SCENARIOS}")
        for name in ("m", "group_size", "n_perm", "grid_size", "reps", "seed", "l_max"):
            val = getattr(self, name)
            need(isinstance(val, (int, np.integer)) and not isinstance(val, bool),
                 name, "must be an integer")
        need(self.m >= 1, "m", "must be >= 1")
        need(isinstance(self.pi0, (int, float)) and 0 < self.pi0 <= 1, "pi0", "must lie in (0, 1]")
        need(isinstance(self.effect, (int, float)) and math.isfinite(self.effect),
             "effect", "must be a finite number")
        need(self.reps >= 1, "reps", "must be >= 1")
        need(0 <= self.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
        need(self.l_max >= 1, "l_max", "must be >= 1")
        need(isinstance(self.epsilon, (int, float)) and self.epsilon > 0, "epsilon", "must be positive")
        th = self.thresholds
        need(isinstance(th, (list, tuple)) and len(th) > 0
             and all(isinstance(q, (int, float)) and 0 < q < 1 for q in th),
             "thresholds", "must be a non-empty list of numbers in (0, 1)")
        object.__setattr__(self, "thresholds", tuple(float(q) for q in th))
        if self.scenario == "regression":
            need(self.n is not None and isinstance(self.n, int), "n", "required for regression")
            need(self.n >= 2 * self.m, "n", f"must be >= 2m = {2 * self.m}")
            need(isinstance(self.rho, (int, float)) and 0 <= self.rho < 1, "rho", "must lie in [0, 1)")
            need(self.grid_size >= 2, "grid_size", "must be >= 2")
        else:
            need(self.group_size >= 2, "group_size", "must be >= 2")
            need(self.n_perm >= 1, "n_perm", "must be >= 1")
            if self.scenario == "gamma":
                need(self.effect > 0, "effect", "gamma shape must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        for key in ("scenario", "m", "pi0", "effect"):
            if key not in data:
                raise ConfigError(key, "missing required field")
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["thresholds"] = list(self.thresholds)
        return d

    @property
    def n_nonnull(self) -> int:
        return n_nonnull(self.m, self.pi0)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    is_null: np.ndarray

    @property
    def n_nonnull(self) -> int:
        return int(np.count_nonzero(~self.is_null))


def generate_two_group(cfg: SimulationConfig, rng: RngHandle):
    """Control rows first, then case rows; non-null columns are the first ones.

    normal: N(0,1) everywhere, case non-nulls N(effect, 1).
    gamma: Ga(2,1) everywhere, case non-nulls Ga(effect, 1).
    """
    if cfg.scenario not in ("normal", "gamma"):
        raise BadScenario(f"two-group data need scenario normal or gamma, got {cfg.scenario}")
    g, m, m1 = cfg.group_size, cfg.m, cfg.n_nonnull
    gen = rng.generator
    if cfg.scenario == "normal":
        control = gen.standard_normal((g, m))
        case = gen.standard_normal((g, m))
        case[:, :m1] += cfg.effect
    else:
        control = gen.gamma(2.0, 1.0, size=(g, m))
        case = np.empty((g, m))
        case[:, m1:] = gen.gamma(2.0, 1.0, size=(g, m - m1))
        case[:, :m1] = gen.gamma(cfg.effect, 1.0, size=(g, m1))
    is_null = np.ones(m, dtype=bool)
    is_null[:m1] = False
    return TwoGroupData(np.vstack([control, case]), g), GroundTruth(is_null)


def ar1_design(n, m, rho, gen):
    """Rows i.i.d. N(0, Theta) with Theta_ij = rho^|i-j|, by the AR(1) recursion."""
    eps = gen.standard_normal((n, m))
    x = np.empty((n, m))
    x[:, 0] = eps[:, 0]
    scale = math.sqrt(1.0 - rho * rho)
    for j in range(1, m):
        x[:, j] = rho * x[:, j - 1] + scale * eps[:, j]
    return x


def generate_regression(cfg: SimulationConfig, rng: RngHandle, return_raw=False):
    """Normalized AR(1) design, ``y = X beta + z`` with ``beta_j = +-A`` on the signals.

    Signal positions are uniform without replacement unless
    ``cfg.signals_first``.
    """
    if cfg.scenario != "regression":
        raise BadScenario(f"regression data need scenario regression, got {cfg.scenario}")
    n, m = cfg.n, cfg.m
    if n is None or n < 2 * m:
        raise DimensionError(f"regression needs n >= 2m, got n={n}, m={m}")
    gen = rng.generator
    raw = ar1_design(n, m, cfg.rho, gen)
    design = normalize_columns(raw)
    m1 = cfg.n_nonnull
    if cfg.signals_first:
        signal = np.arange(m1)
    else:
        signal = np.sort(gen.choice(m, size=m1, replace=False))
    beta = np.zeros(m)
    beta[signal] = cfg.effect * gen.choice([-1.0, 1.0], size=m1)
    response = design @ beta + gen.standard_normal(n)
    is_null = np.ones(m, dtype=bool)
    is_null[signal] = False
    if return_raw:
        return design, response, GroundTruth(is_null), raw
    return design, response, GroundTruth(is_null)


def true_pi0t(result: CompetitionResult, truth: GroundTruth) -> float:
    tgt = result.target_indices
    if tgt.size == 0:
        return 1.0
    return float(np.mean(truth.is_null[tgt]))


def oracle_fdr(result: CompetitionResult, truth: GroundTruth, pi0t_true=None,
               rng: RngHandle = None) -> np.ndarray:
    """Target fdr from the known truth, aligned with ``result.target_indices``.

    The true null and non-null target score densities are KDEs of the null
    and non-null target scores with CV bandwidths.
    """
    tgt_idx = result.target_indices
    scores = result.target_scores
    null_mask = truth.is_null[tgt_idx]
    if pi0t_true is None:
        pi0t_true = float(np.mean(null_mask)) if tgt_idx.size else 1.0
    n0 = int(null_mask.sum())
    n1 = int(null_mask.size - n0)
    if n1 == 0 or pi0t_true >= 1.0:
        return np.ones(scores.size)
    if n0 == 0 or pi0t_true <= 0.0:
        return np.zeros(scores.size)
    if n0 < 10 or n1 < 10:
        raise TooFewInClass(f"oracle fdr needs >= 10 null and non-null targets, got {n0} and {n1}")
    rng = rng or make_rng(0)
    f0 = kde_fit(scores[null_mask], bandwidth=select_bandwidth(scores[null_mask], rng.child(0)))
    f1 = kde_fit(scores[~null_mask], bandwidth=select_bandwidth(scores[~null_mask], rng.child(1)))
    p = posterior_nonnull(pi0t_true, f0.log_evaluate(scores), f1.log_evaluate(scores))
    return 1.0 - p


def _fdp_power(selected, truth):
    n_sel = selected.size
    false = int(np.count_nonzero(truth.is_null[selected])) if n_sel else 0
    fdp = false / max(n_sel, 1)
    m1 = truth.n_nonnull
    power = (n_sel - false) / m1 if m1 else 0.0
    return n_sel, fdp, power


@dataclass
class RepMetrics:
    rep: int
    pi0_true: float
    pi0t_true: float
    pi0_hat: float
    pi0t_hat: float
    rmse: float
    iterations: int
    converged: bool
    n_target: int
    n_decoy: int
    thresholds: tuple
    tdfdr_n_selected: list = field(default_factory=list)
    tdfdr_fdp: list = field(default_factory=list)
    tdfdr_power: list = field(default_factory=list)
    baseline_n_selected: list = field(default_factory=list)
    baseline_fdp: list = field(default_factory=list)
    baseline_power: list = field(default_factory=list)
    power_defined: bool = True


@dataclass
class MetricsReport:
    """Per-repetition metrics and their aggregates (ordered by repetition)."""

    config: SimulationConfig
    reps: list
    baseline: str

    @property
    def thresholds(self):
        return self.config.thresholds

    def _col(self, name):
        return np.array([getattr(r, name) for r in self.reps], dtype=np.float64)

    @property
    def rmse(self):
        return self._col("rmse")

    @property
    def rmse_ave(self) -> float:
        vals = self.rmse
        return float(np.nanmean(vals)) if np.any(np.isfinite(vals)) else math.nan

    @property
    def rmse_median(self) -> float:
        vals = self.rmse
        return float(np.nanmedian(vals)) if np.any(np.isfinite(vals)) else math.nan

    def _per_q(self, name):
        return np.array([getattr(r, name) for r in self.reps], dtype=np.float64)

    @property
    def realized_fdr(self) -> dict:
        return dict(zip(self.thresholds, self._per_q("tdfdr_fdp").mean(axis=0)))

    @property
    def mean_power(self) -> dict:
        return dict(zip(self.thresholds, self._per_q("tdfdr_power").mean(axis=0)))

    @property
    def baseline_fdr(self) -> dict:
        return dict(zip(self.thresholds, self._per_q("baseline_fdp").mean(axis=0)))

    @property
    def baseline_power(self) -> dict:
        return dict(zip(self.thresholds, self._per_q("baseline_power").mean(axis=0)))

    @property
    def pi0_hat(self):
        return self._col("pi0_hat")

    @property
    def pi0t_hat(self):
        return self._col("pi0t_hat")


def run_repetition(cfg: SimulationConfig, k: int) -> RepMetrics:
    rng = make_rng(cfg.seed, k)
    if cfg.scenario == "regression":
        design, response, truth = generate_regression(cfg, rng.child(0))
        model = construct_knockoffs(design, rng.child(2))
        stats = knockoff_stats(model, response, cfg.grid_size)
        result = to_competition(stats, rng.child(1))

        def baseline(q):
            return knockoff_select(stats, q)
    else:
        data, truth = generate_two_group(cfg, rng.child(0))
        result = compete(data, cfg.n_perm, rng.child(1), two_sided=cfg.two_sided, threads=1)

        def baseline(q):
            return td_select(result, q)

    fit = fit_fdr(result, cfg.epsilon, cfg.l_max, rng.child(3))
    pi0t_true = true_pi0t(result, truth)
    try:
        oracle = oracle_fdr(result, truth, pi0t_true, rng.child(4))
        rmse = float(np.sqrt(np.mean((fit.fdr - oracle) ** 2)))
    except TooFewInClass:
        rmse = math.nan

    rep = RepMetrics(
        rep=k,
        pi0_true=1.0 - truth.n_nonnull / cfg.m,
        pi0t_true=pi0t_true,
        pi0_hat=fit.pi0,
        pi0t_hat=fit.pi0t,
        rmse=rmse,
        iterations=fit.iterations,
        converged=fit.converged,
        n_target=result.n_target,
        n_decoy=result.n_decoy,
        thresholds=cfg.thresholds,
        power_defined=truth.n_nonnull > 0,
    )
    for q in cfg.thresholds:
        n_sel, fdp, power = _fdp_power(select_at(fit, result, q), truth)
        rep.tdfdr_n_selected.append(n_sel)
        rep.tdfdr_fdp.append(fdp)
        rep.tdfdr_power.append(power)
        n_sel, fdp, power = _fdp_power(baseline(q), truth)
        rep.baseline_n_selected.append(n_sel)
        rep.baseline_fdp.append(fdp)
        rep.baseline_power.append(power)
    return rep


def run_experiment(cfg: SimulationConfig, threads=None) -> MetricsReport:
    """Run ``cfg.reps`` independent repetitions and collect their metrics."""
    reps = parallel_map(lambda k: run_repetition(cfg, k), range(cfg.reps), threads)
    baseline = "knockoff" if cfg.scenario == "regression" else "td"
    return MetricsReport(cfg, reps, baseline)


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format_float(x)


def write_outputs(report: MetricsReport, outdir) -> dict:
    """Write ``metrics.csv``, ``summary.csv`` and ``pi0_scatter.csv``."""
    os.makedirs(outdir, exist_ok=True)
    paths = {name: os.path.join(outdir, name)
             for name in ("metrics.csv", "summary.csv", "pi0_scatter.csv")}
    with open(paths["metrics.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "q", "pi0_true", "pi0t_true", "pi0_hat", "pi0t_hat", "rmse",
                    "iterations", "converged", "tdfdr_n_selected", "tdfdr_fdp",
                    "tdfdr_power", "baseline", "baseline_n_selected", "baseline_fdp",
                    "baseline_power", "power_defined"])
        for r in report.reps:
            for i, q in enumerate(report.thresholds):
                w.writerow([_fmt(r.rep), _fmt(q), _fmt(r.pi0_true), _fmt(r.pi0t_true),
                            _fmt(r.pi0_hat), _fmt(r.pi0t_hat), _fmt(r.rmse),
                            _fmt(r.iterations), _fmt(r.converged),
                            _fmt(r.tdfdr_n_selected[i]), _fmt(r.tdfdr_fdp[i]),
                            _fmt(r.tdfdr_power[i]), report.baseline,
                            _fmt(r.baseline_n_selected[i]), _fmt(r.baseline_fdp[i]),
                            _fmt(r.baseline_power[i]), _fmt(r.power_defined)])
    with open(paths["summary.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "reps", "rmse_ave", "rmse_median", "tdfdr_fdr", "tdfdr_power",
                    "baseline", "baseline_fdr", "baseline_power", "pi0_hat_mean",
                    "pi0t_hat_mean"])
        fdr, power = report.realized_fdr, report.mean_power
        bfdr, bpower = report.baseline_fdr, report.baseline_power
        for q in report.thresholds:
            w.writerow([_fmt(q), _fmt(len(report.reps)), _fmt(report.rmse_ave),
                        _fmt(report.rmse_median), _fmt(fdr[q]), _fmt(power[q]),
                        report.baseline, _fmt(bfdr[q]), _fmt(bpower[q]),
                        _fmt(float(report.pi0_hat.mean())),
                        _fmt(float(report.pi0t_hat.mean()))])
    with open(paths["pi0_scatter.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "pi0_true", "pi0_hat", "pi0t_true", "pi0t_hat"])
        for r in report.reps:
            w.writerow([_fmt(r.rep), _fmt(r.pi0_true), _fmt(r.pi0_hat),
                        _fmt(r.pi0t_true), _fmt(r.pi0t_hat)])
    return paths
