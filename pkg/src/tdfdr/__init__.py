"""Local false discovery rate estimation for competition-based variable selection.

Competition procedures (decoy permutations for two-group data, fixed-X
knockoffs for regression) label variables Target or Decoy; the estimator
turns labels and final scores into a local fdr for every target.
"""
from ._backend import BACKEND
from .core import CompetitionResult, Label, RngHandle, ScoredVariable, make_rng
from .density import KdeModel, kde_fit, select_bandwidth
from .estimator import FdrFit, estimate_pi0, estimate_pi0t, fdr_to_FDR, fit_fdr, select_at
from .knockoff import (
    KnockoffModel,
    KnockoffStats,
    construct_knockoffs,
    knockoff_select,
    knockoff_stats,
    to_competition,
)
from .lasso import lasso_path_entries
from .simulation import (
    GroundTruth,
    MetricsReport,
    SimulationConfig,
    generate_regression,
    generate_two_group,
    oracle_fdr,
    run_experiment,
)
from .two_group import TwoGroupData, compete, t_score, td_select

__version__ = "0.1.0"
