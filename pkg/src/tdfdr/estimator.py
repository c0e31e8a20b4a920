"""Target local fdr estimation from a competition result.

The null proportion among targets comes from the decoy count, the null
score density from a KDE of decoy scores, and the non-null density together
with the posterior non-null probabilities ``p_j`` from a fixed-point
iteration of weighted KDEs over target scores (kerfdr style).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CompetitionResult, RngHandle, make_rng
from .density import KdeModel, kde_fit, select_bandwidth
from .exceptions import InputError, NoTargets, TooFewDecoys, TooFewTargets

__all__ = [
    "FdrFit",
    "estimate_pi0t",
    "estimate_pi0",
    "fit_fdr",
    "fdr_to_FDR",
    "select_at",
    "posterior_nonnull",
]

DEFAULT_EPSILON = 1e-4
DEFAULT_L_MAX = 200
MIN_PER_GROUP = 10
# kernel matrices up to this many entries are cached across iterations
_CACHE_ENTRIES = 16_000_000
_BLOCK_ENTRIES = 1_000_000
_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class FdrFit:
    """Fitted target fdr.

    ``p``, ``fdr`` and ``target_scores`` are aligned with ``target_indices``.
    ``alt_density`` is None when ``pi0t == 1`` (no non-null mass to fit).
    """

    pi0t: float
    pi0: float
    null_density: KdeModel
    alt_density: KdeModel | None
    target_indices: np.ndarray
    target_scores: np.ndarray
    p: np.ndarray
    fdr: np.ndarray
    iterations: int
    converged: bool
    epsilon: float
    l_max: int
    h0: float
    h1: float

    def fdr_map(self) -> dict:
        return {int(i): float(v) for i, v in zip(self.target_indices, self.fdr)}

    def diagnostics(self) -> dict:
        return {
            "pi0t": self.pi0t,
            "pi0": self.pi0,
            "h0": self.h0,
            "h1": self.h1,
            "iterations": self.iterations,
            "converged": self.converged,
            "epsilon": self.epsilon,
            "l_max": self.l_max,
        }


def estimate_pi0t(result: CompetitionResult) -> float:
    """Null proportion among targets: ``min(#decoys / #targets, 1)``."""
    if result.n_target == 0:
        raise NoTargets("no target-labelled variables")
    return min(result.n_decoy / result.n_target, 1.0)


def estimate_pi0(result: CompetitionResult) -> float:
    """Overall null proportion: ``min(2 #decoys / m, 1)``."""
    m = len(result)
    if m == 0:
        raise InputError("competition result is empty")
    return min(2.0 * result.n_decoy / m, 1.0)


def posterior_nonnull(pi0, log_null_at, log_alt_at):
    """``pi1 f1 / (pi0 f0 + pi1 f1)`` from log densities.

    Working with logs keeps the ratio exact where both densities underflow.
    """
    log_num = _log(1.0 - pi0) + np.asarray(log_alt_at, dtype=np.float64)
    log_den = np.logaddexp(log_num, _log(pi0) + np.asarray(log_null_at, dtype=np.float64))
    with np.errstate(invalid="ignore"):
        p = np.exp(log_num - log_den)
    return np.where(np.isneginf(log_num), 0.0, np.minimum(p, 1.0))


def _log(x):
    return math.log(x) if x > 0 else -math.inf


def _relative_change(log_new, log_old):
    """``|p_new - p_old| / p_old`` elementwise, with x/0 = inf and 0/0 = 0."""
    with np.errstate(invalid="ignore", over="ignore"):
        rel = np.abs(np.expm1(log_new - log_old))
    was_zero = np.isneginf(log_old)
    return np.where(was_zero, np.where(np.isneginf(log_new), 0.0, np.inf), rel)


def _log_weighted_kde(log_kernel_rows, log_w):
    """Row-wise ``log sum_i exp(log_kernel[j, i] + log_w[i])``."""
    a = log_kernel_rows + log_w[None, :]
    top = a.max(axis=1)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(a - top[:, None]).sum(axis=1)) + top


def fit_fdr(result: CompetitionResult, epsilon=DEFAULT_EPSILON, l_max=DEFAULT_L_MAX,
            rng: RngHandle = None, trace=None) -> FdrFit:
    """Estimate the local fdr of every target variable.

    Parameters
    ----------
    result : CompetitionResult
        Needs at least 10 targets and 10 decoys.
    epsilon : float
        Stop when the largest relative change of ``p_j`` falls below this.
        A change away from an exact zero counts as infinite, so the first
        iterate never stops the loop.
    l_max : int
        Iteration cap.
    rng : RngHandle, optional
        Only consumed by bandwidth selection on very large score sets.
    trace : list, optional
        If given, every iterate of ``p`` (starting with the initial one) is
        appended to it.

    Returns
    -------
    FdrFit
    """
    if not epsilon > 0:
        raise InputError("epsilon must be positive")
    if int(l_max) < 1:
        raise InputError("l_max must be >= 1")
    l_max = int(l_max)
    if result.n_target < MIN_PER_GROUP:
        raise TooFewTargets(
            f"need >= {MIN_PER_GROUP} targets, got {result.n_target} "
            f"(decoys: {result.n_decoy})")
    if result.n_decoy < MIN_PER_GROUP:
        raise TooFewDecoys(
            f"need >= {MIN_PER_GROUP} decoys, got {result.n_decoy} "
            f"(targets: {result.n_target})")
    rng = rng or make_rng(0)

    pi0t = estimate_pi0t(result)
    pi0 = estimate_pi0(result)
    pi1t = 1.0 - pi0t
    scores = result.target_scores
    indices = result.target_indices

    h0 = select_bandwidth(result.decoy_scores, rng.child(0))
    null = kde_fit(result.decoy_scores, bandwidth=h0)
    h1 = select_bandwidth(scores, rng.child(1))
    log_null_at = null.log_evaluate(scores)

    p = (scores == scores.max()).astype(np.float64)
    if trace is not None:
        trace.append(p.copy())

    if pi1t == 0.0:
        p = np.zeros_like(scores)
        if trace is not None:
            trace.append(p.copy())
        return FdrFit(pi0t, pi0, null, None, indices, scores, p, 1.0 - p,
                      0, True, float(epsilon), l_max, h0, h1)

    # p is carried as log p: tail scores can have p far below the double
    # range and still grow back within a few iterations
    nt = scores.size
    step = max(1, _BLOCK_ENTRIES // nt)
    blocks = [slice(s, min(s + step, nt)) for s in range(0, nt, step)]
    cached = None
    if nt * nt <= _CACHE_ENTRIES:
        cached = [_log_kernel(scores[b], scores, h1) for b in blocks]
    log_norm = math.log(h1 * _SQRT_2PI)

    with np.errstate(divide="ignore"):
        log_p = np.log(p)
    converged = False
    iterations = 0
    for iterations in range(1, l_max + 1):
        log_w = log_p - _log_weighted_kde(np.zeros((1, nt)), log_p)[0]
        log_alt_at = np.empty(nt)
        for i, b in enumerate(blocks):
            rows = cached[i] if cached is not None else _log_kernel(scores[b], scores, h1)
            log_alt_at[b] = _log_weighted_kde(rows, log_w)
        log_alt_at -= log_norm
        log_num = math.log(pi1t) + log_alt_at
        log_new = log_num - np.logaddexp(log_num, math.log(pi0t) + log_null_at)
        rel = _relative_change(log_new, log_p)
        log_p = log_new
        if trace is not None:
            trace.append(np.exp(log_p))
        if rel.max() < epsilon:
            converged = True
            break
    p = np.exp(log_p)
    alt = kde_fit(scores, p, h1) if p.sum() > 0 else None
    fdr = 1.0 - p
    return FdrFit(pi0t, pi0, null, alt, indices, scores, p, fdr, iterations,
                  converged, float(epsilon), l_max, h0, h1)


def _log_kernel(queries, points, h):
    u = (queries[:, None] - points[None, :]) / h
    return -0.5 * u * u


def _descending_blocks(scores):
    """Order by descending score and the end positions of tied-score blocks."""
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True)) + 1
    return order, ends


def fdr_to_FDR(fit: FdrFit, result: CompetitionResult = None) -> dict:
    """FDR at each distinct target score ``t``: mean fdr over targets with ``S >= t``."""
    if result is not None and not np.array_equal(
            np.sort(result.target_indices), np.sort(fit.target_indices)):
        raise InputError("fit and competition result have different targets")
    order, ends = _descending_blocks(fit.target_scores)
    running = np.cumsum(fit.fdr[order])
    ordered_scores = fit.target_scores[order]
    return {float(ordered_scores[e - 1]): float(running[e - 1] / e) for e in ends}


def select_at(fit: FdrFit, result: CompetitionResult = None, q=0.05) -> np.ndarray:
    """Largest top-score set of targets whose mean fdr is at most ``q``.

    The set never splits tied scores. Returns sorted indices, possibly empty.
    """
    if result is not None and not np.array_equal(
            np.sort(result.target_indices), np.sort(fit.target_indices)):
        raise InputError("fit and competition result have different targets")
    if fit.target_scores.size == 0:
        return np.zeros(0, dtype=np.int64)
    order, ends = _descending_blocks(fit.target_scores)
    means = np.cumsum(fit.fdr[order])[ends - 1] / ends
    ok = np.flatnonzero(means <= q)
    if ok.size == 0:
        return np.zeros(0, dtype=np.int64)
    k = ends[ok[-1]]
    return np.sort(fit.target_indices[order[:k]])
