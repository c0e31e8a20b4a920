"""Target-decoy competition for two-group studies via decoy permutations.

Each variable gets an original t score and ``N`` scores on random
permutations of its samples. The rank of the original among the ``N + 1``
scores decides its label (median rule) and, for decoys, which permutation
score becomes the final score (the one at the mirrored rank).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CompetitionResult, RngHandle, parallel_map
from .exceptions import DegenerateVariance, InputError, NonFiniteInput

__all__ = ["TwoGroupData", "t_score", "median_rule", "compete", "td_select", "td_threshold"]

_BLOCK = 256


@dataclass(frozen=True, eq=False)
class TwoGroupData:
    """Samples x variables matrix; the first ``n_control`` rows are controls."""

    matrix: np.ndarray
    n_control: int
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=np.float64)
        if mat.ndim != 2:
            raise InputError("two-group data must be a 2-D samples x variables matrix")
        if not np.all(np.isfinite(mat)):
            raise NonFiniteInput("two-group data contain non-finite values")
        n1 = int(self.n_control)
        if n1 < 2 or mat.shape[0] - n1 < 2:
            raise InputError(
                f"need >= 2 control and >= 2 case samples, got {n1} and {mat.shape[0] - n1}"
            )
        ids = np.arange(mat.shape[1]) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (mat.shape[1],) or np.unique(ids).size != ids.size:
            raise InputError("variable ids must be unique, one per column")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "n_control", n1)
        object.__setattr__(self, "ids", ids)

    @property
    def n_case(self) -> int:
        return self.matrix.shape[0] - self.n_control

    @property
    def n_variables(self) -> int:
        return self.matrix.shape[1]


def _t_stats(values, n_control):
    """Pooled-variance t (case minus control) along the last axis.

    Returns NaN where both groups are constant.
    """
    ctrl = values[..., :n_control]
    case = values[..., n_control:]
    n1 = ctrl.shape[-1]
    n2 = case.shape[-1]
    m1 = ctrl.mean(axis=-1)
    m2 = case.mean(axis=-1)
    ss1 = ((ctrl - m1[..., None]) ** 2).sum(axis=-1)
    ss2 = ((case - m2[..., None]) ** 2).sum(axis=-1)
    pooled = (ss1 + ss2) / (n1 + n2 - 2)
    degenerate = (np.ptp(ctrl, axis=-1) == 0) & (np.ptp(case, axis=-1) == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (m2 - m1) / np.sqrt(pooled * (1.0 / n1 + 1.0 / n2))
    return np.where(degenerate, np.nan, t)


def t_score(control, case) -> float:
    """Two-sample pooled-variance t statistic, positive when case > control."""
    control = np.asarray(control, dtype=np.float64).ravel()
    case = np.asarray(case, dtype=np.float64).ravel()
    if control.size < 2 or case.size < 2:
        raise InputError("each group needs at least two observations")
    t = _t_stats(np.concatenate([control, case]), control.size)
    if np.isnan(t):
        raise DegenerateVariance("both groups have zero sample variance")
    return float(t)


def median_rule(original, permuted, rank, coin=False):
    """Label and final score of one variable from its rank among ``N + 1`` scores.

    Parameters
    ----------
    original : float
        Score on the unpermuted data.
    permuted : array_like
        The ``N`` permutation scores.
    rank : int
        Descending rank of ``original`` among all ``N + 1`` scores (1 = largest),
        tie offset already applied.
    coin : bool
        Label used when ``rank == (N + 2) / 2`` (True = Target).

    Returns
    -------
    is_target : bool
    final : float
        ``original`` for a Target; for a Decoy the score at the mirrored rank
        ``N + 2 - rank`` of the descending order.
    """
    permuted = np.asarray(permuted, dtype=np.float64).ravel()
    n_perm = permuted.size
    if not 1 <= rank <= n_perm + 1:
        raise InputError(f"rank must lie in [1, {n_perm + 1}], got {rank}")
    half = (n_perm + 2) / 2.0
    if rank < half:
        return True, float(original)
    if rank == half and coin:
        return True, float(original)
    ordered = np.sort(np.append(permuted, original))[::-1]
    return False, float(ordered[n_perm + 2 - rank - 1])


def _label_block(cols, ids, n_control, n_perm, rng, two_sided):
    n = cols.shape[0]
    half = (n_perm + 2) / 2.0
    gens = [rng.child(int(i)).generator for i in ids]
    base = np.tile(np.arange(n), (n_perm, 1))
    perms = np.stack([g.permuted(base, axis=1) for g in gens])  # (B, N, n)
    b_idx = np.arange(len(ids))[:, None, None]
    permuted = cols.T[b_idx, perms]
    orig = _t_stats(cols.T, n_control)
    perm = _t_stats(permuted, n_control)
    if two_sided:
        orig = np.abs(orig)
        perm = np.abs(perm)
    bad = np.isnan(orig) | np.isnan(perm).any(axis=1)
    greater = (perm > orig[:, None]).sum(axis=1)
    ties = (perm == orig[:, None]).sum(axis=1)

    keep, labels, finals = [], [], []
    for b, g in enumerate(gens):
        if bad[b]:
            keep.append(False)
            labels.append(False)
            finals.append(0.0)
            continue
        offset = int(g.integers(0, ties[b] + 1)) if ties[b] else 0
        rank = 1 + int(greater[b]) + offset
        coin = bool(g.random() < 0.5) if rank == half else False
        is_target, final = median_rule(orig[b], perm[b], rank, coin)
        keep.append(True)
        labels.append(is_target)
        finals.append(final)
    return np.array(keep), np.array(labels), np.array(finals)


def compete(data: TwoGroupData, n_perm: int = 19, rng: RngHandle = None,
            two_sided=False, threads=1) -> CompetitionResult:
    """Label each variable Target/Decoy by permutation competition.

    Parameters
    ----------
    data : TwoGroupData
    n_perm : int
        Number of random permutations ``N`` per variable.
    rng : RngHandle
        Per-variable streams are children of this handle keyed by variable id,
        so the output does not depend on column order or thread count.
    two_sided : bool
        Score with ``|t|`` instead of the signed statistic.
    threads : int

    Returns
    -------
    CompetitionResult
        Variables whose t statistic is undefined (both groups constant in the
        original or any permuted split) are left out and listed in
        ``meta["excluded"]``.
    """
    if int(n_perm) < 1:
        raise InputError("n_perm must be >= 1")
    if rng is None:
        raise InputError("compete needs an RngHandle")
    n_perm = int(n_perm)
    mat, ids = data.matrix, data.ids
    blocks = [slice(s, min(s + _BLOCK, ids.size)) for s in range(0, ids.size, _BLOCK)]

    def run(sl):
        return _label_block(mat[:, sl], ids[sl], data.n_control, n_perm, rng, two_sided)

    parts = parallel_map(run, blocks, threads)
    if parts:
        keep = np.concatenate([p[0] for p in parts])
        labels = np.concatenate([p[1] for p in parts])
        finals = np.concatenate([p[2] for p in parts])
    else:
        keep = labels = np.zeros(0, dtype=bool)
        finals = np.zeros(0)
    excluded = ids[~keep]
    meta = {
        "procedure": "two_group_permutation",
        "n_perm": str(n_perm),
        "seed": str(rng.seed),
        "stream": str(rng.stream),
        "statistic": "abs_t" if two_sided else "t",
        "n_excluded": str(excluded.size),
        "excluded": ";".join(str(i) for i in excluded),
    }
    return CompetitionResult(ids[keep], labels[keep], finals[keep], meta)


def td_threshold(is_target, scores, q) -> int:
    """``K_td``: the largest k with (decoys in top k + 1)/(targets in top k v 1) <= q.

    Variables are ordered by descending score; ties keep input order.
    Returns 0 when no k qualifies.
    """
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    tgt = np.asarray(is_target, dtype=bool)[order]
    n_t = np.cumsum(tgt)
    n_d = np.cumsum(~tgt)
    ratio = (n_d + 1) / np.maximum(n_t, 1)
    ok = np.flatnonzero(ratio <= q)
    return int(ok[-1] + 1) if ok.size else 0


def td_select(result: CompetitionResult, q: float) -> np.ndarray:
    """Indices of targets ranked within the top ``K_td`` (sorted ascending)."""
    if not 0 < q < 1:
        raise InputError(f"q must lie in (0, 1), got {q}")
    if len(result) == 0:
        raise InputError("competition result is empty")
    k = td_threshold(result.is_target, result.scores, q)
    order = np.argsort(-result.scores, kind="stable")[:k]
    top = order[result.is_target[order]]
    return np.sort(result.indices[top])
