"""Fixed-X knockoffs with Lasso signed-max statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import CompetitionResult, RngHandle, make_rng
from .exceptions import DimensionError, FactorizationError, InputError, NonFiniteInput, SingularGram
from .lasso import geometric_grid, lambda_max, lasso_path_entries

__all__ = [
    "KnockoffModel",
    "KnockoffStats",
    "normalize_columns",
    "construct_knockoffs",
    "knockoff_stats",
    "signed_max",
    "knockoff_threshold",
    "knockoff_select",
    "to_competition",
]

SINGULAR_TOL = 1e-10
PSD_FLOOR = 1e-12
MAX_RESIDUAL = 1e-6
DEFAULT_GRID_SIZE = 200


@dataclass(frozen=True, eq=False)
class KnockoffModel:
    design: np.ndarray
    gram: np.ndarray
    s: np.ndarray
    knockoffs: np.ndarray
    u_tilde: np.ndarray
    residuals: float

    @property
    def augmented(self) -> np.ndarray:
        return np.hstack([self.design, self.knockoffs])


@dataclass(frozen=True, eq=False)
class KnockoffStats:
    z: np.ndarray
    z_tilde: np.ndarray
    w: np.ndarray


def normalize_columns(design):
    """Center each column and scale it to unit Euclidean norm."""
    x = np.asarray(design, dtype=np.float64)
    x = x - x.mean(axis=0)
    norms = np.linalg.norm(x, axis=0)
    if np.any(norms == 0):
        bad = np.flatnonzero(norms == 0)
        raise InputError(f"constant design column(s): {bad.tolist()}")
    return x / norms


def construct_knockoffs(design_raw, rng: RngHandle) -> KnockoffModel:
    """Equicorrelated fixed-X knockoffs.

    With ``Sigma = X'X`` of the normalized design and ``s_j = min(2
    lambda_min(Sigma), 1)``, returns ``X(I - Sigma^-1 S) + U C`` where ``U``
    spans part of the orthogonal complement of ``X`` and ``C'C = 2S - S
    Sigma^-1 S``. Requires ``n >= 2m``.
    """
    x_raw = np.asarray(design_raw, dtype=np.float64)
    if x_raw.ndim != 2:
        raise InputError("design must be a 2-D matrix")
    n, m = x_raw.shape
    if n < 2 * m:
        raise DimensionError(f"fixed-X knockoffs need n >= 2m, got n={n}, m={m}")
    if not np.all(np.isfinite(x_raw)):
        raise NonFiniteInput("design contains non-finite values")
    x = normalize_columns(x_raw)
    sigma = x.T @ x
    sigma = (sigma + sigma.T) / 2
    lam_min = float(np.linalg.eigvalsh(sigma)[0])
    if lam_min <= SINGULAR_TOL:
        raise SingularGram(f"Gram matrix is singular (min eigenvalue {lam_min:.3g})")
    s = np.full(m, min(2.0 * lam_min, 1.0))

    chol = scipy.linalg.cho_factor(sigma)
    sigma_inv_s = scipy.linalg.cho_solve(chol, np.diag(s))
    target = 2.0 * np.diag(s) - s[:, None] * sigma_inv_s
    target = (target + target.T) / 2
    c = _psd_cholesky(target)

    g = rng.generator.standard_normal((n, m))
    q, _ = np.linalg.qr(np.hstack([x, g]))
    u_tilde = q[:, m:2 * m]

    knock = x - x @ sigma_inv_s + u_tilde @ c
    resid = max(
        float(np.max(np.abs(knock.T @ knock - sigma))),
        float(np.max(np.abs(x.T @ knock - (sigma - np.diag(s))))),
    )
    if resid > MAX_RESIDUAL:
        raise FactorizationError(f"knockoff identities violated by {resid:.3g}")
    return KnockoffModel(x, sigma, s, knock, u_tilde, resid)


def _psd_cholesky(mat):
    # clamp tiny/negative eigenvalues before factorizing; the equicorrelated
    # choice makes the target exactly singular in exact arithmetic
    evals, evecs = np.linalg.eigh(mat)
    top = max(float(evals[-1]), 0.0)
    floor = PSD_FLOOR * top if top > 0 else PSD_FLOOR
    if evals[0] < floor:
        evals = np.maximum(evals, floor)
        mat = (evecs * evals) @ evecs.T
        mat = (mat + mat.T) / 2
    try:
        lower = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"Cholesky factorization failed: {exc}") from None
    return lower.T


def signed_max(z, z_tilde):
    """``max(z, z~) * sign(z - z~)``; zero on ties."""
    z = np.asarray(z, dtype=np.float64)
    z_tilde = np.asarray(z_tilde, dtype=np.float64)
    return np.maximum(z, z_tilde) * np.sign(z - z_tilde)


def knockoff_stats(model: KnockoffModel, response, grid_size=DEFAULT_GRID_SIZE,
                   backend=None) -> KnockoffStats:
    """Lasso entry statistics on ``[X X~]`` and their signed-max ``W``.

    The response is centered first. The penalty grid is geometric with
    ``grid_size`` points from ``lambda_max`` down to ``lambda_max/1000``.
    """
    y = np.asarray(response, dtype=np.float64).ravel()
    n, m = model.design.shape
    if y.size != n:
        raise InputError(f"response has {y.size} rows, design has {n}")
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("response contains non-finite values")
    if int(grid_size) < 2:
        raise InputError("grid_size must be >= 2")
    y = y - y.mean()
    aug = model.augmented
    top = lambda_max(aug, y)
    if top <= 0:
        zeros = np.zeros(m)
        return KnockoffStats(zeros, zeros.copy(), zeros.copy())
    entries = lasso_path_entries(aug, y, geometric_grid(top, grid_size), backend=backend)
    z, z_tilde = entries[:m], entries[m:]
    return KnockoffStats(z, z_tilde, signed_max(z, z_tilde))


def knockoff_threshold(w, q) -> float:
    """``T_ko``: smallest nonzero |W| with (#{W <= -t} + 1)/(#{W >= t} v 1) <= q.

    Returns ``inf`` when no candidate qualifies.
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    cand = np.unique(np.abs(w[w != 0]))
    if cand.size == 0:
        return np.inf
    ws = np.sort(w)
    n_neg = np.searchsorted(ws, -cand, side="right")
    n_pos = ws.size - np.searchsorted(ws, cand, side="left")
    ok = (n_neg + 1) / np.maximum(n_pos, 1) <= q
    return float(cand[ok][0]) if ok.any() else np.inf


def knockoff_select(stats, q: float) -> np.ndarray:
    """Indices with ``W_j >= T_ko`` (sorted ascending); empty if none qualify."""
    if not 0 < q < 1:
        raise InputError(f"q must lie in (0, 1), got {q}")
    w = stats.w if isinstance(stats, KnockoffStats) else np.asarray(stats, dtype=np.float64)
    t = knockoff_threshold(w, q)
    return np.flatnonzero(w >= t)


def to_competition(stats, rng: RngHandle = None) -> CompetitionResult:
    """Map knockoff statistics onto labels: sign gives Target/Decoy, |W| the score.

    Zero statistics get a fair-coin label and score 0, drawn from ``rng``
    (seed 0 if omitted) and listed in ``meta["zero_w"]``.
    """
    w = stats.w if isinstance(stats, KnockoffStats) else np.asarray(stats, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64).ravel()
    is_target = w > 0
    zero = np.flatnonzero(w == 0)
    if zero.size:
        gen = (rng or make_rng(0)).generator
        is_target[zero] = gen.random(zero.size) < 0.5
    meta = {
        "procedure": "knockoff",
        "n_zero_w": str(zero.size),
        "zero_w": ";".join(str(i) for i in zero),
    }
    if rng is not None:
        meta["seed"] = str(rng.seed)
    return CompetitionResult(np.arange(w.size), is_target, np.abs(w), meta)
