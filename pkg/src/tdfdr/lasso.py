"""Lasso path entry points by warm-started coordinate descent."""
from __future__ import annotations

import numpy as np

from ._backend import get_kernels
from .exceptions import InputError, NoConvergence, NonFiniteInput

__all__ = ["lasso_path_entries", "lambda_max", "geometric_grid"]

TOL = 1e-8
MAX_ITER = 100_000
# sweeps at one penalty before an exact active-set step is attempted
POLISH_AFTER = 100
# Gram eigenvalues below this fraction of the largest count as flat directions
NULL_TOL = 1e-9


def lambda_max(design, response) -> float:
    """Smallest penalty with an all-zero solution of 1/2||y - Ab||^2 + lam||b||_1."""
    return float(np.max(np.abs(np.asarray(design).T @ np.asarray(response)), initial=0.0))


def geometric_grid(top, size, ratio=1e-3):
    return np.geomspace(top, top * ratio, int(size))


def lasso_path_entries(design_aug, response, lambda_grid, tol=TOL, max_iter=MAX_ITER,
                       backend=None):
    """Largest grid penalty at which each coefficient is nonzero.

    Solves ``1/2 ||y - A b||^2 + lam ||b||_1`` at every grid point by cyclic
    coordinate descent with covariance updates, warm-started from the
    previous grid point. A grid point is solved when a full sweep moves no
    coefficient by more than ``tol``. Every ``POLISH_AFTER`` sweeps without
    that, an exact step on the current nonzero set is tried.

    Parameters
    ----------
    design_aug : ndarray, shape (n, p)
    response : ndarray, shape (n,)
    lambda_grid : ndarray
        Strictly descending positive penalties; the first must be at least
        ``lambda_max(design_aug, response)``.

    Returns
    -------
    ndarray, shape (p,)
        Entry penalty per column, 0 for columns never active on the grid.
    """
    a = np.asarray(design_aug, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64).ravel()
    grid = np.asarray(lambda_grid, dtype=np.float64).ravel()
    if a.ndim != 2 or a.shape[0] != y.size:
        raise InputError(f"design {a.shape} and response ({y.size},) do not conform")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(y)) and np.all(np.isfinite(grid))):
        raise NonFiniteInput("lasso inputs must be finite")
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
        raise InputError("lambda grid must be positive and strictly descending")
    corr = a.T @ y
    top = float(np.max(np.abs(corr), initial=0.0))
    if grid[0] < top * (1 - 1e-12):
        raise InputError(f"grid top {grid[0]:g} is below lambda_max {top:g}")
    gram = np.ascontiguousarray(a.T @ a)
    kernels = get_kernels(backend)
    beta = np.zeros(a.shape[1])
    resid = np.array(corr, dtype=np.float64)
    entries = np.zeros(a.shape[1])
    for g, lam in enumerate(grid.tolist()):
        used = 0
        while True:
            chunk = min(POLISH_AFTER, max_iter - used)
            n, converged = kernels.cd_solve(gram, beta, resid, lam, float(tol), chunk)
            used += n
            if converged:
                break
            if used >= max_iter:
                raise NoConvergence(
                    f"coordinate descent did not converge in {max_iter} sweeps at "
                    f"lambda={lam:g} (grid point {g})"
                )
            _polish(gram, beta, resid, lam)
        entries[(beta != 0.0) & (entries == 0.0)] = lam
    return entries


def _polish(gram, beta, resid, lam) -> bool:
    """Jump to an exact solution with the current signs, if one exists.

    Coordinate descent crawls along flat directions of a singular Gram
    matrix (equicorrelated knockoffs make ``[X X~]`` rank deficient). The
    stationarity equations on the nonzero set are solved in the
    well-conditioned eigenspace of its Gram block; along each (near) null
    direction the objective is constant while signs are kept, so the
    iterate slides to the first coordinate that reaches zero. The step is
    committed only if every remaining sign is kept and every zero
    coefficient still satisfies ``|resid_j| <= lam``. Returns whether the
    step was taken.
    """
    act = np.flatnonzero(beta)
    if act.size == 0:
        return False
    sign = np.sign(beta[act])
    evals, evecs = np.linalg.eigh(gram[np.ix_(act, act)])
    flat = evals <= NULL_TOL * max(float(evals[-1]), 0.0)
    rng_vecs = evecs[:, ~flat]
    kkt = resid[act] - lam * sign
    new = beta[act] + rng_vecs @ ((rng_vecs.T @ kkt) / evals[~flat])
    dropped = np.zeros(act.size, dtype=bool)
    for u in evecs[:, flat].T:
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where((u != 0) & ~dropped, -new / u, np.inf)
        i = int(np.argmin(np.abs(t)))
        if not np.isfinite(t[i]):
            continue
        new = new + t[i] * u
        new[i] = 0.0
        dropped[i] = True
    if np.any(np.sign(new[~dropped]) != sign[~dropped]):
        return False
    step = new - beta[act]
    new_resid = resid - gram[:, act] @ step
    zero = np.ones(beta.size, dtype=bool)
    zero[act[~dropped]] = False
    if np.any(np.abs(new_resid[zero]) > lam * (1 + 1e-9)):
        return False
    beta[act] = new
    resid[:] = new_resid
    return True
