"""Gaussian kernel density estimation with least-squares CV bandwidths."""
from __future__ import annotations

import logging
import math
import warnings

import numpy as np
from scipy.special import logsumexp

from ._backend import get_kernels
from .exceptions import (
    AllZeroWeights,
    EmptyInput,
    NonFiniteInput,
    NonPositiveBandwidth,
    TooFewPoints,
)

logger = logging.getLogger(__name__)

BANDWIDTH_FLOOR = 1e-6
# above this many points bandwidths are selected on a random subset
EXACT_PAIR_LIMIT = 20_000

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SQRT_PI = math.sqrt(math.pi)
_EVAL_BLOCK = 4_000_000


class KdeModel:
    """Weighted Gaussian KDE ``f(x) = sum_j w_j phi((x - x_j)/h) / (h sum_j w_j)``."""

    __slots__ = ("points", "weights", "bandwidth", "_wsum")

    kernel = "gaussian"

    def __init__(self, points, weights, bandwidth):
        self.points = points
        self.weights = weights
        self.bandwidth = bandwidth
        self._wsum = float(weights.sum())

    def __call__(self, x):
        return self.evaluate(x)

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        flat = np.atleast_1d(x).ravel()
        out = np.empty(flat.size)
        h = self.bandwidth
        step = max(1, _EVAL_BLOCK // max(self.points.size, 1))
        for start in range(0, flat.size, step):
            q = flat[start:start + step]
            u = (q[:, None] - self.points[None, :]) / h
            out[start:start + step] = np.exp(-0.5 * u * u) @ self.weights
        out /= h * self._wsum * _SQRT_2PI
        return out.reshape(x.shape) if x.ndim else out[0]

    def log_evaluate(self, x):
        """``log f(x)``, accurate far in the tails where ``f`` underflows."""
        x = np.asarray(x, dtype=np.float64)
        flat = np.atleast_1d(x).ravel()
        out = np.empty(flat.size)
        step = max(1, _EVAL_BLOCK // max(self.points.size, 1))
        for start in range(0, flat.size, step):
            u = (flat[start:start + step, None] - self.points[None, :]) / self.bandwidth
            with np.errstate(divide="ignore"):
                out[start:start + step] = logsumexp(-0.5 * u * u, b=self.weights[None, :], axis=1)
        out -= math.log(self.bandwidth * self._wsum * _SQRT_2PI)
        return out.reshape(x.shape) if x.ndim else out[0]

    def __repr__(self):
        return f"KdeModel(n={self.points.size}, bandwidth={self.bandwidth:.6g})"


def kde_fit(points, weights=None, bandwidth=1.0) -> KdeModel:
    """Fit a Gaussian KDE with a fixed bandwidth.

    Parameters
    ----------
    points : array_like
        Sample locations.
    weights : array_like, optional
        Nonnegative weights with positive sum; uniform when omitted.
    bandwidth : float
        Kernel standard deviation, must be positive.
    """
    pts = np.asarray(points, dtype=np.float64).ravel()
    if pts.size == 0:
        raise EmptyInput("KDE needs at least one point")
    if not np.all(np.isfinite(pts)):
        raise NonFiniteInput("KDE points must be finite")
    h = float(bandwidth)
    if not h > 0 or not math.isfinite(h):
        raise NonPositiveBandwidth(f"bandwidth must be positive, got {bandwidth}")
    if weights is None:
        w = np.ones(pts.size)
    else:
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.shape != pts.shape:
            raise EmptyInput("weights and points must have the same length")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise AllZeroWeights("weights must be finite and nonnegative")
        if not w.sum() > 0:
            raise AllZeroWeights("weights sum to zero")
    pts = pts.copy()
    w = w.copy()
    pts.setflags(write=False)
    w.setflags(write=False)
    return KdeModel(pts, w, h)


def silverman_bandwidth(points) -> float:
    """Rule of thumb ``0.9 min(sd, IQR/1.34) n^(-1/5)``, floored.

    If one of the two spread measures is zero the other is used.
    """
    x = np.asarray(points, dtype=np.float64).ravel()
    n = x.size
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25) / 1.34
    spread = min(sd, iqr) if sd > 0 and iqr > 0 else max(sd, iqr)
    return max(0.9 * spread * n ** (-0.2), BANDWIDTH_FLOOR)


def bandwidth_grid(h_ref, size=30, span=8.0):
    return np.geomspace(h_ref / span, h_ref * span, size)


def lscv_scores(points, bandwidths, backend=None):
    """Least-squares CV criterion ``int f_h^2 - (2/n) sum_j f_{h,-j}(x_j)``.

    Evaluated in closed form: the square integral of a Gaussian KDE is a
    pair sum with kernel width ``h*sqrt(2)``.
    """
    x = np.sort(np.asarray(points, dtype=np.float64).ravel())
    hs = np.asarray(bandwidths, dtype=np.float64)
    n = x.size
    order = np.argsort(hs)
    hs_sorted = hs[order]
    a_sum, b_sum = get_kernels(backend).lscv_pair_sums(x, hs_sorted)
    a = np.empty_like(a_sum)
    b = np.empty_like(b_sum)
    a[order] = a_sum
    b[order] = b_sum
    square_int = (n + 2.0 * a) / (2.0 * n * n * hs * _SQRT_PI)
    loo = 4.0 * b / (n * (n - 1) * hs * _SQRT_2PI)
    return square_int - loo


def select_bandwidth(points, rng=None, grid_size=30, backend=None) -> float:
    """Bandwidth minimizing least-squares CV on a grid around Silverman's rule.

    The grid is geometric over ``[h_S/8, 8 h_S]``. A minimizer on either grid
    end means the criterion is monotone over the grid, and ``h_S`` is
    returned instead.

    Above ``EXACT_PAIR_LIMIT`` points the selection runs on a random subset
    of that size drawn from ``rng`` and is rescaled by the ``n^(-1/5)``
    rate. ``rng`` is not consumed otherwise.
    """
    x = np.asarray(points, dtype=np.float64).ravel()
    if x.size < 10:
        raise TooFewPoints(f"bandwidth selection needs >= 10 points, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("points must be finite")
    if x.size > EXACT_PAIR_LIMIT:
        if rng is None:
            raise TooFewPoints(f"bandwidth selection above {EXACT_PAIR_LIMIT} points needs an rng")
        sub = rng.generator.choice(x, size=EXACT_PAIR_LIMIT, replace=False)
        h = select_bandwidth(sub, grid_size=grid_size, backend=backend)
        return max(h * (EXACT_PAIR_LIMIT / x.size) ** 0.2, BANDWIDTH_FLOOR)
    h_s = silverman_bandwidth(x)
    if h_s <= BANDWIDTH_FLOOR:
        warnings.warn("points have zero spread; using the bandwidth floor",
                      RuntimeWarning, stacklevel=2)
        return BANDWIDTH_FLOOR
    grid = bandwidth_grid(h_s, grid_size)
    scores = lscv_scores(x, grid, backend=backend)
    best = int(np.argmin(scores))
    if best == 0 or best == grid.size - 1:
        logger.debug("LSCV minimizer on grid boundary; falling back to h_S=%g", h_s)
        return h_s
    return max(float(grid[best]), BANDWIDTH_FLOOR)
