"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np

_EXP_CUTOFF = 50.0


def _sweep(gram, diag, resid, beta, order, lam):
    dmax = 0.0
    for j in order:
        gjj = diag[j]
        if gjj <= 0.0:
            continue
        z = resid[j] + gjj * beta[j]
        if z > lam:
            new = (z - lam) / gjj
        elif z < -lam:
            new = (z + lam) / gjj
        else:
            new = 0.0
        delta = new - beta[j]
        if delta != 0.0:
            beta[j] = new
            resid -= delta * gram[j]
            if abs(delta) > dmax:
                dmax = abs(delta)
    return dmax


def cd_solve(gram, beta, resid, lam, tol, max_sweeps):
    diag = gram.diagonal().tolist()
    full = range(gram.shape[0])
    n = 0
    while n < max_sweeps:
        dmax = _sweep(gram, diag, resid, beta, full, lam)
        n += 1
        if dmax < tol:
            return n, True
        active = np.flatnonzero(beta).tolist()
        while n < max_sweeps:
            dmax = _sweep(gram, diag, resid, beta, active, lam)
            n += 1
            if dmax < tol:
                break
    return n, False


def lscv_pair_sums(x_sorted, hs, block=4_000_000):
    x = np.asarray(x_sorted, dtype=np.float64)
    hs = np.asarray(hs, dtype=np.float64)
    inv4h2 = 1.0 / (4.0 * hs * hs)
    a = np.zeros(hs.size)
    b = np.zeros(hs.size)
    n = x.size
    chunk = max(1, block // max(n, 1))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d2 = (x[start:stop, None] - x[None, :]) ** 2
        # keep pairs i < j only
        rows = np.arange(start, stop)[:, None]
        cols = np.arange(n)[None, :]
        d2 = d2[cols > rows]
        for k in range(hs.size):
            t = d2 * inv4h2[k]
            e = np.exp(-t)
            e[t > _EXP_CUTOFF] = 0.0
            a[k] += e.sum()
            b[k] += (e * e).sum()
    return a, b
