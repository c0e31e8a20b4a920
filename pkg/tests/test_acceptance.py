"""Acceptance suite: one test per criterion, each recording a pass/fail line.

The simulation criteria run at desk scale with the package default seed 0.
Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines are
printed at the end of the session.
"""
import numpy as np
import pytest
from scipy import integrate, stats

from tdfdr import (
    CompetitionResult,
    SimulationConfig,
    TwoGroupData,
    compete,
    construct_knockoffs,
    estimate_pi0,
    fit_fdr,
    kde_fit,
    knockoff_select,
    make_rng,
    run_experiment,
    td_select,
    to_competition,
)
from tdfdr.knockoff import signed_max
from tdfdr.lasso import geometric_grid, lambda_max, lasso_path_entries
from tdfdr.simulation import ar1_design, generate_two_group

Q = (0.05, 0.1, 0.2)


# -- 1 ------------------------------------------------------------------------

def test_criterion_1_fdr_accuracy(normal_report, acceptance):
    med = normal_report.rmse_median
    acceptance(1, med < 0.05, f"median RMSE {med:.4f} < 0.05 over {len(normal_report.reps)} reps")


# -- 2 ------------------------------------------------------------------------

def test_criterion_2_pi0_estimation(acceptance):
    worst, details, bounded = 0.0, [], True
    for pi0 in (0.5, 0.7, 0.8, 0.9, 0.95, 1.0):
        cfg = SimulationConfig(scenario="normal", m=2000, pi0=pi0, effect=3.0, reps=20, seed=0)
        est = []
        for k in range(cfg.reps):
            rng = make_rng(cfg.seed, k)
            data, truth = generate_two_group(cfg, rng.child(0))
            est.append(estimate_pi0(compete(data, 19, rng.child(1), threads=None)))
            true_pi0 = 1.0 - truth.n_nonnull / cfg.m
        err = float(np.mean(np.abs(np.array(est) - true_pi0)))
        bounded &= max(est) <= 1.0
        worst = max(worst, err)
        details.append(f"{pi0}:{err:.4f}")
    acceptance(2, worst <= 0.05 and bounded,
               f"max mean |pi0_hat - pi0| {worst:.4f} <= 0.05, all <= 1: {bounded}; " + " ".join(details))


# -- 3 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def gamma_report():
    cfg = SimulationConfig(scenario="gamma", m=2000, pi0=0.8, effect=7.0, group_size=5,
                           n_perm=19, reps=20, seed=0, thresholds=Q)
    return run_experiment(cfg)


def test_criterion_3_fdr_control_two_group(normal_report, gamma_report, acceptance):
    ok, parts = True, []
    for name, rep in (("normal", normal_report), ("gamma", gamma_report)):
        for q in Q:
            a, b = rep.realized_fdr[q], rep.baseline_fdr[q]
            ok &= a <= q + 0.03 and b <= q + 0.03
            parts.append(f"{name} q={q}: tdfdr {a:.3f} td {b:.3f}")
    acceptance(3, ok, "realized FDR <= q + 0.03; " + "; ".join(parts))


# -- 4 ------------------------------------------------------------------------

def test_criterion_4_regression(acceptance):
    ok, parts = True, []
    for rho in (0.0, 0.3):
        cfg = SimulationConfig(scenario="regression", m=200, n=600, pi0=0.8, effect=3.5, rho=rho,
                               reps=10, seed=0, thresholds=(0.2,))
        rep = run_experiment(cfg)
        assert cfg.n_nonnull == 40
        fdr, kfdr = rep.realized_fdr[0.2], rep.baseline_fdr[0.2]
        pw, kpw = rep.mean_power[0.2], rep.baseline_power[0.2]
        ok &= fdr <= 0.25 and kfdr <= 0.25 and pw >= kpw - 0.02
        parts.append(f"rho={rho}: FDR tdfdr {fdr:.3f} ko {kfdr:.3f}, power tdfdr {pw:.3f} ko {kpw:.3f}")
    acceptance(4, ok, "q=0.2, FDR <= 0.25 and power >= ko - 0.02; " + "; ".join(parts))


# -- 5 ------------------------------------------------------------------------

def _enumerate_td(labels, scores, q):
    """Largest k with (#decoys + 1) / (#targets v 1) <= q in the top k.

    Descending score order, ties kept in input order.
    """
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    best = 0
    for k in range(1, len(labels) + 1):
        top = labels[order[:k]]
        if (np.sum(~top) + 1) / max(np.sum(top), 1) <= q:
            best = k
    return sorted(int(i) for i in order[:best] if labels[i])


def _enumerate_ko(w, q):
    """All nonzero |W| tried as thresholds; smallest qualifying one wins."""
    ok = [t for t in np.abs(w[w != 0])
          if (np.sum(w <= -t) + 1) / max(np.sum(w >= t), 1) <= q]
    if not ok:
        return []
    return np.flatnonzero(w >= min(ok)).tolist()


def test_criterion_5_threshold_oracles(acceptance):
    gen = np.random.default_rng(5)
    bad = [0, 0, 0]
    for _ in range(1000):
        n = int(gen.integers(1, 51))
        labels = gen.random(n) < gen.uniform(0.3, 0.95)
        scores = np.round(gen.exponential(size=n), int(gen.integers(0, 3)))
        q = float(gen.uniform(0.01, 0.99))
        got = td_select(CompetitionResult(np.arange(n), labels, scores), q).tolist()
        bad[0] += got != _enumerate_td(labels, scores, q)
    for _ in range(1000):
        n = int(gen.integers(1, 51))
        w = np.round(gen.normal(0.8, 1.5, size=n), int(gen.integers(0, 3)))
        q = float(gen.uniform(0.01, 0.99))
        bad[1] += knockoff_select(w, q).tolist() != _enumerate_ko(w, q)
    for _ in range(1000):
        n = int(gen.integers(1, 51))
        mags = gen.permutation(n) + 1 + gen.random(n) * 0.5
        w = mags * np.where(gen.random(n) < gen.uniform(0.4, 0.95), 1.0, -1.0)
        q = float(gen.uniform(0.01, 0.99))
        bad[2] += td_select(to_competition(w), q).tolist() != knockoff_select(w, q).tolist()
    acceptance(5, bad == [0, 0, 0],
               f"mismatches td {bad[0]}/1000, knockoff {bad[1]}/1000, td after mapping {bad[2]}/1000")


# -- 6 ------------------------------------------------------------------------

def test_criterion_6_knockoff_identities(acceptance):
    worst_res, worst_u, antisym = 0.0, 0.0, 0
    for seed in range(50):
        gen = np.random.default_rng(600 + seed)
        m = int(gen.integers(5, 101))
        rho = float(gen.choice([0.0, 0.3, 0.6]))
        model = construct_knockoffs(ar1_design(4 * m, m, rho, gen), make_rng(seed))
        x, xk, sigma, s, u = model.design, model.knockoffs, model.gram, model.s, model.u_tilde
        worst_res = max(worst_res, np.abs(xk.T @ xk - sigma).max(),
                        np.abs(x.T @ xk - (sigma - np.diag(s))).max())
        worst_u = max(worst_u, np.abs(u.T @ u - np.eye(m)).max(), np.abs(x.T @ u).max())

        k = max(1, m // 5)
        y = x[:, :k] @ gen.choice([-3.5, 3.5], size=k) + gen.normal(size=4 * m)
        y = y - y.mean()
        aug = model.augmented
        grid = geometric_grid(lambda_max(aug, y), 200)
        e = lasso_path_entries(aug, y, grid)
        w = signed_max(e[:m], e[m:])
        j = int(gen.integers(0, m))
        swapped = aug.copy()
        swapped[:, [j, m + j]] = swapped[:, [m + j, j]]
        e2 = lasso_path_entries(swapped, y, grid)
        expect = w.copy()
        expect[j] = -expect[j]
        antisym += np.array_equal(signed_max(e2[:m], e2[m:]), expect)
    ok = worst_res <= 1e-8 and worst_u <= 1e-10 and antisym == 50
    acceptance(6, ok, f"max residual {worst_res:.2e} <= 1e-8, U~ error {worst_u:.2e} <= 1e-10, "
                      f"antisymmetry {antisym}/50")


# -- 7 ------------------------------------------------------------------------

def _rel_change(new, old):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(old > 0, np.abs(new - old) / old, np.where(new > 0, np.inf, 0.0))


def test_criterion_7_estimator_invariants(acceptance):
    checks = {}
    gen = np.random.default_rng(7)

    # iteration invariants on competition output
    cfg = SimulationConfig(scenario="normal", m=2000, pi0=0.8, effect=3.0)
    in_range, exact, stop = True, True, True
    for k in range(3):
        rng = make_rng(70, k)
        data, _ = generate_two_group(cfg, rng.child(0))
        res = compete(data, 19, rng.child(1), threads=None)
        trace = []
        eps, l_max = (1e-4, 200) if k == 0 else (1e-3, 40)
        fit = fit_fdr(res, eps, l_max, rng.child(3), trace=trace)
        in_range &= all(np.all((p >= 0) & (p <= 1)) for p in trace)
        exact &= bool(np.all(fit.fdr == 1.0 - fit.p))
        stop &= fit.iterations <= l_max and len(trace) == fit.iterations + 1
        if fit.converged:
            stop &= bool(_rel_change(trace[-1], trace[-2]).max() < eps)
        else:
            stop &= fit.iterations == l_max
    checks["p in [0,1]"] = in_range
    checks["fdr = 1 - p"] = exact
    checks["stopping rule"] = stop

    # KDE normalization and uniform weights
    norm_err, w_err = 0.0, 0.0
    for _ in range(10):
        pts = gen.normal(size=int(gen.integers(2, 300))) * gen.uniform(0.1, 5)
        h = float(gen.uniform(0.05, 2))
        f = kde_fit(pts, gen.uniform(0, 2, size=pts.size), h)
        xs = np.linspace(pts.min() - 10 * h, pts.max() + 10 * h, 10_001)
        norm_err = max(norm_err, abs(integrate.simpson(f(xs), x=xs) - 1.0))
        plain = kde_fit(pts, bandwidth=h)(xs)
        uni = kde_fit(pts, np.full(pts.size, gen.uniform(0.1, 10)), h)(xs)
        w_err = max(w_err, np.abs(plain - uni).max())
    checks[f"KDE normalization ({norm_err:.1e})"] = norm_err <= 1e-3
    checks[f"uniform weights ({w_err:.1e})"] = w_err <= 1e-12

    # pure-null label split
    res = compete(TwoGroupData(gen.normal(size=(10, 4000)), 5), 19, make_rng(71), threads=None)
    pval = stats.binomtest(res.n_target, len(res), 0.5).pvalue
    checks[f"50/50 split (p={pval:.2f})"] = pval > 0.01

    # thread independence
    data, _ = generate_two_group(cfg, make_rng(72))
    a = compete(data, 19, make_rng(73), threads=1)
    b = compete(data, 19, make_rng(73), threads=8)
    same = (a.is_target.tobytes() == b.is_target.tobytes() and a.scores.tobytes() == b.scores.tobytes())
    fa, fb = fit_fdr(a, rng=make_rng(74)), fit_fdr(b, rng=make_rng(74))
    same &= fa.p.tobytes() == fb.p.tobytes()
    small = SimulationConfig(scenario="normal", m=300, pi0=0.8, effect=3.0, reps=4, seed=75)
    same &= run_experiment(small, threads=1).reps == run_experiment(small, threads=8).reps
    checks["1 vs 8 threads"] = bool(same)

    failed = [name for name, ok in checks.items() if not ok]
    acceptance(7, not failed, ", ".join(f"{n}: {'ok' if v else 'FAIL'}" for n, v in checks.items()))
