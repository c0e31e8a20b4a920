import numpy as np
import pytest

from tdfdr import (
    SimulationConfig,
    construct_knockoffs,
    generate_regression,
    knockoff_select,
    knockoff_stats,
    make_rng,
    td_select,
    to_competition,
)
from tdfdr.exceptions import DimensionError, InputError, SingularGram
from tdfdr.knockoff import KnockoffStats, knockoff_threshold, normalize_columns, signed_max
from tdfdr.lasso import geometric_grid, lambda_max, lasso_path_entries
from tdfdr.simulation import ar1_design


def _check_identities(model, tol):
    x, xk, sigma = model.design, model.knockoffs, model.gram
    assert np.max(np.abs(xk.T @ xk - sigma)) <= tol
    assert np.max(np.abs(x.T @ xk - (sigma - np.diag(model.s)))) <= tol
    assert model.residuals <= tol


def test_normalize_columns():
    x = normalize_columns(np.random.default_rng(0).normal(3, 2, size=(20, 4)))
    np.testing.assert_allclose(x.mean(axis=0), 0, atol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(x, axis=0), 1, rtol=1e-14)
    with pytest.raises(InputError):
        normalize_columns(np.ones((5, 2)))


def test_orthogonal_design():
    gen = np.random.default_rng(1)
    raw = gen.normal(size=(40, 6))
    raw -= raw.mean(axis=0)
    q, _ = np.linalg.qr(raw)
    model = construct_knockoffs(q, make_rng(0))
    np.testing.assert_allclose(model.s, 1.0)
    assert np.max(np.abs(model.design.T @ model.knockoffs)) < 1e-10
    _check_identities(model, 1e-8)


def test_single_column():
    x = np.random.default_rng(2).normal(size=(5, 1))
    model = construct_knockoffs(x, make_rng(1))
    assert model.s.tolist() == [1.0]
    np.testing.assert_allclose(model.knockoffs, model.u_tilde, atol=1e-12)
    assert abs((model.knockoffs.T @ model.design).item()) < 1e-12
    assert (model.knockoffs.T @ model.knockoffs).item() == pytest.approx(1.0, abs=1e-12)


def test_ar1_full_size_residuals():
    raw = ar1_design(600, 200, 0.3, np.random.default_rng(3))
    model = construct_knockoffs(raw, make_rng(3))
    _check_identities(model, 1e-8)
    assert np.all((model.s >= 0) & (model.s <= 1))


def test_u_tilde_orthonormal_and_orthogonal():
    raw = ar1_design(120, 30, 0.6, np.random.default_rng(4))
    model = construct_knockoffs(raw, make_rng(4))
    u = model.u_tilde
    assert np.max(np.abs(u.T @ u - np.eye(30))) <= 1e-10
    assert np.max(np.abs(model.design.T @ u)) <= 1e-10


def test_errors():
    gen = np.random.default_rng(5)
    with pytest.raises(DimensionError):
        construct_knockoffs(gen.normal(size=(15, 10)), make_rng(0))
    x = gen.normal(size=(20, 3))
    x[:, 2] = x[:, 0]
    with pytest.raises(SingularGram):
        construct_knockoffs(x, make_rng(0))


def test_construction_deterministic():
    raw = ar1_design(50, 10, 0.3, np.random.default_rng(6))
    a = construct_knockoffs(raw, make_rng(9)).knockoffs
    b = construct_knockoffs(raw, make_rng(9)).knockoffs
    np.testing.assert_array_equal(a, b)


def test_signed_max():
    np.testing.assert_array_equal(signed_max([3, 1, 2], [1, 4, 2]), [3, -4, 0])


def test_zero_response_gives_zero_w():
    raw = np.random.default_rng(7).normal(size=(30, 5))
    st = knockoff_stats(construct_knockoffs(raw, make_rng(0)), np.zeros(30))
    np.testing.assert_array_equal(st.w, 0.0)


def _antisymmetry_case(seed, m_range=(5, 101)):
    gen = np.random.default_rng(seed)
    m = int(gen.integers(*m_range))
    raw = ar1_design(4 * m, m, float(gen.choice([0.0, 0.3, 0.6])), gen)
    model = construct_knockoffs(raw, make_rng(seed))
    y = model.design[:, : max(1, m // 5)] @ gen.choice([-3.0, 3.0], size=max(1, m // 5))
    y = y + gen.normal(size=4 * m)
    y = y - y.mean()
    grid = geometric_grid(lambda_max(model.augmented, y), 100)
    base = lasso_path_entries(model.augmented, y, grid)
    w = signed_max(base[:m], base[m:])
    j = int(gen.integers(0, m))
    aug = model.augmented.copy()
    aug[:, [j, m + j]] = aug[:, [m + j, j]]
    entries = lasso_path_entries(aug, y, grid)
    swapped = signed_max(entries[:m], entries[m:])
    expect = w.copy()
    expect[j] = -expect[j]
    return swapped, expect


def test_antisymmetry_metamorphic():
    for seed in range(50):
        swapped, expect = _antisymmetry_case(seed)
        np.testing.assert_array_equal(swapped, expect)


def test_antisymmetry_tiny_designs():
    # m = 3 designs where the rank-deficient augmented Gram stalls plain sweeps
    for seed in (34, 47):
        gen = np.random.default_rng(seed)
        m = int(gen.integers(3, 12))
        raw = ar1_design(4 * m, m, float(gen.choice([0.0, 0.3, 0.6])), gen)
        model = construct_knockoffs(raw, make_rng(seed))
        y = model.design[:, : max(1, m // 3)].sum(axis=1) * 2 + gen.normal(size=4 * m)
        st = knockoff_stats(model, y, 100)
        assert np.all(st.z >= 0) and np.all(st.z_tilde >= 0)


def test_signals_score_higher_than_nulls():
    cfg = SimulationConfig(scenario="regression", m=200, n=600, pi0=0.8, effect=3.5, rho=0.0)
    for k in range(10):
        rng = make_rng(100, k)
        design, y, truth = generate_regression(cfg, rng.child(0))
        st = knockoff_stats(construct_knockoffs(design, rng.child(2)), y)
        nonnull = st.w[~truth.is_null].mean()
        assert nonnull > 0
        assert nonnull > st.w[truth.is_null].mean()


# -- T_ko --------------------------------------------------------------------

def _brute_ko(w, q):
    best = None
    for t in sorted(set(np.abs(w[w != 0]).tolist())):
        if (np.sum(w <= -t) + 1) / max(np.sum(w >= t), 1) <= q:
            best = t
            break
    if best is None:
        return set()
    return set(np.flatnonzero(w >= best).tolist())


def test_knockoff_select_examples():
    assert knockoff_threshold([5, 4, 3, 2, 1, -1], 0.5) == 1
    assert knockoff_select(np.array([5, 4, 3, 2, 1, -1.0]), 0.5).tolist() == [0, 1, 2, 3, 4]
    assert knockoff_select(np.array([3, 2, -2, 1.0]), 0.5).size == 0
    w = np.array([0.5, 2.0, 1.0, 3.0])
    assert knockoff_threshold(w, 0.25) == 0.5
    assert knockoff_select(w, 0.25).tolist() == [0, 1, 2, 3]


def test_knockoff_select_matches_brute_force():
    gen = np.random.default_rng(21)
    for _ in range(1000):
        n = int(gen.integers(1, 51))
        w = np.round(gen.normal(0.8, 1.5, size=n), int(gen.integers(0, 3)))
        q = float(gen.uniform(0.01, 0.99))
        assert set(knockoff_select(w, q).tolist()) == _brute_ko(w, q)


def test_td_on_mapped_stats_equals_knockoff_select():
    gen = np.random.default_rng(22)
    for _ in range(1000):
        n = int(gen.integers(1, 51))
        mags = gen.permutation(np.arange(1, n + 1)) + gen.random(n) * 0.5
        w = mags * np.where(gen.random(n) < gen.uniform(0.4, 0.95), 1.0, -1.0)
        q = float(gen.uniform(0.01, 0.99))
        via_td = td_select(to_competition(w), q)
        np.testing.assert_array_equal(via_td, knockoff_select(w, q))


def test_to_competition_sign_rule():
    r = to_competition(np.array([2.5]))
    assert r.is_target.tolist() == [True] and r.scores.tolist() == [2.5]
    r = to_competition(KnockoffStats(np.zeros(1), np.zeros(1), np.array([-0.7])))
    assert r.is_target.tolist() == [False] and r.scores.tolist() == [0.7]


def test_to_competition_zero_w_randomized_and_flagged():
    w = np.array([1.0, 0.0, -2.0, 0.0])
    r = to_competition(w, make_rng(3))
    assert r.meta["zero_w"] == "1;3" and r.meta["n_zero_w"] == "2"
    assert r.scores[1] == 0 and r.scores[3] == 0
    labels = [to_competition(np.zeros(400), make_rng(s)).n_target for s in range(3)]
    assert all(150 < n < 250 for n in labels)
