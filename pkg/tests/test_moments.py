import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from indexclr.confset import build_eval_grid
from indexclr.dgp import simulate_section5
from indexclr.errors import DegenerateProfileError, InvalidDataError
from indexclr.kernels import KernelConfig
from indexclr.models import Dataset, make_binary_model
from indexclr.moments import (
    EvalGrid,
    EvalPoint,
    mhat_full,
    mhat_index,
    nw_fit,
    nw_fit_full,
    profile_full,
    profile_index,
    sigmahat_full,
    sigmahat_index,
)
from oracles import full_estimates, index_estimates, random_instance

CFG = KernelConfig(scale=1.0, rate=0.2)


def _section5(n=60, d=3, seed=0):
    return simulate_section5(n, d, np.random.default_rng(seed)), make_binary_model(0.5, d)


def test_nw_single_observation():
    data = Dataset(np.array([[0.3, 0.1]]), np.array([1.0]))
    m = make_binary_model(0.5, 2)
    assert np.array_equal(nw_fit(data, m, [1.0, 0.0], [1.0, 0.5], None, CFG), [0.0])
    u, bad = nw_fit_full(data, CFG, m)
    assert np.array_equal(u, [0.0])


def test_nw_reproduces_constants():
    data, m = _section5()
    const = Dataset(data.X, np.ones(data.n))
    u = nw_fit(const, m, [1, 0.2, 0], [1, -0.5, 0.5], None, CFG)
    np.testing.assert_allclose(u, 0.0, atol=1e-14)
    u, _ = nw_fit_full(const, KernelConfig(2.0, 0.2, 4), m)
    np.testing.assert_allclose(u, 0.0, atol=1e-13)


def test_nw_hand_built_five_points():
    X = np.array([[1.0, 0.2], [-0.5, 0.4], [0.3, -0.9], [0.8, 0.8], [-1.0, -0.1]])
    Y = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
    data, m = Dataset(X, Y), make_binary_model(0.5, 2)
    b, gamma = np.array([1.0, -0.3]), np.array([1.0, 0.7])
    for loo in (False, True):
        cfg = KernelConfig(2.5, 0.2, leave_one_out=loo)
        _, _, u = index_estimates(X.tolist(), Y.tolist(), m, b, X[0], gamma, None, 2.5, 0.2, loo)
        np.testing.assert_allclose(nw_fit(data, m, b, gamma, None, cfg), u, rtol=1e-12, atol=1e-15)


def test_mhat_far_point_is_zero():
    data, m = _section5()
    v = EvalPoint(np.array([50.0, 50.0, 50.0]), np.array([1.0, 0.0, 0.0]))
    assert mhat_index(data, m, [1, 0, 0], v, CFG) == 0.0
    assert mhat_full(data, [1, 0, 0], v.x, KernelConfig(1.0, 0.2)) == 0.0


def test_mhat_single_term_by_hand():
    # two observations; only the one at v is inside the kernel support
    X = np.array([[1.0, 0.0], [100.0, 0.0]])
    data, m = Dataset(X, np.array([1.0, 0.0])), make_binary_model(0.5, 2)
    v = EvalPoint(X[0], np.array([1.0, 0.0]))
    cfg = KernelConfig(scale=1.0, rate=0.5)
    h = 2**-0.5
    val = mhat_index(data, m, [1.0, 0.0], v, cfg, scales=(1.0, 1.0))
    # G = 1, H = 0.5, K = (15/16)^2, norm = n h^2 = 1
    assert val == pytest.approx((15 / 16) ** 2 * 0.5 / (2 * h * h))


def test_sigmahat_by_hand_and_homogeneity():
    X = np.array([[2.0, 0.0], [100.0, 0.0]])
    data, m = Dataset(X, np.array([1.0, 0.0])), make_binary_model(0.5, 2)
    v = EvalPoint(X[0], np.array([1.0, 0.0]))
    cfg = KernelConfig(scale=1.0, rate=0.5)
    h2 = 0.5
    # u=1, G=2, K=(15/16)^2 -> sqrt((2 K)^2) / (n h^2)
    s = sigmahat_index(data, m, [1.0, 0.0], v, [1.0, 0.0], cfg, scales=(1.0, 1.0))
    assert s == pytest.approx(2 * (15 / 16) ** 2 / (2 * h2))
    assert sigmahat_index(data, m, [1.0, 0.0], v, [0.0, 0.0], cfg, scales=(1.0, 1.0)) == 0.0
    assert sigmahat_index(data, m, [1.0, 0.0], v, [3.0, 0.0], cfg, scales=(1.0, 1.0)) == pytest.approx(3 * s)


def test_mhat_linear_in_h():
    data, m = _section5()
    flipped = make_binary_model(0.5, 3)
    v = EvalPoint(data.X[3], np.array([1.0, 0.4, -0.2]))
    a = mhat_index(data, m, [1, 0.1, 0], v, CFG)
    # 1 - Y flips the sign of Y - 0.5
    b = mhat_index(Dataset(data.X, 1 - data.Y), flipped, [1, 0.1, 0], v, CFG)
    assert b == pytest.approx(-a, rel=1e-12)


def test_profile_index_matches_naive():
    data, m = _section5(n=20)
    grid = build_eval_grid(data, m, 10, np.random.default_rng(3), "index")
    b = np.array([1.0, -0.4, 0.3])
    cfg = KernelConfig(3.0, 0.2)
    prof = profile_index(data, m, b, grid, cfg)
    for pos, v in enumerate(prof.kept):
        mh, sg, _ = index_estimates(data.X.tolist(), data.Y.tolist(), m, b, grid.x[v], grid.gamma[v], None, 3.0, 0.2)
        assert prof.mhat[pos] == pytest.approx(mh, rel=1e-12)
        assert prof.sigmahat[pos] == pytest.approx(sg, rel=1e-12)
        # the single-point functions agree with the profile
        u = nw_fit(data, m, b, grid.gamma[v], None, cfg)
        assert mhat_index(data, m, b, grid[v], cfg) == pytest.approx(mh, rel=1e-12)
        assert sigmahat_index(data, m, b, grid[v], u, cfg) == pytest.approx(sg, rel=1e-12)


def test_profile_full_matches_naive_d2():
    data, m = _section5(n=30, d=2, seed=4)
    grid = build_eval_grid(data, m, 8, np.random.default_rng(5), "full")
    b = np.array([1.0, 0.5])
    for loo in (False, True):
        cfg = KernelConfig(2.0, 0.15, 2, leave_one_out=loo)
        prof = profile_full(data, b, grid, cfg)
        u_prof, _ = nw_fit_full(data, cfg)
        for pos, v in enumerate(prof.kept):
            mh, sg, u = full_estimates(data.X.tolist(), data.Y.tolist(), m, b, grid.x[v], None, 2.0, 0.15, 2, loo)
            assert prof.mhat[pos] == pytest.approx(mh, rel=1e-12)
            assert prof.sigmahat[pos] == pytest.approx(sg, rel=1e-12)
            assert mhat_full(data, b, grid.x[v], cfg) == pytest.approx(mh, rel=1e-12)
            assert sigmahat_full(data, b, grid.x[v], u_prof, cfg) == pytest.approx(sg, rel=1e-12)
            np.testing.assert_allclose(u_prof, u, rtol=0, atol=1e-12 * np.max(np.abs(u)))


def test_random_instances_match_naive():
    rng = np.random.default_rng(11)
    for _ in range(10):
        model, data, b, grid, kcfg, approach = random_instance(rng)
        X, Y = data.X.tolist(), data.Y.tolist()
        if approach == "index":
            prof = profile_index(data, model, b, grid, kcfg)
        else:
            prof = profile_full(data, b, grid, kcfg, model=model)
        for pos, v in enumerate(prof.kept):
            p = grid[v]
            if approach == "index":
                mh, sg, u = index_estimates(X, Y, model, b, p.x, p.gamma, p.c, kcfg.scale, kcfg.rate, kcfg.leave_one_out)
                u_prof = prof.residuals[(p.gamma.tobytes(), p.c)]
            else:
                mh, sg, u = full_estimates(X, Y, model, b, p.x, p.c, kcfg.scale, kcfg.rate, kcfg.order_p, kcfg.leave_one_out)
                u_prof = prof.residuals[p.c]
            assert prof.mhat[pos] == pytest.approx(mh, rel=1e-12)
            assert prof.sigmahat[pos] == pytest.approx(sg, rel=1e-12)
            assert np.max(np.abs(u_prof - np.array(u))) <= 1e-12 * np.max(np.abs(u))


def test_full_nonnegative_with_constant_outcome():
    data, m = _section5(n=40, d=2, seed=9)
    X = np.abs(data.X) + 0.1
    data = Dataset(X, np.ones(data.n))
    grid = build_eval_grid(data, m, 15, np.random.default_rng(0), "full")
    prof_m = [mhat_full(data, [1.0, 1.0], x, KernelConfig(1.0, 0.2, 2)) for x in grid.x]
    assert min(prof_m) >= 0


def test_permuting_grid_permutes_profile():
    data, m = _section5(n=50)
    grid = build_eval_grid(data, m, 12, np.random.default_rng(2), "index")
    perm = np.random.default_rng(3).permutation(12)
    a = profile_index(data, m, [1, 0, 0], grid, CFG)
    b = profile_index(data, m, [1, 0, 0], grid.take(perm), CFG)
    full_a = np.full((2, 12), np.nan)
    full_a[:, a.kept] = a.mhat, a.sigmahat
    full_b = np.full((2, 12), np.nan)
    full_b[:, b.kept] = b.mhat, b.sigmahat
    np.testing.assert_allclose(full_b, full_a[:, perm], rtol=1e-13)


def test_zero_variance_points_dropped():
    data, m = _section5(n=50)
    far = EvalGrid(np.vstack([data.X[0], [50.0, 50.0, 50.0]]), np.array([[1.0, 0, 0], [1.0, 0, 0]]))
    prof = profile_index(data, m, [1, 0, 0], far, CFG)
    assert len(prof) == 1 and prof.dropped == 1
    with pytest.raises(DegenerateProfileError):
        profile_index(data, m, [1, 0, 0], far.take([1]), CFG)


def test_empty_dataset():
    m = make_binary_model(0.5, 2)
    with pytest.raises(InvalidDataError):
        nw_fit(Dataset(np.zeros((0, 2)), np.zeros(0)), m, [1, 0], [1, 0], None, CFG)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(-5, 5))
def test_residuals_invariant_to_shifting_h(seed, shift):
    # adding a constant to H leaves the residuals unchanged
    rng = np.random.default_rng(seed)
    data, m = _section5(n=30, seed=seed % 1000)
    base = make_binary_model(0.5, 3)
    shifted = make_binary_model(0.5, 3)
    object.__setattr__(shifted, "h", lambda y, c: base.h(y, c) + shift)
    gamma = rng.uniform(-1, 1, 3)
    gamma[0] = 1.0
    a = nw_fit(data, base, [1, 0, 0], gamma, None, CFG)
    b = nw_fit(data, shifted, [1, 0, 0], gamma, None, CFG)
    np.testing.assert_allclose(a, b, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0.5, 2.0, 3.7, 0.1]))
def test_ratio_invariant_to_scaling_b(seed, s):
    data, m = _section5(n=40, seed=seed % 1000)
    grid = build_eval_grid(data, m, 6, np.random.default_rng(seed), "index")
    b = np.array([1.0, -0.3, 0.6])
    a = profile_index(data, m, b, grid, CFG)
    c = profile_index(data, m, s * b, grid, CFG)
    np.testing.assert_allclose(c.ratio, a.ratio, rtol=1e-10)
