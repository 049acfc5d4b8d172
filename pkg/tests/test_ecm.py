import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import plain_gmm_em
from scipy.optimize import minimize_scalar

from contamix.ecm import (
    FitConfig,
    Posteriors,
    aitken_check,
    alpha_objective,
    cm_step1,
    e_step,
    eta_objective,
    fit,
    fit_gpcm,
    init_from_gpcm,
    loglik,
    update_alpha,
    update_eta,
)
from contamix.exceptions import ComponentDeathError
from contamix.params import EPS_ALPHA, EPS_ETA, ModelParams
from contamix.structures import ALL_STRUCTURES, EigenDecomposition, decompose

FAST = FitConfig(restarts=3, warm_candidates=1, partition_starts=False)


def unit(p, lam=1.0):
    return EigenDecomposition(lam, np.ones(p), np.eye(p))


def params(mu, alpha, eta, pi=None, structure="VVV", decomps=None):
    mu = np.atleast_2d(mu)
    G, p = mu.shape
    pi = np.full(G, 1 / G) if pi is None else pi
    decomps = decomps or [unit(p)] * G
    return ModelParams(structure, pi, np.full(G, alpha), mu, decomps, np.full(G, eta))


def two_blobs(seed, n=80, p=2, outliers=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-3, 1, size=(n // 2, p)), rng.normal(3, 1, size=(n - n // 2, p))])
    if outliers:
        X = np.vstack([X, rng.uniform(-25, 25, size=(outliers, p))])
    return X


class TestEStep:
    def test_identical_components(self):
        X = np.random.default_rng(0).normal(size=(10, 2))
        post, _ = e_step(X, params([[0.0, 0.0], [0.0, 0.0]], 0.9, 3.0))
        np.testing.assert_allclose(post.z, 0.5)

    def test_v_at_mean(self):
        post, _ = e_step(np.zeros((1, 2)), params([[0.0, 0.0]], 0.5, 4.0))
        assert post.v[0, 0] == pytest.approx(0.8)

    def test_alpha_near_one(self):
        X = np.random.default_rng(1).normal(size=(20, 3))
        for eps, tol in ((1e-8, 1e-3), (1e-12, 1e-7)):
            post, _ = e_step(X, params([np.zeros(3)], 1 - eps, 50.0))
            np.testing.assert_allclose(post.v, 1.0, atol=tol)

    def test_rows_normalized(self):
        X = np.random.default_rng(2).normal(size=(50, 2)) * 4
        post, _ = e_step(X, params([[0.0, 0.0], [3.0, 1.0], [-2.0, 5.0]], 0.7, 9.0))
        np.testing.assert_allclose(post.z.sum(axis=1), 1.0, atol=1e-12)
        assert post.v.min() >= 0 and post.v.max() <= 1

    def test_loglik_matches_density(self):
        from contamix.gaussian import mixture_log_pdf

        X = np.random.default_rng(3).normal(size=(15, 2))
        psi = params([[0.0, 0.0], [1.0, 1.0]], 0.8, 5.0, pi=np.array([0.3, 0.7]))
        assert loglik(X, psi) == pytest.approx(mixture_log_pdf(X, psi).sum(), rel=1e-12)

    def test_far_points_stay_finite(self):
        X = np.array([[1e4, -1e4]])
        post, ll = e_step(X, params([[0.0, 0.0], [1.0, 0.0]], 0.9, 10.0))
        assert np.isfinite(ll) and np.all(np.isfinite(post.z))


class TestAlpha:
    def _grid(self, z, v, alpha_star):
        grid = np.linspace(alpha_star + EPS_ALPHA, 1 - EPS_ALPHA, 200001)
        vals = [alpha_objective(a, z, v) for a in grid]
        return grid[int(np.argmax(vals))]

    def test_interior(self):
        z, v = np.ones(10), np.array([1.0] * 8 + [0.0] * 2)
        assert update_alpha(z, v, 0.5) == pytest.approx(0.8)
        assert self._grid(z, v, 0.5) == pytest.approx(0.8, abs=1e-5)

    def test_lower_clamp(self):
        z, v = np.ones(10), np.array([1.0] * 2 + [0.0] * 8)
        assert update_alpha(z, v, 0.5) == pytest.approx(0.5 + EPS_ALPHA)
        assert self._grid(z, v, 0.5) == pytest.approx(0.5 + EPS_ALPHA, abs=1e-5)

    def test_all_good(self):
        assert update_alpha(np.ones(5), np.ones(5), 0.5) == pytest.approx(1 - EPS_ALPHA)

    def test_dead_component(self):
        with pytest.raises(ComponentDeathError):
            update_alpha(np.zeros(5), np.ones(5), 0.5)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), alpha_star=st.floats(0.0, 0.9))
    def test_matches_bounded_search(self, seed, alpha_star):
        rng = np.random.default_rng(seed)
        z, v = rng.random(30), rng.random(30)
        lo, hi = alpha_star + EPS_ALPHA, 1 - EPS_ALPHA
        res = minimize_scalar(lambda a: -alpha_objective(a, z, v), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-10})
        a = update_alpha(z, v, alpha_star)
        assert alpha_objective(a, z, v) >= alpha_objective(res.x, z, v) - 1e-9


class TestEta:
    def test_interior(self):
        assert update_eta(2.0, 12.0, 2, 1000.0) == pytest.approx(3.0)

    def test_lower_clamp(self):
        assert update_eta(1.0, 0.8, 2, 1000.0) == pytest.approx(1 + EPS_ETA)

    def test_upper_clamp(self):
        assert update_eta(1.0, 10000.0, 2, 1000.0) == 1000.0

    def test_no_bad_mass(self):
        assert update_eta(0.0, 0.0, 3, 1000.0) == pytest.approx(1 + EPS_ETA)

    @settings(max_examples=100, deadline=None)
    @given(A=st.floats(1e-3, 100.0), ratio=st.floats(0.1, 3000.0), p=st.integers(1, 13))
    def test_matches_numerical_search(self, A, ratio, p):
        B = ratio * p * A
        lo, hi = 1 + EPS_ETA, 1000.0
        res = minimize_scalar(lambda e: -eta_objective(e, A, B, p), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        assert update_eta(A, B, p, hi) == pytest.approx(res.x, abs=1e-6 * max(1.0, res.x))


class TestAitken:
    def test_not_converged(self):
        conv, l_inf = aitken_check(0.0, 1.0, 1.5, 1e-5)
        assert not conv and l_inf == pytest.approx(2.0)

    def test_flat(self):
        assert aitken_check(5.0, 5.0, 5.0, 1e-5)[0]

    def test_converged_large_epsilon(self):
        assert aitken_check(0.0, 1.0, 1.5, 1.1)[0]


class TestCMStep1:
    def test_all_good_is_gaussian_mstep(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(30, 2))
        z = rng.dirichlet([1, 1], size=30)
        post = Posteriors(z, np.ones_like(z))
        psi = cm_step1(X, post, params([[0.0, 0.0], [1.0, 1.0]], 0.9, 5.0), FitConfig())
        for g in range(2):
            mu = z[:, g] @ X / z[:, g].sum()
            np.testing.assert_allclose(psi.mu[g], mu, rtol=1e-12)
            d = X - mu
            np.testing.assert_allclose(psi.sigmas()[g], (z[:, g, None] * d).T @ d / z[:, g].sum(), rtol=1e-10)

    def test_single_component_mle(self):
        X = np.random.default_rng(5).normal(size=(40, 3))
        post = Posteriors(np.ones((40, 1)), np.ones((40, 1)))
        psi = cm_step1(X, post, params([np.zeros(3)], 0.9, 2.0), FitConfig())
        np.testing.assert_allclose(psi.mu[0], X.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(psi.sigmas()[0], np.cov(X.T, bias=True), rtol=1e-10)

    def test_downweighted_mean_by_hand(self):
        X = np.array([[0.0], [1.0], [10.0]])
        v = np.array([[1.0], [0.5], [0.0]])
        post = Posteriors(np.ones((3, 1)), v)
        psi = cm_step1(X, post, params([[0.0]], 0.8, 4.0), FitConfig())
        w = np.array([1.0, 0.5 + 0.5 / 4, 0.25])
        assert psi.mu[0, 0] == pytest.approx((w @ X[:, 0]) / w.sum())
        assert psi.alpha[0] == pytest.approx(0.5 + EPS_ALPHA)


class TestFit:
    def test_single_gaussian(self):
        rng = np.random.default_rng(6)
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        X = rng.multivariate_normal([1.0, -1.0], cov, size=500)
        res = fit(X, "VVV", 1, FAST)
        np.testing.assert_allclose(res.params.mu[0], [1.0, -1.0], atol=0.2)
        np.testing.assert_allclose(res.params.sigmas()[0], cov, atol=0.35)
        assert res.params.alpha[0] > 0.9

    def test_outliers_flagged(self):
        rng = np.random.default_rng(7)
        X = np.vstack([rng.normal(-4, 1, size=(60, 2)), rng.normal(4, 1, size=(60, 2)),
                       [[30.0, -30.0], [-30.0, 30.0], [35.0, 35.0]]])
        res = fit(X, "VVV", 2, FitConfig(restarts=5))
        idx = np.argmax(res.posteriors.z[-3:], axis=1)
        assert np.all(res.posteriors.v[-3:][np.arange(3), idx] < 0.5)

    def test_iteration_cap(self):
        X = two_blobs(8)
        res = fit(X, "EEE", 2, FitConfig(max_iter=1, restarts=2, partition_starts=False))
        assert res.iterations == 1 and not res.converged
        assert len(res.loglik_trace) == 2

    def test_warm_start_reproduces_gpcm(self):
        X = two_blobs(9, outliers=4)
        g = fit_gpcm(X, "VVV", 2, FAST)
        psi0 = init_from_gpcm(X, "VVV", 2, FAST)
        assert loglik(X, psi0) == pytest.approx(g.loglik, abs=1e-6)

    def test_gpcm_one_component_mle(self):
        X = np.random.default_rng(10).normal(size=(50, 2))
        psi0 = init_from_gpcm(X, "VVV", 1, FAST)
        np.testing.assert_allclose(psi0.mu[0], X.mean(axis=0))
        np.testing.assert_allclose(psi0.sigmas()[0], np.cov(X.T, bias=True), rtol=1e-8)

    def test_deterministic(self):
        X = two_blobs(11, outliers=3)
        a, b = fit(X, "EVE", 2, FAST), fit(X, "EVE", 2, FAST)
        assert a.loglik_trace == b.loglik_trace

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            fit(np.zeros((2, 2)), "VVV", 3)

    def test_bounds_respected(self):
        X = two_blobs(12, outliers=6)
        cfg = FitConfig(restarts=2, eta_star=20.0, alpha_star=0.8, partition_starts=False)
        res = fit(X, "VVI", 2, cfg)
        assert np.all(res.params.alpha > 0.8) and np.all(res.params.alpha < 1)
        assert np.all(res.params.eta > 1) and np.all(res.params.eta <= 20.0)


@pytest.mark.parametrize("structure", ALL_STRUCTURES)
def test_trace_monotone_and_dominates_gpcm(structure):
    X = two_blobs(13, n=70, outliers=5)
    res = fit(X, structure, 2, FAST)
    assert np.all(np.diff(res.loglik_trace) >= -1e-8)
    assert res.loglik >= fit_gpcm(X, structure, 2, FAST).loglik - 1e-6


def test_pinned_contamination_matches_plain_em():
    rng = np.random.default_rng(14)
    X = two_blobs(14, n=60)
    mu0 = X[rng.choice(60, 2, replace=False)]
    sig0 = np.array([np.cov(X.T), np.cov(X.T)])
    pi0 = np.array([0.5, 0.5])
    ll_ref = plain_gmm_em(X, pi0, mu0, sig0)[0]
    init = ModelParams("VVV", pi0, np.full(2, 1 - EPS_ALPHA), mu0,
                       [decompose(s) for s in sig0], np.full(2, 1 + EPS_ETA))
    cfg = FitConfig(alpha_fixed=1 - EPS_ALPHA, eta_fixed=1 + EPS_ETA, epsilon=1e-11, max_iter=5000)
    res = fit(X, "VVV", 2, cfg, init=init)
    assert res.loglik == pytest.approx(ll_ref, abs=1e-6)
