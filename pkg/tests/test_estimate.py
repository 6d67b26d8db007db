import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvj.counts import DispersionMoments, project_moments, variance_components, variance_lower
from mvj.estimate import (
    ConvergenceError,
    FitConfig,
    SingularMatrixError,
    covariance_matrices,
    fit,
    fit_theta,
    mu_gradient,
    mu_recursion,
    objective,
    ols_fit,
    owls_fit,
    vartheta_bootstrap_sd,
    vartheta_fit,
    vartheta_normal_equations,
)
from mvj.links import LinkSpec, clipped_laplace, scale_factor
from mvj.process import ModelSpec, RDistribution, ThetaParams, simulate_mvj

S15 = scale_factor(LinkSpec(1.0, 15))


def random_theta(rng, p1, p2, mass=0.9):
    coef = rng.uniform(-1, 1, p1 + p2)
    coef *= rng.uniform(0.1, mass) / np.abs(coef).sum()
    return ThetaParams.from_vector(np.concatenate([[rng.uniform(-1, 3)], coef]), p1, p2)


class TestRecursion:
    def test_first_mean_is_link_of_intercept(self, m1_path, m1_spec):
        th = ThetaParams(0.7, (0.3,))
        mu = mu_recursion(m1_path.D, th, m1_spec)
        assert mu[0] == clipped_laplace(0.7, m1_spec.link)

    def test_hand_unrolled_mvj11(self):
        spec = ModelSpec(1, 1, 15)
        th = ThetaParams(0.4, (0.3,), (0.2,))
        D = np.array([5, 2, 9])
        cl = lambda u: clipped_laplace(u, spec.link)  # noqa: E731
        m1 = cl(0.4)
        m2 = cl(0.4 + 0.3 * 5 + 0.2 * m1)
        m3 = cl(0.4 + 0.3 * 2 + 0.2 * m2)
        np.testing.assert_allclose(mu_recursion(D, th, spec), [m1, m2, m3], rtol=0, atol=1e-12)

    def test_means_in_open_range(self, m2_path, m2_spec):
        mu = mu_recursion(m2_path.D, ThetaParams(3.0, (0.5,), (0.45,)), m2_spec)
        assert np.all((mu > 0) & (mu < 15))

    def test_rejects_out_of_range(self, m1_spec):
        with pytest.raises(ValueError):
            mu_recursion(np.array([1, 16, 2]), ThetaParams(0.0, (0.5,)), m1_spec)
        with pytest.raises(ValueError):
            mu_recursion(np.array([1, 2.5, 2]), ThetaParams(0.0, (0.5,)), m1_spec)

    def test_truncation_forgotten(self):
        spec = ModelSpec(1, 2, 15)
        th = ThetaParams(0.3, (0.1,), (0.5, 0.3))
        path = simulate_mvj(th, RDistribution.beta(1, 1), spec, 400, seed=2)
        trunc = mu_recursion(path.D[50:], th, spec)
        exact = path.mu[50:]
        assert abs(trunc[200] - exact[200]) < 1e-6


class TestGradient:
    @pytest.mark.parametrize("order", [(1, 0), (2, 0), (1, 1), (1, 2), (2, 2), (3, 3)])
    def test_finite_differences(self, order, m2_path):
        rng = np.random.default_rng(sum(order))
        spec = ModelSpec(*order, 15)
        D = m2_path.D[:200]
        h = 1e-6
        for _ in range(50 // 6 + 1):
            th = random_theta(rng, *order)
            G = mu_gradient(D, th, spec)
            x = th.as_vector()
            for k in range(x.size):
                e = np.zeros_like(x)
                e[k] = h
                up = mu_recursion(D, ThetaParams.from_vector(x + e, *order), spec)
                dn = mu_recursion(D, ThetaParams.from_vector(x - e, *order), spec)
                fd = (up - dn) / (2 * h)
                np.testing.assert_allclose(G[:, k], fd, rtol=1e-5, atol=1e-7)

    def test_no_recursive_term(self, m1_path, m1_spec):
        th = ThetaParams(0.5, (0.4,))
        G = mu_gradient(m1_path.D, th, m1_spec)
        D = m1_path.D.astype(float)
        # xi stays in [0, d] here, so the link derivative is the constant s
        assert np.all(0.5 + 0.4 * D <= 15)
        np.testing.assert_allclose(G[1:, 0], S15, rtol=1e-14)
        np.testing.assert_allclose(G[1:, 1], S15 * D[:-1], rtol=1e-14)


class TestObjective:
    def test_weighted_matches_direct(self, m1_path, m1_spec):
        th = ThetaParams(-0.1, (0.45,))
        W = np.linspace(0.5, 2, m1_path.D.size)
        mu = mu_recursion(m1_path.D, th, m1_spec)
        assert objective(m1_path.D, th, m1_spec, W) == pytest.approx(np.mean(W * (m1_path.D - mu) ** 2))

    def test_zero_noise_series(self):
        spec = ModelSpec(1, 0, 15)
        c = (3.0 - 7.5 * (1 - S15)) / S15
        D = np.full(100, 3)
        assert objective(D, ThetaParams(c, (0.0,)), spec) < 1e-26
        res = ols_fit(D, spec)
        assert res.ssr / D.size < 1e-10
        assert res.cov_theta is None
        assert any("not identifiable" in w for w in res.warnings)


class TestOptimizer:
    def test_trace_monotone_and_stationary(self, m2_path, m2_spec):
        theta, res = fit_theta(m2_path.D, m2_spec)
        assert res.converged
        assert np.all(np.diff(res.trace) <= 0)
        assert res.fun == pytest.approx(objective(m2_path.D, theta, m2_spec), rel=1e-12)

    def test_beats_truth(self):
        spec = ModelSpec(1, 1, 15)
        truth = ThetaParams(-0.2, (0.4,), (0.4,))
        for seed in range(20):
            D = simulate_mvj(truth, RDistribution.beta(1, 1), spec, 300, seed=seed).D
            theta, res = fit_theta(D, spec)
            assert res.fun <= objective(D, truth, spec) + 1e-12

    def test_feasible(self, m2_path, m2_spec):
        cfg = FitConfig(margin=0.05)
        theta, _ = fit_theta(m2_path.D, m2_spec, cfg)
        assert np.abs(theta.as_vector()[1:]).sum() <= 0.95 + 1e-12

    def test_convergence_failure_reports_traces(self, m2_path, m2_spec):
        with pytest.raises(ConvergenceError) as info:
            fit_theta(m2_path.D, m2_spec, FitConfig(max_iter=1, n_starts=2))
        assert len(info.value.traces) == 2

    def test_too_short(self, m2_spec):
        with pytest.raises(ValueError, match="observations"):
            ols_fit(np.array([1, 2, 3, 4, 5]), m2_spec)

    def test_constant_weights_equal_ols(self, m1_path, m1_spec):
        a, _ = fit_theta(m1_path.D, m1_spec)
        b, _ = fit_theta(m1_path.D, m1_spec, weights=np.full(m1_path.D.size, 3.7))
        np.testing.assert_allclose(a.as_vector(), b.as_vector(), atol=1e-6)


class TestVartheta:
    def test_normal_equations_vs_lstsq(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = rng.integers(20, 300)
            V = rng.uniform(0, 30, (n, 2))
            y = rng.normal(0, 5, n)
            ref = np.linalg.lstsq(V, y, rcond=None)[0]
            np.testing.assert_allclose(vartheta_normal_equations(V, y), ref, rtol=0, atol=1e-8)

    def test_fit_matches_lstsq(self, m1_path):
        mu = m1_path.mu
        _, _, raw = vartheta_fit(m1_path.D, mu, 15)
        V = np.column_stack(variance_components(mu, 15))
        y = (m1_path.D - mu) ** 2 - variance_lower(mu)
        np.testing.assert_allclose(raw, np.linalg.lstsq(V, y, rcond=None)[0], atol=1e-8)

    def test_no_excess_gives_zero(self):
        rng = np.random.default_rng(1)
        D = rng.integers(0, 14, 300)
        mu = D + 0.5  # squared residual 0.25 equals R(mu) exactly
        m, _, raw = vartheta_fit(D, mu, 15)
        np.testing.assert_allclose(raw, 0.0, atol=1e-12)
        assert (m.vartheta1, m.vartheta2) == (0.0, 0.0)

    def test_reduced_rank(self):
        rng = np.random.default_rng(2)
        mu = rng.uniform(0.05, 0.95, 200)
        D = rng.integers(0, 3, 200)
        with pytest.warns(RuntimeWarning, match="vartheta1 only"):
            m, cov, raw = vartheta_fit(D, mu, 15)
        assert raw[1] == 0.0
        DispersionMoments(m.vartheta1, m.vartheta2)

    def test_covariance_psd(self, m1_path):
        _, cov, _ = vartheta_fit(m1_path.D, m1_path.mu, 15)
        np.testing.assert_allclose(cov, cov.T)
        assert np.all(np.linalg.eigvalsh(cov) >= -1e-14)

    def test_bootstrap(self, m1_path):
        sd = vartheta_bootstrap_sd(m1_path.D, m1_path.mu, 15, n_boot=60, seed=1)
        assert sd.shape == (2,) and np.all(sd > 0)
        again = vartheta_bootstrap_sd(m1_path.D, m1_path.mu, 15, n_boot=60, seed=1)
        np.testing.assert_array_equal(sd, again)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-2, 2), st.floats(-2, 2))
    def test_projection_idempotent(self, a, b):
        p = project_moments((a, b))
        np.testing.assert_array_equal(project_moments(project_moments(p)), p)


class TestCovariance:
    def test_singular_direction_named(self, m1_spec):
        D = np.zeros(50, dtype=int)
        with pytest.raises(SingularMatrixError, match="phi_1"):
            covariance_matrices(D, ThetaParams(0.0, (0.3,)), None, None, m1_spec)

    def test_shapes_and_symmetry(self, m2_path, m2_spec):
        res = ols_fit(m2_path.D, m2_spec)
        assert res.sd_theta.shape == (3,) and res.sd_vartheta.shape == (2,)
        np.testing.assert_allclose(res.cov_theta, res.cov_theta.T)
        assert np.all(np.linalg.eigvalsh(res.cov_theta) > 0)

    def test_ols_sandwich_formula(self, m1_path, m1_spec):
        res = ols_fit(m1_path.D, m1_spec)
        G = mu_gradient(m1_path.D, res.theta_hat, m1_spec)
        e = res.residuals
        T = e.size
        K = G.T @ G / T
        Gam = (G * e[:, None] ** 2).T @ G / T
        ref = np.linalg.solve(K, np.linalg.solve(K, Gam).T) / T
        np.testing.assert_allclose(res.cov_theta, ref, rtol=1e-10)

    def test_owls_sigma(self, m1_path, m1_spec):
        ols = ols_fit(m1_path.D, m1_spec)
        res = owls_fit(m1_path.D, m1_spec, first_stage=ols)
        G = mu_gradient(m1_path.D, res.theta_hat, m1_spec)
        mu = res.fitted_mu
        v1, v2 = variance_components(mu, 15)
        var = variance_lower(mu) + ols.vartheta_hat.vartheta1 * v1 + ols.vartheta_hat.vartheta2 * v2
        info = (G / var[:, None]).T @ G / mu.size
        np.testing.assert_allclose(res.cov_theta, np.linalg.inv(info) / mu.size, rtol=1e-10)


class TestFits:
    def test_ols_fields(self, m1_path, m1_spec):
        res = fit(m1_path.D, m1_spec)
        assert res.method == "ols" and res.converged
        assert np.all((res.fitted_mu > 0) & (res.fitted_mu < 15))
        np.testing.assert_allclose(res.residuals, m1_path.D - res.fitted_mu)
        assert res.ssr == pytest.approx(np.sum(res.residuals**2))
        assert np.isfinite(res.aic) and res.bic > res.aic

    def test_owls_weights_and_reuse(self, m1_path, m1_spec):
        ols = ols_fit(m1_path.D, m1_spec)
        res = fit(m1_path.D, m1_spec, FitConfig(method="owls"))
        assert res.method == "owls"
        assert res.vartheta_hat == ols.vartheta_hat
        assert res.ols_ssr == pytest.approx(ols.ssr)
        # OWLS minimizes a different criterion, so its unweighted SSR cannot beat OLS
        assert res.ssr >= ols.ssr - 1e-9

    def test_weight_floor_hits(self):
        from mvj.estimate import _owls_weights

        mu = np.array([3.0, 3.5, 7.0, 0.2])
        W, hits = _owls_weights(mu, DispersionMoments(0.0, 0.0), 15, 1e-8)
        assert hits == 2
        np.testing.assert_allclose(W, [1e8, 4.0, 1e8, 1 / 0.16])
        assert np.all((W > 0) & (W <= 1e8))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FitConfig(method="mle")
        with pytest.raises(ValueError):
            FitConfig(margin=0)
        with pytest.raises(ValueError):
            FitConfig(variance_floor=0)

    @pytest.mark.slow
    def test_rmse_shrinks_with_T(self):
        spec = ModelSpec(1, 0, 15)
        truth = ThetaParams(-0.2, (0.5,))
        rmse = {}
        for T in (200, 800):
            est = np.array(
                [
                    ols_fit(simulate_mvj(truth, RDistribution.beta(1, 1), spec, T, seed=1000 + k).D, spec,
                            FitConfig(covariances=False)).theta_hat.as_vector()
                    for k in range(100)
                ]
            )
            rmse[T] = np.sqrt(np.mean((est - truth.as_vector()) ** 2, axis=0))
        assert np.all(rmse[800] < rmse[200])
