import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from funcrc.basis import DegenerateBasisError, make_basis, make_grid
from funcrc.funcdata import (
    LAMBDA_LADDER,
    CurvePanel,
    FunctionalSample,
    fpca,
    gcv_lambda,
    mean_function,
    smooth_panel,
)
from funcrc.simgen import ScenarioConfig, generate_scenario, sample_gp_sqexp, sqexp_kernel


def test_curve_panel_validates():
    g = make_grid(5)
    with pytest.raises(ValueError):
        CurvePanel(g, np.ones((2, 4)))
    with pytest.raises(ValueError):
        CurvePanel(g, np.array([[1, 2, np.nan, 4, 5.0]]))
    assert CurvePanel(g, np.ones(5)).n == 1


def test_functional_sample_shape_checked():
    b = make_basis("bspline", 5, make_grid(11))
    with pytest.raises(ValueError):
        FunctionalSample(b, np.ones((3, 4)))


def test_values_are_coefs_times_basis(rng):
    b = make_basis("fourier", 4, make_grid(31))
    c = rng.normal(size=(6, 4))
    fs = FunctionalSample(b, c)
    np.testing.assert_allclose(fs.values, c @ b.eval)
    np.testing.assert_allclose(fs.subset([1, 3]).coefs, c[[1, 3]])


class TestSmoothPanel:
    def test_interpolates_basis_function(self):
        g = make_grid(101)
        b = make_basis("bspline", 8, g)
        raw = CurvePanel(make_grid(25), b.evaluate(make_grid(25).points)[3][None, :])
        fit = smooth_panel(raw, b, lam=0.0)
        np.testing.assert_allclose(fit.coefs[0], np.eye(8)[3], atol=1e-8)

    def test_square_system_interpolates(self, rng):
        g = make_grid(101)
        b = make_basis("bspline", 9, g)
        obs = make_grid(9)
        values = rng.normal(size=(3, 9))
        fit = smooth_panel(CurvePanel(obs, values), b, lam=0.0)
        np.testing.assert_allclose(fit.coefs @ b.evaluate(obs.points), values, atol=1e-8)

    def test_huge_penalty_gives_straight_line(self, rng):
        g = make_grid(101)
        b = make_basis("bspline", 10, g)
        obs = make_grid(40)
        t = obs.points
        raw = CurvePanel(obs, (np.sin(2 * np.pi * t) + 0.3 * t)[None, :] + 0.1 * rng.normal(size=(1, 40)))
        fit = smooth_panel(raw, b, lam=1e8)
        second = fit.coefs @ b.evaluate(g.points, deriv=2)
        assert g.integrate(second[0] ** 2) < 1e-4
        # and it is the least-squares line through the data
        line = np.polyfit(t, raw.values[0], 1)
        np.testing.assert_allclose(fit.coefs @ b.evaluate(t), np.polyval(line, t)[None, :], atol=1e-3)

    def test_gcv_noise_level(self, rng):
        g = make_grid(101)
        b = make_basis("bspline", 15, g)
        obs = make_grid(60)
        truth = np.sin(2 * np.pi * obs.points)
        sd = 0.2
        noisy = truth + sd * rng.normal(size=(20, 60))
        fit = smooth_panel(CurvePanel(obs, noisy), b)
        resid = noisy - fit.coefs @ b.evaluate(obs.points)
        assert resid.std() < 2 * sd
        assert np.sqrt(np.mean((fit.coefs @ b.evaluate(obs.points) - truth) ** 2)) < sd

    def test_gcv_picks_from_ladder(self, rng):
        g = make_grid(101)
        b = make_basis("bspline", 12, g)
        obs = make_grid(30)
        lam = gcv_lambda(CurvePanel(obs, rng.normal(size=(4, 30))), b)
        assert np.isclose(LAMBDA_LADDER, lam).any()

    def test_underdetermined_rejected(self):
        b = make_basis("bspline", 10, make_grid(101))
        with pytest.raises(DegenerateBasisError):
            smooth_panel(CurvePanel(make_grid(6), np.ones((1, 6))), b, lam=0.0)

    def test_negative_lambda(self):
        b = make_basis("bspline", 5, make_grid(101))
        with pytest.raises(ValueError):
            smooth_panel(CurvePanel(make_grid(20), np.ones((1, 20))), b, lam=-1.0)


class TestMean:
    def test_single_curve(self, rng):
        fs = FunctionalSample(make_basis("fourier", 3), rng.normal(size=(1, 3)))
        np.testing.assert_array_equal(mean_function(fs).coefs, fs.coefs[0])

    def test_symmetric_pair(self, rng):
        c = rng.normal(size=3)
        fs = FunctionalSample(make_basis("fourier", 3), np.vstack([c, -c]))
        np.testing.assert_array_equal(mean_function(fs).coefs, 0)

    def test_gp_mean_clt_bound(self):
        g = make_grid(101)
        rng = np.random.default_rng(7)
        panel = sample_gp_sqexp(500, 0.1, 0.05, g, rng)
        mean = panel.values.mean(axis=0)
        trace_op = g.integrate(np.diag(sqexp_kernel(g.points, 0.1, 0.05)))
        assert np.sqrt(g.integrate(mean**2)) < 3 * np.sqrt(trace_op / 500)


class TestFpca:
    def test_rank_one(self, rng):
        g = make_grid(101)
        f = np.sin(np.pi * g.points)
        fs = FunctionalSample.from_values(rng.normal(size=(30, 1)) * f, g)
        pca = fpca(fs, 3, clip=True)
        assert pca.eigenvalues[0] / pca.all_eigenvalues.sum() > 0.999

    def test_scenario_rank_equals_k0(self):
        d = generate_scenario(ScenarioConfig(n=300, sigma=0.0, sigma_u=0.0), 0)
        pca = fpca(d.X, 1)
        assert pca.rank == 5

    def test_scores_centered_and_orthonormal(self, rng):
        g = make_grid(101)
        fs = FunctionalSample(make_basis("bspline", 8, g), rng.normal(size=(50, 8)))
        pca = fpca(fs, 5)
        assert abs(pca.scores[:, 0].mean()) < 1e-10
        np.testing.assert_allclose(pca.eigenfunctions.gram(), np.eye(5), atol=1e-6)
        assert np.all(np.diff(pca.eigenvalues) <= 0)
        assert np.all(pca.all_eigenvalues >= 0)

    def test_eigenvalues_match_score_variances(self, rng):
        g = make_grid(101)
        fs = FunctionalSample(make_basis("bspline", 6, g), rng.normal(size=(40, 6)))
        pca = fpca(fs, 4)
        np.testing.assert_allclose(pca.scores.var(axis=0, ddof=1), pca.eigenvalues, rtol=1e-8)

    def test_total_variance_accounting(self, rng):
        g = make_grid(101)
        fs = FunctionalSample(make_basis("fourier", 7, g), rng.normal(size=(25, 7)) * np.arange(7, 0, -1))
        pca = fpca(fs, 2)
        centered = fs.values - fs.values.mean(axis=0)
        total = g.integrate((centered**2).sum(axis=0)) / (fs.n - 1)
        assert abs(pca.all_eigenvalues.sum() - total) < 1e-8 * total

    def test_orthonormal_basis_eigenvalues_are_coefficient_covariance(self, rng):
        # for Fourier curves the operator spectrum equals the coefficient covariance spectrum
        g = make_grid(201)
        c = rng.normal(size=(60, 5)) * np.array([3, 2, 1.5, 1, 0.5])
        pca = fpca(FunctionalSample(make_basis("fourier", 5, g), c), 5)
        expected = np.sort(np.linalg.eigvalsh(np.cov(c.T)))[::-1]
        np.testing.assert_allclose(pca.eigenvalues, expected, rtol=1e-6)

    def test_reconstruction_error_monotone(self, rng):
        g = make_grid(101)
        fs = FunctionalSample(make_basis("bspline", 9, g), rng.normal(size=(40, 9)))
        full = fpca(fs, 9)
        errs = []
        for k in range(1, 10):
            diff = full.truncate(k).reconstruct() - fs.values
            errs.append(g.integrate((diff**2).sum(axis=0)))
        assert np.all(np.diff(errs) <= 1e-10)
        assert errs[-1] < 1e-10

    def test_variance_threshold(self, rng):
        g = make_grid(101)
        c = rng.normal(size=(200, 4)) * np.array([10, 1, 0.1, 0.01])
        fs = FunctionalSample(make_basis("fourier", 4, g), c)
        pca = fpca(fs, 0.99)
        frac = pca.explained()
        assert frac[-1] >= 0.99 and (pca.k == 1 or frac[-2] < 0.99)

    def test_too_many_components(self, rng):
        fs = FunctionalSample(make_basis("bspline", 5), rng.normal(size=(20, 5)))
        with pytest.raises(ValueError):
            fpca(fs, 6)
        small = FunctionalSample(make_basis("bspline", 5), rng.normal(size=(3, 5)))
        with pytest.raises(ValueError):
            fpca(small, 3)
        assert fpca(small, 4, clip=True).k == 2

    def test_needs_two_curves(self, rng):
        with pytest.raises(ValueError):
            fpca(FunctionalSample(make_basis("bspline", 5), rng.normal(size=(1, 5))), 1)

    @given(st.integers(0, 2**32 - 1))
    def test_basis_independence(self, seed):
        # same curves stored nodally or in B-splines give the same spectrum
        rng = np.random.default_rng(seed)
        g = make_grid(51)
        fs = FunctionalSample(make_basis("bspline", 6, g), rng.normal(size=(15, 6)))
        nodal = FunctionalSample.from_values(fs.values, g)
        np.testing.assert_allclose(fpca(fs, 4).eigenvalues, fpca(nodal, 4).eigenvalues, rtol=1e-9, atol=1e-12)
