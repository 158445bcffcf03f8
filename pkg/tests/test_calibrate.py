import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from funcrc.basis import CoefVector, make_basis, make_grid
from funcrc.calibrate import (
    IllConditionedError,
    cross_validate_q,
    estimating_equation,
    fit_concurrent,
    fit_kernel,
    kfold_indices,
    solve_spd,
)
from funcrc.funcdata import FunctionalSample
from funcrc.simgen import ScenarioConfig, generate_scenario
from funcrc.simgen import true_theta


def _random_z(rng, n=200, k=6, grid=None):
    return FunctionalSample(make_basis("bspline", k, grid or make_grid(101)), rng.normal(size=(n, k)))


def test_identity_relationship(rng):
    Z = _random_z(rng)
    fit = fit_concurrent(Z, Z, make_basis("monomial", 1, Z.grid))
    np.testing.assert_allclose(fit.theta_values(), 1.0, atol=1e-8)
    assert fit.objective < 1e-20


def test_exact_recovery(rng):
    Z = _random_z(rng)
    basis = make_basis("monomial", 3, Z.grid)
    theta = CoefVector(basis, [0.5, -1.0, 2.0])
    W = FunctionalSample.from_values(theta.values() * Z.values, Z.grid)
    fit = fit_concurrent(W, Z, basis)
    np.testing.assert_allclose(fit.theta_coefs.coefs, theta.coefs, atol=1e-6)


def test_vhat_is_theta_times_z(rng):
    d = generate_scenario(ScenarioConfig(n=100), 0)
    fit = fit_concurrent(d.W, d.Z, make_basis("bspline", 6, d.grid))
    np.testing.assert_allclose(fit.vhat.values, fit.theta_values() * d.Z.values, atol=1e-12)
    np.testing.assert_allclose(fit.calibrate(d.Z).values, fit.vhat.values)


def test_gram_invariants(rng):
    d = generate_scenario(ScenarioConfig(n=100), 1)
    fit = fit_concurrent(d.W, d.Z, make_basis("bspline", 8, d.grid))
    assert np.max(np.abs(fit.gram - fit.gram.T)) < 1e-10
    assert np.linalg.eigvalsh(fit.gram)[0] > 0


def test_gram_matches_direct_quadrature(rng):
    Z = _random_z(rng, n=20)
    W = _random_z(rng, n=20)
    phi = make_basis("bspline", 4, Z.grid)
    fit = fit_concurrent(W, Z, phi)
    w = Z.grid.weights
    direct = sum((phi.eval * (w * z**2)) @ phi.eval.T for z in Z.values) / Z.n
    np.testing.assert_allclose(fit.gram, direct, rtol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_estimating_equation_residual(seed):
    d = generate_scenario(ScenarioConfig(n=300), seed)
    basis = make_basis("bspline", 6, d.grid)
    fit = fit_concurrent(d.W, d.Z, basis)
    s_hat = estimating_equation(d.W, d.Z, basis, fit.theta_coefs.coefs)
    s_zero = estimating_equation(d.W, d.Z, basis, np.zeros(6))
    assert np.linalg.norm(s_hat) <= 1e-8 * np.linalg.norm(s_zero)


def test_permutation_invariance(rng):
    d = generate_scenario(ScenarioConfig(n=200), 2)
    basis = make_basis("bspline", 6, d.grid)
    perm = rng.permutation(200)
    a = fit_concurrent(d.W, d.Z, basis).theta_coefs.coefs
    b = fit_concurrent(d.W.subset(perm), d.Z.subset(perm), basis).theta_coefs.coefs
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_zero_instrument_is_singular():
    g = make_grid(101)
    Z = FunctionalSample.from_values(np.zeros((10, 101)), g)
    with pytest.raises(IllConditionedError):
        fit_concurrent(Z, Z, make_basis("monomial", 2, g))


def test_ill_conditioned_basis_detected():
    g = make_grid(101)
    rng = np.random.default_rng(0)
    Z = _random_z(rng, grid=g)
    with pytest.raises(IllConditionedError):
        fit_concurrent(Z, Z, make_basis("monomial", 14, g))


def test_solve_spd_condition_check():
    with pytest.raises(IllConditionedError):
        solve_spd(np.diag([1.0, 1e-13]), np.ones(2))
    np.testing.assert_allclose(solve_spd(np.diag([2.0, 4.0]), np.ones(2)), [0.5, 0.25])


def test_mismatched_samples(rng):
    Z = _random_z(rng, n=10)
    with pytest.raises(ValueError):
        fit_concurrent(_random_z(rng, n=11), Z, make_basis("monomial", 2, Z.grid))


class TestKernel:
    def test_nested_concurrent_model(self, rng):
        # with Fourier phi and Fourier-expanded Z, theta*Z lies in the kernel span when theta is constant
        g = make_grid(201)
        four = make_basis("fourier", 5, g)
        Z = FunctionalSample(four, rng.normal(size=(300, 5)))
        W = FunctionalSample.from_values(0.7 * Z.values + 0.3 * rng.normal(size=(300, 201)), g)
        conc = fit_concurrent(W, Z, make_basis("monomial", 1, g))
        kern = fit_kernel(W, Z, four, four)
        assert kern.objective <= conc.objective + 1e-8

    def test_rank_one_kernel_recovery(self, rng):
        g = make_grid(201)
        four = make_basis("fourier", 3, g)
        Z = FunctionalSample(four, rng.normal(size=(2000, 3)))
        # alpha(s, t) = phi_1(t) psi_1(s), so X(t) = phi_1(t) <Z, psi_1>
        zeta1 = Z.inner_products(four.eval[:1])[:, 0]
        W = FunctionalSample.from_values(np.outer(zeta1, four.eval[0]), g)
        fit = fit_kernel(W, Z, four, four)
        expected = np.zeros((3, 3))
        expected[0, 0] = 1
        np.testing.assert_allclose(fit.alpha_coefs, expected, atol=1e-4)

    def test_one_by_one_is_scalar_regression(self, rng):
        g = make_grid(101)
        one = make_basis("fourier", 1, g)
        Z = _random_z(rng, n=80, grid=g)
        W = _random_z(rng, n=80, grid=g)
        fit = fit_kernel(W, Z, one, one)
        iw, iz = g.integrate(W.values), g.integrate(Z.values)
        slope = (iw @ iz) / (iz @ iz)
        assert abs(fit.alpha_coefs[0, 0] - slope) < 1e-10

    def test_needs_enough_subjects(self, rng):
        g = make_grid(51)
        Z = _random_z(rng, n=8, grid=g)
        with pytest.raises(ValueError):
            fit_kernel(Z, Z, make_basis("fourier", 3, g), make_basis("fourier", 3, g))

    def test_calibrate_new_curves(self, rng):
        g = make_grid(101)
        four = make_basis("fourier", 3, g)
        Z = FunctionalSample(four, rng.normal(size=(50, 3)))
        W = _random_z(rng, n=50, grid=g)
        fit = fit_kernel(W, Z, four, four)
        np.testing.assert_allclose(fit.calibrate(Z).values, fit.vhat.values)


class TestCrossValidateQ:
    def test_single_candidate(self, rng):
        Z = _random_z(rng, n=30)
        assert cross_validate_q(Z, Z, [6]).best == 6

    def test_folds_partition(self, rng):
        parts = kfold_indices(23, 5, rng)
        assert sorted(np.concatenate(parts).tolist()) == list(range(23))
        assert max(p.size for p in parts) - min(p.size for p in parts) <= 1
        with pytest.raises(ValueError):
            kfold_indices(3, 5, rng)
        with pytest.raises(ValueError):
            kfold_indices(10, 1, rng)

    def test_matches_naive_refitting(self, rng):
        d = generate_scenario(ScenarioConfig(n=100), 0)
        cv = cross_validate_q(d.W, d.Z, (4, 6), folds=4, rng=np.random.default_rng(1))
        parts = kfold_indices(100, 4, np.random.default_rng(1))
        for q in (4, 6):
            total = 0.0
            for test in parts:
                train = np.setdiff1d(np.arange(100), test)
                fit = fit_concurrent(d.W.subset(train), d.Z.subset(train), make_basis("bspline", q, d.grid))
                resid = d.W.values[test] - fit.theta_values() * d.Z.values[test]
                total += d.grid.integrate(resid**2).sum()
            assert abs(cv.scores[q] - total / 100) < 1e-10

    def test_ties_go_to_smaller(self, rng):
        # W = 0 gives theta = 0 exactly for every spline size, so all scores are exactly zero
        Z = _random_z(rng, n=40)
        W = FunctionalSample.from_values(np.zeros((40, 101)), Z.grid)
        cv = cross_validate_q(W, Z, (8, 4, 6))
        assert set(cv.scores.values()) == {0.0}
        assert cv.best == 4

    def test_pure_noise_overfits_with_more_functions(self):
        rng = np.random.default_rng(3)
        g = make_grid(101)
        Z = _random_z(rng, n=400, grid=g)
        W = FunctionalSample.from_values(rng.normal(size=(400, 101)), g)
        scores = cross_validate_q(W, Z, (4, 6, 8, 10), rng=rng).scores
        best = min(scores, key=scores.get)
        beyond = [scores[q] for q in sorted(scores) if q >= best]
        assert np.all(np.diff(beyond) >= 0)

    def test_default_scenario_prefers_small_q(self):
        qs = []
        for r in range(10):
            d = generate_scenario(ScenarioConfig(n=500), r)
            qs.append(cross_validate_q(d.W, d.Z, rng=np.random.default_rng(r)).best)
        assert 4 <= np.mean(qs) <= 6


def test_theta_error_shrinks_with_n():
    errs = {}
    for n in (500, 1000, 3000):
        vals = []
        for r in range(15):
            cfg = ScenarioConfig(n=n)
            d = generate_scenario(cfg, r)
            fit = fit_concurrent(d.W, d.Z, make_basis("bspline", 4, d.grid))
            vals.append(d.grid.integrate((fit.theta_values() - true_theta(cfg).values()) ** 2))
        errs[n] = np.median(vals)
    assert errs[500] > errs[1000] > errs[3000]
