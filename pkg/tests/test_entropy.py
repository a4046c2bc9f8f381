import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_spd
from mixent.benchmarks import Gaussian, LogNormal, sample
from mixent.entropy import (
    BoundedTransform,
    BoundViolation,
    EntropyEstimate,
    EntropyMethod,
    entropy_bounded_gmm,
    entropy_gmm,
    entropy_mc,
    entropy_mle_gaussian,
    entropy_sote,
    entropy_ut,
    entropy_var,
    entropy_weighted_form,
    estimate_entropy,
    log_density_hessian,
    sigma_points,
    weighted_form_terms,
)
from mixent.gaussian import GaussianComponent, gaussian_entropy
from mixent.mixture import CovarianceFamily, FitConfig, MixtureModel, fit_em, select_model

H_STD = 1.4189385332046727  # 0.5 log(2 pi e)
H_41 = 2.9916194162833256  # scipy.stats.multivariate_normal entropy
LEAN = FitConfig(k_range=(1, 3), n_init=1, tol=1e-6)
APPROX = [entropy_ut, entropy_var, entropy_sote]


def random_model(r, k, p, spread=3.0):
    return MixtureModel.from_params(
        r.dirichlet(np.ones(k) * 2),
        r.normal(scale=spread, size=(k, p)),
        [random_spd(r, p) for _ in range(k)],
    )


def separated_pair(p=2):
    covs = [np.eye(p), np.diag(np.linspace(0.5, 1.5, p))]
    means = [np.zeros(p), np.full(p, 40.0)]
    return MixtureModel.from_params([0.5, 0.5], means, covs)


class TestPlugIn:
    def test_two_point_arithmetic(self):
        # N(0, s2) with log f(0) = -1 and log f(2s) = -3
        s2 = math.exp(2) / (2 * math.pi)
        m = MixtureModel.from_params([1.0], [[0.0]], [[[s2]]])
        est = entropy_gmm([[0.0], [2 * math.sqrt(s2)]], m)
        assert est.value == pytest.approx(2.0, abs=1e-12)

    def test_k1_is_mean_negative_log_density(self, rng):
        from scipy import stats

        x = rng.normal(size=(500, 2)) @ [[1, 0.3], [0, 2]]
        m = fit_em(x, 1, CovarianceFamily.FULL_VARYING)
        mu, s = x.mean(axis=0), np.cov(x, rowvar=False, bias=True)
        expect = -stats.multivariate_normal(mu, s).logpdf(x).mean()
        assert entropy_gmm(x, m).value == pytest.approx(expect, abs=1e-10)

    def test_sample_of_sigma_41(self):
        y = sample(Gaussian(), 10_000, 1)
        assert entropy_gmm(y, select_model(y, LEAN)).value == pytest.approx(H_41, abs=0.05)

    def test_translation_invariance(self, rng):
        m = random_model(rng, 3, 2)
        y = m.sample(400, rng)
        shift = np.array([5.0, -3.0])
        moved = MixtureModel.from_params(m.weights, m.means + shift, m.covariances)
        assert entropy_gmm(y + shift, moved).value == pytest.approx(entropy_gmm(y, m).value, abs=1e-10)

    def test_scaling_shifts_by_p_log_c(self, rng):
        p, c = 3, 2.5
        m = random_model(rng, 2, p)
        y = m.sample(400, rng)
        scaled = MixtureModel.from_params(m.weights, m.means * c, m.covariances * c * c)
        diff = entropy_gmm(y * c, scaled).value - entropy_gmm(y, m).value
        assert diff == pytest.approx(p * math.log(c), abs=1e-8)

    def test_estimate_must_be_finite(self):
        with pytest.raises(FloatingPointError):
            EntropyEstimate(float("nan"), EntropyMethod.GMM)

    def test_bits(self):
        assert EntropyEstimate(math.log(2), EntropyMethod.GMM).bits == pytest.approx(1.0)


class TestWeightedForm:
    @given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 5]), st.integers(1, 3))
    def test_identity(self, seed, p, k):
        r = np.random.default_rng(seed)
        y = random_model(r, 3, p).sample(200, r)
        try:
            m = fit_em(y, k, CovarianceFamily.FULL_VARYING, FitConfig(n_init=1, max_iter=50))
        except Exception:
            m = random_model(r, k, p)
        assert entropy_weighted_form(y, m).value == pytest.approx(entropy_gmm(y, m).value, abs=1e-10)

    def test_identity_holds_off_fixed_point(self, rng):
        m = random_model(rng, 2, 2)
        y = rng.normal(size=(100, 2))
        assert entropy_weighted_form(y, m).value == pytest.approx(entropy_gmm(y, m).value, abs=1e-10)

    def test_weights_normalised(self, rng):
        m = random_model(rng, 2, 2, spread=1.0)
        _, _, w = weighted_form_terms(rng.normal(size=(100, 2)), m)
        assert np.allclose(w.sum(axis=0), 1.0, atol=1e-12)

    def test_k1_uniform_weights(self, rng):
        y = rng.normal(size=(50, 1))
        m = MixtureModel.from_params([1.0], [[0.0]], [[[1.0]]])
        pi_hat, a_hat, w = weighted_form_terms(y, m)
        assert np.allclose(w, 1 / 50)
        assert a_hat[0] == pytest.approx(np.mean(m.log_density(y)))
        assert pi_hat[0] == pytest.approx(1.0)


class TestMonteCarlo:
    def test_standard_normal(self):
        m = MixtureModel.from_params([1.0], [[0.0]], [[[1.0]]])
        est = entropy_mc(m, 1_000_000, seed=1)
        assert abs(est.value - H_STD) < 3 * est.se

    def test_sigma_41(self):
        m = MixtureModel.from_params([1.0], [[0.0, 0.0]], [np.array(Gaussian().cov)])
        est = entropy_mc(m, 1_000_000, seed=2)
        assert abs(est.value - H_41) < 3 * est.se

    def test_deterministic(self):
        m = separated_pair()
        assert entropy_mc(m, 1000, 5).value == entropy_mc(m, 1000, 5).value

    def test_zero_weight_rejected(self):
        with pytest.raises(ValueError):
            MixtureModel.from_params([1.0, 0.0], [[0.0], [1.0]], [[[1.0]], [[1.0]]])

    def test_approximations_agree_on_separated_mixture(self):
        m = separated_pair()
        mc = entropy_mc(m, 1_000_000, seed=3)
        for f in APPROX:
            assert abs(f(m).value - mc.value) < 3 * mc.se


class TestMLE:
    def test_two_points(self):
        assert entropy_mle_gaussian([[-1.0], [1.0]]).value == pytest.approx(H_STD, abs=1e-12)

    def test_consistency(self):
        assert entropy_mle_gaussian(sample(Gaussian(), 10_000, 4)).value == pytest.approx(H_41, abs=0.05)

    def test_constant_column_never_nan(self):
        x = np.c_[np.arange(10.0), np.ones(10)]
        try:
            est = entropy_mle_gaussian(x)
        except (ValueError, np.linalg.LinAlgError):
            return
        assert math.isfinite(est.value) and est.ridge > 0


class TestApproximations:
    @given(st.integers(0, 2**32 - 1), st.integers(1, 5))
    def test_exact_at_k1(self, seed, p):
        r = np.random.default_rng(seed)
        m = random_model(r, 1, p)
        h = gaussian_entropy(m.components[0])
        for f in APPROX:
            assert f(m).value == pytest.approx(h, abs=1e-9)

    def test_unit_sigma_points(self):
        c = GaussianComponent.from_params([0.0], [[1.0]])
        assert sorted(sigma_points(c)[:, 0]) == pytest.approx([-1.0, 1.0])
        m = MixtureModel.from_params([1.0], [[0.0]], [[[1.0]]])
        assert entropy_ut(m).value == pytest.approx(H_STD, abs=1e-12)

    @pytest.mark.parametrize("f", APPROX, ids=["ut", "var", "sote"])
    def test_far_separation(self, f):
        m = separated_pair()
        h = [gaussian_entropy(c) for c in m.components]
        assert f(m).value == pytest.approx(0.5 * sum(h) + math.log(2), abs=1e-6)

    def test_var_duplicate_components_collapse(self):
        m = MixtureModel.from_params([0.5, 0.5], [[1.0, 2.0]] * 2, [np.array(Gaussian().cov)] * 2)
        assert entropy_var(m).value == pytest.approx(H_41, abs=1e-12)
        mc = entropy_mc(m, 200_000, seed=9)
        assert abs(entropy_var(m).value - mc.value) < 3 * mc.se

    @given(st.integers(0, 2**32 - 1))
    def test_hessian_matches_finite_differences(self, seed):
        r = np.random.default_rng(seed)
        m = random_model(r, 2, 2, spread=1.5)
        x = r.normal(size=2)
        h = 1e-4
        fd = np.empty((2, 2))
        for a in range(2):
            for b in range(2):
                ea, eb = np.eye(2)[a] * h, np.eye(2)[b] * h
                pts = np.array([x + ea + eb, x + ea - eb, x - ea + eb, x - ea - eb])
                lf = m.log_density(pts)
                fd[a, b] = (lf[0] - lf[1] - lf[2] + lf[3]) / (4 * h * h)
        analytic = np.asarray(log_density_hessian(m, x)).reshape(2, 2)
        assert np.allclose(analytic, fd, atol=1e-4)


class TestBounded:
    def test_lognormal_1d(self):
        y = sample(LogNormal((0.0,), ((1.0,),)), 10_000, 6)
        est = entropy_bounded_gmm(y, BoundedTransform.all_bounded(1), LEAN)
        assert est.value == pytest.approx(H_STD, abs=0.05)

    def test_identity_transform_is_plain_gmm(self, rng):
        y = rng.normal(size=(300, 2))
        a = entropy_bounded_gmm(y, BoundedTransform.identity(2), LEAN).value
        b = entropy_gmm(y, select_model(y, LEAN)).value
        assert a == b

    def test_violation_names_column(self):
        y = np.array([[1.0, 2.0], [1.5, -0.1], [2.0, 3.0]])
        with pytest.raises(BoundViolation) as info:
            BoundedTransform.all_bounded(2).apply(y)
        assert info.value.column == 1

    def test_jacobian(self):
        y = np.array([[1.0, 5.0], [math.e, 7.0]])
        t, lj = BoundedTransform.columns(2, [0]).apply(y)
        assert np.allclose(t[:, 0], [0.0, 1.0])
        assert np.allclose(t[:, 1], y[:, 1])
        assert np.allclose(lj, [0.0, 1.0])

    def test_shifted_lower_bound(self):
        y = np.array([[3.0], [4.0]])
        t, _ = BoundedTransform.all_bounded(1, lower=2.0).apply(y)
        assert np.allclose(t[:, 0], [0.0, math.log(2.0)])

    def test_bounded_with_approximation_rejected(self, rng):
        with pytest.raises(ValueError):
            estimate_entropy(rng.uniform(1, 2, size=(100, 1)), "ut", LEAN, BoundedTransform.all_bounded(1))
