import math
import unittest

import numpy as np
from numpy.testing import assert_allclose
from scipy import integrate, special

from calamp_app.kernels import (
    abs2,
    check_f_derivative,
    f_moments,
    gauss_pdf,
    log_lower_incomplete_gamma,
    log_upper_incomplete_gamma,
    log_weighted_gaussian_integral,
    lower_incomplete_gamma,
    power_gaussian_moments,
    weighted_gaussian_integral,
)
from calamp_app.models import DomainError
from calamp_app.channels import FaultyChannel
from calamp_app.priors import SignalPrior
from calamp_app.selfcheck import faulty_state_weight


def _integral_by_quadrature(n: int, mean: float, var: float, a: float, b: float) -> float:
    value, _ = integrate.quad(
        lambda t: t**n * math.exp(-((t - mean) ** 2) / (2.0 * var)),
        a,
        b,
        epsabs=0.0,
        epsrel=1e-12,
        limit=400,
    )
    return value


def _power_moments_by_quadrature(n: int, mean: float, var: float, a: float, b: float) -> tuple[float, float]:
    root = math.sqrt(mean * mean + 4.0 * n * var)
    mode = 0.5 * (mean + root) if mean >= 0.0 else 2.0 * n * var / (root - mean)
    peak = min(max(mode, a), b)
    slope = n / peak - (peak - mean) / var
    scale = math.sqrt(var) if a < mode < b or slope == 0.0 else min(math.sqrt(var), 1.0 / abs(slope))
    upper = b if math.isfinite(b) else peak + 40.0 * math.sqrt(var)
    points = [t for t in (peak + k * scale for k in (-30, -5, -1, 0, 1, 5, 30)) if a < t < upper] or None
    log_top = n * math.log(peak) - (peak - mean) ** 2 / (2.0 * var)

    def integral(moment) -> float:
        value, _ = integrate.quad(
            lambda t: moment(t) * math.exp(n * math.log(t) - (t - mean) ** 2 / (2.0 * var) - log_top),
            a,
            upper,
            points=points,
            epsabs=0.0,
            epsrel=1e-12,
            limit=400,
        )
        return value

    mass = integral(lambda t: 1.0)
    first = integral(lambda t: t) / mass
    return first, integral(lambda t: (t - first) ** 2) / mass


class GaussianDensityTests(unittest.TestCase):
    def test_abs2_for_real_and_complex(self) -> None:
        assert_allclose(abs2(np.array([3.0, -2.0])), [9.0, 4.0])
        assert_allclose(abs2(np.array([3.0 + 4.0j])), [25.0])

    def test_density_at_mean(self) -> None:
        self.assertAlmostEqual(gauss_pdf(0.0, 0.0, 1.0), 1.0 / math.sqrt(2.0 * math.pi), places=14)
        self.assertAlmostEqual(gauss_pdf(0.0, 0.0, 1.0, field="complex"), 1.0 / math.pi, places=14)

    def test_non_positive_variance_is_rejected(self) -> None:
        with self.assertRaises(DomainError):
            gauss_pdf(0.0, 0.0, 0.0)


class WeightedIntegralTests(unittest.TestCase):
    def test_matches_quadrature_when_interval_straddles_mean(self) -> None:
        for n in range(5):
            expected = _integral_by_quadrature(n, 0.8, 0.05, 0.45, 1.55)
            assert_allclose(weighted_gaussian_integral(n, 0.8, 0.05, 0.45, 1.55), expected, rtol=1e-9)

    def test_matches_quadrature_when_interval_is_right_of_mean(self) -> None:
        for n in range(5):
            expected = _integral_by_quadrature(n, -0.3, 0.5, 0.2, 1.0)
            assert_allclose(weighted_gaussian_integral(n, -0.3, 0.5, 0.2, 1.0), expected, rtol=1e-9)

    def test_matches_quadrature_when_interval_is_left_of_mean(self) -> None:
        for n in range(5):
            expected = _integral_by_quadrature(n, 2.0, 0.1, 0.5, 1.5)
            assert_allclose(weighted_gaussian_integral(n, 2.0, 0.1, 0.5, 1.5), expected, rtol=1e-8)

    def test_half_line(self) -> None:
        expected, _ = integrate.quad(lambda t: t**2 * math.exp(-((t - 0.5) ** 2) / 0.4), 0.0, math.inf)
        assert_allclose(weighted_gaussian_integral(2, 0.5, 0.2, 0.0, math.inf), expected, rtol=1e-8)

    def test_broadcasts_over_means(self) -> None:
        means = np.array([0.6, 1.0, 1.4])
        values = weighted_gaussian_integral(3, means, 0.02, 0.45, 1.55)
        expected = [_integral_by_quadrature(3, float(m), 0.02, 0.45, 1.55) for m in means]
        assert_allclose(values, expected, rtol=1e-9)

    def test_ratios_do_not_depend_on_normalization(self) -> None:
        # I(n, cR, c^2 var, ca, cb) = c^(n+1) I(n, R, var, a, b)
        for n, mean, var in ((2, 0.8, 0.05), (5, -0.3, 0.5), (3, 2.0, 0.1)):
            ratio = weighted_gaussian_integral(n + 1, mean, var, 0.45, 1.55) / weighted_gaussian_integral(
                n, mean, var, 0.45, 1.55
            )
            scaled = weighted_gaussian_integral(n + 1, 3.7 * mean, 3.7**2 * var, 3.7 * 0.45, 3.7 * 1.55)
            scaled /= weighted_gaussian_integral(n, 3.7 * mean, 3.7**2 * var, 3.7 * 0.45, 3.7 * 1.55)
            assert_allclose(scaled, 3.7 * ratio, rtol=1e-9)
            windowed, _ = power_gaussian_moments(n, mean, var, 0.45, 1.55)
            assert_allclose(float(windowed), ratio, rtol=1e-9)

    def test_spread_measures_cancellation(self) -> None:
        _, _, benign = log_weighted_gaussian_integral(2, 1.0, 0.05, 0.45, 1.55, return_spread=True)
        _, _, far = log_weighted_gaussian_integral(30, -1.0, 0.05, 0.45, 1.55, return_spread=True)
        _, _, narrow = log_weighted_gaussian_integral(3, 0.3, 0.1, 1.0, 1.0 + 1e-9, return_spread=True)
        self.assertLess(float(benign), math.log(10.0))
        self.assertGreater(float(far), math.log(1e6))
        self.assertGreater(float(narrow), math.log(1e6))

    def test_invalid_arguments(self) -> None:
        with self.assertRaises(DomainError):
            weighted_gaussian_integral(-1, 0.0, 1.0, 0.0, 1.0)
        with self.assertRaises(DomainError):
            weighted_gaussian_integral(1, 0.0, 1.0, 1.0, 1.0)
        with self.assertRaises(DomainError):
            weighted_gaussian_integral(1, 0.0, -1.0, 0.0, 1.0)


class PowerMomentTests(unittest.TestCase):
    def test_matches_quadrature_in_every_regime(self) -> None:
        cases = (
            (4, 1.0, 0.05, 0.45, 1.55),
            (30, -1.0, 0.05, 0.45, 1.55),
            (8, 10.0, 0.01, 0.45, 1.55),
            (1, -2.0, 0.005, 0.175, 1.825),
            (3, 0.2, 0.5, 0.0, math.inf),
            (30, 0.05, 1.0, 0.0, math.inf),
        )
        for n, mean, var, a, b in cases:
            expected_mean, expected_var = _power_moments_by_quadrature(n, mean, var, a, b)
            got_mean, got_var = power_gaussian_moments(n, mean, var, a, b)
            assert_allclose(float(got_mean), expected_mean, rtol=1e-9)
            assert_allclose(float(got_var), expected_var, rtol=1e-8)

    def test_broadcasts(self) -> None:
        means = np.array([[-1.0, 1.0], [4.0, 0.9]])
        got_mean, got_var = power_gaussian_moments(6, means, 0.02, 0.5, 1.5)
        self.assertEqual(got_mean.shape, (2, 2))
        for index in np.ndindex(means.shape):
            expected = _power_moments_by_quadrature(6, float(means[index]), 0.02, 0.5, 1.5)
            assert_allclose((got_mean[index], got_var[index]), expected, rtol=1e-8)

    def test_domain(self) -> None:
        with self.assertRaises(DomainError):
            power_gaussian_moments(2, 0.0, 1.0, -1.0, 1.0)
        with self.assertRaises(DomainError):
            power_gaussian_moments(-1, 0.0, 1.0, 0.0, 1.0)
        with self.assertRaises(DomainError):
            power_gaussian_moments(1, 0.0, 0.0, 0.0, 1.0)


class IncompleteGammaTests(unittest.TestCase):
    def test_log_forms_match_scipy(self) -> None:
        s = np.array([0.5, 1.0, 2.5, 0.5, 1.0, 2.5, 3.0])
        x = np.array([0.1, 1.0, 3.0, 10.0, 0.5, 0.2, 40.0])
        lower = special.gammainc(s, x) * special.gamma(s)
        upper = special.gammaincc(s, x) * special.gamma(s)
        assert_allclose(np.exp(log_lower_incomplete_gamma(s, x)), lower, rtol=1e-10)
        assert_allclose(np.exp(log_upper_incomplete_gamma(s, x)), upper, rtol=1e-9)

    def test_exponential_case(self) -> None:
        self.assertAlmostEqual(lower_incomplete_gamma(1.0, 2.0), 1.0 - math.exp(-2.0), places=14)

    def test_domain(self) -> None:
        with self.assertRaises(DomainError):
            lower_incomplete_gamma(0.0, 1.0)
        with self.assertRaises(DomainError):
            lower_incomplete_gamma(1.0, -1.0)


class MomentOracleTests(unittest.TestCase):
    def test_flat_weight_reproduces_the_gaussian(self) -> None:
        moments = f_moments(lambda x: 1.0, 0.7, 0.3)
        assert_allclose(moments.f0, 1.0, rtol=1e-9)
        assert_allclose(moments.mean, 0.7, rtol=1e-9)
        assert_allclose(moments.variance, 0.3, rtol=1e-8)
        self.assertFalse(moments.zero_evidence)

    def test_point_mass_only(self) -> None:
        moments = f_moments(lambda x: 0.0, 0.5, 0.2, atoms=[(0.0, 1.0)])
        assert_allclose(moments.f0, gauss_pdf(0.0, 0.5, 0.2), rtol=1e-12)
        self.assertEqual(moments.f1, 0.0)

    def test_zero_evidence_flag(self) -> None:
        moments = f_moments(lambda x: 0.0, 0.0, 1.0)
        self.assertTrue(moments.zero_evidence)

    def test_derivative_identity_for_bernoulli_gauss_weight(self) -> None:
        prior = SignalPrior(rho=0.3)
        for mean, var in ((0.4, 0.2), (-1.2, 0.5), (0.05, 0.9)):
            residual = check_f_derivative(prior.continuous_weight, mean, var, atoms=prior.atoms())
            self.assertLess(residual, 1e-5)

    def test_derivative_identity_for_faulty_sensor_weight(self) -> None:
        channel = FaultyChannel(epsilon=0.2, sigma_f2=0.5)
        for Z_hat, Z_bar, y, mean in ((0.3, 0.2, 0.1, 0.5), (-0.7, 0.4, 0.9, 0.3), (0.0, 0.1, -1.2, 0.8)):
            weight = faulty_state_weight(channel, Z_hat, Z_bar, y)
            residual = check_f_derivative(weight, mean, Z_bar, support=(0.0, 1.0))
            self.assertLess(residual, 1e-5)


if __name__ == "__main__":
    unittest.main()
