import unittest

import numpy as np

from calamp_app.channels import GainChannel
from calamp_app.priors import GainPrior
from calamp_app.selfcheck import (
    GAMP_TOL,
    SUITES,
    derivative_suite,
    faulty_channel_suite,
    gain_prior_suite,
    gamp_reduction_suite,
    real_gain_suite,
    relative_error,
    run_selfcheck,
    signal_prior_suite,
)


def _rng(seed: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


class OracleSuiteTests(unittest.TestCase):
    def test_signal_prior(self) -> None:
        result = signal_prior_suite(_rng(1), 20)
        self.assertTrue(result.passed, result.failures)
        self.assertEqual(result.cases, 20)

    def test_uniform_gain_prior(self) -> None:
        result = gain_prior_suite(_rng(2), 20)
        self.assertTrue(result.passed, result.failures)

    def test_faulty_channel(self) -> None:
        result = faulty_channel_suite(_rng(3), 20)
        self.assertTrue(result.passed, result.failures)

    def test_real_gain_channel(self) -> None:
        result = real_gain_suite(_rng(4), 4)
        self.assertTrue(result.passed, result.failures)

    def test_derivatives(self) -> None:
        result = derivative_suite(_rng(5), 10)
        self.assertTrue(result.passed, result.failures)

    def test_gamp_reduction(self) -> None:
        result = gamp_reduction_suite(_rng(6), 2)
        self.assertTrue(result.passed, result.failures)
        self.assertEqual(result.tolerance, GAMP_TOL)

    def test_gamp_against_marginalized_channel(self) -> None:
        result = gamp_reduction_suite(_rng(8), 1, marginalized=True)
        self.assertEqual(result.name, "gamp-marginal-channel")
        self.assertTrue(result.passed, result.failures)
        self.assertGreater(result.max_residual, 0.0)


class NegativeControlTests(unittest.TestCase):
    def test_wrong_noise_constant_is_caught(self) -> None:
        wrong = GainChannel(delta=0.8, gain_prior=GainPrior(w_d=0.3))
        result = real_gain_suite(_rng(7), 3, channel_override=wrong)
        self.assertFalse(result.passed)
        self.assertGreater(result.max_residual, 1e-3)


class RunnerTests(unittest.TestCase):
    def test_selected_suite_and_log_lines(self) -> None:
        lines: list[str] = []
        results = run_selfcheck(samples=5, seed=1, suites=["faulty-channel-oracle"], logger=lines.append)
        self.assertEqual([r.name for r in results], ["faulty-channel-oracle"])
        self.assertTrue(lines[0].startswith("PASS faulty-channel-oracle: 5 cases"))

    def test_registry(self) -> None:
        self.assertEqual(
            set(SUITES),
            {
                "signal-prior-quadrature",
                "uniform-gain-quadrature",
                "faulty-channel-oracle",
                "real-gain-quadrature",
                "derivative-identities",
                "gamp-reduction",
                "gamp-marginal-channel",
            },
        )

    def test_relative_error(self) -> None:
        self.assertAlmostEqual(relative_error(1.1, 1.0), 0.1)


if __name__ == "__main__":
    unittest.main()
