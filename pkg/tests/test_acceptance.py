"""Desk-scale recovery checks. Minutes of CPU; run with CALAMP_SLOW_TESTS=1."""

import os
import tempfile
import unittest
from collections import Counter
from pathlib import Path

import numpy as np

from calamp_app.bounds import estimate_alpha_cs
from calamp_app.bp_oracle import bp_oracle_solve
from calamp_app.channels import FaultyChannel, GainChannel
from calamp_app.config import BP_ORACLE_RMS_TOL, DEFAULT_DELTA, SLOW_TESTS_ENV
from calamp_app.metrics import cross_correlation
from calamp_app.models import SolverConfig, SweepConfig
from calamp_app.priors import GainPrior, SignalPrior
from calamp_app.results import monotonicity_violations
from calamp_app.solver import CalAmpSolver
from calamp_app.synthgen import make_instance, sensor_count
from calamp_app.worker import SweepRunner

SLOW = os.environ.get(SLOW_TESTS_ENV) == "1"
SEEDS = range(5)


def _solve(n, alpha, p, prior, channel, seed, beta=0.8):
    instance = make_instance(n, sensor_count(n, alpha), p, prior, channel, seed)
    result = CalAmpSolver(prior, channel, SolverConfig(beta=beta, t_max=500)).solve(instance)
    return instance, result, cross_correlation(instance.x_true, result.x_hat)


def _outcomes(n, alpha, p, prior, channel, base_seed, beta=0.8) -> list[bool]:
    return [_solve(n, alpha, p, prior, channel, base_seed + seed, beta)[2].success for seed in SEEDS]


@unittest.skipUnless(SLOW, f"set {SLOW_TESTS_ENV}=1 to run")
class GainRecoveryTests(unittest.TestCase):
    def setUp(self) -> None:
        self.channel = GainChannel(delta=DEFAULT_DELTA, gain_prior=GainPrior(w_d=1.0))

    def test_single_sample_is_not_enough(self) -> None:
        prior = SignalPrior(rho=0.2)
        for alpha in (0.4, 0.65, 0.9):
            self.assertEqual(_outcomes(1000, alpha, 1, prior, self.channel, base_seed=100), [False] * 5, alpha)

    def test_four_samples_above_and_below_transition(self) -> None:
        prior = SignalPrior(rho=0.2)
        self.assertEqual(_outcomes(1000, 0.65, 4, prior, self.channel, base_seed=200), [True] * 5)
        self.assertEqual(_outcomes(1000, 0.24, 4, prior, self.channel, base_seed=300), [False] * 5)

    def test_tap_matches_message_passing(self) -> None:
        prior = SignalPrior(rho=0.1)
        instance = make_instance(128, sensor_count(128, 0.9), 2, prior, self.channel, seed=21)
        config = SolverConfig(beta=0.8, t_max=400)
        tap = CalAmpSolver(prior, self.channel, config).solve(instance)
        bp = bp_oracle_solve(instance, prior, self.channel, config)
        self.assertFalse(tap.diverged, tap.divergence)
        self.assertFalse(bp.diverged, bp.divergence)
        rms = float(np.sqrt(np.mean((bp.x_hat - tap.x_hat) ** 2)))
        self.assertLess(rms, BP_ORACLE_RMS_TOL)


@unittest.skipUnless(SLOW, f"set {SLOW_TESTS_ENV}=1 to run")
class FaultyRecoveryTests(unittest.TestCase):
    def test_faulty_sensors_are_identified_above_the_bound(self) -> None:
        prior = SignalPrior(rho=0.2)
        channel = FaultyChannel(epsilon=0.2, sigma_f2=prior.variance)
        [(_, alpha_cs)] = estimate_alpha_cs([0.2], n=1000, seeds=3, workers=1)
        alpha = min(alpha_cs / 0.8 + 0.1, 0.95)
        self.assertEqual(_outcomes(1000, alpha, 4, prior, channel, base_seed=400, beta=1.0), [True] * 5)

    def test_below_information_bound_fails(self) -> None:
        prior = SignalPrior(rho=0.2)
        channel = FaultyChannel(epsilon=0.2, sigma_f2=prior.variance)
        self.assertEqual(_outcomes(1000, 0.2, 4, prior, channel, base_seed=500, beta=1.0), [False] * 5)


@unittest.skipUnless(SLOW, f"set {SLOW_TESTS_ENV}=1 to run")
class ComplexGainRecoveryTests(unittest.TestCase):
    def test_complex_gains(self) -> None:
        prior = SignalPrior(variant="complex-bernoulli-gauss", rho=0.2)
        channel = GainChannel(delta=DEFAULT_DELTA, gain_prior=GainPrior(variant="complex-normal"))
        _, result, score = _solve(500, 0.7, 4, prior, channel, seed=41)
        self.assertTrue(score.success)
        self.assertFalse(result.diverged)


@unittest.skipUnless(SLOW, f"set {SLOW_TESTS_ENV}=1 to run")
class PhaseDiagramShapeTests(unittest.TestCase):
    def test_success_is_monotone_in_alpha(self) -> None:
        with tempfile.TemporaryDirectory() as temp_dir:
            config = SweepConfig(
                rho_grid=(0.1, 0.2, 0.3, 0.4, 0.5),
                alpha_grid=tuple(round(0.1 * k, 10) for k in range(1, 11)),
                p_list=(4,),
                channel={"variant": "gain"},
                signal={},
                n=300,
                instances_per_cell=len(SEEDS),
                master_seed=3,
                solver=SolverConfig(beta=0.8, t_max=400),
                output_dir=Path(temp_dir),
            )
            records = SweepRunner(config).run()
        self.assertEqual(len(records), 5 * 10 * len(SEEDS))
        per_rho = Counter(violation["rho"] for violation in monotonicity_violations(records))
        self.assertTrue(all(count <= 1 for count in per_rho.values()), per_rho)


if __name__ == "__main__":
    unittest.main()
