import unittest
from dataclasses import dataclass

import numpy as np
from numpy.testing import assert_allclose

from calamp_app.channels import CalibratedChannel, ChannelOutput, GainChannel
from calamp_app.metrics import cross_correlation
from calamp_app.models import DomainError, ProblemInstance, SolverConfig
from calamp_app.priors import GainPrior, SignalPrior
from calamp_app.selfcheck import gamp_reference
from calamp_app.solver import CalAmpSolver, damping_update, solve
from calamp_app.synthgen import make_instance


@dataclass(frozen=True)
class _BrokenChannel:
    field: str = "real"

    def posterior(self, Z_hat, Z_bar, y, Z_hat_prev=None, Z_bar_prev=None) -> ChannelOutput:
        return ChannelOutput(np.full(np.shape(Z_hat), np.nan), np.asarray(Z_bar))


@dataclass(frozen=True)
class _RunawayChannel:
    field: str = "real"

    def posterior(self, Z_hat, Z_bar, y, Z_hat_prev=None, Z_bar_prev=None) -> ChannelOutput:
        return ChannelOutput(np.asarray(Z_hat) + 1e6, np.asarray(Z_bar))


def _column(instance: ProblemInstance, l: int) -> ProblemInstance:
    return ProblemInstance(
        F=instance.F,
        x_true=instance.x_true[:, [l]],
        d_true=instance.d_true,
        y=instance.y[:, [l]],
        z=instance.z[:, [l]],
        rho=instance.rho,
        field=instance.field,
        seed=instance.seed,
    )


class DampingTests(unittest.TestCase):
    def test_beta_one_keeps_new_value(self) -> None:
        assert_allclose(damping_update(np.array([2.0]), np.array([5.0]), 1.0), [2.0])

    def test_variance_blend(self) -> None:
        assert_allclose(damping_update(np.array([1.0]), np.array([4.0]), 0.5, "variance"), [4.0 / 3.0])

    def test_mean_blend_uses_variance_ratio(self) -> None:
        damped = np.array([4.0 / 3.0])
        value = damping_update(np.array([1.0]), np.array([0.0]), 0.5, "mean", (damped, np.array([1.0])))
        assert_allclose(value, [2.0 / 3.0])

    def test_mean_blend_needs_variances(self) -> None:
        with self.assertRaises(DomainError):
            damping_update(np.array([1.0]), np.array([0.0]), 0.5, "mean")


class InitializeTests(unittest.TestCase):
    def test_initial_state(self) -> None:
        prior = SignalPrior(rho=0.2, sigma2=1.5)
        channel = CalibratedChannel()
        instance = make_instance(30, 20, 2, prior, channel, seed=1)
        state = CalAmpSolver(prior, channel).initialize(instance)
        assert_allclose(state.x_hat, np.zeros((30, 2)))
        assert_allclose(state.x_bar, np.full((30, 2), 0.3))
        assert_allclose(state.Z_hat, instance.y)
        assert_allclose(state.z_hat, instance.y)
        assert_allclose(state.Z_bar, np.ones((20, 2)))
        self.assertEqual(state.t, 0)

    def test_random_init_is_seeded(self) -> None:
        prior = SignalPrior(rho=0.2)
        channel = CalibratedChannel()
        instance = make_instance(30, 20, 1, prior, channel, seed=1)
        config = SolverConfig(random_init=True, seed=5)
        a = CalAmpSolver(prior, channel, config).initialize(instance)
        b = CalAmpSolver(prior, channel, config).initialize(instance)
        assert_allclose(a.x_hat, b.x_hat)
        self.assertGreater(float(np.abs(a.x_hat).sum()), 0.0)

    def test_field_mismatch(self) -> None:
        instance = make_instance(20, 10, 1, SignalPrior(), CalibratedChannel(), seed=0)
        complex_prior = SignalPrior(variant="complex-bernoulli-gauss")
        with self.assertRaises(DomainError):
            CalAmpSolver(complex_prior, CalibratedChannel(field="complex")).initialize(instance)

    def test_config_validation(self) -> None:
        with self.assertRaises(DomainError):
            SolverConfig(beta=0.0)
        with self.assertRaises(DomainError):
            SolverConfig(t_max=0)


class SolveTests(unittest.TestCase):
    def test_calibrated_recovery(self) -> None:
        prior = SignalPrior(rho=0.1)
        channel = CalibratedChannel()
        instance = make_instance(200, 160, 1, prior, channel, seed=11)
        lines: list[str] = []
        result = solve(instance, prior, channel, SolverConfig(), logger=lines.append)
        score = cross_correlation(instance.x_true, result.x_hat)
        self.assertFalse(result.diverged)
        self.assertGreater(score.mu, 0.999)
        self.assertEqual(len(result.history), result.iterations)
        self.assertTrue(any(line.startswith("iteration 1:") for line in lines))

    def test_gain_recovery_with_several_samples(self) -> None:
        prior = SignalPrior(rho=0.1)
        channel = GainChannel(delta=1e-15, gain_prior=GainPrior(w_d=1.0))
        instance = make_instance(200, 180, 4, prior, channel, seed=3)
        result = CalAmpSolver(prior, channel, SolverConfig(beta=0.8)).solve(instance)
        score = cross_correlation(instance.x_true, result.x_hat)
        self.assertGreater(score.mu, 0.95)
        self.assertEqual(result.d_hat.shape, (180,))

    def test_divergence_is_reported_not_raised(self) -> None:
        prior = SignalPrior(rho=0.1)
        instance = make_instance(20, 15, 1, prior, CalibratedChannel(), seed=0)
        result = CalAmpSolver(prior, _BrokenChannel()).solve(instance)
        self.assertTrue(result.diverged)
        self.assertEqual(result.divergence, "iteration 1: field z_hat")
        self.assertEqual(result.iterations, 0)
        assert_allclose(result.x_hat, np.zeros((20, 1)))

    def test_finite_blow_up_is_reported(self) -> None:
        prior = SignalPrior(rho=0.1)
        instance = make_instance(20, 15, 1, prior, CalibratedChannel(), seed=0)
        lines: list[str] = []
        result = CalAmpSolver(prior, _RunawayChannel(), logger=lines.append).solve(instance)
        self.assertTrue(result.diverged)
        self.assertEqual(result.divergence, "iteration 1: field x_hat")
        self.assertEqual(result.iterations, 0)
        self.assertTrue(np.all(np.isfinite(result.x_hat)))
        self.assertIn("Diverged at iteration 1: field x_hat", lines)

    def test_iteration_cap(self) -> None:
        prior = SignalPrior(rho=0.1)
        channel = CalibratedChannel()
        instance = make_instance(60, 50, 1, prior, channel, seed=2)
        result = CalAmpSolver(prior, channel, SolverConfig(t_max=3)).solve(instance)
        self.assertEqual(result.iterations, 3)
        self.assertFalse(result.converged)


class ReductionTests(unittest.TestCase):
    def test_single_sample_matches_plain_gamp(self) -> None:
        for seed in range(20):
            prior = SignalPrior(rho=0.1 + 0.01 * seed)
            channel = GainChannel(delta=0.01 + 0.004 * seed, gain_prior=GainPrior(w_d=0.5))
            n = 40 + 2 * seed
            instance = make_instance(n, int(0.8 * n), 1, prior, channel, seed=seed)
            reference = gamp_reference(instance, prior, channel, 10)
            solver = CalAmpSolver(prior, channel, SolverConfig(beta=1.0))
            state = solver.initialize(instance)
            for t in range(10):
                state, _ = solver.iterate(state, instance.F, instance.y)
                assert_allclose(state.x_hat, reference[t], rtol=0.0, atol=1e-12, err_msg=f"seed {seed}, t {t}")

    def test_calibrated_samples_evolve_independently(self) -> None:
        prior = SignalPrior(rho=0.15)
        channel = CalibratedChannel(delta=1e-4)
        instance = make_instance(80, 60, 2, prior, channel, seed=21)
        joint = CalAmpSolver(prior, channel)
        joint_state = joint.initialize(instance)
        columns = [_column(instance, l) for l in range(2)]
        column_states = [joint.initialize(column) for column in columns]
        for _ in range(15):
            joint_state, _ = joint.iterate(joint_state, instance.F, instance.y)
            column_states = [joint.iterate(state, column.F, column.y)[0]
                             for state, column in zip(column_states, columns)]
        for l, state in enumerate(column_states):
            assert_allclose(joint_state.x_hat[:, [l]], state.x_hat, rtol=0.0, atol=1e-10)


if __name__ == "__main__":
    unittest.main()
