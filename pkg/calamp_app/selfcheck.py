"""Oracle suites: analytic update functions against quadrature, derivative identities, GAMP reduction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .channels import (
    Channel,
    FaultyChannel,
    GainChannel,
    QuadratureChannel,
    channel_moments,
    gain_z_moments,
    gamp_gout,
)
from .kernels import check_f_derivative, derivative_residual, f_moments, gauss_pdf, log_gauss_pdf
from .models import Logger, ProblemInstance, SolverConfig
from .priors import GainPrior, SignalPrior, gain_update_uniform
from .solver import CalAmpSolver
from .synthgen import make_instance

ORACLE_REL_TOL = 1e-6
DERIVATIVE_TOL = 1e-5
GAMP_TOL = 1e-12
MARGINAL_GAMP_TOL = 1e-6
GAMP_INSTANCES = 20


@dataclass(slots=True)
class SuiteResult:
    name: str
    cases: int
    max_residual: float
    tolerance: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and self.max_residual <= self.tolerance


def relative_error(value: float, reference: float) -> float:
    return abs(value - reference) / (abs(reference) + 1e-300)


def _bernoulli_gauss_weight(prior: SignalPrior) -> Callable[[float], float]:
    return prior.continuous_weight


def signal_prior_suite(rng: np.random.Generator, samples: int) -> SuiteResult:
    worst = 0.0
    failures: list[str] = []
    for _ in range(samples):
        prior = SignalPrior(rho=float(rng.uniform(0.05, 0.95)), sigma2=float(rng.uniform(0.5, 2.0)))
        X_hat = float(rng.uniform(-2.0, 2.0))
        X_bar = float(rng.uniform(0.05, 1.0))
        oracle = f_moments(_bernoulli_gauss_weight(prior), X_hat, X_bar, atoms=prior.atoms())
        x_hat, x_bar = prior.update(X_hat, X_bar)
        residual = max(abs(float(x_hat) - oracle.mean), abs(float(x_bar) - oracle.variance)) / (
            abs(oracle.mean) + oracle.variance + 1e-300
        )
        worst = max(worst, residual)
        if residual > ORACLE_REL_TOL:
            failures.append(f"rho={prior.rho:.3f} X_hat={X_hat:.3f} X_bar={X_bar:.3f}: {residual:.2e}")
    return SuiteResult("signal-prior-quadrature", samples, worst, ORACLE_REL_TOL, failures)


def uniform_gain_moments_by_quadrature(prior: GainPrior, R: float, var: float, p: int) -> tuple[float, float]:
    """Posterior mean and centered variance of d by adaptive quadrature, breakpoints at the local scale."""
    a, b = prior.support()
    peak = float(np.clip(R, a, b))
    slope = p / peak - (peak - R) / var
    scale = math.sqrt(var)
    if not a < R < b and slope != 0.0:
        scale = min(scale, 1.0 / abs(slope))
    points = [t for t in sorted(peak + k * scale for k in (-30, -5, -1, 0, 1, 5, 30)) if a < t < b] or None
    log_top = p * math.log(peak) + float(log_gauss_pdf(peak, R, var))

    def integral(moment: Callable[[float], float]) -> float:
        value, _ = integrate.quad(
            lambda d: moment(d) * math.exp(p * math.log(d) + float(log_gauss_pdf(d, R, var)) - log_top),
            a,
            b,
            points=points,
            epsabs=0.0,
            epsrel=1e-12,
            limit=400,
        )
        return value

    mass = integral(lambda d: 1.0)
    mean = integral(lambda d: d) / mass
    return mean, integral(lambda d: (d - mean) ** 2) / mass


def gain_prior_suite(rng: np.random.Generator, samples: int) -> SuiteResult:
    worst = 0.0
    failures: list[str] = []
    for _ in range(samples):
        prior = GainPrior(w_d=float(rng.uniform(0.2, 1.5)))
        p = int(rng.integers(1, 31))
        R = float(rng.uniform(-2.0, 10.0))
        var = float(rng.uniform(0.005, 0.2))
        mean, variance = uniform_gain_moments_by_quadrature(prior, R, var, p)
        update = gain_update_uniform(prior, R, var, p)
        residual = max(relative_error(float(update.d_hat), mean), relative_error(float(update.d_bar), variance))
        worst = max(worst, residual)
        if residual > ORACLE_REL_TOL or bool(update.zero_evidence):
            failures.append(f"w_d={prior.w_d:.3f} P={p} R={R:.3f} var={var:.4f}: {residual:.2e}")
    return SuiteResult("uniform-gain-quadrature", samples, worst, ORACLE_REL_TOL, failures)


def faulty_mixture_oracle(channel: FaultyChannel, Z_hat, Z_bar, y) -> tuple[float, float]:
    """Exhaustive sum over the two sensor states for the first entry of a row."""
    log_working = math.log1p(-channel.epsilon) + float(np.sum(log_gauss_pdf(y, Z_hat, Z_bar)))
    log_faulty = math.log(channel.epsilon) + float(np.sum(log_gauss_pdf(y, channel.m_f, channel.sigma_f2)))
    top = max(log_working, log_faulty)
    w_working = math.exp(log_working - top)
    w_faulty = math.exp(log_faulty - top)
    total = w_working + w_faulty
    first = (w_working * y[0] + w_faulty * Z_hat[0]) / total
    second = (w_working * y[0] ** 2 + w_faulty * (Z_hat[0] ** 2 + Z_bar[0])) / total
    return first, second - first * first


def faulty_channel_suite(rng: np.random.Generator, samples: int) -> SuiteResult:
    worst = 0.0
    failures: list[str] = []
    for _ in range(samples):
        p = int(rng.integers(1, 6))
        channel = FaultyChannel(epsilon=float(rng.uniform(0.05, 0.5)), sigma_f2=float(rng.uniform(0.1, 1.0)))
        Z_hat = rng.normal(0.0, 0.5, p)
        Z_bar = rng.uniform(0.05, 0.5, p)
        y = rng.normal(0.0, 0.5, p)
        z_hat, z_bar = channel_moments(channel, Z_hat, Z_bar, y)
        mean, variance = faulty_mixture_oracle(channel, Z_hat, Z_bar, y)
        residual = max(abs(z_hat - mean), abs(z_bar - variance)) / (abs(mean) + variance + 1e-300)
        worst = max(worst, residual)
        if residual > ORACLE_REL_TOL:
            failures.append(f"eps={channel.epsilon:.3f} P={p}: {residual:.2e}")
    return SuiteResult("faulty-channel-oracle", samples, worst, ORACLE_REL_TOL, failures)


def quadrature_gain_channel(delta: float, prior: GainPrior, grid_points: int = 2001) -> QuadratureChannel:
    a, b = prior.support()
    return QuadratureChannel(
        z_moments=gain_z_moments(delta),
        gain_density=lambda d: 1.0 / (b - a),
        support=(a, b),
        grid_points=grid_points,
    )


def real_gain_suite(
    rng: np.random.Generator,
    samples: int,
    channel_override: Optional[GainChannel] = None,
) -> SuiteResult:
    """`channel_override` replaces the analytic side only; a wrong constant there must be caught."""
    worst = 0.0
    failures: list[str] = []
    for _ in range(samples):
        p = int(rng.integers(1, 5))
        prior = GainPrior(w_d=float(rng.uniform(0.3, 1.2)))
        delta = float(rng.uniform(0.01, 0.2))
        d = float(rng.uniform(*prior.support(inflated=False)))
        Z_hat = rng.normal(0.0, 0.5, p)
        Z_bar = rng.uniform(0.05, 0.4, p)
        y = (Z_hat + rng.normal(0.0, np.sqrt(Z_bar + delta))) / d
        analytic = channel_override or GainChannel(delta=delta, gain_prior=prior)
        z_hat, z_bar = channel_moments(analytic, Z_hat, Z_bar, y)
        ref_hat, ref_bar = quadrature_gain_channel(delta, prior).row_moments(Z_hat, Z_bar, y)
        residual = max(abs(z_hat - ref_hat), abs(z_bar - ref_bar)) / (abs(ref_hat) + ref_bar + 1e-300)
        worst = max(worst, residual)
        if residual > ORACLE_REL_TOL:
            failures.append(f"P={p} delta={delta:.3f} w_d={prior.w_d:.3f}: {residual:.2e}")
    return SuiteResult("real-gain-quadrature", samples, worst, ORACLE_REL_TOL, failures)


def channel_derivative_residual(channel: Channel, Z_hat, Z_bar, y, step: float = 1e-5) -> float:
    """|d z_hat / d Z_hat_1 - z_bar / Z_bar_1| for the first entry of a row."""
    Z_hat = np.asarray(Z_hat, dtype=float)

    def mean_variance(value: float) -> tuple[float, float]:
        shifted = Z_hat.copy()
        shifted[0] = value
        return channel_moments(channel, shifted, Z_bar, y)

    return derivative_residual(mean_variance, float(Z_hat[0]), float(Z_bar[0]), step) / float(Z_bar[0])


def faulty_state_weight(channel: FaultyChannel, Z_hat: float, Z_bar: float, y: float) -> Callable[[float], float]:
    """f_0^Z of the faulty-sensor channel with the sensor state relaxed to d in [0, 1]; d = 1 is working."""
    working = float(gauss_pdf(y, Z_hat, Z_bar))
    faulty = float(gauss_pdf(y, channel.m_f, channel.sigma_f2))
    return lambda d: d * working + (1.0 - d) * faulty


def derivative_suite(rng: np.random.Generator, samples: int) -> SuiteResult:
    worst = 0.0
    failures: list[str] = []
    for _ in range(samples):
        prior = SignalPrior(rho=float(rng.uniform(0.1, 0.9)))
        X_hat = float(rng.uniform(-1.5, 1.5))
        X_bar = float(rng.uniform(0.1, 1.0))
        residual = derivative_residual(lambda r: tuple(map(float, prior.update(r, X_bar))), X_hat, X_bar)
        worst = max(worst, residual)
        if residual > DERIVATIVE_TOL:
            failures.append(f"signal prior rho={prior.rho:.3f}: {residual:.2e}")

        p = int(rng.integers(1, 5))
        Z_hat = rng.normal(0.0, 0.5, p)
        Z_bar = rng.uniform(0.1, 0.5, p)
        y = rng.normal(0.0, 0.5, p)
        for channel in (
            FaultyChannel(epsilon=0.2, sigma_f2=0.5),
            GainChannel(delta=0.05, gain_prior=GainPrior(w_d=1.0)),
        ):
            residual = channel_derivative_residual(channel, Z_hat, Z_bar, y)
            worst = max(worst, residual)
            if residual > DERIVATIVE_TOL:
                failures.append(f"{type(channel).__name__} P={p}: {residual:.2e}")

        faulty = FaultyChannel(epsilon=0.2, sigma_f2=0.5)
        weight = faulty_state_weight(faulty, float(Z_hat[0]), float(Z_bar[0]), float(y[0]))
        R = float(rng.uniform(0.2, 0.8))
        residual = check_f_derivative(weight, R, float(Z_bar[0]), support=(0.0, 1.0))
        worst = max(worst, residual)
        if residual > DERIVATIVE_TOL:
            failures.append(f"faulty state weight R={R:.3f}: {residual:.2e}")
    return SuiteResult("derivative-identities", samples, worst, DERIVATIVE_TOL, failures)


def gamp_reference(
    instance: ProblemInstance,
    prior: SignalPrior,
    reference_channel: Channel,
    iterations: int,
    floor: float = 1e-12,
) -> list[np.ndarray]:
    """Plain GAMP for single-sample instances; returns x_hat after each iteration.

    The output step takes (z_hat, z_bar) row by row from `reference_channel` and turns them into
    g_out and its derivative, so a marginalized quadrature channel can stand in for the analytic one.
    """
    F = np.asarray(instance.F)
    y = np.asarray(instance.y)
    F2 = np.abs(F) ** 2
    x_hat = np.zeros((instance.n, 1))
    x_var = np.full((instance.n, 1), prior.variance)
    s_hat = np.zeros(y.shape)
    trace = []
    for _ in range(iterations):
        V = np.maximum(F2 @ x_var, floor)
        p_hat = F @ x_hat - V * s_hat
        rows = [channel_moments(reference_channel, p_hat[mu], V[mu], y[mu]) for mu in range(y.shape[0])]
        z_hat = np.array([[row[0]] for row in rows], dtype=float)
        z_bar = np.array([[row[1]] for row in rows])
        s_hat, ds = gamp_gout(z_hat, p_hat, z_bar, V)
        tau = np.maximum(1.0 / np.maximum(F2.T @ (-ds), floor), floor)
        r_hat = x_hat + tau * (F.T @ s_hat)
        x_hat, x_var = prior.update(r_hat, tau)
        trace.append(np.asarray(x_hat).copy())
    return trace


def gamp_reduction_suite(
    rng: np.random.Generator,
    samples: int,
    iterations: int = 10,
    marginalized: bool = False,
) -> SuiteResult:
    """TAP with one sample against plain GAMP.

    With `marginalized` the reference runs on the gain integrated out by quadrature, which checks the
    analytic channel as well as the loop; otherwise both sides share the analytic channel and must agree
    to rounding.
    """
    name = "gamp-marginal-channel" if marginalized else "gamp-reduction"
    tolerance = MARGINAL_GAMP_TOL if marginalized else GAMP_TOL
    low, high = (20, 30) if marginalized else (40, 80)
    worst = 0.0
    failures: list[str] = []
    for case in range(samples):
        prior = SignalPrior(rho=float(rng.uniform(0.1, 0.3)))
        gain_prior = GainPrior(w_d=0.5)
        delta = float(rng.uniform(0.01, 0.1))
        channel = GainChannel(delta=delta, gain_prior=gain_prior)
        reference_channel = quadrature_gain_channel(delta, gain_prior, grid_points=401) if marginalized else channel
        n = int(rng.integers(low, high))
        instance = make_instance(n, int(0.8 * n), 1, prior, channel, int(rng.integers(0, 2**31)))
        reference = gamp_reference(instance, prior, reference_channel, iterations)
        solver = CalAmpSolver(prior, channel, SolverConfig(beta=1.0))
        state = solver.initialize(instance)
        case_worst = 0.0
        for t in range(iterations):
            state, _ = solver.iterate(state, instance.F, instance.y)
            case_worst = max(case_worst, float(np.max(np.abs(state.x_hat - reference[t]))))
        worst = max(worst, case_worst)
        if case_worst > tolerance:
            failures.append(f"case {case}: max |x_tap - x_gamp| = {case_worst:.2e}")
    return SuiteResult(name, samples, worst, tolerance, failures)


SUITES: dict[str, Callable[[np.random.Generator, int], SuiteResult]] = {
    "signal-prior-quadrature": signal_prior_suite,
    "uniform-gain-quadrature": gain_prior_suite,
    "faulty-channel-oracle": faulty_channel_suite,
    "real-gain-quadrature": real_gain_suite,
    "derivative-identities": derivative_suite,
    "gamp-reduction": lambda rng, samples: gamp_reduction_suite(rng, min(samples, GAMP_INSTANCES)),
    "gamp-marginal-channel": lambda rng, samples: gamp_reduction_suite(rng, max(1, samples // 25), marginalized=True),
}


def run_selfcheck(
    samples: int = 50,
    seed: int = 0,
    suites: Optional[list[str]] = None,
    logger: Logger | None = None,
) -> list[SuiteResult]:
    logger = logger or (lambda _: None)
    names = suites or list(SUITES)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    results = []
    for name in names:
        result = SUITES[name](rng, samples)
        status = "PASS" if result.passed else "FAIL"
        logger(f"{status} {name}: {result.cases} cases, max residual {result.max_residual:.2e} "
               f"(tolerance {result.tolerance:.0e})")
        for failure in result.failures[:5]:
            logger(f"    {failure}")
        results.append(result)
    return results
