from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .config import GAIN_CLOSED_FORM_MAX_SPREAD, GAIN_FALLBACK_CHUNK, PRIOR_INFLATION
from .kernels import abs2, log_gauss_pdf, log_weighted_gaussian_integral, power_gaussian_moments
from .models import DomainError, Field, GainVariant, SignalVariant


@dataclass(slots=True, frozen=True)
class SignalPrior:
    variant: SignalVariant = "real-bernoulli-gauss"
    rho: float = 0.2
    sigma2: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho <= 1.0:
            raise DomainError(f"signal density rho must lie in [0, 1], got {self.rho}")
        if self.sigma2 <= 0.0:
            raise DomainError(f"sigma2 must be > 0, got {self.sigma2}")

    @property
    def field(self) -> Field:
        return "complex" if self.variant == "complex-bernoulli-gauss" else "real"

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def variance(self) -> float:
        return self.rho * self.sigma2

    def continuous_weight(self, x: float) -> float:
        return self.rho * math.exp(float(log_gauss_pdf(x, 0.0, self.sigma2)))

    def atoms(self) -> tuple[tuple[float, float], ...]:
        return ((0.0, 1.0 - self.rho),)

    def update(self, X_hat, X_bar) -> tuple[np.ndarray, np.ndarray]:
        return signal_update(self, X_hat, X_bar)


@dataclass(slots=True, frozen=True)
class GainPrior:
    variant: GainVariant = "uniform"
    w_d: float = 1.0
    inflation: float = PRIOR_INFLATION
    d_cal: float = 1.0
    mean: complex = 0.0
    variance: float = 10.0

    def __post_init__(self) -> None:
        if self.variant == "uniform":
            if not 0.0 < self.w_d < 2.0:
                raise DomainError(f"uniform gain width must lie in (0, 2), got {self.w_d}")
            if self.w_d * self.inflation >= 2.0:
                raise DomainError("inflated uniform gain support must stay positive")
        if self.variant == "complex-normal" and self.variance <= 0.0:
            raise DomainError(f"complex gain variance must be > 0, got {self.variance}")

    def support(self, inflated: bool = True) -> tuple[float, float]:
        width = self.w_d * (self.inflation if inflated else 1.0)
        return 1.0 - width / 2.0, 1.0 + width / 2.0

    @property
    def prior_mean(self) -> complex | float:
        if self.variant == "uniform":
            return 1.0
        if self.variant == "point-mass":
            return self.d_cal
        return self.mean

    @property
    def prior_variance(self) -> float:
        if self.variant == "uniform":
            a, b = self.support()
            return (b - a) ** 2 / 12.0
        if self.variant == "point-mass":
            return 0.0
        return self.variance

    def update(self, R, var, p: int) -> GainUpdate:
        if self.variant == "uniform":
            return gain_update_uniform(self, R, var, p)
        if self.variant == "complex-normal":
            return gain_update_complex(self, R, var, p)
        return gain_update_point_mass(self, R, var)


@dataclass(slots=True)
class GainUpdate:
    d_hat: np.ndarray
    d_bar: np.ndarray
    zero_evidence: np.ndarray
    degenerate_phase: np.ndarray


def signal_update(prior: SignalPrior, X_hat, X_bar) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance of x under p_X(x) N(x; X_hat, X_bar)."""
    X_hat = np.asarray(X_hat)
    X_bar = np.asarray(X_bar, dtype=float)
    if np.any(~(X_bar > 0.0)):
        raise DomainError("signal update requires X_bar > 0")

    s2 = prior.sigma2
    field = prior.field
    with np.errstate(divide="ignore"):
        log_on = np.log(prior.rho) + log_gauss_pdf(X_hat, 0.0, X_bar + s2, field)
        log_off = np.log(1.0 - prior.rho) + log_gauss_pdf(X_hat, 0.0, X_bar, field)
    on = special.expit(log_on - log_off)

    shrink = s2 / (X_bar + s2)
    m = X_hat * shrink
    v = X_bar * shrink
    x_hat = on * m
    x_bar = on * v + on * (1.0 - on) * abs2(m)
    return x_hat, x_bar


def _moment_ratio(log_num, sign_num, log_den, sign_den) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        return sign_num * sign_den * np.exp(log_num - log_den)


def _power_moments(n: int, R: np.ndarray, var: np.ndarray, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    mean = np.empty(R.shape)
    variance = np.empty(R.shape)
    for start in range(0, R.size, GAIN_FALLBACK_CHUNK):
        part = slice(start, start + GAIN_FALLBACK_CHUNK)
        mean[part], variance[part] = power_gaussian_moments(n, R[part], var[part], a, b)
    return mean, variance


def _uniform_moments(p: int, R: np.ndarray, var: np.ndarray, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed form where its rounding error stays small, windowed quadrature elsewhere. R and var are 1-d."""
    log0, sign0, spread0 = log_weighted_gaussian_integral(p, R, var, a, b, return_spread=True)
    log1, sign1, spread1 = log_weighted_gaussian_integral(p + 1, R, var, a, b, return_spread=True)
    log2, sign2, spread2 = log_weighted_gaussian_integral(p + 2, R, var, a, b, return_spread=True)

    d_hat = _moment_ratio(log1, sign1, log0, sign0)
    second = _moment_ratio(log2, sign2, log0, sign0)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        d_bar = second - d_hat * d_hat
        # the variance loses a further factor second / d_bar to the subtraction
        amplification = np.exp(np.maximum(np.maximum(spread0, spread1), spread2)) * (1.0 + second / d_bar)
        closed = (
            np.isfinite(d_hat) & np.isfinite(second) & (sign0 > 0.0) & (d_bar > 0.0)
            & (d_hat >= a) & (d_hat <= b) & (amplification <= GAIN_CLOSED_FORM_MAX_SPREAD)
        )
    fallback = ~closed
    if fallback.any():
        d_hat[fallback], d_bar[fallback] = _power_moments(p, R[fallback], var[fallback], a, b)
    return d_hat, d_bar


def gain_update_uniform(prior: GainPrior, R, var, p: int) -> GainUpdate:
    """Posterior moments of d under |d|^P U(d; 1, w_d') N(d; R, var) with the inflated width w_d'.

    Only non-finite R or var count as zero evidence; any finite R, however far outside the support,
    yields the moments of the boundary-concentrated posterior.
    """
    if p < 1:
        raise DomainError(f"sample count must be >= 1, got {p}")
    R, var = np.broadcast_arrays(np.asarray(R, dtype=float), np.asarray(var, dtype=float))
    shape = R.shape
    R, var = R.ravel(), var.ravel()
    a, b = prior.support()

    zero = ~np.isfinite(R) | ~np.isfinite(var)
    d_hat = np.full(R.shape, float(prior.prior_mean))
    d_bar = np.full(R.shape, prior.prior_variance)
    if not zero.all():
        d_hat[~zero], d_bar[~zero] = _uniform_moments(p, R[~zero], var[~zero], a, b)

    d_hat = np.clip(d_hat, a, b)
    return GainUpdate(d_hat.reshape(shape), d_bar.reshape(shape), zero.reshape(shape), np.zeros(shape, dtype=bool))


def _radial_moment(p: int, modulus: np.ndarray, var: np.ndarray) -> np.ndarray:
    log0, sign0, spread0 = log_weighted_gaussian_integral(p, modulus, var, 0.0, math.inf, return_spread=True)
    log1, sign1, spread1 = log_weighted_gaussian_integral(p + 1, modulus, var, 0.0, math.inf, return_spread=True)
    radial = _moment_ratio(log1, sign1, log0, sign0)
    with np.errstate(over="ignore", invalid="ignore"):
        closed = (
            np.isfinite(radial) & (sign0 > 0.0) & (radial > 0.0)
            & (np.exp(np.maximum(spread0, spread1)) <= GAIN_CLOSED_FORM_MAX_SPREAD)
        )
    fallback = ~closed
    if fallback.any():
        radial[fallback] = _power_moments(p, modulus[fallback], var[fallback], 0.0, math.inf)[0]
    return radial


def gain_update_complex(prior: GainPrior, R, var, p: int) -> GainUpdate:
    """Radial moment of |d|^P N(|d|; |R|, var) on [0, inf), phase taken from R; d_bar is var."""
    if p < 1:
        raise DomainError(f"sample count must be >= 1, got {p}")
    R, var = np.broadcast_arrays(np.asarray(R, dtype=complex), np.asarray(var, dtype=float))
    shape = R.shape
    R, var = R.ravel(), var.ravel()
    modulus = np.abs(R)

    zero = ~np.isfinite(modulus) | ~np.isfinite(var)
    radial = np.zeros(R.shape)
    if not zero.all():
        radial[~zero] = _radial_moment(p, modulus[~zero], var[~zero])
    degenerate = modulus == 0.0

    phase = np.divide(R, modulus, out=np.zeros(R.shape, dtype=complex), where=~degenerate & ~zero)
    d_hat = np.where(zero | degenerate, 0.0, phase * radial)
    return GainUpdate(d_hat.reshape(shape), var.reshape(shape).copy(), zero.reshape(shape), degenerate.reshape(shape))


def gain_update_point_mass(prior: GainPrior, R, var) -> GainUpdate:
    shape = np.broadcast_shapes(np.shape(R), np.shape(var))
    d_hat = np.full(shape, prior.d_cal, dtype=np.result_type(np.asarray(R).dtype, type(prior.d_cal)))
    return GainUpdate(d_hat, np.zeros(shape), np.zeros(shape, dtype=bool), np.zeros(shape, dtype=bool))
