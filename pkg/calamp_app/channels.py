"""Output channels: posterior moments of z for one sensor given the P samples it recorded.

Arrays carry the P samples on the last axis and sensors on the first. For entry l the coupled
quantities use the current (Z_hat, Z_bar) at l and the previous-iteration values at every m != l;
passing no previous arrays means "use the current ones", which is the plain row convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import numpy as np
from scipy import integrate, special

from .config import NOISE_FLOOR, VARIANCE_FLOOR
from .kernels import abs2, f_moments, floor_variance, log_gauss_pdf
from .models import DomainError, Field
from .priors import GainPrior

ZMoments = Callable[[float, float, float, float], tuple[float, float, float]]
Likelihood = Callable[[float, float, float], float]


@dataclass(slots=True)
class ChannelOutput:
    z_hat: np.ndarray
    z_bar: np.ndarray
    d_hat: Optional[np.ndarray] = None
    d_bar: Optional[np.ndarray] = None
    zero_evidence: int = 0
    degenerate_phase: int = 0


class Channel(Protocol):
    field: Field

    def posterior(self, Z_hat, Z_bar, y, Z_hat_prev=None, Z_bar_prev=None) -> ChannelOutput: ...


def _coupled(current: np.ndarray, previous: np.ndarray) -> np.ndarray:
    """Sum over samples with entry l taken from `current` and every other entry from `previous`."""
    return previous.sum(axis=-1, keepdims=True) - previous + current


def _previous(Z_hat, Z_bar, Z_hat_prev, Z_bar_prev, floor: float) -> tuple[np.ndarray, np.ndarray]:
    if Z_hat_prev is None:
        Z_hat_prev = Z_hat
    if Z_bar_prev is None:
        Z_bar_prev = Z_bar
    return np.asarray(Z_hat_prev), floor_variance(Z_bar_prev, floor)


def _per_sensor(values, ndim: int) -> np.ndarray:
    values = np.asarray(values)
    if values.ndim == 0:
        return values
    return values.reshape((-1,) + (1,) * (ndim - 1))


@dataclass(slots=True, frozen=True)
class FaultyChannel:
    """A fraction epsilon of sensors (d = 0) records N(m_f, sigma_f2) noise; the others record z exactly."""

    epsilon: float
    m_f: float = 0.0
    sigma_f2: float = 0.2
    variance_floor: float = VARIANCE_FLOOR
    field: Field = "real"

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon <= 1.0:
            raise DomainError(f"faulty fraction must lie in [0, 1], got {self.epsilon}")
        if self.sigma_f2 <= 0.0:
            raise DomainError(f"faulty-sensor variance must be > 0, got {self.sigma_f2}")
        if self.field != "real":
            raise DomainError("the faulty-sensor channel is defined for real signals only")

    def posterior(self, Z_hat, Z_bar, y, Z_hat_prev=None, Z_bar_prev=None) -> ChannelOutput:
        return faulty_moments(self, Z_hat, Z_bar, y, Z_hat_prev, Z_bar_prev)


@dataclass(slots=True, frozen=True)
class GainChannel:
    """y = (z + w) / d with w ~ N(0, delta) and an unknown per-sensor gain d ~ gain_prior."""

    delta: float
    gain_prior: GainPrior = GainPrior()
    variance_floor: float = VARIANCE_FLOOR

    @property
    def field(self) -> Field:
        return "complex" if self.gain_prior.variant == "complex-normal" else "real"

    def posterior(self, Z_hat, Z_bar, y, Z_hat_prev=None, Z_bar_prev=None) -> ChannelOutput:
        if self.field == "complex":
            return complex_gain_moments(self.delta, self.gain_prior, Z_hat, Z_bar, y, Z_hat_prev, Z_bar_prev,
                                        floor=self.variance_floor)
        return real_gain_moments(self.delta, self.gain_prior, Z_hat, Z_bar, y, Z_hat_prev, Z_bar_prev,
                                 floor=self.variance_floor)


@dataclass(slots=True, frozen=True)
class CalibratedChannel:
    """Known per-sensor gains d_cal; a gain of 0 marks a disconnected sensor that carries no information."""

    d_cal: np.ndarray | float = 1.0
    delta: float = 0.0
    field: Field = "real"
    variance_floor: float = VARIANCE_FLOOR

    def posterior(self, Z_hat, Z_bar, y, Z_hat_prev=None, Z_bar_prev=None) -> ChannelOutput:
        Z_hat = np.asarray(Z_hat)
        Z_bar = floor_variance(Z_bar, self.variance_floor)
        y = np.asarray(y)
        delta = max(self.delta, NOISE_FLOOR)
        d = _per_sensor(self.d_cal, Z_hat.ndim)
        z_hat, z_bar = _known_gain_moments(delta, Z_hat, Z_bar, y, d, 0.0)
        disconnected = np.broadcast_to(d == 0, z_hat.shape)
        z_hat = np.where(disconnected, Z_hat, z_hat)
        z_bar = np.where(disconnected, Z_bar, z_bar)
        return ChannelOutput(z_hat, z_bar)


def _known_gain_moments(delta, Z_hat, Z_bar, y, d_hat, d_bar) -> tuple[np.ndarray, np.ndarray]:
    total = delta + Z_bar
    z_hat = (delta * Z_hat + Z_bar * d_hat * y) / total
    z_bar = delta * Z_bar / total + (Z_bar / total) ** 2 * abs2(y) * d_bar
    return z_hat, z_bar


def faulty_moments(channel: FaultyChannel, Z_hat, Z_bar, y, Z_hat_prev=None, Z_bar_prev=None) -> ChannelOutput:
    Z_hat = np.asarray(Z_hat, dtype=float)
    Z_bar = floor_variance(Z_bar, channel.variance_floor)
    y = np.asarray(y, dtype=float)
    Z_hat_prev, Z_bar_prev = _previous(Z_hat, Z_bar, Z_hat_prev, Z_bar_prev, channel.variance_floor)

    log_pi_f = log_gauss_pdf(y, channel.m_f, channel.sigma_f2).sum(axis=-1, keepdims=True)
    log_pi_z = _coupled(log_gauss_pdf(y, Z_hat, Z_bar), log_gauss_pdf(y, Z_hat_prev, Z_bar_prev))
    with np.errstate(divide="ignore", invalid="ignore"):
        logit = (
            math.log(channel.epsilon) if channel.epsilon > 0 else -math.inf
        ) - (math.log1p(-channel.epsilon) if channel.epsilon < 1 else -math.inf) + log_pi_f - log_pi_z
    faulty = special.expit(logit)

    z_hat = faulty * Z_hat + (1.0 - faulty) * y
    z_bar = faulty * Z_bar + faulty * (1.0 - faulty) * (Z_hat - y) ** 2
    zero = ~np.isfinite(z_hat) | ~np.isfinite(z_bar)
    z_hat = np.where(zero, Z_hat, z_hat)
    z_bar = np.where(zero, Z_bar, z_bar)
    return ChannelOutput(z_hat, z_bar, d_hat=1.0 - faulty, zero_evidence=int(zero.sum()))


def _gain_moments(delta, gain_prior: GainPrior, Z_hat, Z_bar, y, Z_hat_prev, Z_bar_prev, *, dtype, floor):
    Z_hat = np.asarray(Z_hat, dtype=dtype)
    Z_bar = floor_variance(Z_bar, floor)
    y = np.asarray(y, dtype=dtype)
    Z_hat_prev, Z_bar_prev = _previous(Z_hat, Z_bar, Z_hat_prev, Z_bar_prev, floor)
    delta = max(delta, NOISE_FLOOR)
    p = y.shape[-1]

    y2 = abs2(y)
    precision = _coupled(y2 / (delta + Z_bar), y2 / (delta + Z_bar_prev))
    weighted = _coupled(Z_hat * np.conj(y) / (delta + Z_bar), Z_hat_prev * np.conj(y) / (delta + Z_bar_prev))
    informative = precision > 0.0
    D_bar = np.where(informative, 1.0 / np.where(informative, precision, 1.0), 1.0)
    D_hat = np.where(informative, D_bar * weighted, 0.0)

    update = gain_prior.update(D_hat, D_bar, p)
    d_hat = np.where(informative, update.d_hat, gain_prior.prior_mean)
    d_bar = np.where(informative, update.d_bar, gain_prior.prior_variance)
    zero = update.zero_evidence | ~informative

    z_hat, z_bar = _known_gain_moments(delta, Z_hat, Z_bar, y, d_hat, d_bar)
    return ChannelOutput(
        z_hat,
        z_bar,
        d_hat=d_hat,
        d_bar=d_bar,
        zero_evidence=int(zero.sum()),
        degenerate_phase=int((update.degenerate_phase & informative).sum()),
    )


def real_gain_moments(delta, gain_prior, Z_hat, Z_bar, y, Z_hat_prev=None, Z_bar_prev=None, *,
                      floor: float = VARIANCE_FLOOR) -> ChannelOutput:
    return _gain_moments(delta, gain_prior, Z_hat, Z_bar, y, Z_hat_prev, Z_bar_prev, dtype=float, floor=floor)


def complex_gain_moments(delta, gain_prior, Z_hat, Z_bar, y, Z_hat_prev=None, Z_bar_prev=None, *,
                         floor: float = VARIANCE_FLOOR) -> ChannelOutput:
    return _gain_moments(delta, gain_prior, Z_hat, Z_bar, y, Z_hat_prev, Z_bar_prev, dtype=complex, floor=floor)


def gain_z_moments(delta: float) -> ZMoments:
    """Closed-form f_k^Z(Z_hat, Z_bar, y, d) of the noisy-gain likelihood |d| N(z; d y, delta)."""
    delta = max(delta, NOISE_FLOOR)

    def moments(Z_hat: float, Z_bar: float, y: float, d: float) -> tuple[float, float, float]:
        f0 = abs(d) * math.exp(float(log_gauss_pdf(d * y, Z_hat, Z_bar + delta)))
        mean = (delta * Z_hat + Z_bar * d * y) / (delta + Z_bar)
        var = delta * Z_bar / (delta + Z_bar)
        return f0, f0 * mean, f0 * (var + mean * mean)

    return moments


def z_moments_by_quadrature(likelihood: Likelihood) -> ZMoments:
    """f_k^Z for a user likelihood p(y | z, d), integrating over z numerically."""

    def moments(Z_hat: float, Z_bar: float, y: float, d: float) -> tuple[float, float, float]:
        result = f_moments(lambda z: likelihood(y, z, d), Z_hat, Z_bar)
        return result.f0, result.f1, result.f2

    return moments


@dataclass(slots=True, frozen=True)
class QuadratureChannel:
    """Generic channel evaluating g_k by quadrature over a real distortion parameter d.

    `z_moments(Z_hat, Z_bar, y, d)` returns the three f_k^Z for one sample. The prior on d is a
    density on `support`, a list of point masses `atoms`, or both.
    """

    z_moments: ZMoments
    gain_density: Optional[Callable[[float], float]] = None
    support: tuple[float, float] = (0.0, 0.0)
    atoms: Sequence[tuple[float, float]] = ()
    grid_points: int = 2001
    field: Field = "real"

    def row_moments(self, Z_hat_row, Z_bar_row, y_row) -> tuple[float, float]:
        Z_hat_row = np.asarray(Z_hat_row, dtype=float)
        Z_bar_row = np.asarray(Z_bar_row, dtype=float)
        y_row = np.asarray(y_row, dtype=float)

        def log_terms(d: float) -> tuple[float, float, float, float]:
            f0, f1, f2 = self.z_moments(Z_hat_row[0], Z_bar_row[0], y_row[0], d)
            log_rest = 0.0
            for m in range(1, len(y_row)):
                g0 = self.z_moments(Z_hat_row[m], Z_bar_row[m], y_row[m], d)[0]
                log_rest += math.log(g0) if g0 > 0.0 else -math.inf
            return f0, f1, f2, log_rest

        def log_mass(d: float, weight: float) -> float:
            f0, _, _, rest = log_terms(d)
            return rest + math.log(f0 * weight) if f0 * weight > 0.0 else -math.inf

        continuous = self.gain_density is not None and self.support[0] < self.support[1]
        candidates = [log_mass(location, mass) for location, mass in self.atoms]
        if continuous:
            grid = np.linspace(self.support[0], self.support[1], self.grid_points)
            logs = [log_mass(float(d), self.gain_density(float(d))) for d in grid]
            peak = int(np.argmax(logs))
            candidates.append(logs[peak])
        finite = [value for value in candidates if math.isfinite(value)]
        shift = max(finite) if finite else 0.0

        g = np.zeros(3)

        for location, mass in self.atoms:
            f0, f1, f2, rest = log_terms(location)
            scale = mass * math.exp(rest - shift) if math.isfinite(rest) else 0.0
            g += scale * np.array([f0, f1, f2])

        if continuous:
            hint = [float(grid[peak])] if self.support[0] < grid[peak] < self.support[1] else None
            for k in range(3):
                value, _ = integrate.quad(
                    lambda d, k=k: self._integrand(log_terms, d, k, shift),
                    self.support[0],
                    self.support[1],
                    points=hint,
                    epsabs=0.0,
                    epsrel=1e-12,
                    limit=400,
                )
                g[k] += value

        if not g[0] > 0.0:
            return float(Z_hat_row[0]), float(Z_bar_row[0])
        z_hat = g[1] / g[0]
        return float(z_hat), float(max(g[2] / g[0] - z_hat * z_hat, 0.0))

    def _integrand(self, log_terms, d: float, k: int, shift: float) -> float:
        terms = log_terms(d)
        if not math.isfinite(terms[3]):
            return 0.0
        return self.gain_density(d) * terms[k] * math.exp(terms[3] - shift)

    def posterior(self, Z_hat, Z_bar, y, Z_hat_prev=None, Z_bar_prev=None) -> ChannelOutput:
        Z_hat = np.asarray(Z_hat, dtype=float)
        Z_bar = floor_variance(Z_bar)
        y = np.asarray(y, dtype=float)
        Z_hat_prev, Z_bar_prev = _previous(Z_hat, Z_bar, Z_hat_prev, Z_bar_prev, VARIANCE_FLOOR)
        z_hat = np.empty_like(Z_hat)
        z_bar = np.empty_like(Z_bar)
        p = y.shape[-1]
        for index in np.ndindex(Z_hat.shape[:-1]):
            for l in range(p):
                order = [l] + [m for m in range(p) if m != l]
                row_hat = Z_hat_prev[index][order].copy()
                row_bar = Z_bar_prev[index][order].copy()
                row_hat[0] = Z_hat[index][l]
                row_bar[0] = Z_bar[index][l]
                z_hat[index + (l,)], z_bar[index + (l,)] = self.row_moments(row_hat, row_bar, y[index][order])
        return ChannelOutput(z_hat, z_bar)


def channel_moments(channel: Channel, Z_hat_row, Z_bar_row, y_row) -> tuple[complex | float, float]:
    """(z_hat, z_bar) for the first entry of one sensor row."""
    if isinstance(channel, QuadratureChannel):
        return channel.row_moments(Z_hat_row, Z_bar_row, y_row)
    output = channel.posterior(np.asarray(Z_hat_row)[None, :], np.asarray(Z_bar_row)[None, :],
                               np.asarray(y_row)[None, :])
    return output.z_hat[0, 0].item(), float(output.z_bar[0, 0])


def gamp_gout(z_hat, Z_hat, z_bar, Z_bar) -> tuple[np.ndarray, np.ndarray]:
    Z_bar = np.asarray(Z_bar, dtype=float)
    g_out = (np.asarray(z_hat) - np.asarray(Z_hat)) / Z_bar
    g_out_prime = (np.asarray(z_bar) - Z_bar) / Z_bar**2
    return g_out, g_out_prime


def gamp_gout_inverse(g_out, g_out_prime, Z_hat, Z_bar) -> tuple[np.ndarray, np.ndarray]:
    Z_bar = np.asarray(Z_bar, dtype=float)
    return np.asarray(Z_hat) + Z_bar * np.asarray(g_out), Z_bar + Z_bar**2 * np.asarray(g_out_prime)
