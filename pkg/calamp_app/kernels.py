"""Gaussian densities, Gaussian-convolution moments and the special functions behind the gain updates.

Every function here is pure. Array arguments broadcast against each other; the field ("real" or
"complex") is fixed per call and selects the density convention. Complex Gaussians are circularly
symmetric with total variance E|x - R|^2 = var.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .config import QUADRATURE_WIDTH, VARIANCE_FLOOR
from .models import DomainError, Field

Weight = Callable[..., float]
MeanVariance = Callable[[float], tuple[float, float]]

_TINY = 1e-300
_SERIES_EPS = 1e-16
_MAX_TERMS = 2000
_WINDOW = 45.0
_PANELS = 16

_legendre_nodes, _legendre_weights = np.polynomial.legendre.leggauss(16)
_PANEL_NODES = ((np.arange(_PANELS)[:, None] + 0.5 * (_legendre_nodes + 1.0)) / _PANELS).ravel()
_LOG_PANEL_WEIGHTS = np.tile(np.log(0.5 * _legendre_weights / _PANELS), _PANELS)


def floor_variance(var: np.ndarray | float, floor: float = VARIANCE_FLOOR) -> np.ndarray:
    return np.maximum(np.asarray(var, dtype=float), floor)


def abs2(x: np.ndarray | complex | float) -> np.ndarray:
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return x.real * x.real + x.imag * x.imag
    return x * x


def log_gauss_pdf(x, mean, var, field: Field = "real") -> np.ndarray:
    var = np.asarray(var, dtype=float)
    d2 = abs2(np.asarray(x) - np.asarray(mean))
    if field == "complex":
        return -d2 / var - np.log(np.pi * var)
    return -0.5 * d2 / var - 0.5 * np.log(2.0 * np.pi * var)


def gauss_pdf(x, mean, var, field: Field = "real") -> np.ndarray | float:
    var_arr = np.asarray(var, dtype=float)
    if np.any(var_arr <= 0.0):
        raise DomainError("Gaussian variance must be > 0")
    value = np.exp(log_gauss_pdf(x, mean, var_arr, field))
    return float(value) if np.ndim(value) == 0 else value


@dataclass(slots=True, frozen=True)
class GaussianMoments:
    f0: float
    f1: float
    f2: float

    @property
    def zero_evidence(self) -> bool:
        return not (self.f0 > 0.0 and math.isfinite(self.f0))

    @property
    def mean(self) -> float:
        return self.f1 / self.f0

    @property
    def variance(self) -> float:
        return self.f2 / self.f0 - self.mean**2


def f_moments(
    weight: Weight,
    mean: float,
    var: float,
    params: Sequence[float] = (),
    *,
    support: tuple[float, float] = (-math.inf, math.inf),
    atoms: Sequence[tuple[float, float]] = (),
) -> GaussianMoments:
    """Quadrature oracle for f_k = integral of x^k g(x, u) N(x; R, var), k = 0, 1, 2.

    `atoms` lists (location, mass) point masses of the weight, added exactly; the continuous part is
    integrated by adaptive Gauss-Kronrod over R +/- 10 sd intersected with `support`.
    """
    if var <= 0.0:
        raise DomainError("Gaussian variance must be > 0")
    sd = math.sqrt(var)
    lo = max(support[0], mean - QUADRATURE_WIDTH * sd)
    hi = min(support[1], mean + QUADRATURE_WIDTH * sd)

    moments = [0.0, 0.0, 0.0]
    for location, mass in atoms:
        density = mass * math.exp(float(log_gauss_pdf(location, mean, var)))
        for k in range(3):
            moments[k] += density * location**k

    if lo < hi:
        inner = [p for p in (mean, 0.0) if lo < p < hi]
        for k in range(3):
            value, _ = integrate.quad(
                lambda x, k=k: x**k * weight(x, *params) * math.exp(float(log_gauss_pdf(x, mean, var))),
                lo,
                hi,
                points=inner or None,
                epsabs=0.0,
                epsrel=1e-13,
                limit=400,
            )
            moments[k] += value
    return GaussianMoments(*moments)


def derivative_residual(mean_variance: MeanVariance, mean: float, var: float, step: float = 1e-5) -> float:
    """|var * d f_hat / dR - f_bar| with a centered finite difference."""
    up, _ = mean_variance(mean + step)
    down, _ = mean_variance(mean - step)
    _, f_bar = mean_variance(mean)
    return abs(var * (up - down) / (2.0 * step) - f_bar)


def check_f_derivative(
    weight: Weight,
    mean: float,
    var: float,
    params: Sequence[float] = (),
    *,
    support: tuple[float, float] = (-math.inf, math.inf),
    atoms: Sequence[tuple[float, float]] = (),
    step: float = 1e-5,
) -> float:
    def mean_variance(r: float) -> tuple[float, float]:
        moments = f_moments(weight, r, var, params, support=support, atoms=atoms)
        return moments.mean, moments.variance

    return derivative_residual(mean_variance, mean, var, step)


def lower_incomplete_gamma(s, x) -> np.ndarray | float:
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0.0):
        raise DomainError("incomplete gamma requires s > 0")
    if np.any(np.asarray(x, dtype=float) < 0.0):
        raise DomainError("incomplete gamma requires x >= 0")
    value = special.gammainc(s_arr, x) * special.gamma(s_arr)
    return float(value) if np.ndim(value) == 0 else value


def _log_gamma_series(s: np.ndarray, x: np.ndarray) -> np.ndarray:
    term = 1.0 / s
    total = term.copy()
    ap = s.copy()
    active = np.ones(s.shape, dtype=bool)
    for _ in range(_MAX_TERMS):
        ap = ap + 1.0
        term = np.where(active, term * x / ap, 0.0)
        total = total + term
        active &= np.abs(term) >= np.abs(total) * _SERIES_EPS
        if not active.any():
            break
    return -x + s * np.log(x) + np.log(total)


def _log_gamma_continued_fraction(s: np.ndarray, x: np.ndarray) -> np.ndarray:
    b = x + 1.0 - s
    c = np.full(s.shape, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(s.shape, dtype=bool)
    for i in range(1, _MAX_TERMS):
        an = -i * (i - s)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = b + an / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = np.where(active, d * c, 1.0)
        h = h * delta
        active &= np.abs(delta - 1.0) >= _SERIES_EPS
        if not active.any():
            break
    return -x + s * np.log(x) + np.log(h)


def _split_incomplete_gamma(s, x) -> tuple[np.ndarray, np.ndarray]:
    s, x = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(x, dtype=float))
    log_gamma = special.gammaln(s)
    log_lower = np.full(s.shape, -np.inf)
    log_upper = np.full(s.shape, -np.inf)

    zero = x == 0.0
    infinite = np.isinf(x)
    log_upper[zero] = log_gamma[zero]
    log_lower[infinite] = log_gamma[infinite]

    series = ~zero & ~infinite & (x < s + 1.0)
    if series.any():
        lower = _log_gamma_series(s[series], x[series])
        log_lower[series] = lower
        log_upper[series] = log_gamma[series] + np.log1p(-np.exp(lower - log_gamma[series]))

    fraction = ~zero & ~infinite & (x >= s + 1.0)
    if fraction.any():
        upper = _log_gamma_continued_fraction(s[fraction], x[fraction])
        log_upper[fraction] = upper
        log_lower[fraction] = log_gamma[fraction] + np.log1p(-np.exp(upper - log_gamma[fraction]))
    return log_lower, log_upper


def log_lower_incomplete_gamma(s, x) -> np.ndarray:
    return _split_incomplete_gamma(s, x)[0]


def log_upper_incomplete_gamma(s, x) -> np.ndarray:
    return _split_incomplete_gamma(s, x)[1]


def _log_difference(log_a: np.ndarray, log_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """log|e^a - e^b| and sign(e^a - e^b)."""
    hi = np.maximum(log_a, log_b)
    lo = np.minimum(log_a, log_b)
    with np.errstate(invalid="ignore", divide="ignore"):
        magnitude = np.where(np.isneginf(hi), -np.inf, hi + np.log1p(-np.exp(lo - hi)))
    sign = np.where(log_a >= log_b, 1.0, -1.0)
    return magnitude, sign


def log_weighted_gaussian_integral(n: int, mean, var, a: float, b: float, *, return_spread: bool = False):
    """Log-magnitude and sign of I(n, R, var, a, b) = integral over [a, b] of t^n exp(-(t - R)^2 / (2 var)).

    Evaluated as the binomial expansion in u = t - R; each term is a difference of (unregularized)
    incomplete gamma functions taken in whichever tail avoids cancellation. With `return_spread` a third
    array holds log(sum of gross term magnitudes / |I|), the factor by which rounding in the terms is
    amplified in the result.
    """
    if n < 0:
        raise DomainError("I(n, ...) requires n >= 0")
    if not a < b:
        raise DomainError("I(n, ...) requires a < b")
    mean, var = np.broadcast_arrays(np.asarray(mean, dtype=float), np.asarray(var, dtype=float))
    if np.any(var <= 0.0):
        raise DomainError("Gaussian variance must be > 0")

    u_a = a - mean
    u_b = b - mean
    with np.errstate(over="ignore"):
        x_a = u_a * u_a / (2.0 * var)
        x_b = u_b * u_b / (2.0 * var)
    log_abs_mean = np.log(np.abs(mean), where=mean != 0.0, out=np.full(mean.shape, -np.inf))
    mean_sign = np.where(mean < 0.0, -1.0, 1.0)
    above = u_a >= 0.0
    below = u_b <= 0.0

    log_terms = []
    gross_terms = []
    signs = []
    for i in range(n + 1):
        s = 0.5 * (i + 1)
        lower_a, upper_a = _split_incomplete_gamma(s, x_a)
        lower_b, upper_b = _split_incomplete_gamma(s, x_b)

        # above: both endpoints on the right of R; below: both on the left; otherwise [a, b] straddles R
        above_mag, above_sign = _log_difference(upper_a, upper_b)
        below_mag, below_sign = _log_difference(upper_b, upper_a)
        below_sign = below_sign * (1.0 if i % 2 == 0 else -1.0)
        if i % 2 == 0:
            straddle_mag, straddle_sign = np.logaddexp(lower_b, lower_a), np.ones(mean.shape)
        else:
            straddle_mag, straddle_sign = _log_difference(lower_b, lower_a)

        diff_mag = np.where(above, above_mag, np.where(below, below_mag, straddle_mag))
        diff_sign = np.where(above, above_sign, np.where(below, below_sign, straddle_sign))
        operand = np.where(above | below, np.maximum(upper_a, upper_b), np.logaddexp(lower_a, lower_b))

        log_binom = special.gammaln(n + 1) - special.gammaln(i + 1) - special.gammaln(n - i + 1)
        power = n - i
        log_power = np.zeros(mean.shape) if power == 0 else power * log_abs_mean
        scale = log_binom + log_power - math.log(2.0) + s * np.log(2.0 * var)
        log_terms.append(scale + diff_mag)
        gross_terms.append(scale + operand)
        signs.append(diff_sign * (mean_sign**power))

    stacked = np.stack(log_terms, axis=-1)
    stacked_signs = np.stack(signs, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_value, sign = special.logsumexp(stacked, axis=-1, b=stacked_signs, return_sign=True)
    log_value = np.where(np.isnan(log_value), -np.inf, log_value)
    if not return_spread:
        return log_value, sign
    with np.errstate(invalid="ignore"):
        spread = special.logsumexp(np.stack(gross_terms, axis=-1), axis=-1) - log_value
    return log_value, sign, np.where(np.isnan(spread), np.inf, spread)


def weighted_gaussian_integral(n: int, mean, var, a: float, b: float) -> np.ndarray | float:
    log_value, sign = log_weighted_gaussian_integral(n, mean, var, a, b)
    value = sign * np.exp(log_value)
    return float(value) if np.ndim(value) == 0 else value


def _power_window(n: int, mean: np.ndarray, var: np.ndarray, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Interval outside which the log density n log t - (t - R)^2 / (2 var) sits _WINDOW below its peak.

    The log density is concave on t > 0 with curvature at least 1/var, and at least n/t^2 + 1/var
    left of any point t, so tangent-plus-quadratic bounds at the clipped mode give the window.
    """
    root = np.sqrt(mean * mean + 4.0 * n * var)
    with np.errstate(divide="ignore", invalid="ignore"):
        mode = np.where(mean >= 0.0, 0.5 * (mean + root), 2.0 * n * var / (root - mean))
    mode = np.clip(np.nan_to_num(mode, nan=a), a, b)
    interior = (mode > a) & (mode < b)
    with np.errstate(divide="ignore", invalid="ignore"):
        pull = np.where(mode > 0.0, n / mode, 0.0)
        slope = np.where(interior, 0.0, pull - (mode - mean) / var)
        curvature_left = np.where(mode > 0.0, pull / mode, 0.0) + 1.0 / var
    curvature_right = 1.0 / var + (n / (b * b) if math.isfinite(b) else 0.0)

    left = np.sqrt(2.0 * _WINDOW / curvature_left)
    right = np.sqrt(2.0 * _WINDOW / curvature_right)
    with np.errstate(divide="ignore", invalid="ignore"):
        # on [mode, 2 mode] the curvature is at least 1/var + n / (2 mode)^2
        tight = np.sqrt(2.0 * _WINDOW / (1.0 / var + 0.25 * pull / mode))
    right = np.where(tight <= mode, np.minimum(right, tight), right)
    with np.errstate(divide="ignore"):
        left = np.where(slope > 0.0, np.minimum(left, _WINDOW / np.abs(slope)), left)
        right = np.where(slope < 0.0, np.minimum(right, _WINDOW / np.abs(slope)), right)
    return np.maximum(a, mode - left), np.minimum(b, mode + right)


def power_gaussian_moments(n: int, mean, var, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of t on [a, b], a >= 0, under the density proportional to t^n N(t; R, var).

    Composite Gauss-Legendre over the window where the log-concave density is not negligible; all
    weights are positive, so nothing cancels whatever the position of R relative to [a, b].
    """
    if n < 0:
        raise DomainError("power moments require n >= 0")
    if not 0.0 <= a < b:
        raise DomainError("power moments require 0 <= a < b")
    mean, var = np.broadcast_arrays(np.asarray(mean, dtype=float), np.asarray(var, dtype=float))
    if np.any(var <= 0.0):
        raise DomainError("Gaussian variance must be > 0")

    lo, hi = _power_window(n, mean, var, a, b)
    t = lo[..., None] + (hi - lo)[..., None] * _PANEL_NODES
    with np.errstate(divide="ignore"):
        log_density = n * np.log(t) - (t - mean[..., None]) ** 2 / (2.0 * var[..., None]) + _LOG_PANEL_WEIGHTS
    weight = np.exp(log_density - np.max(log_density, axis=-1, keepdims=True))
    total = weight.sum(axis=-1)
    first = (weight * t).sum(axis=-1) / total
    second = (weight * (t - first[..., None]) ** 2).sum(axis=-1) / total
    return first, second
