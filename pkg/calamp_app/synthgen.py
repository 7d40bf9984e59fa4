from __future__ import annotations

import math

import numpy as np

from .channels import CalibratedChannel, Channel, FaultyChannel, GainChannel
from .models import DomainError, Field, ProblemInstance
from .priors import GainPrior, SignalPrior

STREAMS = ("matrix", "signal", "gains", "noise")


def component_rngs(seed: int) -> dict[str, np.random.Generator]:
    """One Philox stream per generation component, all derived from a single seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.Philox(child)) for name, child in zip(STREAMS, children)}


def _gaussian(rng: np.random.Generator, shape, variance: float, field: Field) -> np.ndarray:
    if field == "complex":
        scale = math.sqrt(variance / 2.0)
        return scale * rng.standard_normal(shape) + 1j * scale * rng.standard_normal(shape)
    return math.sqrt(variance) * rng.standard_normal(shape)


def gen_matrix(m: int, n: int, field: Field, rng: np.random.Generator) -> np.ndarray:
    if m < 1 or n < 1:
        raise DomainError(f"matrix dimensions must be >= 1, got {m}x{n}")
    return _gaussian(rng, (m, n), 1.0 / n, field)


def gen_signal(n: int, p: int, prior: SignalPrior, rng: np.random.Generator) -> np.ndarray:
    support = rng.random((n, p)) < prior.rho
    values = _gaussian(rng, (n, p), prior.sigma2, prior.field)
    return np.where(support, values, 0.0)


def draw_gains(m: int, gain_prior: GainPrior, rng: np.random.Generator) -> np.ndarray:
    """True gains from the uninflated prior; zero draws are redrawn."""
    if gain_prior.variant == "point-mass":
        return np.full(m, gain_prior.d_cal)

    def draw(count: int) -> np.ndarray:
        if gain_prior.variant == "uniform":
            lo, hi = gain_prior.support(inflated=False)
            return rng.uniform(lo, hi, count)
        return gain_prior.mean + _gaussian(rng, count, gain_prior.variance, "complex")

    gains = draw(m)
    zero = gains == 0
    while zero.any():
        gains[zero] = draw(int(zero.sum()))
        zero = gains == 0
    return gains


def gen_observation(F: np.ndarray, x_true: np.ndarray, channel: Channel,
                    rng: np.random.Generator, noise_rng: np.random.Generator | None = None):
    """(y, d_true, z) for one instance; `rng` draws the distortions, `noise_rng` the additive noise."""
    noise_rng = noise_rng or rng
    z = F @ x_true
    m, p = z.shape

    if isinstance(channel, FaultyChannel):
        faulty = rng.random(m) < channel.epsilon
        noise = channel.m_f + math.sqrt(channel.sigma_f2) * noise_rng.standard_normal((m, p))
        y = np.where(faulty[:, None], noise, z)
        return y, np.where(faulty, 0.0, 1.0), z

    field: Field = "complex" if np.iscomplexobj(z) else "real"
    if isinstance(channel, GainChannel):
        d_true = draw_gains(m, channel.gain_prior, rng)
    elif isinstance(channel, CalibratedChannel):
        d_true = np.broadcast_to(np.asarray(channel.d_cal), (m,)).copy()
    else:
        raise DomainError(f"cannot generate observations for {type(channel).__name__}")

    w = _gaussian(noise_rng, (m, p), channel.delta, field) if channel.delta > 0 else np.zeros((m, p))
    connected = d_true != 0
    safe = np.where(connected, d_true, 1.0)
    y = np.where(connected[:, None], (z + w) / safe[:, None], w)
    return y, d_true, z


def make_instance(n: int, m: int, p: int, prior: SignalPrior, channel: Channel, seed: int) -> ProblemInstance:
    from .config_parser import channel_to_dict, signal_prior_to_dict

    if p < 1:
        raise DomainError(f"sample count P must be >= 1, got {p}")
    rngs = component_rngs(seed)
    F = gen_matrix(m, n, prior.field, rngs["matrix"])
    x_true = gen_signal(n, p, prior, rngs["signal"])
    y, d_true, z = gen_observation(F, x_true, channel, rngs["gains"], rngs["noise"])
    return ProblemInstance(
        F=F,
        x_true=x_true,
        d_true=d_true,
        y=y,
        z=z,
        rho=prior.rho,
        field=prior.field,
        seed=seed,
        params={
            "n": n,
            "m": m,
            "p": p,
            "signal": signal_prior_to_dict(prior),
            "channel": channel_to_dict(channel),
        },
    )


def sensor_count(n: int, alpha: float) -> int:
    return max(1, int(round(alpha * n)))
