from __future__ import annotations

import math

import numpy as np

from .config import LOG10_GAP_FLOOR
from .kernels import abs2
from .models import DomainError, RecoveryScore


def _pair(x_true, x_hat) -> tuple[np.ndarray, np.ndarray]:
    x_true = np.asarray(x_true)
    x_hat = np.asarray(x_hat)
    if x_true.ndim == 1:
        x_true = x_true[:, None]
    if x_hat.ndim == 1:
        x_hat = x_hat[:, None]
    if x_true.shape != x_hat.shape:
        raise DomainError(f"shape mismatch: {x_true.shape} vs {x_hat.shape}")
    return x_true, x_hat


def mse(x_true, x_hat) -> float:
    x_true, x_hat = _pair(x_true, x_hat)
    return float(np.mean(abs2(x_hat - x_true)))


def cross_correlation(x_true, x_hat) -> RecoveryScore:
    """Mean over columns of |<x - mean x, x_hat - mean x_hat>| / (norm product).

    Columns where either side is constant score 0 and are listed in `flagged_columns`.
    """
    x_true, x_hat = _pair(x_true, x_hat)
    a = x_true - x_true.mean(axis=0, keepdims=True)
    b = x_hat - x_hat.mean(axis=0, keepdims=True)
    numerator = np.abs(np.sum(a.conj() * b, axis=0))
    norms = np.sqrt(np.sum(abs2(a), axis=0) * np.sum(abs2(b), axis=0))
    flagged = norms == 0.0
    per_column = np.where(flagged, 0.0, numerator / np.where(flagged, 1.0, norms))
    per_column = np.clip(per_column, 0.0, 1.0)
    mu = float(per_column.mean()) if per_column.size else 0.0
    return RecoveryScore(
        mu=mu,
        log10_gap=log10_gap(mu),
        per_column_mu=per_column,
        mse=mse(x_true, x_hat),
        flagged_columns=tuple(int(i) for i in np.flatnonzero(flagged)),
    )


def log10_gap(mu: float) -> float:
    return math.log10(max(1.0 - mu, LOG10_GAP_FLOOR))


def gain_mse_up_to_scale(d_true, d_hat) -> float:
    """Gain error after the best global (complex) rescaling of d_hat onto d_true."""
    d_true = np.asarray(d_true).ravel()
    d_hat = np.asarray(d_hat).ravel()
    energy = float(np.sum(abs2(d_hat)))
    if energy == 0.0:
        return float(np.mean(abs2(d_true)))
    scale = np.sum(d_hat.conj() * d_true) / energy
    return float(np.mean(abs2(scale * d_hat - d_true)))
