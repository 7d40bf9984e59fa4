"""Edge-message belief propagation for small instances.

Every (sensor, signal component, sample) edge carries its own Gaussian-projected messages, so memory
and time grow as M * N * P. Used to check the TAP loop, whose Onsager terms replace these cavities.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .channels import Channel
from .config import MAX_BP_EDGES
from .kernels import abs2, floor_variance
from .models import DomainError, IterationDiagnostics, Logger, ProblemInstance, SolveResult, SolverConfig
from .priors import SignalPrior
from .solver import damping_update, exceeds_runaway


def leave_one_out(terms: np.ndarray, axis: int) -> np.ndarray:
    """Sum along `axis` of all terms but the one at each position, from prefix and suffix sums."""
    terms = np.moveaxis(np.asarray(terms), axis, 0)
    prefix = np.zeros_like(terms)
    suffix = np.zeros_like(terms)
    np.cumsum(terms[:-1], axis=0, out=prefix[1:])
    suffix[:-1] = np.cumsum(terms[:0:-1], axis=0)[::-1]
    return np.moveaxis(prefix + suffix, 0, axis)


def _damped(new_hat, new_bar, old_hat, old_bar, beta: float, floor: float) -> tuple[np.ndarray, np.ndarray]:
    bar = floor_variance(damping_update(new_bar, old_bar, beta, "variance"), floor)
    return damping_update(new_hat, old_hat, beta, "mean", (bar, new_bar)), bar


def bp_oracle_solve(
    instance: ProblemInstance,
    prior: SignalPrior,
    channel: Channel,
    config: SolverConfig | None = None,
    logger: Logger | None = None,
) -> SolveResult:
    config = config or SolverConfig()
    logger = logger or (lambda _: None)
    F = np.asarray(instance.F)
    y = np.asarray(instance.y)
    m, n = F.shape
    p = y.shape[1]
    if m * n * p > MAX_BP_EDGES:
        raise DomainError(f"edge-message oracle limited to {MAX_BP_EDGES} edges, got {m * n * p}")
    if instance.field != prior.field:
        raise DomainError(f"{instance.field} instance cannot be solved with a {prior.field} prior")

    floor = config.variance_floor
    beta = config.beta
    dtype = complex if instance.field == "complex" else float
    F2 = abs2(F)
    F3 = F[:, :, None]
    F23 = F2[:, :, None]
    shape = (m, n, p)
    y = np.asarray(y, dtype=dtype)
    y_edges = np.broadcast_to(y[:, None, :], shape)

    # messages x_{il -> mu l}, indexed [mu, i, l]; sensor-side fields start at the readings like TAP
    x_msg_hat = np.zeros(shape, dtype=dtype)
    x_msg_bar = np.full(shape, prior.variance)
    Z_cav_hat = np.array(y_edges)
    Z_cav_bar = np.ones(shape)
    Z_hat = y.copy()
    Z_bar = np.ones((m, p))
    X_cav_hat = np.zeros(shape, dtype=dtype)
    X_cav_bar = np.ones(shape)
    x_hat = np.zeros((n, p), dtype=dtype)
    x_bar = np.full((n, p), prior.variance)
    d_hat = None
    history: list[IterationDiagnostics] = []
    converged = False
    divergence: Optional[str] = None

    for t in range(1, config.t_max + 1):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            mean_in = F3 * x_msg_hat
            var_in = F23 * x_msg_bar
            Z_cav_hat, Z_cav_bar = _damped(leave_one_out(mean_in, 1), floor_variance(leave_one_out(var_in, 1), floor),
                                           Z_cav_hat, Z_cav_bar, beta, floor)
            Z_hat_new, Z_bar_new = _damped(mean_in.sum(axis=1), floor_variance(var_in.sum(axis=1), floor),
                                           Z_hat, Z_bar, beta, floor)

            # entry l of an edge sees its cavity, the other samples of the sensor their full fields
            output = channel.posterior(
                Z_cav_hat,
                Z_cav_bar,
                y_edges,
                np.broadcast_to(Z_hat_new[:, None, :], shape),
                np.broadcast_to(Z_bar_new[:, None, :], shape),
            )
            z_cav_hat, z_cav_bar = output.z_hat, np.maximum(output.z_bar, 0.0)

            precision_terms = F23 * (Z_cav_bar - z_cav_bar) / Z_cav_bar**2
            mean_terms = F3.conj() * (z_cav_hat - Z_cav_hat) / Z_cav_bar

            X_bar_new = floor_variance(1.0 / np.maximum(leave_one_out(precision_terms, 0), floor), floor)
            X_hat_new = X_bar_new * leave_one_out(mean_terms, 0)
            if t == 1:
                X_cav_hat, X_cav_bar = X_hat_new, X_bar_new
            else:
                X_cav_hat, X_cav_bar = _damped(X_hat_new, X_bar_new, X_cav_hat, X_cav_bar, beta, floor)
            x_msg_hat, x_msg_bar = prior.update(X_cav_hat, X_cav_bar)

            X_bar = floor_variance(1.0 / np.maximum(precision_terms.sum(axis=0), floor), floor)
            x_hat_new, x_bar_new = prior.update(X_bar * mean_terms.sum(axis=0), X_bar)

        for name, values in (("x_msg_hat", x_msg_hat), ("x_msg_bar", x_msg_bar), ("x_hat", x_hat_new),
                             ("x_bar", x_bar_new)):
            if not np.all(np.isfinite(values)):
                divergence = f"iteration {t}: field {name}"
                break
        else:
            if exceeds_runaway(x_hat_new, prior.variance):
                divergence = f"iteration {t}: field x_hat"
        if divergence is not None:
            logger(f"Diverged at {divergence}")
            break

        dx = float(np.mean(abs2(x_hat_new - x_hat)))
        x_hat, x_bar = x_hat_new, x_bar_new
        Z_hat, Z_bar = Z_hat_new, Z_bar_new
        if output.d_hat is not None:
            d_hat = np.mean(output.d_hat, axis=(1, 2))
        history.append(IterationDiagnostics(t, dx, float(np.min(x_bar)), float(np.max(x_bar)),
                                            output.zero_evidence, output.degenerate_phase))
        logger(f"bp iteration {t}: dx={dx:.3e}")
        if dx < config.tol:
            converged = True
            break

    return SolveResult(
        x_hat=x_hat,
        Z_hat=Z_hat,
        x_bar=x_bar,
        Z_bar=Z_bar,
        d_hat=d_hat,
        history=history,
        converged=converged,
        iterations=len(history),
        diverged=divergence is not None,
        divergence=divergence,
    )
