from __future__ import annotations

from typing import Optional

import numpy as np

from .channels import Channel
from .config import RUNAWAY_FACTOR
from .kernels import abs2, floor_variance
from .models import (
    DampingKind,
    DomainError,
    IterationDiagnostics,
    Logger,
    ProblemInstance,
    SolveResult,
    SolverConfig,
    SolverState,
)
from .priors import SignalPrior

_CHECKED_FIELDS = ("Z_bar", "Z_hat", "z_hat", "z_bar", "X_bar", "X_hat", "x_hat", "x_bar")


def damping_update(new_value, old_value, beta: float, kind: DampingKind = "variance",
                   paired_variances: Optional[tuple[np.ndarray, np.ndarray]] = None) -> np.ndarray:
    """Blend one field with its previous value.

    Variances combine as 1/v = beta/v_new + ((1 - beta)/beta)/v_old. Means use beta' = beta * v/v_new
    where `paired_variances` is (damped v, undamped v_new) of the same sweep.
    """
    if beta == 1.0:
        return np.asarray(new_value)
    new_value = np.asarray(new_value)
    old_value = np.asarray(old_value)
    if kind == "variance":
        return 1.0 / (beta / new_value + (1.0 - beta) / (beta * old_value))
    if paired_variances is None:
        raise DomainError("mean damping needs the damped and undamped variances of the same field")
    damped, undamped = paired_variances
    weight = beta * np.asarray(damped) / np.asarray(undamped)
    return weight * new_value + (1.0 - weight) * old_value


class CalAmpSolver:
    """TAP-form iteration for P signals sharing one set of per-sensor distortions."""

    def __init__(
        self,
        prior: SignalPrior,
        channel: Channel,
        config: SolverConfig | None = None,
        logger: Logger | None = None,
    ) -> None:
        self.prior = prior
        self.channel = channel
        self.config = config or SolverConfig()
        self.logger = logger or (lambda _: None)

    def initialize(self, instance: ProblemInstance) -> SolverState:
        if instance.field != self.prior.field:
            raise DomainError(f"{instance.field} instance cannot be solved with a {self.prior.field} prior")
        n, p = instance.n, instance.p
        dtype = complex if instance.field == "complex" else float
        y = np.asarray(instance.y, dtype=dtype)

        x_hat = np.zeros((n, p), dtype=dtype)
        if self.config.random_init:
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.config.seed)))
            scale = np.sqrt(self.prior.variance)
            x_hat = scale * rng.standard_normal((n, p))
            if dtype is complex:
                x_hat = (x_hat + 1j * scale * rng.standard_normal((n, p))) / np.sqrt(2.0)
        return SolverState(
            x_hat=x_hat,
            x_bar=np.full((n, p), self.prior.variance),
            X_hat=np.zeros((n, p), dtype=dtype),
            X_bar=np.ones((n, p)),
            Z_hat=y.copy(),
            Z_bar=np.ones(y.shape),
            z_hat=y.copy(),
            z_bar=np.ones(y.shape),
        )

    def iterate(self, state: SolverState, F: np.ndarray, y: np.ndarray) -> tuple[SolverState, IterationDiagnostics]:
        cfg = self.config
        floor = cfg.variance_floor
        beta = cfg.beta
        F2 = abs2(F)
        F_adj = F.conj().T

        # Onsager term uses the previous sweep's channel output
        Z_bar_new = floor_variance(F2 @ state.x_bar, floor)
        Z_hat_new = F @ state.x_hat - Z_bar_new * ((state.z_hat - state.Z_hat) / state.Z_bar)
        Z_bar = floor_variance(damping_update(Z_bar_new, state.Z_bar, beta, "variance"), floor)
        Z_hat = damping_update(Z_hat_new, state.Z_hat, beta, "mean", (Z_bar, Z_bar_new))

        output = self.channel.posterior(Z_hat, Z_bar, y, state.Z_hat, state.Z_bar)
        z_hat = output.z_hat
        z_bar = np.maximum(output.z_bar, 0.0)

        precision = F2.T @ ((Z_bar - z_bar) / Z_bar**2)
        X_bar_new = floor_variance(1.0 / np.maximum(precision, floor), floor)
        X_hat_new = state.x_hat + X_bar_new * (F_adj @ ((z_hat - Z_hat) / Z_bar))
        if state.t == 0:
            X_bar, X_hat = X_bar_new, X_hat_new
        else:
            X_bar = floor_variance(damping_update(X_bar_new, state.X_bar, beta, "variance"), floor)
            X_hat = damping_update(X_hat_new, state.X_hat, beta, "mean", (X_bar, X_bar_new))

        x_hat, x_bar = self.prior.update(X_hat, X_bar)
        x_bar = np.maximum(x_bar, 0.0)

        new_state = SolverState(
            x_hat=x_hat,
            x_bar=x_bar,
            X_hat=X_hat,
            X_bar=X_bar,
            Z_hat=Z_hat,
            Z_bar=Z_bar,
            z_hat=z_hat,
            z_bar=z_bar,
            t=state.t + 1,
            d_hat=output.d_hat,
            d_bar=output.d_bar,
        )
        with np.errstate(invalid="ignore", over="ignore"):
            dx = float(np.mean(abs2(x_hat - state.x_hat)))
        diagnostics = IterationDiagnostics(
            t=new_state.t,
            dx=dx,
            min_variance=float(np.min(x_bar)) if x_bar.size else 0.0,
            max_variance=float(np.max(x_bar)) if x_bar.size else 0.0,
            zero_evidence=output.zero_evidence,
            degenerate_phase=output.degenerate_phase,
        )
        return new_state, diagnostics

    def _runaway_field(self, state: SolverState) -> Optional[str]:
        return "x_hat" if exceeds_runaway(state.x_hat, self.prior.variance) else None

    def solve(self, instance: ProblemInstance, state: SolverState | None = None) -> SolveResult:
        F = np.asarray(instance.F)
        y = np.asarray(instance.y)
        state = state or self.initialize(instance)
        history: list[IterationDiagnostics] = []
        converged = False
        divergence: Optional[str] = None

        for _ in range(self.config.t_max):
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                candidate, diagnostics = self.iterate(state, F, y)
            bad_field = _first_non_finite(candidate) or self._runaway_field(candidate)
            if bad_field is not None:
                divergence = f"iteration {candidate.t}: field {bad_field}"
                self.logger(f"Diverged at {divergence}")
                break
            state = candidate
            history.append(diagnostics)
            self.logger(
                f"iteration {diagnostics.t}: dx={diagnostics.dx:.3e} "
                f"var=[{diagnostics.min_variance:.3e}, {diagnostics.max_variance:.3e}]"
            )
            if diagnostics.dx < self.config.tol:
                converged = True
                break

        return SolveResult(
            x_hat=state.x_hat,
            Z_hat=state.Z_hat,
            x_bar=state.x_bar,
            Z_bar=state.Z_bar,
            d_hat=None if state.d_hat is None else np.mean(state.d_hat, axis=1),
            history=history,
            converged=converged,
            iterations=len(history),
            diverged=divergence is not None,
            divergence=divergence,
            state=state,
        )


def exceeds_runaway(x_hat: np.ndarray, prior_variance: float) -> bool:
    """True when the mean energy of x_hat is above RUNAWAY_FACTOR times the prior variance."""
    limit = RUNAWAY_FACTOR * prior_variance
    if limit <= 0.0 or not x_hat.size:
        return False
    with np.errstate(over="ignore"):
        return float(np.mean(abs2(x_hat))) > limit


def _first_non_finite(state: SolverState) -> Optional[str]:
    for name in _CHECKED_FIELDS:
        if not np.all(np.isfinite(getattr(state, name))):
            return name
    return None


def initialize(instance: ProblemInstance, prior: SignalPrior, channel: Channel,
               config: SolverConfig | None = None) -> SolverState:
    return CalAmpSolver(prior, channel, config).initialize(instance)


def iterate(state: SolverState, F, y, prior: SignalPrior, channel: Channel,
            config: SolverConfig | None = None) -> tuple[SolverState, IterationDiagnostics]:
    return CalAmpSolver(prior, channel, config).iterate(state, np.asarray(F), np.asarray(y))


def solve(instance: ProblemInstance, prior: SignalPrior, channel: Channel, config: SolverConfig | None = None,
          logger: Logger | None = None) -> SolveResult:
    return CalAmpSolver(prior, channel, config, logger).solve(instance)
