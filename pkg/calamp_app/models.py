from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Literal, Optional

import numpy as np

from .config import (
    DEFAULT_BETA,
    DEFAULT_T_MAX,
    DEFAULT_TOL,
    SUCCESS_LOG10_GAP,
    VARIANCE_FLOOR,
)

Field = Literal["real", "complex"]
SignalVariant = Literal["real-bernoulli-gauss", "complex-bernoulli-gauss"]
GainVariant = Literal["uniform", "complex-normal", "point-mass"]
ChannelVariant = Literal["faulty", "gain", "complex-gain", "calibrated"]
DampingKind = Literal["variance", "mean"]
BoundKind = Literal["alpha_min", "alpha_cal_faulty", "alpha_cal_gain", "alpha_cs"]

Logger = Callable[[str], None]


class CalAmpError(RuntimeError):
    pass


class DomainError(CalAmpError, ValueError):
    pass


class ConfigError(CalAmpError):
    def __init__(self, message: str, diagnostics: list[str] | None = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or []


class InstanceFormatError(CalAmpError):
    pass


@dataclass(slots=True)
class SolverConfig:
    beta: float = DEFAULT_BETA
    t_max: int = DEFAULT_T_MAX
    tol: float = DEFAULT_TOL
    variance_floor: float = VARIANCE_FLOOR
    seed: Optional[int] = None
    random_init: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.beta <= 1.0:
            raise DomainError(f"damping beta must lie in (0, 1], got {self.beta}")
        if self.t_max < 1:
            raise DomainError(f"t_max must be >= 1, got {self.t_max}")
        if self.tol <= 0.0:
            raise DomainError(f"tol must be > 0, got {self.tol}")


@dataclass(slots=True)
class SolverState:
    """Estimator fields of one TAP sweep; signal arrays are N x P, sensor arrays M x P."""

    x_hat: np.ndarray
    x_bar: np.ndarray
    X_hat: np.ndarray
    X_bar: np.ndarray
    Z_hat: np.ndarray
    Z_bar: np.ndarray
    z_hat: np.ndarray
    z_bar: np.ndarray
    t: int = 0
    d_hat: Optional[np.ndarray] = None
    d_bar: Optional[np.ndarray] = None


@dataclass(slots=True)
class IterationDiagnostics:
    t: int
    dx: float
    min_variance: float
    max_variance: float
    zero_evidence: int = 0
    degenerate_phase: int = 0


@dataclass(slots=True)
class SolveResult:
    x_hat: np.ndarray
    Z_hat: np.ndarray
    x_bar: np.ndarray
    Z_bar: np.ndarray
    d_hat: Optional[np.ndarray]
    history: list[IterationDiagnostics]
    converged: bool
    iterations: int
    diverged: bool = False
    divergence: Optional[str] = None
    state: Optional[SolverState] = None


@dataclass(slots=True)
class ProblemInstance:
    F: np.ndarray
    x_true: np.ndarray
    d_true: np.ndarray
    y: np.ndarray
    z: np.ndarray
    rho: float
    field: Field
    seed: int
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.F.shape[1])

    @property
    def m(self) -> int:
        return int(self.F.shape[0])

    @property
    def p(self) -> int:
        return int(self.y.shape[1])

    @property
    def alpha(self) -> float:
        return self.m / self.n


@dataclass(slots=True)
class RecoveryScore:
    mu: float
    log10_gap: float
    per_column_mu: np.ndarray
    mse: float
    flagged_columns: tuple[int, ...] = ()

    @property
    def success(self) -> bool:
        return self.log10_gap < SUCCESS_LOG10_GAP


@dataclass(slots=True)
class SweepCell:
    index: int
    rho_index: int
    alpha_index: int
    rho: float
    alpha: float
    p: int
    replicate: int
    seed: int


@dataclass(slots=True)
class SweepRecord:
    rho: float
    alpha: float
    p: int
    seed: int
    mu: float
    log10_gap: float
    success: bool
    iters: int
    converged: bool
    wall_ms: float
    error: Optional[str] = None


@dataclass(slots=True)
class SweepConfig:
    rho_grid: tuple[float, ...]
    alpha_grid: tuple[float, ...]
    p_list: tuple[int, ...]
    channel: dict[str, Any]
    signal: dict[str, Any]
    n: int
    instances_per_cell: int
    master_seed: int
    solver: SolverConfig
    output_dir: Path
    workers: Optional[int] = None
    alpha_cs_cache: Optional[Path] = None


@dataclass(slots=True)
class BoundCurve:
    kind: BoundKind
    samples: list[tuple[float, float]]
    params: dict[str, Any] = field(default_factory=dict)


@dataclass(slots=True)
class SolveRequest:
    n: int
    alpha: float
    p: int
    seed: int
    signal: dict[str, Any]
    channel: dict[str, Any]
    solver: SolverConfig
    instance_path: Optional[Path] = None
    output_path: Optional[Path] = None
