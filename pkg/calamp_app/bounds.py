from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

import numpy as np

from .config import (
    ALPHA_CS_BISECTION_STEPS,
    ALPHA_CS_CACHE_VERSION,
    ALPHA_CS_SUCCESS_FRACTION,
    DEFAULT_DELTA,
)
from .models import BoundCurve, DomainError, Logger, SolverConfig, SweepCell
from .worker import cell_seed, resolve_workers, run_cell

AlphaCs = Union[float, Callable[[float], float]]


def alpha_min(rho: float, p: int) -> float:
    """Counting bound rho * P / (P - 1) below which the gains cannot be identified."""
    if p < 2:
        raise DomainError("alpha_min is undefined for P < 2: a single sample cannot fix the gains")
    if not 0.0 < rho <= 1.0:
        raise DomainError(f"rho must lie in (0, 1], got {rho}")
    return rho * p / (p - 1)


def _evaluate(alpha_cs: AlphaCs, rho: float) -> float:
    return float(alpha_cs(rho)) if callable(alpha_cs) else float(alpha_cs)


def alpha_cal_faulty(alpha_cs: AlphaCs, rho: float, epsilon: float) -> float:
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"faulty fraction must lie in [0, 1), got {epsilon}")
    return _evaluate(alpha_cs, rho) / (1.0 - epsilon)


def alpha_cal_gain(alpha_cs: AlphaCs, rho: float) -> float:
    return _evaluate(alpha_cs, rho)


def interpolate_alpha_cs(points: Iterable[tuple[float, float]]) -> Callable[[float], float]:
    points = sorted(points)
    if not points:
        raise DomainError("alpha_CS curve has no points")
    rhos = np.array([rho for rho, _ in points])
    alphas = np.array([alpha for _, alpha in points])
    return lambda rho: float(np.interp(rho, rhos, alphas))


def bound_curves(
    rho_grid: Iterable[float],
    p_list: Iterable[int] = (),
    epsilon: Optional[float] = None,
    alpha_cs_points: Optional[list[tuple[float, float]]] = None,
) -> list[BoundCurve]:
    rho_grid = list(rho_grid)
    curves: list[BoundCurve] = []
    for p in p_list:
        if p < 2:
            continue
        # only rho < (P - 1) / P keeps rho < alpha_min < 1
        samples = [(rho, alpha_min(rho, p)) for rho in rho_grid if rho < (p - 1) / p]
        curves.append(BoundCurve("alpha_min", samples, {"P": p}))

    if alpha_cs_points:
        alpha_cs = interpolate_alpha_cs(alpha_cs_points)
        curves.append(BoundCurve("alpha_cs", sorted(alpha_cs_points)))
        curves.append(BoundCurve("alpha_cal_gain", [(rho, alpha_cal_gain(alpha_cs, rho)) for rho in rho_grid]))
        if epsilon is not None and epsilon > 0.0:
            curves.append(
                BoundCurve(
                    "alpha_cal_faulty",
                    [(rho, alpha_cal_faulty(alpha_cs, rho, epsilon)) for rho in rho_grid],
                    {"epsilon": epsilon},
                )
            )
    return curves


def _success_fraction(rho: float, alpha: float, rho_index: int, alpha_step: int, n: int, seeds: int,
                      master_seed: int, solver: SolverConfig) -> float:
    signal = {"variant": "real-bernoulli-gauss"}
    channel = {"variant": "calibrated", "delta": DEFAULT_DELTA, "d_cal": 1.0}
    successes = 0
    for replicate in range(seeds):
        cell = SweepCell(
            index=replicate,
            rho_index=rho_index,
            alpha_index=alpha_step,
            rho=rho,
            alpha=alpha,
            p=1,
            replicate=replicate,
            seed=cell_seed(master_seed, rho_index, alpha_step, 1, replicate),
        )
        successes += run_cell(cell, signal, channel, n, solver).success
    return successes / seeds


def bisect_alpha_cs(
    rho: float,
    n: int,
    seeds: int,
    steps: int = ALPHA_CS_BISECTION_STEPS,
    master_seed: int = 0,
    rho_index: int = 0,
    solver: SolverConfig | None = None,
) -> float:
    """Noiseless calibrated transition at rho: smallest alpha in (rho, 1] where most seeds succeed."""
    solver = solver or SolverConfig()
    lo, hi = rho, 1.0
    for step in range(steps):
        mid = 0.5 * (lo + hi)
        if _success_fraction(rho, mid, rho_index, step, n, seeds, master_seed, solver) >= ALPHA_CS_SUCCESS_FRACTION:
            hi = mid
        else:
            lo = mid
    return hi


def estimate_alpha_cs(
    rho_grid: Iterable[float],
    n: int,
    seeds: int,
    steps: int = ALPHA_CS_BISECTION_STEPS,
    master_seed: int = 0,
    workers: Optional[int] = None,
    logger: Logger | None = None,
) -> list[tuple[float, float]]:
    logger = logger or (lambda _: None)
    rho_grid = list(rho_grid)
    workers = resolve_workers(workers)
    logger(f"alpha_CS bisection: {len(rho_grid)} rho values, n={n}, {seeds} seed(s), {steps} steps.")
    jobs = [(rho, n, seeds, steps, master_seed, index) for index, rho in enumerate(rho_grid)]
    if workers == 1:
        alphas = [bisect_alpha_cs(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            alphas = list(pool.map(bisect_alpha_cs, *zip(*jobs)))
    points = list(zip(rho_grid, alphas))
    for rho, alpha in points:
        logger(f"alpha_CS({rho:.2f}) ~ {alpha:.4f}")
    return points


def save_alpha_cs_cache(path: Path, n: int, seeds: int, points: list[tuple[float, float]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": ALPHA_CS_CACHE_VERSION,
        "n": n,
        "seeds": seeds,
        "points": [[float(rho), float(alpha)] for rho, alpha in points],
    }
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path


def load_alpha_cs_cache(path: Path, n: Optional[int] = None, seeds: Optional[int] = None
                        ) -> Optional[list[tuple[float, float]]]:
    """Cached points, or None when the file is missing, unreadable, stale or for another (n, seeds)."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    if not isinstance(payload, dict) or payload.get("version") != ALPHA_CS_CACHE_VERSION:
        return None
    if n is not None and payload.get("n") != n:
        return None
    if seeds is not None and payload.get("seeds") != seeds:
        return None
    return [(float(rho), float(alpha)) for rho, alpha in payload.get("points", [])]
