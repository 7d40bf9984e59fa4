from __future__ import annotations

import os
import time
from concurrent.futures import Future, ProcessPoolExecutor, as_completed
from typing import Any, Callable, Optional

import numpy as np

from .config import THREADS_ENV
from .config_parser import channel_from_dict, signal_prior_from_dict
from .metrics import cross_correlation
from .models import Logger, SolverConfig, SweepCell, SweepConfig, SweepRecord
from .solver import CalAmpSolver
from .synthgen import make_instance, sensor_count

RecordCallback = Callable[[SweepRecord], None]


def cell_seed(master_seed: int, rho_index: int, alpha_index: int, p: int, replicate: int) -> int:
    """Seed of one (cell, replicate), fixed by its grid coordinates and never by scheduling."""
    sequence = np.random.SeedSequence([master_seed, rho_index, alpha_index, p, replicate])
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def build_cells(config: SweepConfig) -> list[SweepCell]:
    cells: list[SweepCell] = []
    for rho_index, rho in enumerate(config.rho_grid):
        for alpha_index, alpha in enumerate(config.alpha_grid):
            for p in config.p_list:
                for replicate in range(config.instances_per_cell):
                    cells.append(
                        SweepCell(
                            index=len(cells),
                            rho_index=rho_index,
                            alpha_index=alpha_index,
                            rho=rho,
                            alpha=alpha,
                            p=p,
                            replicate=replicate,
                            seed=cell_seed(config.master_seed, rho_index, alpha_index, p, replicate),
                        )
                    )
    return cells


def run_cell(
    cell: SweepCell,
    signal: dict[str, Any],
    channel: dict[str, Any],
    n: int,
    solver: SolverConfig,
) -> SweepRecord:
    """Generate, solve and score one instance. Failures come back as records, never as exceptions."""
    started = time.perf_counter()
    try:
        prior = signal_prior_from_dict(signal, rho=cell.rho)
        kind = channel_from_dict(channel, prior)
        instance = make_instance(n, sensor_count(n, cell.alpha), cell.p, prior, kind, cell.seed)
        result = CalAmpSolver(prior, kind, solver).solve(instance)
        score = cross_correlation(instance.x_true, result.x_hat)
        return SweepRecord(
            rho=cell.rho,
            alpha=cell.alpha,
            p=cell.p,
            seed=cell.seed,
            mu=score.mu,
            log10_gap=score.log10_gap,
            success=score.success,
            iters=result.iterations,
            converged=result.converged,
            wall_ms=(time.perf_counter() - started) * 1000.0,
            error=result.divergence,
        )
    except Exception as exc:  # noqa: BLE001 - a failing cell must not stop the sweep
        return SweepRecord(
            rho=cell.rho,
            alpha=cell.alpha,
            p=cell.p,
            seed=cell.seed,
            mu=0.0,
            log10_gap=0.0,
            success=False,
            iters=0,
            converged=False,
            wall_ms=(time.perf_counter() - started) * 1000.0,
            error=f"{type(exc).__name__}: {exc}",
        )


def resolve_workers(requested: Optional[int] = None) -> int:
    if requested is not None:
        return max(1, requested)
    raw = os.environ.get(THREADS_ENV, "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


class SweepRunner:
    """Runs every cell of a phase-diagram sweep on a bounded process pool."""

    def __init__(
        self,
        config: SweepConfig,
        logger: Logger | None = None,
        on_record: RecordCallback | None = None,
    ) -> None:
        self.config = config
        self.workers = resolve_workers(config.workers)
        self.logger = logger or (lambda _: None)
        self.on_record = on_record or (lambda _: None)
        self._stopped = False

    def run(self) -> list[SweepRecord]:
        cells = build_cells(self.config)
        total = len(cells)
        records: list[SweepRecord] = []
        success_count = 0
        failure_count = 0
        self.logger(f"Sweep: {total} cells on {self.workers} worker(s).")

        def finish(cell: SweepCell, record: SweepRecord) -> None:
            nonlocal success_count, failure_count
            records.append(record)
            if record.success:
                success_count += 1
            else:
                failure_count += 1
            suffix = f" error={record.error}" if record.error else ""
            self.logger(
                f"[{len(records)}/{total}] rho={cell.rho:.2f} alpha={cell.alpha:.2f} P={cell.p} "
                f"seed={cell.seed} mu={record.mu:.6f} iters={record.iters}{suffix}"
            )
            self.on_record(record)

        args = (self.config.signal, self.config.channel, self.config.n, self.config.solver)
        if self.workers == 1:
            for cell in cells:
                if self._stopped:
                    self.logger("Sweep canceled.")
                    break
                finish(cell, run_cell(cell, *args))
        else:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                futures: dict[Future, SweepCell] = {pool.submit(run_cell, cell, *args): cell for cell in cells}
                for future in as_completed(futures):
                    if self._stopped:
                        self.logger("Sweep canceled.")
                        for pending in futures:
                            pending.cancel()
                        break
                    finish(futures[future], future.result())

        self.logger(f"Sweep done: {success_count} succeeded, {failure_count} failed.")
        return sort_records(records)

    def stop(self) -> None:
        self._stopped = True


def sort_records(records: list[SweepRecord]) -> list[SweepRecord]:
    return sorted(records, key=lambda record: (record.rho, record.alpha, record.p, record.seed))
