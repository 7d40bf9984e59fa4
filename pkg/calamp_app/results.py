from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np
import pandas as pd

from .config import APP_VERSION, CSV_HEADER, SUCCESS_LOG10_GAP
from .config_parser import sweep_config_to_dict
from .models import BoundCurve, SolveResult, SweepConfig, SweepRecord
from .worker import sort_records

RECORDS_FILENAME = "records.csv"
SUMMARY_FILENAME = "summary.json"
BOUNDS_FILENAME = "bounds.csv"


def records_frame(records: Iterable[SweepRecord]) -> pd.DataFrame:
    rows = [
        (r.rho, r.alpha, r.p, r.seed, r.mu, r.log10_gap, r.success, r.iters, r.converged, r.wall_ms)
        for r in sort_records(list(records))
    ]
    frame = pd.DataFrame(rows, columns=list(CSV_HEADER))
    return frame.astype(
        {"P": "int64", "seed": "int64", "success": "bool", "iters": "int64", "converged": "bool"}
    )


def write_records_csv(records: Iterable[SweepRecord], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records_frame(records).to_csv(path, index=False)
    return path


def load_records_csv(path: Path) -> list[SweepRecord]:
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [column for column in CSV_HEADER if column not in frame.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {', '.join(missing)}")
    return [
        SweepRecord(
            rho=float(row.rho),
            alpha=float(row.alpha),
            p=int(row.P),
            seed=int(row.seed),
            mu=float(row.mu),
            log10_gap=float(row.log10_gap),
            success=bool(row.success),
            iters=int(row.iters),
            converged=bool(row.converged),
            wall_ms=float(row.wall_ms),
        )
        for row in frame.itertuples(index=False)
    ]


def cell_summary(records: Iterable[SweepRecord]) -> list[dict[str, Any]]:
    frame = records_frame(records)
    if frame.empty:
        return []
    grouped = frame.groupby(["rho", "alpha", "P"], sort=True).agg(
        records=("mu", "size"),
        success_fraction=("success", "mean"),
        mean_mu=("mu", "mean"),
        mean_log10_gap=("log10_gap", "mean"),
        converged_fraction=("converged", "mean"),
    )
    return [
        {
            "rho": float(rho),
            "alpha": float(alpha),
            "P": int(p),
            "records": int(row.records),
            "success_fraction": float(row.success_fraction),
            "mean_mu": float(row.mean_mu),
            "mean_log10_gap": float(row.mean_log10_gap),
            "converged_fraction": float(row.converged_fraction),
        }
        for (rho, alpha, p), row in grouped.iterrows()
    ]


def monotonicity_violations(records: Iterable[SweepRecord], tolerance: float = 0.0) -> list[dict[str, Any]]:
    """Per (rho, P) neighbouring alpha cells whose success fraction drops by more than `tolerance`."""
    violations = []
    cells = cell_summary(records)
    by_row: dict[tuple[float, int], list[dict[str, Any]]] = {}
    for cell in cells:
        by_row.setdefault((cell["rho"], cell["P"]), []).append(cell)
    for (rho, p), row in sorted(by_row.items()):
        row.sort(key=lambda cell: cell["alpha"])
        for left, right in zip(row, row[1:]):
            drop = left["success_fraction"] - right["success_fraction"]
            if drop > tolerance:
                violations.append({"rho": rho, "P": p, "alpha": right["alpha"], "drop": drop})
    return violations


def curve_to_dict(curve: BoundCurve) -> dict[str, Any]:
    return {
        "kind": curve.kind,
        "params": curve.params,
        "samples": [[float(rho), float(alpha)] for rho, alpha in curve.samples],
    }


def write_bounds_csv(curves: Iterable[BoundCurve], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [
        (curve.kind, json.dumps(curve.params, sort_keys=True), rho, alpha)
        for curve in curves
        for rho, alpha in curve.samples
    ]
    pd.DataFrame(rows, columns=["kind", "params", "rho", "alpha"]).to_csv(path, index=False)
    return path


def write_sweep_summary(
    config: SweepConfig,
    records: list[SweepRecord],
    curves: Iterable[BoundCurve],
    path: Path,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    gain_prior = config.channel.get("gain_prior") or {}
    payload = {
        "app_version": APP_VERSION,
        "success_threshold_log10_gap": SUCCESS_LOG10_GAP,
        "w_d": gain_prior.get("w_d"),
        "config": sweep_config_to_dict(config),
        "cells": cell_summary(records),
        "bounds": [curve_to_dict(curve) for curve in curves],
        "failures": [
            {"rho": r.rho, "alpha": r.alpha, "P": r.p, "seed": r.seed, "error": r.error}
            for r in sort_records(records)
            if r.error
        ],
    }
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path


def _encode_array(values: Optional[np.ndarray]) -> Any:
    if values is None:
        return None
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return [[float(v.real), float(v.imag)] for v in values.ravel()]
    return [float(v) for v in values.ravel()]


def solve_summary(result: SolveResult, score, extra: Optional[dict[str, Any]] = None) -> dict[str, Any]:
    payload = {
        "app_version": APP_VERSION,
        "mu": score.mu,
        "log10_gap": score.log10_gap,
        "success": score.success,
        "success_threshold_log10_gap": SUCCESS_LOG10_GAP,
        "per_column_mu": _encode_array(score.per_column_mu),
        "flagged_columns": list(score.flagged_columns),
        "mse": score.mse,
        "converged": result.converged,
        "iterations": result.iterations,
        "diverged": result.diverged,
        "divergence": result.divergence,
        "d_hat": _encode_array(result.d_hat),
        "history": [
            {
                "t": item.t,
                "dx": item.dx,
                "min_variance": item.min_variance,
                "max_variance": item.max_variance,
                "zero_evidence": item.zero_evidence,
                "degenerate_phase": item.degenerate_phase,
            }
            for item in result.history
        ],
    }
    payload.update(extra or {})
    return payload


def write_json(payload: dict[str, Any], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path


def save_estimates(result: SolveResult, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {"x_hat": result.x_hat, "x_bar": result.x_bar, "Z_hat": result.Z_hat, "Z_bar": result.Z_bar}
    if result.d_hat is not None:
        arrays["d_hat"] = result.d_hat
    with path.open("wb") as handle:
        np.savez(handle, **arrays)
    return path
