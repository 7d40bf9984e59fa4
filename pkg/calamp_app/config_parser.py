from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from .channels import CalibratedChannel, Channel, FaultyChannel, GainChannel
from .config import (
    CONFIG_SCHEMA_VERSION,
    DEFAULT_ALPHA_GRID,
    DEFAULT_BETA,
    DEFAULT_BETA_GAIN,
    DEFAULT_COMPLEX_GAIN_VARIANCE,
    DEFAULT_DELTA,
    DEFAULT_EPSILON,
    DEFAULT_N_COMPLEX,
    DEFAULT_N_REAL,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_RHO_GRID,
    DEFAULT_SEEDS_PER_CELL,
    DEFAULT_T_MAX,
    DEFAULT_TOL,
    DEFAULT_W_D,
    PRIOR_INFLATION,
    VARIANCE_FLOOR,
)
from .models import ConfigError, DomainError, SolveRequest, SolverConfig, SweepConfig
from .priors import GainPrior, SignalPrior

SIGNAL_FIELDS = {"variant", "rho", "sigma2"}
GAIN_PRIOR_FIELDS = {"variant", "w_d", "inflation", "d_cal", "mean", "variance"}
CHANNEL_FIELDS = {"variant", "epsilon", "m_f", "sigma_f2", "delta", "gain_prior", "d_cal"}
SOLVER_FIELDS = {"beta", "t_max", "tol", "variance_floor", "seed", "random_init"}
SOLVE_FIELDS = {"schema", "n", "alpha", "p", "seed", "signal", "channel", "solver", "instance", "output"}
SWEEP_FIELDS = {
    "schema",
    "rho_grid",
    "alpha_grid",
    "p_list",
    "n",
    "instances_per_cell",
    "master_seed",
    "signal",
    "channel",
    "solver",
    "output_dir",
    "workers",
    "alpha_cs_cache",
}
CHANNEL_VARIANTS = ("faulty", "gain", "complex-gain", "calibrated")
SIGNAL_VARIANTS = ("real-bernoulli-gauss", "complex-bernoulli-gauss")
GAIN_VARIANTS = ("uniform", "complex-normal", "point-mass")
GAIN_CHANNELS = ("gain", "complex-gain")


def load_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{source}: invalid JSON",
            [f"Line {exc.lineno}, column {exc.colno}: {exc.msg}."],
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a JSON object", ["Line 1: expected '{'."])
    return data


def load_config_file(path: Path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config file {path}: {exc}") from exc
    return load_config_text(text, str(path))


def parse_grid(value: Any, name: str = "grid") -> tuple[tuple[float, ...], list[str]]:
    """Parse "a,b,c", "start:stop:step" (stop included) or a JSON list into a strictly increasing grid."""
    diagnostics: list[str] = []
    values: list[float] = []
    if isinstance(value, str):
        text = value.strip()
        if not text:
            return (), [f"{name}: empty grid."]
        if ":" in text and "," not in text:
            parts = text.split(":")
            if len(parts) != 3:
                return (), [f"{name}: range must be start:stop:step."]
            try:
                start, stop, step = (float(part) for part in parts)
            except ValueError:
                return (), [f"{name}: range bounds must be numbers."]
            if step <= 0:
                return (), [f"{name}: range step must be > 0."]
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [round(start + k * step, 10) for k in range(max(count, 0))]
        else:
            for index, item in enumerate(text.split(","), start=1):
                item = item.strip()
                try:
                    values.append(float(item))
                except ValueError:
                    diagnostics.append(f"{name} item {index}: not a number ({item!r}).")
    elif isinstance(value, (list, tuple)):
        for index, item in enumerate(value, start=1):
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                diagnostics.append(f"{name} item {index}: not a number ({item!r}).")
                continue
            values.append(float(item))
    else:
        return (), [f"{name}: expected a list or a string."]

    if not values and not diagnostics:
        diagnostics.append(f"{name}: empty grid.")
    for index in range(1, len(values)):
        if values[index] <= values[index - 1]:
            diagnostics.append(f"{name} item {index + 1}: grid must be strictly increasing.")
            break
    return tuple(values), diagnostics


def _check_fields(data: Any, allowed: Iterable[str], path: str, diagnostics: list[str]) -> dict[str, Any]:
    if not isinstance(data, dict):
        diagnostics.append(f"{path}: expected an object.")
        return {}
    for key in data:
        if key not in allowed:
            diagnostics.append(f"{path}.{key}: unknown field.")
    return data


def _number(data: dict, key: str, path: str, default, diagnostics: list[str], *, integer: bool = False):
    if key not in data or data[key] is None:
        return default
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        diagnostics.append(f"{path}.{key}: expected a number, got {value!r}.")
        return default
    if integer:
        if float(value) != int(value):
            diagnostics.append(f"{path}.{key}: expected an integer, got {value!r}.")
            return default
        return int(value)
    return float(value)


def _choice(data: dict, key: str, path: str, choices: tuple[str, ...], default, diagnostics: list[str]):
    value = data.get(key, default)
    if value not in choices:
        diagnostics.append(f"{path}.{key}: expected one of {', '.join(choices)}, got {value!r}.")
        return default
    return value


def _complex_value(value: Any) -> complex:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    return complex(value)


def _encode_complex(value: complex) -> float | list[float]:
    value = complex(value)
    return value.real if value.imag == 0 else [value.real, value.imag]


def signal_prior_from_dict(data: Any, path: str = "signal", rho: Optional[float] = None) -> SignalPrior:
    diagnostics: list[str] = []
    data = _check_fields(data if data is not None else {}, SIGNAL_FIELDS, path, diagnostics)
    variant = _choice(data, "variant", path, SIGNAL_VARIANTS, "real-bernoulli-gauss", diagnostics)
    rho_value = rho if rho is not None else _number(data, "rho", path, 0.2, diagnostics)
    sigma2 = _number(data, "sigma2", path, 1.0, diagnostics)
    if diagnostics:
        raise ConfigError(f"Invalid {path} block", diagnostics)
    try:
        return SignalPrior(variant=variant, rho=rho_value, sigma2=sigma2)
    except DomainError as exc:
        raise ConfigError(f"Invalid {path} block", [f"{path}: {exc}"]) from exc


def signal_prior_to_dict(prior: SignalPrior) -> dict[str, Any]:
    return {"variant": prior.variant, "rho": prior.rho, "sigma2": prior.sigma2}


def gain_prior_from_dict(data: Any, path: str = "channel.gain_prior", default_variant: str = "uniform") -> GainPrior:
    diagnostics: list[str] = []
    data = _check_fields(data if data is not None else {}, GAIN_PRIOR_FIELDS, path, diagnostics)
    variant = _choice(data, "variant", path, GAIN_VARIANTS, default_variant, diagnostics)
    w_d = _number(data, "w_d", path, DEFAULT_W_D, diagnostics)
    inflation = _number(data, "inflation", path, PRIOR_INFLATION, diagnostics)
    d_cal = _number(data, "d_cal", path, 1.0, diagnostics)
    variance = _number(data, "variance", path, DEFAULT_COMPLEX_GAIN_VARIANCE, diagnostics)
    try:
        mean = _complex_value(data.get("mean", 0.0))
    except (TypeError, ValueError):
        diagnostics.append(f"{path}.mean: expected a number or a [re, im] pair.")
        mean = 0.0
    if diagnostics:
        raise ConfigError(f"Invalid {path} block", diagnostics)
    try:
        return GainPrior(variant=variant, w_d=w_d, inflation=inflation, d_cal=d_cal, mean=mean, variance=variance)
    except DomainError as exc:
        raise ConfigError(f"Invalid {path} block", [f"{path}: {exc}"]) from exc


def gain_prior_to_dict(prior: GainPrior) -> dict[str, Any]:
    return {
        "variant": prior.variant,
        "w_d": prior.w_d,
        "inflation": prior.inflation,
        "d_cal": prior.d_cal,
        "mean": _encode_complex(prior.mean),
        "variance": prior.variance,
    }


def channel_from_dict(data: Any, signal: SignalPrior, path: str = "channel") -> Channel:
    """Build a channel; the faulty-sensor noise variance defaults to rho * sigma2 of `signal`."""
    diagnostics: list[str] = []
    data = _check_fields(data if data is not None else {}, CHANNEL_FIELDS, path, diagnostics)
    variant = _choice(data, "variant", path, CHANNEL_VARIANTS, "gain", diagnostics)
    delta = _number(data, "delta", path, DEFAULT_DELTA, diagnostics)
    if delta is not None and delta < 0:
        diagnostics.append(f"{path}.delta: must be >= 0.")
    if diagnostics:
        raise ConfigError(f"Invalid {path} block", diagnostics)

    try:
        if variant == "faulty":
            epsilon = _number(data, "epsilon", path, DEFAULT_EPSILON, diagnostics)
            m_f = _number(data, "m_f", path, 0.0, diagnostics)
            sigma_f2 = _number(data, "sigma_f2", path, signal.rho * signal.sigma2, diagnostics)
            if diagnostics:
                raise ConfigError(f"Invalid {path} block", diagnostics)
            return FaultyChannel(epsilon=epsilon, m_f=m_f, sigma_f2=sigma_f2, field=signal.field)
        if variant == "calibrated":
            raw = data.get("d_cal", 1.0)
            d_cal = np.asarray(raw, dtype=complex if signal.field == "complex" else float)
            return CalibratedChannel(d_cal=d_cal if d_cal.ndim else float(d_cal.real), delta=delta, field=signal.field)

        default_gain = "complex-normal" if variant == "complex-gain" else "uniform"
        gain_prior = gain_prior_from_dict(data.get("gain_prior"), f"{path}.gain_prior", default_gain)
        channel = GainChannel(delta=delta, gain_prior=gain_prior)
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(f"Invalid {path} block", [f"{path}: {exc}"]) from exc
    if channel.field != signal.field:
        raise ConfigError(
            f"Invalid {path} block",
            [f"{path}.gain_prior.variant: {gain_prior.variant} gains need a {channel.field} signal prior."],
        )
    return channel


def channel_to_dict(channel: Channel) -> dict[str, Any]:
    if isinstance(channel, FaultyChannel):
        return {"variant": "faulty", "epsilon": channel.epsilon, "m_f": channel.m_f, "sigma_f2": channel.sigma_f2}
    if isinstance(channel, GainChannel):
        variant = "complex-gain" if channel.field == "complex" else "gain"
        return {"variant": variant, "delta": channel.delta, "gain_prior": gain_prior_to_dict(channel.gain_prior)}
    if isinstance(channel, CalibratedChannel):
        d_cal = np.asarray(channel.d_cal)
        if np.iscomplexobj(d_cal):
            encoded: Any = [_encode_complex(value) for value in d_cal.ravel()] if d_cal.ndim else _encode_complex(d_cal)
        else:
            encoded = d_cal.tolist()
        return {"variant": "calibrated", "delta": channel.delta, "d_cal": encoded}
    raise ConfigError(f"Channel {type(channel).__name__} has no JSON form")


def default_beta(channel: dict[str, Any]) -> float:
    return DEFAULT_BETA_GAIN if channel.get("variant", "gain") in GAIN_CHANNELS else DEFAULT_BETA


def solver_config_from_dict(data: Any, channel: dict[str, Any], path: str = "solver") -> SolverConfig:
    diagnostics: list[str] = []
    data = _check_fields(data if data is not None else {}, SOLVER_FIELDS, path, diagnostics)
    beta = _number(data, "beta", path, default_beta(channel), diagnostics)
    t_max = _number(data, "t_max", path, DEFAULT_T_MAX, diagnostics, integer=True)
    tol = _number(data, "tol", path, DEFAULT_TOL, diagnostics)
    floor = _number(data, "variance_floor", path, VARIANCE_FLOOR, diagnostics)
    seed = _number(data, "seed", path, None, diagnostics, integer=True)
    random_init = data.get("random_init", False)
    if not isinstance(random_init, bool):
        diagnostics.append(f"{path}.random_init: expected true or false.")
    if diagnostics:
        raise ConfigError(f"Invalid {path} block", diagnostics)
    try:
        return SolverConfig(beta=beta, t_max=t_max, tol=tol, variance_floor=floor, seed=seed,
                            random_init=bool(random_init))
    except DomainError as exc:
        raise ConfigError(f"Invalid {path} block", [f"{path}: {exc}"]) from exc


def _check_schema(data: dict[str, Any], diagnostics: list[str]) -> None:
    schema = data.get("schema")
    if schema is None:
        diagnostics.append("schema: required field missing.")
    elif schema != CONFIG_SCHEMA_VERSION:
        diagnostics.append(f"schema: unsupported version {schema!r} (expected {CONFIG_SCHEMA_VERSION}).")


def parse_solve_config(data: dict[str, Any]) -> SolveRequest:
    diagnostics: list[str] = []
    _check_fields(data, SOLVE_FIELDS, "config", diagnostics)
    _check_schema(data, diagnostics)
    n = _number(data, "n", "config", 1000, diagnostics, integer=True)
    alpha = _number(data, "alpha", "config", None, diagnostics)
    p = _number(data, "p", "config", None, diagnostics, integer=True)
    seed = _number(data, "seed", "config", 0, diagnostics, integer=True)
    instance = data.get("instance")
    if instance is None:
        if alpha is None:
            diagnostics.append("config.alpha: required unless an instance file is given.")
        elif alpha <= 0:
            diagnostics.append("config.alpha: must be > 0.")
        if p is None:
            diagnostics.append("config.p: required unless an instance file is given.")
        elif p < 1:
            diagnostics.append("config.p: must be >= 1.")
        if n is not None and n < 1:
            diagnostics.append("config.n: must be >= 1.")
    if diagnostics:
        raise ConfigError("Invalid solve config", diagnostics)

    signal = dict(data.get("signal") or {})
    channel = dict(data.get("channel") or {})
    signal_prior = signal_prior_from_dict(signal)
    channel_from_dict(channel, signal_prior)
    return SolveRequest(
        n=n,
        alpha=alpha if alpha is not None else 0.0,
        p=p if p is not None else 0,
        seed=seed,
        signal=signal,
        channel=channel,
        solver=solver_config_from_dict(data.get("solver"), channel),
        instance_path=Path(instance) if instance else None,
        output_path=Path(data["output"]) if data.get("output") else None,
    )


def parse_sweep_config(data: dict[str, Any]) -> SweepConfig:
    diagnostics: list[str] = []
    _check_fields(data, SWEEP_FIELDS, "config", diagnostics)
    _check_schema(data, diagnostics)

    rho_grid, grid_diagnostics = parse_grid(data.get("rho_grid", list(DEFAULT_RHO_GRID)), "rho_grid")
    diagnostics.extend(grid_diagnostics)
    alpha_grid, grid_diagnostics = parse_grid(data.get("alpha_grid", list(DEFAULT_ALPHA_GRID)), "alpha_grid")
    diagnostics.extend(grid_diagnostics)
    if any(not 0.0 < rho <= 1.0 for rho in rho_grid):
        diagnostics.append("rho_grid: values must lie in (0, 1].")
    if any(alpha <= 0.0 for alpha in alpha_grid):
        diagnostics.append("alpha_grid: values must be > 0.")

    p_raw = data.get("p_list", [4])
    p_list: list[int] = []
    if isinstance(p_raw, int) and not isinstance(p_raw, bool):
        p_raw = [p_raw]
    if not isinstance(p_raw, list) or not p_raw:
        diagnostics.append("p_list: expected a non-empty list of integers.")
    else:
        for index, item in enumerate(p_raw, start=1):
            if isinstance(item, bool) or not isinstance(item, int) or item < 1:
                diagnostics.append(f"p_list item {index}: expected an integer >= 1, got {item!r}.")
            else:
                p_list.append(item)

    n = _number(data, "n", "config", None, diagnostics, integer=True)
    per_cell = _number(data, "instances_per_cell", "config", DEFAULT_SEEDS_PER_CELL, diagnostics, integer=True)
    master_seed = _number(data, "master_seed", "config", 0, diagnostics, integer=True)
    workers = _number(data, "workers", "config", None, diagnostics, integer=True)
    if per_cell is not None and per_cell < 1:
        diagnostics.append("config.instances_per_cell: must be >= 1.")
    if n is not None and n < 1:
        diagnostics.append("config.n: must be >= 1.")
    if workers is not None and workers < 1:
        diagnostics.append("config.workers: must be >= 1.")
    if diagnostics:
        raise ConfigError("Invalid sweep config", diagnostics)

    signal = dict(data.get("signal") or {})
    channel = dict(data.get("channel") or {})
    template = signal_prior_from_dict(signal, rho=rho_grid[0])
    channel_from_dict(channel, template)
    if n is None:
        n = DEFAULT_N_COMPLEX if template.field == "complex" else DEFAULT_N_REAL

    return SweepConfig(
        rho_grid=rho_grid,
        alpha_grid=alpha_grid,
        p_list=tuple(p_list),
        channel=channel,
        signal=signal,
        n=n,
        instances_per_cell=per_cell,
        master_seed=master_seed,
        solver=solver_config_from_dict(data.get("solver"), channel),
        output_dir=Path(data.get("output_dir") or DEFAULT_OUTPUT_DIR),
        workers=workers,
        alpha_cs_cache=Path(data["alpha_cs_cache"]) if data.get("alpha_cs_cache") else None,
    )


def sweep_config_to_dict(config: SweepConfig) -> dict[str, Any]:
    solver = config.solver
    return {
        "schema": CONFIG_SCHEMA_VERSION,
        "rho_grid": list(config.rho_grid),
        "alpha_grid": list(config.alpha_grid),
        "p_list": list(config.p_list),
        "n": config.n,
        "instances_per_cell": config.instances_per_cell,
        "master_seed": config.master_seed,
        "signal": config.signal,
        "channel": config.channel,
        "solver": {
            "beta": solver.beta,
            "t_max": solver.t_max,
            "tol": solver.tol,
            "variance_floor": solver.variance_floor,
            "random_init": solver.random_init,
        },
    }
