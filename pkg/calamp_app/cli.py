from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from .bounds import bound_curves, estimate_alpha_cs, load_alpha_cs_cache, save_alpha_cs_cache
from .channels import GainChannel
from .config import (
    ALPHA_CS_BISECTION_STEPS,
    ALPHA_CS_FILENAME,
    APP_NAME,
    APP_VERSION,
    CONFIG_SCHEMA_VERSION,
    DEFAULT_N_COMPLEX,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_RHO_GRID,
    DEFAULT_SEEDS_PER_CELL,
)
from .config_parser import (
    channel_from_dict,
    load_config_file,
    parse_grid,
    parse_solve_config,
    parse_sweep_config,
    signal_prior_from_dict,
)
from .instance_io import dump_instance, load_instance
from .metrics import cross_correlation, gain_mse_up_to_scale
from .models import CalAmpError, ConfigError, DomainError, InstanceFormatError
from .results import (
    BOUNDS_FILENAME,
    RECORDS_FILENAME,
    SUMMARY_FILENAME,
    save_estimates,
    solve_summary,
    write_bounds_csv,
    write_json,
    write_records_csv,
    write_sweep_summary,
)
from .selfcheck import SUITES, run_selfcheck
from .solver import CalAmpSolver
from .synthgen import make_instance, sensor_count
from .worker import SweepRunner

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
CHANNEL_CHOICES = ("faulty", "gain", "complex-gain", "calibrated")

log = logging.getLogger("calamp")


def _add_problem_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file (flags override its values)")
    parser.add_argument("--n", type=int, help="signal dimension N")
    parser.add_argument("--alpha", type=float, help="measurement rate M/N")
    parser.add_argument("--rho", type=float, help="signal density")
    parser.add_argument("--p", type=int, help="number of signal samples P")
    parser.add_argument("--seed", type=int, help="instance seed")
    parser.add_argument("--channel", choices=CHANNEL_CHOICES, help="output channel")
    parser.add_argument("--wd", type=float, help="uniform gain prior width w_d")
    parser.add_argument("--epsilon", type=float, help="faulty-sensor fraction")
    parser.add_argument("--delta", type=float, help="additive noise variance")


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--beta", type=float, help="damping coefficient in (0, 1]")
    parser.add_argument("--tmax", type=int, help="maximum number of iterations")
    parser.add_argument("--tol", type=float, help="stop when mean |dx|^2 falls below this")
    parser.add_argument("--random-init", action="store_true", help="draw the initial x_hat from the prior")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="calamp", description=f"{APP_NAME} blind sensor calibration")
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug output, per-iteration lines")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="generate (or load) one instance and solve it")
    _add_problem_flags(solve)
    _add_solver_flags(solve)
    solve.add_argument("--instance", type=Path, help="solve a dumped instance instead of generating one")
    solve.add_argument("--output", type=Path, help="result JSON path")
    solve.add_argument("--save-estimates", type=Path, help="write x_hat, x_bar, Z_hat, Z_bar, d_hat as .npz")

    sweep = commands.add_parser("phase-diagram", help="run a (rho, alpha, P) sweep")
    sweep.add_argument("--config", type=Path, help="JSON sweep config (flags override its values)")
    sweep.add_argument("--rho-grid", help="'0.1,0.2' or 'start:stop:step'")
    sweep.add_argument("--alpha-grid", help="'0.1,0.2' or 'start:stop:step'")
    sweep.add_argument("--p", type=int, nargs="+", help="sample counts P")
    sweep.add_argument("--n", type=int, help="signal dimension N")
    sweep.add_argument("--seeds-per-cell", type=int, help="instances per grid cell")
    sweep.add_argument("--master-seed", type=int, help="master seed for per-cell seeds")
    sweep.add_argument("--channel", choices=CHANNEL_CHOICES, help="output channel")
    sweep.add_argument("--wd", type=float, help="uniform gain prior width w_d")
    sweep.add_argument("--epsilon", type=float, help="faulty-sensor fraction")
    sweep.add_argument("--delta", type=float, help="additive noise variance")
    sweep.add_argument("--workers", type=int, help="worker processes (default: $CALAMP_THREADS or CPU count)")
    sweep.add_argument("--output-dir", type=Path, help="directory for records.csv, summary.json, bounds.csv")
    sweep.add_argument("--alpha-cs-cache", type=Path, help="alpha_CS cache used for the reference curves")
    _add_solver_flags(sweep)

    check = commands.add_parser("selfcheck", help="run the oracle suites")
    check.add_argument("--samples", type=int, default=50, help="fuzzed cases per suite")
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--suite", action="append", choices=sorted(SUITES), help="run only this suite")

    gen = commands.add_parser("gen", help="dump a reproducible instance")
    _add_problem_flags(gen)
    gen.add_argument("--output", type=Path, required=True, help="instance file to write")

    alpha_cs = commands.add_parser("alpha-cs", help="estimate the calibrated transition alpha_CS(rho)")
    alpha_cs.add_argument("--rho-grid", default=",".join(str(rho) for rho in DEFAULT_RHO_GRID))
    alpha_cs.add_argument("--n", type=int, default=DEFAULT_N_COMPLEX)
    alpha_cs.add_argument("--seeds", type=int, default=DEFAULT_SEEDS_PER_CELL)
    alpha_cs.add_argument("--steps", type=int, default=ALPHA_CS_BISECTION_STEPS)
    alpha_cs.add_argument("--master-seed", type=int, default=0)
    alpha_cs.add_argument("--workers", type=int)
    alpha_cs.add_argument("--output", type=Path, default=DEFAULT_OUTPUT_DIR / ALPHA_CS_FILENAME)
    alpha_cs.add_argument("--csv", type=Path, help="also write the curve as CSV")
    alpha_cs.add_argument("--force", action="store_true", help="recompute even when the cache matches")
    return parser


def _base_config(path: Optional[Path]) -> dict[str, Any]:
    return load_config_file(path) if path else {"schema": CONFIG_SCHEMA_VERSION}


def _set(data: dict[str, Any], key: str, value: Any) -> None:
    if value is not None:
        data[key] = value


def _merged(base: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """`overrides` on top of `base`, nested tables merged key by key."""
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            value = _merged(merged[key], value)
        merged[key] = value
    return merged


def _apply_problem_overrides(data: dict[str, Any], args: argparse.Namespace) -> None:
    signal = dict(data.get("signal") or {})
    channel = dict(data.get("channel") or {})
    _set(signal, "rho", getattr(args, "rho", None))
    if args.channel:
        channel["variant"] = args.channel
        if args.channel == "complex-gain":
            signal.setdefault("variant", "complex-bernoulli-gauss")
    _set(channel, "epsilon", args.epsilon)
    _set(channel, "delta", args.delta)
    if args.wd is not None:
        gain_prior = dict(channel.get("gain_prior") or {})
        gain_prior["w_d"] = args.wd
        channel["gain_prior"] = gain_prior
    if signal:
        data["signal"] = signal
    if channel:
        data["channel"] = channel


def _apply_solver_overrides(data: dict[str, Any], args: argparse.Namespace) -> None:
    solver = dict(data.get("solver") or {})
    _set(solver, "beta", args.beta)
    _set(solver, "t_max", args.tmax)
    _set(solver, "tol", args.tol)
    if args.random_init:
        solver["random_init"] = True
    if solver:
        data["solver"] = solver


def command_solve(args: argparse.Namespace) -> int:
    data = _base_config(args.config)
    for key in ("n", "alpha", "p", "seed"):
        _set(data, key, getattr(args, key))
    _apply_problem_overrides(data, args)
    _apply_solver_overrides(data, args)
    if args.instance:
        data["instance"] = str(args.instance)
    if args.output:
        data["output"] = str(args.output)
    request = parse_solve_config(data)

    if request.instance_path:
        instance = load_instance(request.instance_path)
        signal = _merged(instance.params.get("signal", {}), request.signal)
        channel_data = _merged(instance.params.get("channel", {}), request.channel)
        signal.setdefault("rho", instance.rho)
        prior = signal_prior_from_dict(signal)
        channel = channel_from_dict(channel_data, prior)
        log.info("Loaded instance %s (N=%d, M=%d, P=%d)", request.instance_path, instance.n, instance.m, instance.p)
    else:
        prior = signal_prior_from_dict(request.signal)
        channel = channel_from_dict(request.channel, prior)
        instance = make_instance(request.n, sensor_count(request.n, request.alpha), request.p, prior, channel,
                                 request.seed)
        log.info("Generated instance N=%d, M=%d, P=%d, seed=%d", instance.n, instance.m, instance.p, instance.seed)

    result = CalAmpSolver(prior, channel, request.solver, logger=log.debug).solve(instance)
    score = cross_correlation(instance.x_true, result.x_hat)
    extra: dict[str, Any] = {
        "n": instance.n,
        "m": instance.m,
        "p": instance.p,
        "alpha": instance.alpha,
        "seed": instance.seed,
        "instance_params": instance.params,
    }
    if isinstance(channel, GainChannel) and result.d_hat is not None:
        extra["d_mse_up_to_scale"] = gain_mse_up_to_scale(instance.d_true, result.d_hat)

    output = request.output_path or DEFAULT_OUTPUT_DIR / f"solve_seed{instance.seed}.json"
    write_json(solve_summary(result, score, extra), output)
    if args.save_estimates:
        save_estimates(result, args.save_estimates)
    if result.diverged:
        log.warning("Solver diverged (%s); best finite state reported.", result.divergence)
    log.info(
        "mu=%.10f log10(1-mu)=%.2f success=%s converged=%s iterations=%d -> %s",
        score.mu, score.log10_gap, score.success, result.converged, result.iterations, output,
    )
    return EXIT_OK


def command_phase_diagram(args: argparse.Namespace) -> int:
    data = _base_config(args.config)
    _set(data, "rho_grid", args.rho_grid)
    _set(data, "alpha_grid", args.alpha_grid)
    _set(data, "p_list", args.p)
    _set(data, "n", args.n)
    _set(data, "instances_per_cell", args.seeds_per_cell)
    _set(data, "master_seed", args.master_seed)
    _set(data, "workers", args.workers)
    if args.output_dir:
        data["output_dir"] = str(args.output_dir)
    if args.alpha_cs_cache:
        data["alpha_cs_cache"] = str(args.alpha_cs_cache)
    _apply_problem_overrides(data, args)
    _apply_solver_overrides(data, args)
    config = parse_sweep_config(data)

    records = SweepRunner(config, logger=log.info).run()

    points = load_alpha_cs_cache(config.alpha_cs_cache) if config.alpha_cs_cache else None
    if config.alpha_cs_cache and points is None:
        log.warning("alpha_CS cache %s missing or stale; alpha_CS curves omitted.", config.alpha_cs_cache)
    epsilon = None
    if config.channel.get("variant") == "faulty":
        epsilon = float(config.channel.get("epsilon", 0.2))
    curves = bound_curves(config.rho_grid, config.p_list, epsilon, points)

    out = config.output_dir
    write_records_csv(records, out / RECORDS_FILENAME)
    write_bounds_csv(curves, out / BOUNDS_FILENAME)
    write_sweep_summary(config, records, curves, out / SUMMARY_FILENAME)
    log.info("Wrote %d records to %s", len(records), out)
    return EXIT_OK


def command_selfcheck(args: argparse.Namespace) -> int:
    results = run_selfcheck(samples=args.samples, seed=args.seed, suites=args.suite, logger=log.debug)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status} {result.name}: {result.cases} cases, max residual {result.max_residual:.3e} "
              f"(tolerance {result.tolerance:.0e})")
        for failure in result.failures[:5]:
            print(f"    {failure}")
    return EXIT_OK if all(result.passed for result in results) else EXIT_FAILURE


def command_gen(args: argparse.Namespace) -> int:
    data = _base_config(args.config)
    for key in ("n", "alpha", "p", "seed"):
        _set(data, key, getattr(args, key))
    _apply_problem_overrides(data, args)
    request = parse_solve_config(data)
    prior = signal_prior_from_dict(request.signal)
    channel = channel_from_dict(request.channel, prior)
    instance = make_instance(request.n, sensor_count(request.n, request.alpha), request.p, prior, channel,
                             request.seed)
    dump_instance(instance, args.output)
    log.info("Wrote instance N=%d, M=%d, P=%d, seed=%d to %s", instance.n, instance.m, instance.p,
             instance.seed, args.output)
    return EXIT_OK


def command_alpha_cs(args: argparse.Namespace) -> int:
    rho_grid, diagnostics = parse_grid(args.rho_grid, "rho_grid")
    if diagnostics:
        raise ConfigError("Invalid rho grid", diagnostics)
    if args.n < 1 or args.seeds < 1 or args.steps < 1:
        raise ConfigError("--n, --seeds and --steps must all be >= 1")
    points = None if args.force else load_alpha_cs_cache(args.output, args.n, args.seeds)
    if points is not None and [rho for rho, _ in points] == list(rho_grid):
        log.info("Reusing alpha_CS cache %s", args.output)
    else:
        points = estimate_alpha_cs(rho_grid, args.n, args.seeds, args.steps, args.master_seed, args.workers,
                                   logger=log.info)
        save_alpha_cs_cache(args.output, args.n, args.seeds, points)
        log.info("Wrote alpha_CS cache %s", args.output)
    if args.csv:
        write_bounds_csv(bound_curves(rho_grid, (), None, points)[:1], args.csv)
    return EXIT_OK


COMMANDS = {
    "solve": command_solve,
    "phase-diagram": command_phase_diagram,
    "selfcheck": command_selfcheck,
    "gen": command_gen,
    "alpha-cs": command_alpha_cs,
}


def configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("%s", exc)
        for item in exc.diagnostics:
            log.error("  %s", item)
        return EXIT_USAGE
    except DomainError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (InstanceFormatError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_FAILURE
    except CalAmpError as exc:
        log.error("%s", exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
