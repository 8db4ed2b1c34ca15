import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from ..core.assumptions import check_assumptions, parameter_ranges
from ..core.experiments import fit_rate, moment_probe, simulate_paths, strong_error, theoretical_rate
from ..core.taming import check_remark2_bounds
from ..utils.errors import TamedTaylorError
from ..utils.export import write_frame, write_json, write_rate_plot_data, write_results
from .config import RunConfig, resolve_config

logger = logging.getLogger(__name__)


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.replace(" ", "").split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", choices=["ginzburg", "holder", "ou"], default=None)
    common.add_argument("--problem-file", default=None, help="JSON polynomial SDE description")
    common.add_argument("--xi", type=float, default=None)
    common.add_argument("--x0", type=float, default=None)
    common.add_argument("--override", action="store_true", default=None, help="allow xi outside the admissible range")
    common.add_argument("--scheme", choices=["euler", "milstein", "taylor15"], default=None)
    common.add_argument("--no-taming", dest="taming", action="store_const", const=False, default=None)
    common.add_argument("--theta", type=float, default=None)
    common.add_argument("--n-list", dest="n_list", type=_int_list, default=None)
    common.add_argument("--n-ref", dest="n_ref", type=int, default=None)
    common.add_argument("--paths", type=int, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--format", choices=["csv", "json"], default=None)
    common.add_argument("--config", dest="config_file", default=None)
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="tamed-taylor",
        description="Tamed order-1.5 strong Taylor scheme: convergence rates, simulation and assumption checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("rate", parents=[common], help="strong error table and fitted rate")
    simulate = sub.add_parser("simulate", parents=[common], help="terminal states at one step count")
    simulate.add_argument("--steps", type=int, default=None)
    simulate.add_argument("--record-trajectory", dest="record_trajectory", action="store_true", default=None)
    check = sub.add_parser("check", parents=[common], help="parameter ranges and assumption checks")
    check.add_argument("--p0", type=float, default=None)
    check.add_argument("--p1", type=float, default=None)
    moments = sub.add_parser("moments", parents=[common], help="empirical E|X_T|^p per step count")
    moments.add_argument("--p", type=int, default=None)
    return parser


def _sibling(config: RunConfig, fmt: str):
    return config.output_path.with_suffix(f".{fmt}")


def cmd_rate(config: RunConfig, executor=None) -> int:
    problem = config.build_problem()
    scheme = config.scheme_kind()
    table = strong_error(
        problem,
        scheme,
        N_list=config.n_list,
        N_ref=config.n_ref,
        paths=config.paths,
        master_seed=config.seed,
        threads=config.threads,
        executor=executor,
    )
    fit = fit_rate(table)
    metadata = config.to_metadata()
    for fmt in ("csv", "json"):
        write_results(table, _sibling(config, fmt), fmt=fmt, fit=fit, config=metadata)
    plot_path = write_rate_plot_data(table, _sibling(config, "dat"), config=metadata)

    for row in table.rows:
        print(f"  N={row.N:<6d} rms_error={row.rms_error:.6e} ± {row.std_error:.2e}  explosions={row.explosions}")
    print(f"✓ {scheme.label} on {problem.name}: slope {fit.slope:.4f} (theory {theoretical_rate(problem):.4f}, r²={fit.r_squared:.4f})")
    print(f"✓ Results written to {_sibling(config, 'csv')}, {_sibling(config, 'json')} and {plot_path}")
    return 0


def cmd_simulate(config: RunConfig, executor=None) -> int:
    problem = config.build_problem()
    scheme = config.scheme_kind()
    N = config.steps or config.n_list[0]
    solution = simulate_paths(
        problem,
        scheme,
        N,
        config.paths,
        master_seed=config.seed,
        record_trajectory=bool(config.record_trajectory),
        threads=config.threads,
        executor=executor,
    )
    columns: Dict[str, object] = {"path": np.arange(config.paths)}
    names = ["x_T"] if problem.d == 1 else [f"x_T_{i}" for i in range(problem.d)]
    for i, name in enumerate(names):
        columns[name] = solution.terminal[:, i]
    columns["exploded_at"] = solution.exploded_at
    frame = pd.DataFrame(columns)
    metadata = {**config.to_metadata(), "steps": N, "explosions": solution.explosions}

    if config.format == "json":
        payload = {
            "config": metadata,
            "terminal": solution.terminal.tolist(),
            "exploded_at": solution.exploded_at.tolist(),
            "explosions": solution.explosions,
        }
        write_json(payload, config.output_path)
    else:
        write_frame(frame, config.output_path, metadata)

    if solution.trajectory is not None:
        dt = problem.T / N
        paths, steps, d = solution.trajectory.shape
        trajectory = pd.DataFrame(
            {
                "path": np.repeat(np.arange(paths), steps * d),
                "step": np.tile(np.repeat(np.arange(steps), d), paths),
                "t": np.tile(np.repeat(np.arange(steps) * dt, d), paths),
                "component": np.tile(np.arange(d), paths * steps),
                "x": solution.trajectory.reshape(-1),
            }
        )
        trajectory_path = config.output_path.with_name(config.output_path.stem + "_trajectory.csv")
        write_frame(trajectory, trajectory_path, metadata)
        print(f"✓ Trajectories written to {trajectory_path}")

    finite = solution.terminal[~solution.exploded]
    marker = "✓" if solution.explosions == 0 else "✗"
    print(f"{marker} {config.paths} paths of {scheme.label} on {problem.name}, N={N}: {solution.explosions} explosions")
    if finite.shape[0] > 1:
        print(f"  mean X_T={np.mean(finite, axis=0)}  var X_T={np.var(finite, axis=0, ddof=1)}")
    print(f"✓ Results written to {config.output_path}")
    return 0


def cmd_check(config: RunConfig, executor=None) -> int:
    problem = config.build_problem()
    if config.problem_file is None and problem.name in ("ginzburg", "holder"):
        ranges = parameter_ranges(problem.name)
        print(f"✓ {problem.name}: rho={ranges.rho:g} min_p0={ranges.min_p0:g} xi_max={ranges.xi_max:.4f}")
        print(f"  p0 ∈ {ranges.p0_interval}, p1 ∈ {ranges.p1_interval}")

    report = check_assumptions(problem, p0=config.p0, p1=config.p1)
    for item in report.checks:
        marker = "✓" if item.passed else "✗"
        print(f"{marker} {item.identifier} {'pass' if item.passed else 'fail'} ({item.detail})")

    bounds = check_remark2_bounds(problem, config.scheme_kind().taming(problem.rho, 1, problem.T))
    for name, quantity in bounds.quantities.items():
        marker = "✓" if quantity.bounded else "✗"
        print(f"{marker} tamed {name} bounded by C·n^{quantity.power:g}(1+|x|) (C={quantity.constant:.4g})")

    payload = report.to_dict()
    payload["taming_bounds"] = bounds.to_dict()
    metadata = config.to_metadata()
    write_json({"config": metadata, **payload}, _sibling(config, "json"))
    frame = pd.DataFrame(
        [
            {"identifier": c.identifier, "constant": c.constant, "residual": c.residual, "passed": c.passed}
            for c in report.checks
        ]
    )
    write_frame(frame, _sibling(config, "csv"), {**metadata, "passed": report.passed})
    print(f"✓ Report written to {_sibling(config, 'json')} and {_sibling(config, 'csv')}")
    return 0 if report.passed else 1


def cmd_moments(config: RunConfig, executor=None) -> int:
    problem = config.build_problem()
    tables = {}
    for taming in (True, False):
        tables[taming] = moment_probe(
            problem,
            config.scheme_kind(taming=taming),
            config.p,
            config.n_list,
            paths=config.paths,
            master_seed=config.seed,
            threads=config.threads,
            executor=executor,
        )
    frame = pd.DataFrame(
        {
            "N": [row.N for row in tables[True].rows],
            "moment_tamed": [row.moment for row in tables[True].rows],
            "explosions_tamed": [row.explosions for row in tables[True].rows],
            "moment_untamed": [row.moment for row in tables[False].rows],
            "explosions_untamed": [row.explosions for row in tables[False].rows],
        }
    )
    metadata = config.to_metadata()
    if config.format == "json":
        write_json(
            {"config": metadata, "tamed": tables[True].to_dict(), "untamed": tables[False].to_dict()},
            config.output_path,
        )
    else:
        write_frame(frame, config.output_path, metadata)

    for tamed, untamed in zip(tables[True].rows, tables[False].rows):
        print(
            f"  N={tamed.N:<6d} E|X_T|^{config.p} tamed={tamed.moment:.6e} ({tamed.explosions} explosions)"
            f"  untamed={untamed.moment:.6e} ({untamed.explosions} explosions)"
        )
    print(f"✓ Results written to {config.output_path}")
    return 0


COMMAND_HANDLERS: Dict[str, Callable[..., int]] = {
    "rate": cmd_rate,
    "simulate": cmd_simulate,
    "check": cmd_check,
    "moments": cmd_moments,
}


def main(argv: Optional[List[str]] = None, executor=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    flags = {key: value for key, value in vars(args).items() if key not in ("command", "config_file", "verbose")}
    try:
        config = resolve_config(args.command, flags, config_file=args.config_file)
        logger.info("Resolved config: %s", config.to_metadata())
        return COMMAND_HANDLERS[args.command](config, executor=executor)
    except TamedTaylorError as e:
        print(f"✗ {e}", file=sys.stderr)
        return 1

