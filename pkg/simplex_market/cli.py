import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd

from .calibration import calibrate, read_cap_csv
from .deflator_hedge import approximate_optimal_arbitrage, deflator_statistics
from .exceptions import ConfigError, ParameterValidationError, SimplexMarketError
from .generator import MomentRequest, evaluate_requests
from .io import (
    RunManifest,
    check_params_file,
    dump_params,
    load_params,
    load_polynomial,
    write_json,
    write_paths,
    write_table,
)
from .model_params import (
    JointModelSpec,
    boundary_attained,
    classify_nupbr_arbitrage,
    excess_growth_lower_bound,
    log_params_summary,
    non_attainment_margin,
    positive_face_drift,
    zero_face_drift_indices,
)
from .sde_sim import PathConfig, simulate_joint, simulate_vsm_assets, simulate_weights
from .simplex_poly import MAX_DEGREE, SimplexPolynomial

ENV_PREFIX = "SIMPLEX_MARKET_"


def _env(name: str, default=None, type: Callable = str):
    value = os.environ.get(ENV_PREFIX + name)
    return default if value is None else type(value)


def _truthy(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from e


def _ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from e


def _common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--params", help="Parameter JSON file", type=Path, default=_env("PARAMS", type=Path))
    parser.add_argument("--out", help="Output folder", type=Path, default=_env("OUT", Path("."), Path))
    parser.add_argument("--seed", help="Random seed (unsigned 64 bit)", type=int, default=_env("SEED", None, int))
    parser.add_argument("--dt", help="Time step", type=float, default=_env("DT", 1e-3, float))
    parser.add_argument("--T", help="Horizon", type=float, default=_env("T", 1.0, float))
    parser.add_argument("--paths", help="Number of paths", type=int, default=_env("PATHS", 1000, int))
    parser.add_argument("--degree", help="Truncation degree", type=int, default=_env("DEGREE", None, int))
    parser.add_argument("--threads", help="Number of threads", type=int, default=_env("THREADS", 8, int))
    parser.add_argument(
        "--paths-per-chunk", help="Paths simulated per task", type=int, default=_env("PATHS_PER_CHUNK", 1000, int)
    )
    parser.add_argument("--mu0", help="Initial weights, comma separated", type=_floats, default=_env("MU0", None, _floats))
    parser.add_argument("--verbosity", help="Verbosity level", type=int, default=_env("VERBOSITY", 20, int))
    parser.add_argument("--quiet", help="Quiet mode", action="store_true", default=_env("QUIET", False, _truthy))
    return parser


def _build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="SimplexMarket",
        description="Polynomial diffusion models of market weights on the unit simplex",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("validate", parents=[common], help="Check the admissibility of a parameter file")
    commands.add_parser("classify", parents=[common], help="Boundary, NUPBR and arbitrage classification")

    simulate = commands.add_parser("simulate", parents=[common], help="Simulate paths")
    simulate.add_argument("--model", choices=("weights", "joint", "vsm-assets"), default="weights")
    simulate.add_argument("--sigma0", help="Initial total capitalization", type=float, default=_env("SIGMA0", 1.0, float))
    simulate.add_argument("--stride", help="Store every stride-th step", type=int, default=_env("STRIDE", 1, int))
    simulate.add_argument("--format", choices=("csv", "binary", "auto"), default=_env("FORMAT", "auto"))

    moments = commands.add_parser("moments", parents=[common], help="Polynomial moments by matrix exponentials")
    moments.add_argument("--polynomial", help="Polynomial JSON file", type=Path, required=True)
    moments.add_argument("--times", help="Horizons, comma separated", type=_floats, default=None)

    deflator = commands.add_parser("deflator", parents=[common], help="Monte Carlo statistics of the deflator")
    deflator.add_argument("--on-domain-exit", choices=("raise", "drop"), default="drop")

    arbitrage = commands.add_parser("arbitrage", parents=[common], help="Approximate optimal arbitrage")
    arbitrage.add_argument(
        "--n-list",
        help=f"Approximation indices; n is rejected (not clipped) when n times the number of drifting faces exceeds {MAX_DEGREE}",
        type=_ints,
        default=[4, 8, 16],
    )
    arbitrage.add_argument("--per-path", help="Also write terminal wealth per path", action="store_true")

    calibrate_ = commands.add_parser("calibrate", parents=[common], help="Estimate parameters from a time series")
    calibrate_.add_argument("--data", help="CSV with time,cap_1..cap_d or time,mu_1..mu_d", type=Path, required=True)
    calibrate_.add_argument(
        "--time-scale", help="Factor converting the time column to model time", type=float, default=1.0
    )
    return parser


def _require_params(args):
    if args.params is None:
        raise ConfigError("--params is required for this command")
    return load_params(args.params)


def _mu0(args, d: int) -> np.ndarray:
    if args.mu0 is None:
        return np.full(d, 1.0 / d)
    mu0 = np.asarray(args.mu0, dtype=float)
    if mu0.shape != (d,):
        raise ConfigError(f"--mu0 needs {d} values, got {mu0.size}")
    return mu0


def _seed(args) -> int:
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % 2 ** 64)
        logging.info(f"No seed given, using generated seed {args.seed}")
    return args.seed


def _path_config(args, **overrides) -> PathConfig:
    return PathConfig(
        dt=args.dt,
        T=args.T,
        n_paths=args.paths,
        seed=_seed(args),
        n_threads=args.threads,
        paths_per_chunk=args.paths_per_chunk,
        progress=not args.quiet,
        **overrides,
    )


def _validate(args, manifest: RunManifest):
    if args.params is None:
        raise ConfigError("--params is required for this command")
    report = check_params_file(args.params)
    result = {"ok": report.ok, "violations": [v.to_dict() for v in report.violations]}
    manifest.artifacts.append(str(_write(args, "validation.json", result)))
    print(json.dumps(result, indent=2))
    if not report.ok:
        raise ParameterValidationError(report)


def _classify(args, manifest: RunManifest):
    params = _require_params(args).simplex
    log_params_summary(params)
    faces = [
        {
            "face": i + 1,
            "margin": non_attainment_margin(params, i),
            "attained": boundary_attained(params, i),
            "positive_drift": positive_face_drift(params, i),
        }
        for i in range(params.d)
    ]
    result = {
        "d": params.d,
        "nupbr_and_arbitrage": classify_nupbr_arbitrage(params),
        "excess_growth_lower_bound": excess_growth_lower_bound(params),
        "zero_face_drift": [i + 1 for i in zero_face_drift_indices(params)],
        "faces": faces,
    }
    manifest.artifacts.append(str(_write(args, "classification.json", result)))
    print(json.dumps(result, indent=2))


def _simulate(args, manifest: RunManifest):
    model = _require_params(args)
    d = model.simplex.d
    config = _path_config(args, stride=args.stride)
    mu0 = _mu0(args, d)
    if args.model == "weights":
        bundle = simulate_weights(model.simplex, mu0, config)
    elif args.model == "joint":
        if model.totalcap is None:
            raise ConfigError("the joint model needs a 'totalcap' block in the parameter file")
        bundle = simulate_joint(JointModelSpec(model.simplex, model.totalcap), mu0, args.sigma0, config)
    else:
        if model.vsm is None:
            raise ConfigError("asset simulation needs the 'vsm' shorthand in the parameter file")
        bundle = simulate_vsm_assets(model.vsm, mu0 * args.sigma0, config)
    manifest.config.update({"mu0": mu0.tolist(), "model": args.model})
    manifest.artifacts.append(str(write_paths(args.out / "paths", bundle, args.format)))


def _moments(args, manifest: RunManifest):
    params = _require_params(args).simplex
    p: SimplexPolynomial = load_polynomial(args.polynomial)
    degree = max(p.degree, args.degree or 0)
    times = args.times if args.times is not None else [0.0, args.T]
    mu0 = _mu0(args, params.d)
    logging.info(f"Building generator of degree {degree}...")
    values = evaluate_requests(params, [MomentRequest(p, t, mu0) for t in times], degree)
    table = pd.DataFrame({"t": times, "moment": values})
    manifest.config.update({"mu0": mu0.tolist(), "times": list(times), "degree": degree})
    manifest.artifacts.append(str(write_table(args.out / "moments.csv", table)))
    print(table.to_string(index=False))


def _deflator(args, manifest: RunManifest):
    params = _require_params(args).simplex
    mu0 = _mu0(args, params.d)
    stats = deflator_statistics(params, args.T, mu0, _path_config(args), args.on_domain_exit)
    rows = [{"quantity": "Z_T", **stats.mean_Z.to_dict()}]
    rows += [{"quantity": f"Z_T*mu_{i + 1}", **e.to_dict()} for i, e in enumerate(stats.deflated_weights)]
    table = pd.DataFrame(rows)
    manifest.config.update({"mu0": mu0.tolist()})
    manifest.artifacts.append(str(write_table(args.out / "deflator.csv", table)))
    print(table.to_string(index=False))


def _arbitrage(args, manifest: RunManifest):
    params = _require_params(args).simplex
    mu0 = _mu0(args, params.d)
    config = _path_config(args)
    rows = []
    for n in args.n_list:
        result = approximate_optimal_arbitrage(params, n, args.T, mu0, config, keep_paths=args.per_path)
        rows.append(result.to_dict())
        if args.per_path:
            per_path = pd.DataFrame({"Y_T": result.terminal_wealth_paths, "target": result.target_paths})
            manifest.artifacts.append(str(write_table(args.out / f"arbitrage_n{n}_paths.csv", per_path)))
    table = pd.DataFrame(rows)
    manifest.config.update({"mu0": mu0.tolist(), "n_list": list(args.n_list)})
    manifest.artifacts.append(str(write_table(args.out / "arbitrage.csv", table)))
    print(table.to_string(index=False))


def _calibrate(args, manifest: RunManifest):
    result = calibrate(read_cap_csv(args.data, time_scale=args.time_scale))
    params_path = args.out / "params.json"
    dump_params(params_path, result.params)
    sidecar_path = _write(args, "params.stderr.json", result.sidecar())
    manifest.artifacts += [str(params_path), str(sidecar_path)]
    print(json.dumps(result.params.to_dict(), indent=2))


COMMANDS = {
    "validate": _validate,
    "classify": _classify,
    "simulate": _simulate,
    "moments": _moments,
    "deflator": _deflator,
    "arbitrage": _arbitrage,
    "calibrate": _calibrate,
}


def _write(args, name: str, obj) -> Path:
    path = args.out / name
    write_json(path, obj)
    return path


def _manifest_config(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "command"}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parses the arguments, runs the subcommand and returns the process exit code.

    Errors are logged and written to stderr as JSON; the exit code is 1 for invalid
    input, 2 for numerical failures and 3 for I/O failures.
    """
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=args.verbosity, format="%(asctime)s %(levelname)s %(message)s", force=True)

    started = time.perf_counter()
    manifest = RunManifest(command=args.command, config=_manifest_config(args))
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, manifest)
    except SimplexMarketError as e:
        logging.error(f"{args.command} failed: {e.message}")
        print(json.dumps(e.to_dict()), file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logging.error(f"{args.command} failed: {e}")
        print(json.dumps({"error": "DataIOError", "message": str(e), "details": {}}), file=sys.stderr)
        return 3
    finally:
        manifest.config["seed"] = args.seed
        manifest.finish(time.perf_counter() - started)
        if args.out.is_dir():
            manifest.write(args.out)
    return 0


def cli():
    sys.exit(run())


if __name__ == "__main__":
    cli()
