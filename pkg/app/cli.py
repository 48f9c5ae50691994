import argparse
import json
import logging
import os
import sys

import numpy as np

from app import config
from app.circuit import (
    NoiseModel,
    apply_noise,
    build_circuit,
    conditional_maps,
)
from app.errors import (
    InsufficientData,
    InvalidParams,
    IsingMachineError,
    UsageError,
)
from app.fixedpoint import OptimizerConfig, solve_fixed_points
from app.ising import (
    IsingParams,
    brute_force_gamma,
    transition_probabilities,
)
from app.machine import complexities
from app.pipeline import (
    RunConfig,
    ambiguity_map,
    complexity_sweep,
    emit_ambiguity,
    emit_outputs,
    parse_t_grid,
    read_sweep_csv,
    theory_band,
)
from app.tomography import (
    choi_distance,
    generate_tomography_data,
    reconstruct_channels,
)

# Configure logging
logging.basicConfig(
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    level=getattr(logging, config.LOG_LEVEL.upper(), logging.INFO),
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
ORACLE_TOL = 1e-6


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(message)


# Shared inputs


def _point(args):
    try:
        return IsingParams(args.j, args.b, args.t)
    except InvalidParams as e:
        raise UsageError(str(e)) from e


def _noise(args):
    try:
        return NoiseModel(args.noise_p, args.noise_eps, args.noise_q)
    except InvalidParams as e:
        raise UsageError(str(e)) from e


def _channel_pair(args, params):
    gamma = transition_probabilities(params)
    noise = _noise(args)
    spec = build_circuit(gamma, args.route, seed=args.seed)
    return gamma, conditional_maps(apply_noise(spec, noise), noise.q)


def _print_json(payload):
    print(json.dumps(payload, indent=2, sort_keys=True))


def run_config_from_args(args):
    """File values first, then every flag the user actually passed."""
    try:
        cfg = RunConfig.load_json(args.config) if args.config else RunConfig()
        overrides = {
            "j": args.j,
            "b_nominal": args.b,
            "t_grid": parse_t_grid(args.t_grid) if args.t_grid else None,
            "shots": args.shots,
            "tomography_shots": args.tomo_shots,
            "seed": args.seed,
            "exact": True if args.exact else None,
            "out_dir": args.out_dir,
            "svg": args.svg,
            "route": args.route,
            "channel_source": args.channel_source,
            "workers": args.workers,
        }
        noise = {
            "p": args.noise_p,
            "epsilon": args.noise_eps,
            "q": args.noise_q,
        }
        if any(v is not None for v in noise.values()):
            overrides["noise"] = NoiseModel(
                **{
                    k: getattr(cfg.noise, k) if v is None else v
                    for k, v in noise.items()
                }
            )
        return cfg.with_overrides(**overrides)
    except (InvalidParams, ValueError, KeyError, TypeError) as e:
        raise UsageError(f"Invalid run configuration: {e}") from e
    except OSError as e:
        raise UsageError(f"Cannot read config {args.config}: {e}") from e


# Command handlers


def gamma_command(args):
    """Print the transition matrix and both complexities at one point."""
    gamma, c_c, c_q = complexities(_point(args))
    _print_json({"gamma": gamma.as_list(), "c_c": c_c, "c_q": c_q})
    return EXIT_OK


def sweep_command(args):
    cfg = run_config_from_args(args)
    records = complexity_sweep(cfg)
    amap = ambiguity_map(records, "theory") if len(records) >= 2 else None
    try:
        band = theory_band(records, cfg.j)
    except InsufficientData as e:
        logging.warning(f"No theory band: {e}")
        band = None
    paths = emit_outputs(records, amap, band, cfg.out_dir, cfg, svg=cfg.svg)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")

    failed = [r for r in records if r.failed]
    for record in failed:
        print(
            f"failed record: t_nominal={record.t_nominal} "
            f"b_nominal={record.b_nominal} status={record.status}",
            file=sys.stderr,
        )
    return EXIT_NUMERICAL if failed else EXIT_OK


def ambiguity_command(args):
    """Rebuild the ambiguity map from a sweep CSV."""
    try:
        records = read_sweep_csv(args.input)
    except (OSError, KeyError, ValueError) as e:
        raise UsageError(f"Cannot read sweep {args.input}: {e}") from e
    amap = ambiguity_map(records, args.source)
    out_dir = args.out_dir or config.DEFAULT_OUT_DIR
    emit_ambiguity(amap, out_dir, svg=args.svg is not False)
    values = amap.values()
    _print_json(
        {
            "source": args.source,
            "defined": len(values),
            "negative": sum(1 for k in values if k < 0),
            "positive": sum(1 for k in values if k > 0),
            "boundary": [list(edge) for edge in amap.boundary()],
        }
    )
    return EXIT_OK


def tomography_command(args):
    _, pair = _channel_pair(args, _point(args))
    data = generate_tomography_data(
        pair, args.tomo_shots or config.DEFAULT_TOMOGRAPHY_SHOTS,
        args.seed, exact=args.exact,
    )
    result = reconstruct_channels(data)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        with open(
            os.path.join(args.out_dir, "tomography.json"), "w",
            encoding="utf-8",
        ) as f:
            f.write(data.to_json() + "\n")
    _print_json(
        {
            "choi_distance": [
                choi_distance(result[j], pair[j]) for j in range(2)
            ],
            "fit_residual": result.fit_residual,
            "trace_preservation_error": float(
                np.max(
                    np.abs(
                        result.e0_hat.completeness()
                        + result.e1_hat.completeness()
                        - np.eye(2)
                    )
                )
            ),
        }
    )
    return EXIT_OK


def fixed_point_command(args):
    params = _point(args)
    gamma, pair = _channel_pair(args, params)
    channels = pair
    if args.channel_source == "tomography":
        data = generate_tomography_data(
            pair, args.tomo_shots or config.DEFAULT_TOMOGRAPHY_SHOTS,
            args.seed, exact=args.exact,
        )
        channels = reconstruct_channels(data)
    solution = solve_fixed_points(
        channels,
        OptimizerConfig(seed=args.seed, workers=args.workers
                        or config.DEFAULT_WORKERS),
        params.J,
        reference=gamma,
        nominal=(params.T, params.B),
    )
    if not solution.converged:
        logging.warning(
            f"Best fixed point leaves residual {solution.residual:.3e}"
        )
    print(solution.to_json())
    return EXIT_OK


def oracle_command(args):
    """Cross-check the transfer-matrix transitions by enumeration."""
    params = _point(args)
    exact = transition_probabilities(params)
    enumerated = brute_force_gamma(params, args.length)
    difference = float(np.max(np.abs(exact.gamma - enumerated.gamma)))
    _print_json(
        {
            "transfer_matrix": exact.as_list(),
            "enumeration": enumerated.as_list(),
            "chain_length": args.length,
            "max_difference": difference,
        }
    )
    if difference > ORACLE_TOL:
        print(
            f"oracle mismatch at J={params.J} B={params.B} T={params.T}: "
            f"{difference:.3e}",
            file=sys.stderr,
        )
        return EXIT_NUMERICAL
    return EXIT_OK


COMMANDS = {
    "gamma": gamma_command,
    "sweep": sweep_command,
    "ambiguity": ambiguity_command,
    "tomography": tomography_command,
    "fixed-point": fixed_point_command,
    "oracle": oracle_command,
}


def _add_point_flags(parser, defaults=True):
    parser.add_argument("--j", type=float,
                        default=config.NOMINAL_J if defaults else None)
    parser.add_argument("--b", type=float,
                        default=config.NOMINAL_B if defaults else None)


def _add_noise_flags(parser, defaults=True):
    parser.add_argument(
        "--noise-p", type=float,
        default=config.DEFAULT_NOISE_P if defaults else None,
    )
    parser.add_argument(
        "--noise-eps", type=float,
        default=config.DEFAULT_NOISE_EPS if defaults else None,
    )
    parser.add_argument(
        "--noise-q", type=float,
        default=config.DEFAULT_NOISE_Q if defaults else None,
    )


def build_parser():
    parser = ArgumentParser(
        prog="ising-machine",
        description="Classical and quantum machines of the Ising chain.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    parsers = {name: commands.add_parser(name) for name in COMMANDS}

    for name in ("gamma", "tomography", "fixed-point", "oracle"):
        _add_point_flags(parsers[name])
        parsers[name].add_argument("--t", type=float, default=2.0)
    for name in ("tomography", "fixed-point"):
        _add_noise_flags(parsers[name])
        parsers[name].add_argument("--seed", type=int,
                                   default=config.DEFAULT_SEED)
        parsers[name].add_argument("--tomo-shots", type=int)
        parsers[name].add_argument("--exact", action="store_true")
        parsers[name].add_argument(
            "--route", choices=("direct", "decomposed"), default="decomposed"
        )
    parsers["tomography"].add_argument("--out-dir")
    parsers["fixed-point"].add_argument(
        "--channel-source", choices=("analytic", "tomography"),
        default="analytic",
    )
    parsers["fixed-point"].add_argument("--workers", type=int)
    parsers["oracle"].add_argument("--length", type=int, default=24)

    sweep = parsers["sweep"]
    sweep.add_argument("--config")
    _add_point_flags(sweep, defaults=False)
    sweep.add_argument("--t-grid", help="comma list or 'nominal'")
    _add_noise_flags(sweep, defaults=False)
    sweep.add_argument("--shots", type=int)
    sweep.add_argument("--tomo-shots", type=int)
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--exact", action="store_true")
    sweep.add_argument("--out-dir")
    sweep.add_argument("--svg", action=argparse.BooleanOptionalAction)
    sweep.add_argument("--route", choices=("direct", "decomposed"))
    sweep.add_argument("--channel-source",
                       choices=("analytic", "tomography"))
    sweep.add_argument("--workers", type=int)

    ambiguity = parsers["ambiguity"]
    ambiguity.add_argument("--input", required=True)
    ambiguity.add_argument("--source", choices=("theory", "m", "s"),
                           default="theory")
    ambiguity.add_argument("--out-dir")
    ambiguity.add_argument("--svg", action=argparse.BooleanOptionalAction)

    for name, handler in COMMANDS.items():
        parsers[name].set_defaults(handler=handler)
    return parser


# Main function


def main(argv=None):
    """Run one subcommand and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        return args.handler(args)
    except UsageError as e:
        logging.error(f"Usage error: {e}")
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except IsingMachineError as e:
        logging.error(f"Numerical failure: {type(e).__name__}: {e}")
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as e:
        logging.error(f"Unexpected error in main: {e}")
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no mutate
    sys.exit(main())
