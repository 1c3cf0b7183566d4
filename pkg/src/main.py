import argparse
import logging
import os
import sys


EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_CONFIG = 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shell", description="Geometrically nonlinear Cosserat shell simulator")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="solve the load program of a run configuration")
    run.add_argument("config", help="config file (YAML or JSON) or experiment name")
    run.add_argument("--out", default=None, help="output directory (default: the config's output entry)")
    run.add_argument("--threads", type=int, default=None, help="limit the number of CPU threads")
    run.add_argument("--rules", default=None, help="validation rule table (default: config/validation_rules.yaml)")

    mesh = commands.add_parser("mesh", help="write a preset mesh to a file")
    mesh.add_argument("preset")
    mesh.add_argument("--resolution", type=int, nargs="+", default=[])
    mesh.add_argument("--order", type=int, default=2, choices=[1, 2])
    mesh.add_argument("--out", required=True)
    return parser


def _limit_threads(threads: int) -> None:
    # read by XLA and BLAS at import time
    os.environ["XLA_FLAGS"] = f"--xla_cpu_multi_thread_eigen=false intra_op_parallelism_threads={threads}"
    for name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[name] = str(threads)


def _run(args) -> int:
    from cosseratshell.configuration import DEFAULT_RULES_CONFIG, load_run_config, resolve_config_path
    from cosseratshell.runner import run

    config = load_run_config(resolve_config_path(args.config))
    rules = args.rules or (DEFAULT_RULES_CONFIG if os.path.isfile(DEFAULT_RULES_CONFIG) else None)
    outcome = run(config, args.out, rules)
    for entry in outcome.report["steps"]:
        probes = "  ".join(f"{name}={value:.10g}" for name, value in entry["probes"].items())
        print(f"step {entry['step']}  parameter={entry['parameter']:g}  energy={entry['energy']:.12e}  {probes}".rstrip())
    return EXIT_OK


def _mesh(args) -> int:
    from cosseratshell.generator import generate_preset
    from cosseratshell.importer import save_mesh

    preset = generate_preset(args.preset, tuple(args.resolution), order=args.order)
    save_mesh(preset.mesh, args.out)
    print(f"{args.out}: {preset.mesh.n_nodes} nodes, {preset.mesh.n_triangles} triangles")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if getattr(args, "threads", None):
        _limit_threads(args.threads)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    from cosseratshell.errors import IoError, ShellError

    try:
        return _run(args) if args.command == "run" else _mesh(args)
    except (ValueError, IoError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShellError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
