"""Command-line entry point.

    surftrap <experiment> [--config FILE] [--recipe NAME] [--seed N] [--shots N]
                          [--out DIR] [--workers N]
    surftrap run --recipe NAME [--seed N] [--out DIR] [--workers N]
    surftrap recipes
    surftrap validate FILE
    surftrap schema <experiment>

Exit status: 0 on success, 2 for config errors, 3 when the dynamics became
unstable, 1 for any other failure in the physics modules.
"""

from __future__ import annotations

import argparse
import sys

from . import micromotion, trap_model
from .config import SCHEMA, ConfigError, load_config, validate_mapping, with_overrides
from .recipes import get_recipe, recipe_names
from .runner import RunError, run

EXIT_CONFIG, EXIT_UNSTABLE, EXIT_FAILED = 2, 3, 1
_UNSTABLE = (micromotion.InstabilityError, trap_model.TrapInstabilityError)


def _run_options(p: argparse.ArgumentParser, recipe_required: bool = False):
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--recipe", required=recipe_required, help="named figure recipe")
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("--shots", type=int, help="override the shot count")
    p.add_argument("--out", help="output directory (default: output_path of the config)")
    p.add_argument("--workers", type=int, default=1, help="worker threads (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surftrap", description="Surface-trap ion qubit experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCHEMA:
        _run_options(sub.add_parser(name, help=f"run the {name} experiment"))
    _run_options(sub.add_parser("run", help="run a recipe or config file"))
    sub.add_parser("recipes", help="list figure recipes")
    v = sub.add_parser("validate", help="validate a config file")
    v.add_argument("file")
    s = sub.add_parser("schema", help="list the parameters of an experiment")
    s.add_argument("experiment", choices=list(SCHEMA))
    return parser


def _resolve(args):
    if args.config and args.recipe:
        raise ConfigError(["--config and --recipe are mutually exclusive"])
    if args.config:
        cfg = load_config(args.config)
    elif args.recipe:
        cfg = get_recipe(args.recipe)
    elif args.command == "run":
        raise ConfigError(["run needs --config or --recipe"])
    else:
        cfg = validate_mapping({"experiment": args.command})
    if args.command != "run" and cfg.experiment != args.command:
        raise ConfigError([f"config is for experiment {cfg.experiment!r}, not {args.command!r}"])
    if args.workers < 1:
        raise ConfigError(["--workers must be >= 1"])
    return with_overrides(cfg, seed=args.seed, shots=args.shots)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "recipes":
        for name in recipe_names():
            print(f"{name:24s}{get_recipe(name).experiment}")
        return 0
    if args.command == "schema":
        for key, spec in SCHEMA[args.experiment].items():
            print(f"{key:24s}{spec.kind:10s}{spec.default!r:40s}{spec.doc}")
        return 0
    try:
        if args.command == "validate":
            cfg = load_config(args.file)
            print(cfg.to_toml(), end="")
            return 0
        cfg = _resolve(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        record, _ = run(cfg, args.out, args.workers)
    except RunError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE if isinstance(exc.cause, _UNSTABLE) else EXIT_FAILED
    out = args.out or cfg.output_path
    print(f"{cfg.experiment}: wrote {out}/results.csv and {out}/run.json ({record.wall_clock_s:.2f} s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
