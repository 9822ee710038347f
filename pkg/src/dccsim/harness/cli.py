"""Command-line interface: simulate, train, evaluate, compare, serve.

Exit codes: 0 success, 2 configuration/usage error, 3 runtime error,
4 training divergence. ``DCC_SIM_THREADS`` caps how many training seeds run
in parallel worker processes.
"""

from __future__ import annotations

import argparse
import os
import sys

from ..errors import ConfigError, DccSimError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_DIVERGED = 4


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad --seeds value {text!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dccsim",
        description="Carbon-aware data center cluster simulator and trainer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one baseline episode")
    p_sim.add_argument("config", help="scenario JSON path or bundled name")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--policy", default="baseline",
                       choices=("baseline", "greedy"))
    p_sim.add_argument("--out", default="runs/simulate")

    p_train = sub.add_parser("train", help="train a controller configuration")
    p_train.add_argument("config")
    p_train.add_argument("--configuration", default="joint_hrl")
    p_train.add_argument("--algo", default="", choices=("", "ppo", "a2c"))
    p_train.add_argument("--seeds", default="")
    p_train.add_argument("--total-steps", type=int, default=None)
    p_train.add_argument("--out", default="runs/train")

    p_eval = sub.add_parser("evaluate", help="evaluate a stored policy file")
    p_eval.add_argument("config")
    p_eval.add_argument("--policy-file", required=True)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", default="runs/evaluate")

    p_cmp = sub.add_parser("compare", help="compare two or more run outputs")
    p_cmp.add_argument("run_dirs", nargs="+")
    p_cmp.add_argument("--out", default="comparison.json")

    p_srv = sub.add_parser("serve", help="serve the environment API over HTTP")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    return parser


def _cmd_simulate(args) -> int:
    from .runner import simulate_run
    from .scenario import load_scenario

    scenario = load_scenario(args.config)
    simulate_run(scenario, args.seed, args.out, policy=args.policy)
    print(f"simulate: wrote {args.out}/metrics.csv and summary.json")
    return EXIT_OK


def _cmd_train(args) -> int:
    from ..control.configurations import CONFIGURATION_NAMES
    from .runner import train_run
    from .scenario import load_scenario

    if args.configuration not in CONFIGURATION_NAMES:
        raise ConfigError(
            f"--configuration must be one of {CONFIGURATION_NAMES}"
        )
    scenario = load_scenario(args.config)
    seeds = _parse_seeds(args.seeds) if args.seeds else list(scenario.seeds)
    max_workers = int(os.environ.get("DCC_SIM_THREADS", "1") or "1")
    report = train_run(scenario, args.config, args.configuration, seeds,
                       args.out, algo=args.algo, total_steps=args.total_steps,
                       max_workers=max_workers)
    print(f"train[{args.configuration}]: mean co2 "
          f"{report['mean_co2_kg']:.1f} ± {report['std_co2_kg']:.1f} kg "
          f"over {len(seeds)} seed(s)")
    if report["diverged"]:
        print("training diverged; last finite checkpoint was kept",
              file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    from .runner import evaluate_run
    from .scenario import load_scenario

    scenario = load_scenario(args.config)
    report = evaluate_run(scenario, args.policy_file, args.out, seed=args.seed)
    print(f"evaluate: co2 {report['totals']['co2_kg']:.1f} kg -> {args.out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .compare import write_comparison

    table = write_comparison(args.run_dirs, args.out)
    print(table)
    print(f"\nwrote {args.out}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from ..service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "train": _cmd_train,
        "evaluate": _cmd_evaluate,
        "compare": _cmd_compare,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DccSimError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
