"""Command-line experiment runner.

One subcommand per experiment kind; every run is deterministic given
--seed and the scenario, and writes CSV (or JSON for codebook dumps).
"""

from __future__ import annotations

import argparse
import sys

from .harness import EXPERIMENT_KINDS, ExperimentConfig, run
from .scene import load_scenario, table1_scenario


def _parse_values(text: str):
    return tuple(float(v) for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fasloc",
        description="Reconfigurable-array localization experiments",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", help="scenario JSON (defaults to the built-in scenario)")
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--out", required=True, help="output path")
        p.add_argument("--trials", type=int, default=200, help="Monte-Carlo trials per point")
        p.add_argument("--threads", type=int, default=1, help="worker threads for trials")
        p.add_argument(
            "--model",
            default="synthesis",
            choices=("synthesis", "finite-state", "traditional"),
            help="element reconfigurability model",
        )
        p.add_argument("--q", type=int, default=4, help="basis size for the synthesis model")
        p.add_argument("--s", type=int, default=64, help="library size for the finite-state model")
        p.add_argument("--library", help="pattern library (CSV file or directory)")
        p.add_argument("--values", help="comma-separated sweep values")
        p.add_argument("--snr", type=float, default=5.0, help="SNR in dB where one is needed")
        p.add_argument("--map-z", type=float, default=2.0, help="map height (peb-map)")
        p.add_argument(
            "--map-grid", default="5x5", help="map grid as COLSxROWS (peb-map)"
        )
        p.add_argument(
            "--interferers", type=int, default=40, help="bounce paths (lmr-sweep)"
        )
    return parser


def config_from_args(args) -> ExperimentConfig:
    scenario = load_scenario(args.config) if args.config else table1_scenario()
    nx, _, ny = args.map_grid.partition("x")
    return ExperimentConfig(
        kind=args.kind,
        scenario=scenario,
        model_kind=args.model,
        q=args.q,
        s=args.s,
        library_path=args.library,
        sweep=_parse_values(args.values) if args.values else (),
        trials=args.trials,
        seed=args.seed,
        out=args.out,
        threads=args.threads,
        map_z=args.map_z,
        map_shape=(int(nx), int(ny or nx)),
        snr_db=args.snr,
        n_interferers=args.interferers,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        paths = run(config)
    except (ValueError, OSError) as exc:
        print(f"fasloc: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
