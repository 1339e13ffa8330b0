"""Command line front end.

    al run      --config cfg.json --seed 0 --fold 0
    al suite    --config cfg.json
    al transfer --source <hash> --target-config cfg.json
    al resume   runs/<hash>/<seed>/<fold>
    al analyze  runs/<hash> [runs/<hash2> ...] --alpha 0.05 --out report/

Exit codes: 0 on success, 2 for configuration problems (bad config file,
unknown paths, invalid arguments), 3 when training diverges.  CIFAR data
is located via --data-root or the AL_DATA_ROOT environment variable.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import config_hash, load_config
from .errors import (
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    EXIT_TRAINING_FAILURE,
    ConfigError,
    TrainingDivergedError,
)
from .orchestrator import replay_transfer, run_al_cell, run_suite
from .reporting import emit_report, load_experiment

log = logging.getLogger("al")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--runs-root", default="runs", help="directory run cells live under")
    p.add_argument("--data-root", default=None, help="dataset root (else $AL_DATA_ROOT)")
    p.add_argument("--device", default="cpu")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="al", description="pool-based active learning evaluation toolkit"
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one (seed, fold) cell of a config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, required=True)
    run.add_argument("--fold", type=int, required=True)
    run.add_argument("--dump-scores", action="store_true",
                     help="persist per-iteration pool scores next to results")
    run.add_argument("--no-resume", action="store_true",
                     help="recompute from iteration 0 even if artifacts exist")
    _add_common(run)

    suite = sub.add_parser("suite", help="execute every seed x fold cell of a config")
    suite.add_argument("--config", required=True)
    suite.add_argument("--dump-scores", action="store_true")
    _add_common(suite)

    transfer = sub.add_parser(
        "transfer", help="re-train a target config on a source run's selections"
    )
    transfer.add_argument("--source", required=True, metavar="HASH",
                          help="config hash of the finished source experiment")
    transfer.add_argument("--target-config", required=True)
    _add_common(transfer)

    resume = sub.add_parser("resume", help="continue a partially finished cell")
    resume.add_argument("run_dir", help="cell directory: runs/<hash>/<seed>/<fold>")
    resume.add_argument("--data-root", default=None)
    resume.add_argument("--device", default="cpu")

    analyze = sub.add_parser("analyze", help="aggregate and compare experiments")
    analyze.add_argument("run_dirs", nargs="+",
                         help="experiment directories (runs/<hash>)")
    analyze.add_argument("--alpha", type=float, default=0.05,
                         help="family-wise error rate for pairwise comparisons")
    analyze.add_argument("--out", default="report", help="report output directory")
    return parser


def _load_config_file(path: str):
    p = Path(path)
    if not p.exists():
        raise ConfigError([f"config file not found: {p}"])
    try:
        return load_config(p)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError([f"config file {p} is malformed: {exc}"]) from exc


def _cmd_run(args) -> int:
    config = _load_config_file(args.config)
    run_al_cell(
        config,
        args.seed,
        args.fold,
        args.runs_root,
        data_root=args.data_root,
        device=args.device,
        dump_scores=args.dump_scores,
        resume=not args.no_resume,
    )
    print(f"cell complete: {Path(args.runs_root) / config_hash(config)}")
    return EXIT_OK


def _cmd_suite(args) -> int:
    config = _load_config_file(args.config)
    cells = run_suite(
        config,
        args.runs_root,
        data_root=args.data_root,
        device=args.device,
        dump_scores=args.dump_scores,
    )
    print(
        f"suite complete: {len(cells)} cells under "
        f"{Path(args.runs_root) / config_hash(config)}"
    )
    return EXIT_OK


def _cmd_transfer(args) -> int:
    target = _load_config_file(args.target_config)
    try:
        replay_transfer(
            args.source,
            target,
            args.runs_root,
            data_root=args.data_root,
            device=args.device,
        )
    except FileNotFoundError as exc:
        raise ConfigError([str(exc)]) from exc
    print(f"transfer complete: {Path(args.runs_root) / config_hash(target)}")
    return EXIT_OK


def _cmd_resume(args) -> int:
    cell_dir = Path(args.run_dir).resolve()
    parts_ok = (
        cell_dir.name.lstrip("-").isdigit()
        and cell_dir.parent.name.lstrip("-").isdigit()
    )
    snapshot = cell_dir.parent.parent / "config.json"
    if not parts_ok or not snapshot.exists():
        raise ConfigError(
            [f"{cell_dir} is not a cell directory of the form runs/<hash>/<seed>/<fold>"]
        )
    config = _load_config_file(snapshot)
    if config_hash(config) != cell_dir.parent.parent.name:
        raise ConfigError(
            [f"config snapshot hash mismatch in {cell_dir.parent.parent}"]
        )
    run_al_cell(
        config,
        int(cell_dir.parent.name),
        int(cell_dir.name),
        cell_dir.parent.parent.parent,
        data_root=args.data_root,
        device=args.device,
        resume=True,
    )
    print(f"cell complete: {cell_dir}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    try:
        experiments = [load_experiment(d) for d in args.run_dirs]
    except FileNotFoundError as exc:
        raise ConfigError([str(exc)]) from exc
    if not (0.0 < args.alpha < 1.0):
        raise ConfigError([f"--alpha {args.alpha} must lie in (0, 1)"])
    written = emit_report(experiments, args.out, alpha=args.alpha)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "suite": _cmd_suite,
    "transfer": _cmd_transfer,
    "resume": _cmd_resume,
    "analyze": _cmd_analyze,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except TrainingDivergedError as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return EXIT_TRAINING_FAILURE


if __name__ == "__main__":
    sys.exit(main())
