"""Command-line entry point.

Commands::

    mgem run      --config PATH [--out DIR] [--seeds N] [--threads N]
    mgem pareto   --config PATH [--out DIR] [--seeds N] [--threads N]
    mgem selfcheck [--quick]

``run`` executes every configured method over the stream and writes
``summary.csv`` plus one retained-accuracy matrix file per run. ``pareto``
crosses the configured (or default) methods with the strength grid over the
first two tasks and writes ``pareto.csv``. ``selfcheck`` runs the built-in
verification suites.

Exit codes: 0 success, 1 usage/config error, 2 runtime or solver-budget
failure. ``MGEM_THREADS`` is the fallback for ``--threads``.
"""

import argparse
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfigFile, default_pareto_methods, parse_config
from .engine import TrainConfig, pareto_sweep, run
from .metrics import summarize, write_pareto_csv, write_rmatrix_csv, write_summary_csv
from .selfcheck import run_all
from .taskgen import generate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def _load_config(path: str) -> RunConfigFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _resolve_out_dir(cfg: RunConfigFile, override) -> Path:
    out = Path(override) if override else Path(cfg.out_dir)
    if not out.exists():
        if not out.parent.exists():
            raise ConfigError(f"output directory parent {out.parent} does not exist")
        out.mkdir()
    return out


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("MGEM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"MGEM_THREADS must be an integer, got {env!r}") from None
    return 1


def _train_config(cfg: RunConfigFile, method, seed) -> TrainConfig:
    return TrainConfig(
        lr=cfg.lr,
        iters_per_task=cfg.iters_per_task,
        batch_size=cfg.batch_size,
        memory_per_task=cfg.memory_per_task,
        method=method,
        partition_mode=cfg.partition_mode,
        seed=seed,
    )


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    if not cfg.methods:
        raise ConfigError("[method.1] at least one method entry is required for run")
    out = _resolve_out_dir(cfg, args.out)
    stream = generate(cfg.stream)
    seeds = [cfg.train_seed + i for i in range(args.seeds)]

    entries = []
    any_degraded = False
    run_idx = 0
    for method in cfg.methods:
        for seed in seeds:
            run_idx += 1
            result = run(stream, cfg.model, _train_config(cfg, method, seed))
            entries.append((method, seed, summarize(result.accuracy),
                            result.unconverged_steps))
            name = "rmatrix.csv" if run_idx == 1 else f"rmatrix_{run_idx}.csv"
            write_rmatrix_csv(out / name, result.accuracy)
            any_degraded = any_degraded or result.degraded
    write_summary_csv(out / "summary.csv", entries)
    print(f"wrote {out / 'summary.csv'} ({len(entries)} runs)")
    if any_degraded:
        print("warning: at least one run exceeded the solver convergence budget",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_pareto(args) -> int:
    cfg = _load_config(args.config)
    out = _resolve_out_dir(cfg, args.out)
    stream = generate(cfg.stream)
    if stream.n_tasks < 2:
        raise ConfigError("pareto requires >= 2 tasks")
    methods = cfg.methods if cfg.methods else default_pareto_methods()
    grid = [(m, q) for m in methods for q in cfg.q_grid]
    seeds = [cfg.train_seed + i for i in range(args.seeds)]
    base = _train_config(cfg, methods[0], cfg.train_seed)
    points = pareto_sweep(stream, cfg.model, base, grid, seeds=seeds,
                          threads=_threads(args))
    write_pareto_csv(out / "pareto.csv", points)
    print(f"wrote {out / 'pareto.csv'} ({len(points)} rows)")
    if any(p.degraded for p in points):
        print("warning: at least one sweep run exceeded the solver convergence budget",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    results = run_all(quick=args.quick)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name}: {r.detail} ({r.elapsed:.2f}s)")
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mgem",
        description="GEM-family continual-learning runs, sweeps, and solver self-checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train every configured method, write summary")
    p_run.add_argument("--config", required=True, help="path to a run config file")
    p_run.add_argument("--out", default=None, help="output directory (overrides config)")
    p_run.add_argument("--seeds", type=int, default=1, help="number of seeds per method")
    p_run.add_argument("--threads", type=int, default=None)
    p_run.set_defaults(fn=cmd_run)

    p_par = sub.add_parser("pareto", help="inner-product trade-off sweep on tasks 1-2")
    p_par.add_argument("--config", required=True)
    p_par.add_argument("--out", default=None)
    p_par.add_argument("--seeds", type=int, default=1)
    p_par.add_argument("--threads", type=int, default=None)
    p_par.set_defaults(fn=cmd_pareto)

    p_chk = sub.add_parser("selfcheck", help="run the built-in verification suites")
    p_chk.add_argument("--quick", action="store_true", help="reduced instance counts")
    p_chk.set_defaults(fn=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, FloatingPointError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
