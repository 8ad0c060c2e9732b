"""Single executable: data generation, backtests, agent training, theorem checks.

Exit codes: 0 success, 1 validation error (bad flags, unreadable config,
missing files), 2 runtime failure (computation raised, or a theorem check
failed).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import sys
from pathlib import Path

import numpy as np

from .backtest import RlosRlStrategy, Report, CellResult, compare
from .config import (
    ConfigError,
    RunConfig,
    build_panel,
    echo_config,
    load_config,
    resolve_output_dir,
)
from .log_optimal import load_distribution
from .market_data import PanelError, save_panel
from .report import emit_report, load_curve_csv, wealth_chart_svg
from .synthetic import GENERATOR_KINDS, generate
from .verification import run_oracle_suite
from .weights import WeightsError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="logopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic OHLCV panel")
    gen.add_argument("--kind", choices=GENERATOR_KINDS, required=True)
    gen.add_argument("--assets", type=int, default=2)
    gen.add_argument("--periods", type=int, default=300)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--distribution", help="discrete distribution file (kind=iid)")
    gen.add_argument("--out", required=True)

    bt = sub.add_parser("backtest", help="run the configured strategy comparison")
    bt.add_argument("--config", required=True)
    bt.add_argument("--workers", type=int, default=None, help="override [backtest] workers")

    tr = sub.add_parser("train", help="pre-train the trading agent on a panel prefix")
    tr.add_argument("--config", required=True)
    tr.add_argument("--end", type=int, default=None, help="train on periods [0, end)")

    orc = sub.add_parser("oracle", help="verify the strategy theorems numerically")
    orc.add_argument("--trials", type=int, default=500)
    orc.add_argument("--seed", type=int, default=1)
    orc.add_argument("--taylor-portfolios", type=int, default=20)

    rep = sub.add_parser("report", help="re-render summary and charts from curve files")
    rep.add_argument("--from-dir", required=True)
    rep.add_argument("--out", default=None)
    return parser


def _cmd_generate(args) -> int:
    dist = load_distribution(args.distribution) if args.distribution else None
    panel = generate(args.kind, args.assets, args.periods, args.seed, dist=dist)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_panel(panel, out)
    print(f"wrote {panel.n_assets} assets x {panel.periods} periods to {out}")
    return 0


def _cmd_backtest(args) -> int:
    config = load_config(args.config)
    panel = build_panel(config)
    workers = args.workers if args.workers is not None else config.workers
    report = compare(
        config.strategy_specs(),
        panel,
        spans=list(config.spans),
        seeds=list(config.seeds),
        warmup=config.warmup,
        assets_per_cell=config.assets_per_cell or None,
        workers=workers,
        metadata={"config": str(args.config)},
    )
    out_dir = resolve_output_dir(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    echo_path = out_dir / "config_echo.ini"
    echo_path.write_text(echo_config(config), encoding="utf-8")
    files = emit_report(report, out_dir, extra_files=[echo_path])
    print(f"wrote {len(files) + 1} files to {out_dir}")
    return 0


def _cmd_train(args) -> int:
    config = load_config(args.config)
    panel = build_panel(config)
    end = args.end if args.end is not None else panel.periods
    if end < 2 or end > panel.periods:
        raise ConfigError(f"--end {end} outside panel with {panel.periods} periods")
    spec_list = [s for s in config.strategy_specs() if s.name == "rlosrl"]
    spec = spec_list[0] if spec_list else None
    strategy = RlosRlStrategy(
        arch=config.arch,
        hp=config.hp,
        max_span=config.max_span,
        rho=config.threshold,
        train=True,
        pretrain_steps=config.pretrain_steps,
        seed=config.agent_seed,
    )
    strategy.prepare(panel.up_to(end), end)
    out_dir = resolve_output_dir(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .agent import save_checkpoint

    ckpt = out_dir / "checkpoint.npz"
    save_checkpoint(strategy.trader.params, ckpt)
    curve = out_dir / "training_curve.csv"
    with open(curve, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "loss", "lr"])
        for step, value, lr in strategy.trader.history:
            writer.writerow([step, repr(value), repr(lr)])
    echo_path = out_dir / "config_echo.ini"
    echo_path.write_text(echo_config(config), encoding="utf-8")
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["file", "sha256"])
        for p in sorted([ckpt, curve, echo_path], key=lambda p: p.name):
            writer.writerow([p.name, hashlib.sha256(p.read_bytes()).hexdigest()])
    print(f"trained {strategy.trader.step} steps; checkpoint at {ckpt}")
    return 0


def _cmd_oracle(args) -> int:
    results = run_oracle_suite(
        trials=args.trials, seed=args.seed, taylor_portfolios=args.taylor_portfolios
    )
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}s}  {status}  {r.detail}")
        failures += 0 if r.passed else 1
    if failures:
        print(f"{failures} check(s) failed")
        return 2
    print("all checks passed")
    return 0


def _cmd_report(args) -> int:
    src = Path(args.from_dir)
    if not src.is_dir():
        raise ConfigError(f"not a directory: {src}")
    curves = sorted(src.glob("curve_*.csv"))
    if not curves:
        raise ConfigError(f"no curve_*.csv files under {src}")
    out_dir = Path(args.out) if args.out else src
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = []
    spans = []
    seeds = []
    naive = {}
    parsed = []
    for path in curves:
        stem = path.stem[len("curve_"):]
        parts = stem.rsplit("_", 2)
        if len(parts) != 3:
            raise ConfigError(f"unparseable curve filename: {path.name}")
        name, span_tag, seed_txt = parts
        start_txt, end_txt = span_tag.split("-")
        span = (int(start_txt), int(end_txt))
        seed = int(seed_txt)
        curve = load_curve_csv(path)
        curve = type(curve)(
            strategy=name,
            start=curve.start,
            wealth=curve.wealth,
            weights=curve.weights,
            log_returns=curve.log_returns,
        )
        parsed.append((name, span, seed, curve))
        if name == "naive_average":
            naive[(span, seed)] = curve
        if span not in spans:
            spans.append(span)
        if seed not in seeds:
            seeds.append(seed)
    for name, span, seed, curve in parsed:
        ref = naive.get((span, seed))
        win = float(np.mean(curve.log_returns > ref.log_returns)) if ref is not None else float("nan")
        cells.append(
            CellResult(
                strategy=name,
                span=span,
                seed=seed,
                final_wealth=curve.final_wealth,
                mean_log_return=curve.mean_log_return,
                max_drawdown=curve.max_drawdown,
                win_rate_vs_naive=win,
                curve=curve,
            )
        )
    report = Report(cells=tuple(cells), spans=tuple(spans), seeds=tuple(seeds))
    files = emit_report(report, out_dir)
    print(f"re-rendered {len(files)} files to {out_dir}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "backtest": _cmd_backtest,
    "train": _cmd_train,
    "oracle": _cmd_oracle,
    "report": _cmd_report,
}


def run(argv: list[str]) -> int:
    """Dispatch one CLI invocation; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, PanelError, WeightsError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
