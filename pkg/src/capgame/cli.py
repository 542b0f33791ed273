"""Command-line entry point.

    capgame simulate   one GBM (or replayed) play, JSON + table report
    capgame analyze    statistics, residuals and bounds of an observed path
    capgame verify     witness-implication sweep over seeded plays
    capgame sweep      dt convergence study on a shared Brownian path

Exit codes: 0 success, 1 usage error, 2 data or engine error, 3 a witness
implication or sandwich check failed.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from capgame import __version__
from capgame.errors import CAPGameError
from capgame.experiments import (
    DEFAULT_ALPHAS,
    DEFAULT_EPSILONS,
    SWEEP_COLUMNS,
    MarketSpec,
    convergence_sweep,
    play_market,
    play_report,
    witness_sweep,
)
from capgame.ingest import as_market, load_csv, path_series, write_csv
from capgame.protocol import GameConfig
from capgame.report import RunReport, format_table, render_run, write_rows_csv
from capgame.strategies import FixedWeights, parse_investor
from capgame.bounds import EPSILON_GRID

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VIOLATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _corr(text: str):
    """A scalar (uniform off-diagonal correlation) or rows split by ';'."""
    try:
        if ";" in text:
            return tuple(tuple(float(v) for v in row.split(",")) for row in text.split(";"))
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad correlation {text!r}") from None


def _add_market_flags(p, *, n_default=100_000):
    g = p.add_argument_group("market")
    g.add_argument("--market", choices=("gbm", "csv", "adversarial"), default="gbm")
    g.add_argument("--mu", type=_floats, default=[0.05, 0.08], help="drift per unit time, per security (index first)")
    g.add_argument("--sigma", type=_floats, default=[0.2, 0.3], help="volatility per sqrt unit time, per security")
    g.add_argument("--corr", type=_corr, default=0.5, help="uniform correlation or full matrix 'r00,r01;r10,r11'")
    g.add_argument("--K", type=int, default=None, help="non-index securities (default: len(mu) - 1)")
    g.add_argument("--N", type=int, default=n_default, help="rounds")
    g.add_argument("--dt", type=float, default=1e-3, help="round length in time units")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--csv", type=Path, help="return file for --market csv")
    g.add_argument("--amplitude", type=float, default=0.01, help="return size for --market adversarial")
    p.add_argument("--investor", default="equal", help="hold-index | equal | fixed:w0,w1,... | buy-and-hold:w0,w1,...")
    p.add_argument("--alpha", type=float, default=0.05, help="level of the reported bounds (default 0.05)")
    p.add_argument("--epsilon", type=float, default=0.1, help="epsilon of the reported witness ledgers (default 0.1)")


def _width(args) -> int:
    if args.K is not None:
        if args.K < 1:
            raise UsageError("--K must be at least 1")
        return args.K + 1
    return max(2, len(args.mu))


def _broadcast(values, width, name):
    if len(values) == 1:
        return tuple(values) * width
    if len(values) != width:
        raise UsageError(f"--{name} has {len(values)} values for {width} securities")
    return tuple(values)


def _investor(spec: str, width: int):
    if spec == "equal":
        return FixedWeights(np.full(width, 1.0 / width))
    return parse_investor(spec, width)


def _market(args) -> tuple[MarketSpec, GameConfig, object | None]:
    """Market spec, game config and, for csv input, the loaded series."""
    if args.market == "csv":
        if args.csv is None:
            raise UsageError("--market csv needs --csv FILE")
        series = load_csv(args.csv, args.dt)
        config = GameConfig(series.num_securities, series.num_rounds, args.dt)
        spec = MarketSpec("replay", rows=tuple(map(tuple, series.rows.tolist())), width=config.width)
        return spec, config, series
    width = _width(args)
    config = GameConfig(width - 1, args.N, args.dt)
    if args.market == "adversarial":
        return MarketSpec("alternating", amplitude=args.amplitude, width=width), config, None
    mu = _broadcast(args.mu, width, "mu")
    sigma = _broadcast(args.sigma, width, "sigma")
    return MarketSpec("gbm", mu=mu, sigma=sigma, corr=args.corr, width=width), config, None


def _market_echo(spec: MarketSpec) -> dict:
    d = {"kind": spec.kind}
    if spec.kind == "gbm":
        d.update(mu=list(spec.mu), sigma=list(spec.sigma), corr=spec.corr)
    elif spec.kind == "alternating":
        d.update(amplitude=spec.amplitude)
    return d


def _epsilons_for(epsilon: float):
    if not 0.0 < epsilon < 1.0:
        raise UsageError("--epsilon must lie in (0, 1)")
    return sorted(set(EPSILON_GRID) | {epsilon})


def _write_report(report: RunReport, args) -> None:
    text = report.to_json(timing=not args.no_timing)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.json:
        sys.stdout.write(text)
    else:
        sys.stdout.write(render_run(report))


def _run_play(args, command: str, config: GameConfig, spec: MarketSpec, investor_spec: str, series=None):
    if not args.alpha > 0:
        raise UsageError("--alpha must be positive")
    started = time.perf_counter()
    investor = _investor(investor_spec, config.width)
    market = as_market(series) if series is not None else spec.build(seed=args.seed)
    play = play_market(config, investor, market, _epsilons_for(args.epsilon), keep_paths=bool(args.figure))
    body = play_report(play, args.alpha, args.epsilon)
    report = RunReport(
        command=command,
        config={
            "K": config.num_securities,
            "N": config.num_rounds,
            "dt": config.dt,
            "T": config.horizon,
            "market": _market_echo(spec) if series is None else {"kind": "csv", "source": series.source},
            "investor": investor_spec,
            "alpha": args.alpha,
            "epsilon": args.epsilon,
        },
        meta={"seed": getattr(args, "seed", None), "version": __version__},
        timing={"elapsed_seconds": time.perf_counter() - started},
        **body,
    )
    if args.figure:
        from capgame.plotting import plot_capital_paths
        from capgame.bounds import blend_label, short_blend_label

        keys = ["investor", "index", blend_label(args.epsilon)]
        if args.epsilon < 1.0 / 3.0:
            keys.append(short_blend_label(args.epsilon))
        plot_capital_paths(play.paths, config.dt, args.figure, labels=keys)
    return report, market


def cmd_simulate(args) -> int:
    spec, config, series = _market(args)
    report, market = _run_play(args, "simulate", config, spec, args.investor, series)
    if args.dump_path:
        x = market.returns(config)
        labels = series.labels if series is not None else None
        write_csv(path_series(x, config.dt, labels), args.dump_path)
    _write_report(report, args)
    return EXIT_OK


def cmd_analyze(args) -> int:
    series = load_csv(args.csv, args.dt)
    if series.num_securities == 0:
        # a lone index column: Investor can only hold the index
        series.rows = np.hstack([series.rows, series.rows])
        series.labels = series.labels + [series.labels[0]]
        investor = "hold-index"
    else:
        investor = args.investor or "fixed:" + ",".join(
            "1" if k == 1 else "0" for k in range(series.num_securities + 1)
        )
    config = GameConfig(series.num_securities, series.num_rounds, args.dt)
    spec = MarketSpec("replay", width=config.width)
    report, _ = _run_play(args, "analyze", config, spec, investor, series)
    _write_report(report, args)
    return EXIT_OK


def cmd_verify(args) -> int:
    spec, config, _ = _market(args)
    investor = _investor(args.investor, config.width)
    for e in args.epsilons:
        if not 0.0 < e < 1.0:
            raise UsageError("every epsilon must lie in (0, 1)")
    if any(a <= 0 for a in args.alphas):
        raise UsageError("every alpha must be positive")
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    started = time.perf_counter()
    result = witness_sweep(
        args.trials,
        args.seed,
        config,
        spec,
        investor,
        epsilons=args.epsilons,
        alphas=args.alphas,
        scale=args.corrupt_bound if args.corrupt_bound is not None else 1.0,
        workers=args.threads,
    )
    tally = result.tally()
    report = {
        "command": "verify",
        "config": {
            "K": config.num_securities,
            "N": config.num_rounds,
            "dt": config.dt,
            "T": config.horizon,
            "market": _market_echo(spec),
            "investor": args.investor,
            "epsilons": list(args.epsilons),
            "alphas": list(args.alphas),
            "trials": args.trials,
            "corrupt_bound": args.corrupt_bound,
        },
        "meta": {"seed": args.seed, "version": __version__},
        "tally": tally,
        "failures": [
            {"trial": t.trial, "check": c, "epsilon": e, "alpha": a}
            for t in result.trials
            for c, e, a in t.failures
        ][:100],
        "verified": result.ok,
    }
    if not args.no_timing:
        report["timing"] = {"elapsed_seconds": time.perf_counter() - started}
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.json:
        sys.stdout.write(text)
    else:
        sys.stdout.write(format_table(sorted(tally.items()), header=("check", "value")))
        sys.stdout.write(f"verified: {result.ok}\n")
    if args.figure:
        from capgame.plotting import plot_verify

        plot_verify(result.trials, args.figure)
    return EXIT_OK if result.ok else EXIT_VIOLATION


def cmd_sweep(args) -> int:
    spec, _, _ = _market(args)
    if spec.kind != "gbm":
        raise UsageError("sweep needs --market gbm")
    investor = _investor(args.investor, spec.width)
    if not args.dt_list:
        raise UsageError("--dt-list is empty")
    rows = convergence_sweep(args.dt_list, args.T, args.seed, spec, investor, args.alpha)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_rows_csv(rows, SWEEP_COLUMNS, fh)
    else:
        write_rows_csv(rows, SWEEP_COLUMNS, sys.stdout)
    if args.figure:
        from capgame.plotting import plot_sweep

        plot_sweep(rows, args.figure)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="capgame", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"capgame {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def output_flags(p, report=True):
        p.add_argument("--out", type=Path, help="write the report here")
        p.add_argument("--figure", type=Path, help="also render a PNG figure here (needs matplotlib)")
        if report:
            p.add_argument("--json", action="store_true", help="print JSON instead of the table")
            p.add_argument("--no-timing", action="store_true", help="omit timing so reports are byte-comparable")

    p = sub.add_parser("simulate", help="play one game and report")
    _add_market_flags(p)
    p.add_argument("--dump-path", type=Path, help="write the return path as CSV")
    output_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="analyse an observed return file")
    p.add_argument("--csv", type=Path, required=True)
    p.add_argument("--dt", type=float, required=True, help="round length, e.g. 1/252 = 0.003968 for daily data in years")
    p.add_argument("--investor", default=None, help="how s is formed (default: hold column 1)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--epsilon", type=float, default=0.1)
    output_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser(
        "verify",
        help="witness-implication sweep",
        description="Checks the blend, short-blend and split witness implications and the "
        "deficit sandwich on every trial.  Default grids: epsilon 0.01,0.1,0.3; "
        "alpha 0.5,0.1,0.01 (three orders of magnitude).",
    )
    _add_market_flags(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--epsilons", type=_floats, default=list(DEFAULT_EPSILONS))
    p.add_argument("--alphas", type=_floats, default=list(DEFAULT_ALPHAS))
    p.add_argument("--threads", type=int, default=None, help="worker processes (default: $CAPM_GAME_THREADS or CPU count)")
    p.add_argument("--corrupt-bound", type=float, default=None, metavar="FACTOR",
                   help="test hook: scale every bound by FACTOR (negative control)")
    output_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="dt convergence sweep as CSV")
    _add_market_flags(p)
    p.add_argument("--dt-list", type=_floats, default=[1e-2, 1e-3, 1e-4])
    p.add_argument("--T", type=float, default=50.0, help="fixed horizon")
    output_flags(p, report=False)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"capgame: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CAPGameError as exc:
        print(f"capgame: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
