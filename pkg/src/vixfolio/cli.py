"""Command-line entry point: ``vixfolio run | validate | version``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver failure
or a wealth wipeout.  Settings resolve as command-line flag, then config file
value, then built-in default.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import math
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import build_comparison, cross_moment_table, density_data, tr_delta
from .backtest import BacktestResult, WipeoutError, paper_constraints, run
from .config import ConfigError, RunConfig, dump_config, load_document, validate_config
from .market_data import (
    DataError,
    FormatSpec,
    ReturnMatrix,
    align_calendars,
    compute_returns,
    header_columns,
    load_prices,
)
from .solver import ConstraintSet, SolverError
from .strategies import STRATEGY_IDS

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4

log = logging.getLogger("vixfolio.cli")


@dataclass(frozen=True)
class PipelineOutcome:
    status: int
    files: tuple[Path, ...] = ()
    message: str = ""


def num(v: float) -> str:
    """17 significant digits; NA marks an undefined value."""
    v = float(v)
    if math.isnan(v):
        return "NA"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def load_config(path: str | Path, overrides: dict[str, str] | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = load_document(path)
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path}: {exc.strerror or exc}"]) from None
    except Exception as exc:  # configparser syntax errors
        raise ConfigError([f"config: cannot parse {path}: {exc}"]) from None
    raw.update(overrides or {})
    return validate_config(raw, base_dir=path.resolve().parent)


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def restrict_dates(matrix: ReturnMatrix, cfg: RunConfig) -> ReturnMatrix:
    """Keep the evaluation period [date_from, date_to] plus the M rows of history before it."""
    m = cfg.window_size
    dates = matrix.dates
    last = len(dates) - 1
    if cfg.date_to is not None:
        last = max((i for i, d in enumerate(dates) if d <= cfg.date_to), default=-1)
    if cfg.date_from is not None:
        first = next((i for i, d in enumerate(dates) if d >= cfg.date_from), len(dates))
        if first < m:
            raise DataError(
                f"date_from {cfg.date_from}: only {first} return rows precede it, the estimation window needs {m}"
            )
    else:
        first = m
    if first > last:
        raise DataError(
            f"no evaluation dates: need more than {m} return rows up to {cfg.date_to or dates[-1]}, have {last + 1}"
        )
    keep = slice(first - m, last + 1)
    return ReturnMatrix(dates[keep], matrix.assets, matrix.returns[keep], matrix.shortable_index)


def load_matrix(cfg: RunConfig) -> tuple[ReturnMatrix, RunConfig]:
    """Return matrix restricted to the requested dates, and the config with columns resolved."""
    if cfg.data_path is None:
        raise ConfigError(["data_path: not set (use the config key or --data)"])
    columns = dict(cfg.columns) or header_columns(cfg.data_path, cfg.date_column, cfg.delimiter)
    if cfg.shortable is not None and cfg.shortable not in columns:
        raise DataError(f"shortable asset {cfg.shortable!r} is not among the data columns {list(columns)}")
    if len(columns) < 2:
        raise DataError(f"{cfg.data_path}: need at least two asset columns")
    spec = FormatSpec(columns, cfg.date_column, cfg.delimiter, cfg.date_format)
    series = align_calendars(load_prices(cfg.data_path, spec))
    matrix = compute_returns(series, cfg.shortable)
    return restrict_dates(matrix, cfg), replace(cfg, columns=columns)


def _universes(cfg: RunConfig) -> tuple[str, ...]:
    return ("with", "without") if cfg.universe_mode == "both" else (cfg.universe_mode,)


def _job(args) -> BacktestResult:
    matrix, strategy, universe, scfg = args
    if universe == "without":
        reduced = matrix.without_asset(matrix.shortable_index)
        return run(reduced, strategy, scfg, ConstraintSet(reduced.n_assets), universe="without")
    return run(matrix, strategy, scfg, paper_constraints(matrix), universe="with")


def run_backtests(matrix: ReturnMatrix, cfg: RunConfig, jobs: int = 1) -> dict[str, list[BacktestResult]]:
    """All strategy x universe backtests; results come back in a fixed order whatever ``jobs`` is."""
    scfg = cfg.strategy_config()
    strategies = sorted(cfg.strategies, key=STRATEGY_IDS.index)
    tasks = [(matrix, s, u, scfg) for u in _universes(cfg) for s in strategies]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_job, tasks))
    else:
        results = [_job(t) for t in tasks]
    out: dict[str, list[BacktestResult]] = {}
    for res in results:
        out.setdefault(res.universe, []).append(res)
    return out


# report writers -------------------------------------------------------------


def _write(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _flag_counts(res: BacktestResult) -> str:
    counts: dict[str, int] = {}
    for day in res.flags:
        for f in day:
            counts[f] = counts.get(f, 0) + 1
    return ";".join(f"{k}={counts[k]}" for k in sorted(counts))


def write_reports(outdir: Path, cfg: RunConfig, matrix: ReturnMatrix, results, digest: str) -> list[str]:
    names = []
    for universe, runs in results.items():
        for res in runs:
            tag = f"{res.strategy_id}_{universe}"
            _write(
                outdir / f"weights_{tag}.csv",
                ["date", *res.assets, "flags"],
                [
                    [d.isoformat(), *map(num, w.weights), ";".join(w.flags)]
                    for d, w in zip(res.dates, res.weights)
                ],
            )
            _write(
                outdir / f"returns_{tag}.csv",
                ["date", "portfolio_return", "wealth"],
                [[d.isoformat(), num(r), num(w)] for d, r, w in zip(res.dates, res.portfolio_returns, res.wealth)],
            )
            rows = []
            try:
                dens = density_data(res.portfolio_returns, bins=cfg.bins)
            except ValueError as exc:
                log.warning("%s: no density data (%s)", tag, exc)
            else:
                width = np.diff(dens.bin_edges)
                centers = dens.bin_edges[:-1] + width / 2
                rows += [["histogram", num(x), num(b), num(y)] for x, b, y in zip(centers, width, dens.hist_density)]
                rows += [["kde", num(x), num(dens.bandwidth), num(y)] for x, y in zip(dens.grid, dens.kde)]
            _write(outdir / f"density_{tag}.csv", ["series", "x", "width", "density"], rows)
            names += [f"weights_{tag}.csv", f"returns_{tag}.csv", f"density_{tag}.csv"]

    tables = {}
    for universe, runs in results.items():
        table = build_comparison(
            runs,
            r_f=cfg.r_f,
            gamma=cfg.gamma,
            turnover_mode=cfg.turnover_mode,
            count_initial_turnover=cfg.count_initial_turnover,
            asr_form=cfg.asr_form,
            kurtosis_convention=cfg.kurtosis_convention,
            extended=True,
        )
        tables[universe] = table
        _write(
            outdir / f"comparison_{universe}.csv",
            ["strategy", *table.columns, "flags"],
            [
                [sid, *map(num, table.cells[i]), ";".join(table.flags[sid])]
                for i, sid in enumerate(table.rows)
            ],
        )
        rows = []
        for kind in ("covariance", "correlation"):
            cm = cross_moment_table(runs, kind)
            rows += [[kind, asset, *map(num, cm.cells[i])] for i, asset in enumerate(cm.rows)]
        _write(outdir / f"crossmoments_{universe}.csv", ["measure", "asset", *(r.strategy_id for r in runs)], rows)
        names += [f"comparison_{universe}.csv", f"crossmoments_{universe}.csv"]

    if set(tables) == {"with", "without"}:
        _write(
            outdir / "tr_delta.csv",
            ["strategy", "TR_with", "TR_without", "delta"],
            [[sid, num(a), num(b), num(d)] for sid, a, b, d in tr_delta(tables["with"], tables["without"])],
        )
        names.append("tr_delta.csv")

    lines = [
        "# vixfolio run manifest; pass this file to `vixfolio run --config` to reproduce the run",
        f"manifest.version = {__version__}",
        f"manifest.data_sha256 = {digest}",
        f"manifest.evaluation_start = {matrix.dates[cfg.window_size].isoformat()}",
        f"manifest.evaluation_end = {matrix.dates[-1].isoformat()}",
        f"manifest.evaluation_days = {matrix.n_obs - cfg.window_size}",
    ]
    lines += [f"{k} = {v}" for k, v in dump_config(cfg)]
    for universe, runs in results.items():
        lines += [f"manifest.flags.{r.strategy_id}.{universe} = {_flag_counts(r)}" for r in runs]
    (outdir / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    names.append("manifest.txt")
    return names


def run_pipeline(cfg: RunConfig, jobs: int = 1) -> PipelineOutcome:
    """Load, backtest, and write every report; files appear only if the whole run succeeds."""
    try:
        matrix, cfg = load_matrix(cfg)
        digest = file_digest(cfg.data_path)
    except ConfigError as exc:
        return PipelineOutcome(EXIT_CONFIG, message=str(exc))
    except (DataError, OSError) as exc:
        return PipelineOutcome(EXIT_DATA, message=str(exc))
    try:
        results = run_backtests(matrix, cfg, jobs)
    except (SolverError, WipeoutError) as exc:
        return PipelineOutcome(EXIT_SOLVER, message=str(exc))

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".partial-", dir=outdir))
    try:
        names = write_reports(tmp, cfg, matrix, results, digest)
        for name in names:
            os.replace(tmp / name, outdir / name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return PipelineOutcome(EXIT_OK, tuple(outdir / n for n in names))


def _overrides(args) -> dict[str, str]:
    out = {}
    if args.data is not None:
        out["data_path"] = str(Path(args.data).resolve())
    if args.out is not None:
        out["output_dir"] = str(Path(args.out).resolve())
    for key, value in (
        ("strategies", args.strategies),
        ("date_from", args.date_from),
        ("date_to", args.date_to),
        ("universe_mode", args.universe),
        ("seed", args.seed),
    ):
        if value is not None:
            out[key] = str(value)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vixfolio", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the backtests and write reports")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--data")
    p_run.add_argument("--strategies", help=f"comma-separated subset of {','.join(STRATEGY_IDS)}")
    p_run.add_argument("--from", dest="date_from", help="first evaluation date (YYYY-MM-DD)")
    p_run.add_argument("--to", dest="date_to", help="last evaluation date (YYYY-MM-DD)")
    p_run.add_argument("--universe", choices=("with", "without", "both"))
    p_run.add_argument("--out")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--jobs", type=int, default=1, help="worker processes (output does not depend on it)")

    p_val = sub.add_parser("validate", help="check a config and print the resolved values")
    p_val.add_argument("--config", required=True)

    sub.add_parser("version", help="print the version")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    try:
        cfg = load_config(args.config, _overrides(args) if args.command == "run" else None)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        for key, value in dump_config(cfg, exclude=()):
            print(f"{key} = {value}")
        return EXIT_OK
    outcome = run_pipeline(cfg, jobs=max(1, args.jobs))
    if outcome.status != EXIT_OK:
        kind = {EXIT_CONFIG: "config", EXIT_DATA: "data", EXIT_SOLVER: "solver"}[outcome.status]
        print(f"{kind} error: {outcome.message}", file=sys.stderr)
    else:
        print(f"wrote {len(outcome.files)} files to {cfg.output_dir}")
    return outcome.status


if __name__ == "__main__":
    sys.exit(main())
