"""Command line front end.

Four verbs drive the pipeline end to end:

    qfolio synth     generate a synthetic price CSV
    qfolio train     train the three-agent ensemble from a JSON config
    qfolio backtest  run the strategy/cost/portfolio grid on the test split
    qfolio report    verify a run directory and print/export its results

Exit codes: 0 success, 2 bad configuration or flags, 3 bad input data,
4 missing or malformed artifact, 5 integrity check failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
from datetime import date, datetime, timezone
from pathlib import Path

from . import __version__, backtest, data
from .agent import Checkpoint, TrainConfig, train_ensemble
from .errors import ArtifactError, ConfigError, DataError, IntegrityError

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "qfolio-manifest"
MANIFEST_VERSION = 1
CHECKPOINT_DIR = "checkpoints"
REPORT_DIR = "reports"
SERIES_DIR = "series"
PHASE_TOLERANCE = 1e-9

_TRAIN_KEYS = tuple(f.name for f in dataclasses.fields(TrainConfig) if f.name != "seed")


# ---------------------------------------------------------------- config file


def _parse_iso_date(value, ctx: str) -> date:
    try:
        return date.fromisoformat(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{ctx}: expected an ISO date (YYYY-MM-DD), got {value!r}") from None


def _require(obj: dict, key: str, ctx: str):
    if key not in obj:
        raise ConfigError(f"config is missing {ctx}{key}")
    return obj[key]


def load_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config not found: {p}")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    seed = _require(obj, "seed", "")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    _require(obj, "out", "")
    return obj


def _resolve(base_dir: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base_dir / p


def _train_config(obj: dict) -> TrainConfig:
    block = obj.get("train", {})
    if not isinstance(block, dict):
        raise ConfigError("train section must be a JSON object")
    unknown = set(block) - set(_TRAIN_KEYS)
    if unknown:
        raise ConfigError(f"unknown train option(s): {', '.join(sorted(unknown))}")
    cfg = TrainConfig(**block, seed=int(obj["seed"]) + 1)
    try:
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"train.{exc}") from None
    return cfg


def _split_spec(obj: dict) -> data.SplitSpec:
    block = _require(obj, "split", "")
    if not isinstance(block, dict):
        raise ConfigError("split section must be a JSON object")
    ranges = {}
    for name in ("train", "validation", "test"):
        pair = _require(block, name, "split.")
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(f"split.{name} must be a [start, end] date pair")
        ranges[name] = (
            _parse_iso_date(pair[0], f"split.{name}"),
            _parse_iso_date(pair[1], f"split.{name}"),
        )
    try:
        return data.SplitSpec(ranges["train"], ranges["validation"], ranges["test"])
    except DataError as exc:
        raise ConfigError(f"split: {exc}") from None


def _synth_spec(block: dict, ctx: str = "synthetic") -> data.SynthSpec:
    if not isinstance(block, dict):
        raise ConfigError(f"{ctx} section must be a JSON object")
    known = {"model", "assets", "days", "drift", "volatility", "signal_strength", "noise_scale", "start"}
    unknown = set(block) - known
    if unknown:
        raise ConfigError(f"unknown {ctx} option(s): {', '.join(sorted(unknown))}")
    kwargs = {
        "model": _require(block, "model", f"{ctx}."),
        "n_assets": _require(block, "assets", f"{ctx}."),
        "n_days": _require(block, "days", f"{ctx}."),
    }
    for key in ("drift", "volatility", "signal_strength", "noise_scale"):
        if key in block:
            kwargs[key] = block[key]
    if "start" in block:
        kwargs["start"] = _parse_iso_date(block["start"], f"{ctx}.start")
    try:
        return data.SynthSpec(**kwargs)
    except (DataError, TypeError) as exc:
        raise ConfigError(f"{ctx}: {exc}") from None


def _build_market(obj: dict, base_dir: Path) -> tuple[data.ReturnMatrix, dict | None]:
    """Full-universe returns plus market caps (None for synthetic data)."""
    has_data = "data" in obj
    has_synth = "synthetic" in obj
    if has_data == has_synth:
        raise ConfigError("config must provide exactly one of 'data' or 'synthetic'")
    if has_data:
        block = obj["data"]
        if not isinstance(block, dict) or "prices" not in block:
            raise ConfigError("data section needs a 'prices' CSV path")
        table = data.load_prices(_resolve(base_dir, block["prices"]))
        caps = None
        if "caps" in block:
            caps = data.load_caps(_resolve(base_dir, block["caps"]))
            missing = set(table.tickers) - set(caps)
            if missing:
                raise DataError(f"caps file lacks entries for: {', '.join(sorted(missing))}")
    else:
        spec = _synth_spec(obj["synthetic"])
        table = data.gen_synthetic(spec, seed=int(obj["seed"]))
        caps = None
    return data.compute_returns(table), caps


def _resolve_portfolios(obj: dict, tickers: tuple, caps: dict | None) -> list[data.PortfolioSpec]:
    entries = _require(obj, "portfolios", "")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("portfolios must be a non-empty list")
    synthetic = caps is None
    out = []
    for i, entry in enumerate(entries):
        ctx = f"portfolios[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{ctx} must be a JSON object")
        kind = _require(entry, "kind", f"{ctx}.")
        if kind not in data.PORTFOLIO_KINDS:
            raise ConfigError(f"{ctx}.kind: unknown kind {kind!r}, expected one of {data.PORTFOLIO_KINDS}")
        if synthetic and kind in ("big", "small"):
            raise ConfigError(f"{ctx}: kind {kind!r} needs market caps, and synthetic data has none")
        size = entry.get("size", len(tickers) if kind == "all" else None)
        if size is None:
            raise ConfigError(f"{ctx}.size is required for kind {kind!r}")
        if isinstance(size, bool) or not isinstance(size, int) or size < 1:
            raise ConfigError(f"{ctx}.size must be a positive integer, got {size!r}")
        cap_source = caps if caps is not None else {t: 1.0 for t in tickers}
        try:
            out.append(data.group_by_cap(cap_source, size, kind, seed=entry.get("seed")))
        except DataError as exc:
            raise ConfigError(f"{ctx}: {exc}") from None
    return out


def _costs(obj: dict) -> list[float]:
    entries = _require(obj, "costs", "")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("costs must be a non-empty list of per-unit-turnover fractions")
    out = []
    for i, c in enumerate(entries):
        if not isinstance(c, (int, float)) or isinstance(c, bool) or c < 0:
            raise ConfigError(f"costs[{i}] must be a number >= 0, got {c!r}")
        out.append(float(c))
    if len(set(out)) != len(out):
        raise ConfigError("costs must be distinct")
    return out


def _allocation(obj: dict) -> tuple[str, int]:
    block = obj.get("allocation", {})
    if not isinstance(block, dict):
        raise ConfigError("allocation section must be a JSON object")
    mode = block.get("mode", "threshold")
    if mode not in backtest.ALLOCATION_MODES:
        raise ConfigError(f"allocation.mode: unknown mode {mode!r}, expected one of {backtest.ALLOCATION_MODES}")
    k = block.get("k", 1)
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise ConfigError(f"allocation.k must be a positive integer, got {k!r}")
    return mode, k


def _phases(obj: dict) -> tuple[date, date] | None:
    if "phases" not in obj:
        return None
    pair = obj["phases"]
    if not isinstance(pair, (list, tuple)) or len(pair) != 2:
        raise ConfigError("phases must be a [date, date] pair")
    b1 = _parse_iso_date(pair[0], "phases[0]")
    b2 = _parse_iso_date(pair[1], "phases[1]")
    if b2 <= b1:
        raise ConfigError(f"phases must be ordered, got {b1} >= {b2}")
    return b1, b2


# ------------------------------------------------------------------- manifest


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _manifest_path(run_dir: Path) -> Path:
    return run_dir / MANIFEST_NAME


def load_manifest(run_dir) -> dict:
    p = _manifest_path(Path(run_dir))
    if not p.exists():
        raise IntegrityError(f"no manifest at {p}; run the train stage first")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"manifest {p} is corrupt: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("format") != MANIFEST_FORMAT:
        raise IntegrityError(f"manifest {p} has unexpected format marker")
    if not isinstance(obj.get("artifacts"), dict) or not isinstance(obj.get("stages"), list):
        raise IntegrityError(f"manifest {p} is missing required sections")
    return obj


def _manifest_open(run_dir: Path, config_sha: str) -> dict:
    p = _manifest_path(run_dir)
    if p.exists():
        manifest = load_manifest(run_dir)
    else:
        manifest = {
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "code_version": __version__,
            "created_utc": _utc_now(),
            "stages": [],
            "artifacts": {},
        }
    manifest["config_sha256"] = config_sha
    return manifest


def _manifest_commit(run_dir: Path, manifest: dict, stage: str) -> None:
    manifest["stages"].append(stage)
    manifest["updated_utc"] = _utc_now()
    _manifest_path(run_dir).write_text(json.dumps(manifest, sort_keys=True, indent=2), encoding="utf-8")


def _record(manifest: dict, run_dir: Path, path: Path) -> None:
    manifest["artifacts"][path.relative_to(run_dir).as_posix()] = _sha256(path)


def verify_manifest(run_dir) -> dict:
    """Check every recorded artifact's digest; raise IntegrityError on drift."""
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    for rel, expected in sorted(manifest["artifacts"].items()):
        p = run_dir / rel
        if not p.exists():
            raise IntegrityError(f"artifact {rel} is missing from {run_dir}")
        actual = _sha256(p)
        if actual != expected:
            raise IntegrityError(f"artifact {rel} fails its integrity check (sha256 changed)")
    return manifest


# ------------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    try:
        spec = data.SynthSpec(
            model=args.model,
            n_assets=args.assets,
            n_days=args.days,
            drift=args.drift,
            volatility=args.volatility,
            signal_strength=args.signal_strength,
            noise_scale=args.noise_scale,
            start=_parse_iso_date(args.start, "--start"),
        )
    except DataError as exc:
        raise ConfigError(str(exc)) from None
    table = data.gen_synthetic(spec, seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "prices.csv"
    data.write_prices_csv(table, out_path)
    print(f"wrote {table.n_dates} days x {table.n_assets} assets to {out_path}")
    return 0


def _prepare(args):
    cfg_path = Path(args.config)
    obj = load_config(cfg_path)
    base_dir = cfg_path.resolve().parent
    run_dir = _resolve(base_dir, obj["out"])
    returns, caps = _build_market(obj, base_dir)
    tcfg = _train_config(obj)
    splits = data.split(returns, _split_spec(obj))
    config_sha = hashlib.sha256(cfg_path.read_bytes()).hexdigest()
    return obj, base_dir, run_dir, returns, caps, tcfg, splits, config_sha


def cmd_train(args) -> int:
    obj, _, run_dir, _, _, tcfg, splits, config_sha = _prepare(args)
    train_rm, val_rm, _ = splits
    ckpt_dir = run_dir / CHECKPOINT_DIR
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    master = int(obj["seed"])
    seeds = [master + 1, master + 2, master + 3]
    progress_paths = [ckpt_dir / f"progress_{i}.jsonl" for i in range(1, 4)]
    checkpoints = train_ensemble(tcfg, train_rm, val_rm, seeds, progress_paths=progress_paths)

    manifest = _manifest_open(run_dir, config_sha)
    for i, ckpt in enumerate(checkpoints, start=1):
        path = ckpt_dir / f"agent_{i}.json"
        ckpt.save(path)
        _record(manifest, run_dir, path)
        _record(manifest, run_dir, progress_paths[i - 1])
        print(
            f"agent {i}: seed {seeds[i - 1]}, best validation score "
            f"{ckpt.validation_score:.6f} at iteration {ckpt.iteration_at_save}"
        )
    _manifest_commit(run_dir, manifest, "train")
    print(f"manifest: {_manifest_path(run_dir)}")
    return 0


def _load_members(ckpt_dir: Path, window: int, width: int) -> tuple:
    members = []
    for i in range(1, 4):
        path = ckpt_dir / f"agent_{i}.json"
        ckpt = Checkpoint.load(path)
        if ckpt.params.input_dim != window + 1:
            raise ArtifactError(
                f"{path}: input_dim {ckpt.params.input_dim} does not match window {window} (+1 for last action)"
            )
        if ckpt.params.hidden_width != width:
            raise ArtifactError(f"{path}: hidden_width {ckpt.params.hidden_width} does not match config ({width})")
        members.append(ckpt.params)
    return tuple(members)


def cmd_backtest(args) -> int:
    obj, _, run_dir, returns, caps, tcfg, splits, config_sha = _prepare(args)
    _, _, test_rm = splits
    ckpt_dir = Path(args.checkpoints) if args.checkpoints else run_dir / CHECKPOINT_DIR
    members = _load_members(ckpt_dir, tcfg.window, tcfg.hidden_width)

    portfolios = _resolve_portfolios(obj, returns.tickers, caps)
    costs = _costs(obj)
    mode, k = _allocation(obj)
    phase_bounds = _phases(obj)

    report_dir = run_dir / REPORT_DIR
    report_dir.mkdir(parents=True, exist_ok=True)
    manifest = _manifest_open(run_dir, config_sha)

    cells = {}
    n_written = 0
    for cost in costs:
        for spec in portfolios:
            sub = test_rm.select(spec.tickers)
            for strategy in backtest.STRATEGIES:
                if strategy == "agent":
                    policy = backtest.PolicySpec("agent", members=members, allocation_mode=mode, k=k)
                else:
                    policy = backtest.PolicySpec(strategy)
                report = backtest.run(policy, sub, cost, window=tcfg.window)
                if phase_bounds is not None:
                    report = backtest.attach_phases(report, *phase_bounds)
                bps = f"{round(cost * 1e4, 10):g}"
                path = report_dir / f"{bps}bp_{spec.size}_{spec.kind}_{strategy}.json"
                report.save(path)
                _record(manifest, run_dir, path)
                n_written += 1
                cells[(cost, spec.size, spec.kind, strategy)] = report.cumulative_return

    rows = backtest.report_table(cells)
    table_csv = run_dir / "table.csv"
    with open(table_csv, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    table_txt = run_dir / "table.txt"
    table_txt.write_text(backtest.render_table(rows), encoding="utf-8")
    _record(manifest, run_dir, table_csv)
    _record(manifest, run_dir, table_txt)
    _manifest_commit(run_dir, manifest, "backtest")

    print(backtest.render_table(rows), end="")
    print(f"wrote {n_written} reports to {report_dir}")
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    manifest = verify_manifest(run_dir)
    print(f"verified {len(manifest['artifacts'])} artifacts in {run_dir}")

    table_txt = run_dir / "table.txt"
    if not table_txt.exists():
        raise ArtifactError(f"{table_txt} not found; run the backtest stage first")
    print(table_txt.read_text(encoding="utf-8"), end="")

    report_paths = sorted((run_dir / REPORT_DIR).glob("*.json"))
    series_dir = run_dir / SERIES_DIR
    series_dir.mkdir(parents=True, exist_ok=True)
    phase_rows = []
    worst_gap = 0.0
    for path in report_paths:
        report = backtest.BacktestReport.load(path)
        series_path = series_dir / f"wealth_{path.stem}.csv"
        with open(series_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["date", "wealth"])
            for d, w in zip(report.dates, report.wealth):
                writer.writerow([d.isoformat(), repr(float(w))])
        if report.phase_returns is not None:
            r1, r2, r3 = report.phase_returns
            chained = (1.0 + r1) * (1.0 + r2) * (1.0 + r3) - 1.0
            gap = abs(chained - report.cumulative_return)
            worst_gap = max(worst_gap, gap)
            if gap > PHASE_TOLERANCE:
                raise IntegrityError(
                    f"artifact {path.name}: chained phase returns disagree with the total by {gap:.3e}"
                )
            phase_rows.append(
                [
                    backtest.cost_label(report.cost),
                    path.stem,
                    report.strategy,
                    repr(r1),
                    repr(r2),
                    repr(r3),
                    repr(report.cumulative_return),
                ]
            )
    print(f"wrote {len(report_paths)} wealth series to {series_dir}")
    if phase_rows:
        phases_path = run_dir / "phases.csv"
        with open(phases_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["cost", "report", "strategy", "phase1", "phase2", "phase3", "total"])
            writer.writerows(phase_rows)
        print(f"phase identity holds for all reports (max gap {worst_gap:.3e}); wrote {phases_path}")
    return 0


# --------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qfolio", description="Q-learning portfolio toolkit")
    parser.add_argument("--version", action="version", version=f"qfolio {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic price CSV")
    p.add_argument("--model", required=True, choices=data.SYNTH_MODELS)
    p.add_argument("--assets", required=True, type=int)
    p.add_argument("--days", required=True, type=int)
    p.add_argument("--drift", type=float, default=0.0)
    p.add_argument("--volatility", type=float, default=0.0)
    p.add_argument("--signal-strength", type=float, default=0.001)
    p.add_argument("--noise-scale", type=float, default=0.0)
    p.add_argument("--start", default="2010-01-01")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, help="directory for prices.csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the three-agent ensemble")
    p.add_argument("--config", required=True, help="JSON run config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("backtest", help="run the strategy/cost/portfolio grid")
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--checkpoints", default=None, help="checkpoint directory (default: <out>/checkpoints)")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("report", help="verify a run directory and export series")
    p.add_argument("--run", required=True, help="run directory with a manifest")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except IntegrityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
