"""Market data layer: price/return tables, chronological splits, cap-ranked
portfolio selection, and seeded synthetic market generators."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

PORTFOLIO_KINDS = ("big", "random", "small", "all")
SYNTH_MODELS = ("gbm", "sign_follow")

PRICES_HEADER = ("date", "ticker", "close")
CAPS_HEADER = ("ticker", "cap")


def _frozen_matrix(values, rows: int, cols: int, what: str) -> np.ndarray:
    out = np.array(values, dtype=np.float64)
    if out.shape != (rows, cols):
        raise DataError(f"{what} matrix has shape {out.shape}, expected {(rows, cols)}")
    out.setflags(write=False)
    return out


def _check_dates(dates: Sequence[date]) -> tuple[date, ...]:
    dates = tuple(dates)
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise DataError("dates must be strictly increasing")
    return dates


def _check_tickers(tickers: Sequence[str]) -> tuple[str, ...]:
    tickers = tuple(tickers)
    if len(set(tickers)) != len(tickers):
        raise DataError("duplicate tickers")
    return tickers


@dataclass(frozen=True)
class PriceTable:
    """Dense adjusted-close grid: one row per date (ascending), one column per ticker.

    Immutable after construction; the matrix is stored read-only so tables can be
    shared freely across workers.
    """

    dates: tuple[date, ...]
    tickers: tuple[str, ...]
    prices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", _check_dates(self.dates))
        object.__setattr__(self, "tickers", _check_tickers(self.tickers))
        prices = _frozen_matrix(self.prices, len(self.dates), len(self.tickers), "price")
        if not np.all(prices > 0):  # also rejects NaN
            raise DataError("non-positive price in table")
        object.__setattr__(self, "prices", prices)

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    @property
    def n_assets(self) -> int:
        return len(self.tickers)


@dataclass(frozen=True)
class ReturnMatrix:
    """Simple (arithmetic) daily returns; row t is the return realized on dates[t].

    One row fewer than the source price table: row t is prices[t+1]/prices[t] - 1.
    """

    dates: tuple[date, ...]
    tickers: tuple[str, ...]
    returns: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", _check_dates(self.dates))
        object.__setattr__(self, "tickers", _check_tickers(self.tickers))
        returns = _frozen_matrix(self.returns, len(self.dates), len(self.tickers), "return")
        if not np.all(returns > -1.0):  # also rejects NaN
            raise DataError("return not greater than -1")
        object.__setattr__(self, "returns", returns)

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    def select(self, tickers: Sequence[str]) -> "ReturnMatrix":
        """Column subset in the given ticker order."""
        index = {t: j for j, t in enumerate(self.tickers)}
        missing = [t for t in tickers if t not in index]
        if missing:
            raise DataError(f"tickers not in matrix: {missing}")
        cols = [index[t] for t in tickers]
        return ReturnMatrix(self.dates, tuple(tickers), self.returns[:, cols])


@dataclass(frozen=True)
class SplitSpec:
    """Inclusive train/validation/test date intervals; disjoint and ordered."""

    train_range: tuple[date, date]
    validation_range: tuple[date, date]
    test_range: tuple[date, date]

    def __post_init__(self):
        for name, (lo, hi) in zip(("train", "validation", "test"), self._ranges()):
            if lo > hi:
                raise DataError(f"{name} range is empty: {lo} > {hi}")
        if not (self.train_range[1] < self.validation_range[0] < self.validation_range[1] < self.test_range[0]):
            raise DataError("split ranges must be disjoint and ordered train < validation < test")

    def _ranges(self) -> tuple[tuple[date, date], ...]:
        return (self.train_range, self.validation_range, self.test_range)


@dataclass(frozen=True)
class PortfolioSpec:
    """A named selection of tickers: cap-ranked (big/small), seeded random, or all.

    `size` is free-form; typical grids range from 10 to 500 stocks.
    """

    size: int
    kind: str
    tickers: tuple[str, ...]
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in PORTFOLIO_KINDS:
            raise DataError(f"unknown portfolio kind {self.kind!r}, expected one of {PORTFOLIO_KINDS}")
        if self.size < 1:
            raise DataError("portfolio size must be >= 1")
        object.__setattr__(self, "tickers", _check_tickers(self.tickers))
        if len(self.tickers) != self.size:
            raise DataError(f"portfolio holds {len(self.tickers)} tickers, size says {self.size}")


@dataclass(frozen=True)
class SynthSpec:
    """Synthetic market description.

    gbm: log-price random walk, per-day drift/volatility.
    sign_follow: tomorrow's mean return is +signal_strength when today's return
    was positive, else -signal_strength, plus Gaussian noise of scale noise_scale.
    """

    model: str
    n_assets: int
    n_days: int
    drift: float = 0.0
    volatility: float = 0.0
    signal_strength: float = 0.001
    noise_scale: float = 0.0
    start: date = date(2010, 1, 1)

    def __post_init__(self):
        if self.model not in SYNTH_MODELS:
            raise DataError(f"unknown synthetic model {self.model!r}, expected one of {SYNTH_MODELS}")
        if self.n_assets < 2:
            raise DataError("need >= 2 assets (cash return averages the other assets)")
        if self.n_days < 2:
            raise DataError("need >= 2 days to produce at least one return")
        if self.volatility < 0:
            raise DataError("volatility must be >= 0")
        if self.noise_scale < 0:
            raise DataError("noise_scale must be >= 0")


def _open_rows(source) -> Iterable[tuple[int, list[str]]]:
    """Yield (1-based line number, row) from a path or text stream."""
    if isinstance(source, (str, Path)):
        try:
            handle = open(source, "r", newline="")
        except OSError as exc:
            raise DataError(f"no such file: {source} ({exc.strerror})") from None
        close = True
    else:
        handle = source
        close = False
    try:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if row:
                yield lineno, row
    finally:
        if close:
            handle.close()


def load_prices(source) -> PriceTable:
    """Read a `date,ticker,close` CSV (path or text stream) into a dense PriceTable.

    The grid must be complete: every (date, ticker) pair exactly once. No
    imputation is attempted; gaps and duplicates are rejected with the offending
    cell or line number.
    """
    cells: dict[tuple[date, str], float] = {}
    rows = _open_rows(source)
    try:
        first = next(rows)
    except StopIteration:
        raise DataError("empty prices file") from None
    if tuple(h.strip().lower() for h in first[1]) != PRICES_HEADER:
        raise DataError(f"line {first[0]}: expected header {','.join(PRICES_HEADER)}")
    for lineno, row in rows:
        if len(row) != 3:
            raise DataError(f"line {lineno}: expected 3 fields, got {len(row)}")
        raw_date, ticker, raw_price = (f.strip() for f in row)
        try:
            d = date.fromisoformat(raw_date)
        except ValueError:
            raise DataError(f"line {lineno}: unparseable date {raw_date!r}") from None
        try:
            price = float(raw_price)
        except ValueError:
            raise DataError(f"line {lineno}: unparseable price {raw_price!r}") from None
        if not np.isfinite(price) or price <= 0:
            raise DataError(f"line {lineno}: non-positive price {raw_price} for ({d}, {ticker})")
        if (d, ticker) in cells:
            raise DataError(f"line {lineno}: duplicate (date, ticker) pair ({d}, {ticker})")
        cells[(d, ticker)] = price
    if not cells:
        raise DataError("prices file has a header but no rows")

    dates = sorted({d for d, _ in cells})
    tickers = sorted({t for _, t in cells})
    prices = np.empty((len(dates), len(tickers)), dtype=np.float64)
    for i, d in enumerate(dates):
        for j, t in enumerate(tickers):
            try:
                prices[i, j] = cells[(d, t)]
            except KeyError:
                raise DataError(f"missing cell ({d}, {t}): grid must be complete") from None
    return PriceTable(tuple(dates), tuple(tickers), prices)


def load_caps(source) -> dict[str, float]:
    """Read a `ticker,cap` CSV into a market-cap map."""
    caps: dict[str, float] = {}
    rows = _open_rows(source)
    try:
        first = next(rows)
    except StopIteration:
        raise DataError("empty caps file") from None
    if tuple(h.strip().lower() for h in first[1]) != CAPS_HEADER:
        raise DataError(f"line {first[0]}: expected header {','.join(CAPS_HEADER)}")
    for lineno, row in rows:
        if len(row) != 2:
            raise DataError(f"line {lineno}: expected 2 fields, got {len(row)}")
        ticker, raw_cap = (f.strip() for f in row)
        try:
            cap = float(raw_cap)
        except ValueError:
            raise DataError(f"line {lineno}: unparseable cap {raw_cap!r}") from None
        if not np.isfinite(cap) or cap <= 0:
            raise DataError(f"line {lineno}: non-positive cap for {ticker}")
        if ticker in caps:
            raise DataError(f"line {lineno}: duplicate ticker {ticker}")
        caps[ticker] = cap
    return caps


def write_prices_csv(table: PriceTable, path) -> None:
    """Write a PriceTable as a loadable `date,ticker,close` CSV, date-sorted.

    Prices are written with full repr precision so a write/load round trip is
    value-exact and repeated writes are byte-identical.
    """
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(PRICES_HEADER)
        for i, d in enumerate(table.dates):
            for j, t in enumerate(table.tickers):
                writer.writerow([d.isoformat(), t, repr(float(table.prices[i, j]))])


def compute_returns(table: PriceTable) -> ReturnMatrix:
    """Simple returns: row t is prices[t+1]/prices[t] - 1, dated at dates[t+1]."""
    if table.n_dates < 2:
        raise DataError("need at least 2 dates to compute returns")
    returns = table.prices[1:] / table.prices[:-1] - 1.0
    return ReturnMatrix(table.dates[1:], table.tickers, returns)


def split(returns: ReturnMatrix, spec: SplitSpec) -> tuple[ReturnMatrix, ReturnMatrix, ReturnMatrix]:
    """Row-slice the return matrix into (train, validation, test) by date.

    Slices are disjoint by construction (the ranges are); any range that selects
    no rows is an error.
    """
    dates = np.array(returns.dates)
    out = []
    for name, (lo, hi) in zip(("train", "validation", "test"), spec._ranges()):
        mask = (dates >= lo) & (dates <= hi)
        if not mask.any():
            raise DataError(f"empty slice: {name} range {lo}..{hi} selects no rows")
        idx = np.flatnonzero(mask)
        out.append(ReturnMatrix(tuple(returns.dates[i] for i in idx), returns.tickers, returns.returns[idx]))
    return out[0], out[1], out[2]


def group_by_cap(caps: dict[str, float], size: int, kind: str, seed: int | None = None) -> PortfolioSpec:
    """Select a portfolio from the universe by market cap.

    big/small take the top/bottom `size` by cap (ties broken by ticker so the
    result does not depend on input ordering); random samples uniformly without
    replacement using `seed`; all takes the entire universe.
    """
    if kind not in PORTFOLIO_KINDS:
        raise DataError(f"unknown portfolio kind {kind!r}, expected one of {PORTFOLIO_KINDS}")
    if size > len(caps):
        raise DataError(f"size {size} exceeds universe of {len(caps)} tickers")
    if kind == "big":
        chosen = [t for t, _ in sorted(caps.items(), key=lambda kv: (-kv[1], kv[0]))[:size]]
    elif kind == "small":
        chosen = [t for t, _ in sorted(caps.items(), key=lambda kv: (kv[1], kv[0]))[:size]]
    elif kind == "random":
        if seed is None:
            raise DataError("random grouping requires a seed")
        rng = np.random.default_rng(seed)
        universe = sorted(caps)
        chosen = [universe[i] for i in rng.choice(len(universe), size=size, replace=False)]
    else:  # all
        if size != len(caps):
            raise DataError(f"kind 'all' requires size == universe ({len(caps)}), got {size}")
        chosen = sorted(caps)
    return PortfolioSpec(size=size, kind=kind, tickers=tuple(chosen), seed=seed)


def gen_synthetic(spec: SynthSpec, seed: int) -> PriceTable:
    """Generate a synthetic PriceTable (consecutive calendar dates, base price 100).

    Deterministic: identical (spec, seed) yields a bit-identical table.
    """
    rng = np.random.default_rng(seed)
    n_ret = spec.n_days - 1
    m = spec.n_assets
    if spec.model == "gbm":
        shocks = rng.standard_normal((n_ret, m))
        log_returns = spec.drift + spec.volatility * shocks
        log_prices = np.vstack([np.zeros((1, m)), np.cumsum(log_returns, axis=0)])
        prices = 100.0 * np.exp(log_prices)
    else:  # sign_follow
        mu = spec.signal_strength
        rets = np.empty((n_ret, m), dtype=np.float64)
        first_signs = np.where(rng.random(m) < 0.5, -1.0, 1.0)
        rets[0] = mu * first_signs + spec.noise_scale * rng.standard_normal(m)
        for t in range(1, n_ret):
            lean = np.where(rets[t - 1] > 0.0, mu, -mu)
            rets[t] = lean + spec.noise_scale * rng.standard_normal(m)
        prices = np.vstack([np.full((1, m), 100.0), 100.0 * np.cumprod(1.0 + rets, axis=0)])
    dates = tuple(spec.start + timedelta(days=i) for i in range(spec.n_days))
    tickers = tuple(f"S{i:03d}" for i in range(m))
    return PriceTable(dates, tickers, prices)
