"""Portfolio backtester.

Turns per-asset policies into portfolio weight paths and compounds wealth with
proportional costs charged on turnover:

    wealth[t+1] = wealth[t] * (1 + w . r[t+1]) * (1 - cost * turnover[t])

where turnover is the L1 distance between the target weights and the previous
weights after drifting them with realized returns. Uninvested weight sits in
cash and earns zero. The first allocation of a run is free; costs start with
the first rebalance after inception.

Strategies: the trained ensemble (mean of three Q-nets, long assets whose hold
Q exceeds the cash Q), buy-and-hold, momentum (long assets whose trailing mean
return is positive), and reversion (the complement).
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path

import numpy as np

from .data import ReturnMatrix
from .errors import ArtifactError, ConfigError, DataError
from .net import MLPParams, forward_batch

STRATEGIES = ("agent", "buy_hold", "momentum", "reversion")
ALLOCATION_MODES = ("threshold", "topk")
ENSEMBLE_SIZE = 3
REPORT_FORMAT = "qfolio-report"
REPORT_VERSION = 1

_STRATEGY_LABELS = (
    ("agent", "Agent"),
    ("buy_hold", "Buy-and-hold"),
    ("momentum", "Momentum"),
    ("reversion", "Reversion"),
)
_KIND_ORDER = ("big", "random", "small", "all")


@dataclass(frozen=True)
class PolicySpec:
    """What to run: a strategy name plus its inputs.

    `members` carries the three ensemble networks (agent variant only);
    `allocation_mode`/`k` pick how positive-margin assets become weights;
    `lookback` is the signal window for momentum/reversion.
    """

    variant: str
    members: tuple | None = None
    allocation_mode: str = "threshold"
    k: int = 1
    lookback: int = 5

    def __post_init__(self):
        if self.variant not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.variant!r}; expected one of {STRATEGIES}")
        if self.variant == "agent":
            if self.members is None or len(self.members) != ENSEMBLE_SIZE:
                n = 0 if self.members is None else len(self.members)
                raise ConfigError(f"agent policy needs exactly {ENSEMBLE_SIZE} member networks, got {n}")
            if not all(isinstance(p, MLPParams) for p in self.members):
                raise ConfigError("agent policy members must be network parameter sets")
            dims = {p.input_dim for p in self.members}
            if len(dims) != 1:
                raise ConfigError(f"ensemble members disagree on input_dim: {sorted(dims)}")
            if self.allocation_mode not in ALLOCATION_MODES:
                raise ConfigError(
                    f"unknown allocation mode {self.allocation_mode!r}; expected one of {ALLOCATION_MODES}"
                )
            if self.allocation_mode == "topk" and (not isinstance(self.k, int) or self.k < 1):
                raise ConfigError(f"topk allocation needs k >= 1, got {self.k!r}")
        elif self.variant in ("momentum", "reversion"):
            if not isinstance(self.lookback, int) or self.lookback < 1:
                raise ConfigError(f"lookback must be a positive integer, got {self.lookback!r}")


@dataclass(frozen=True)
class BacktestReport:
    """One strategy's wealth path on one return stretch.

    `dates` are the wealth observation dates (length T + 1, starting at the
    inception date with wealth 1.0); `weights` and `turnover` align with
    dates[:-1] (the decision dates).
    """

    strategy: str
    cost: float
    tickers: tuple
    dates: tuple
    weights: np.ndarray
    turnover: np.ndarray
    wealth: np.ndarray
    cumulative_return: float
    allocation_mode: str | None = None
    phase_returns: tuple | None = None

    def __post_init__(self):
        for name in ("weights", "turnover", "wealth"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        t = len(self.dates) - 1
        if self.wealth.shape != (t + 1,) or self.turnover.shape != (t,):
            raise DataError("wealth/turnover lengths do not match the date axis")
        if self.weights.shape != (t, len(self.tickers)):
            raise DataError("weights shape does not match dates x tickers")

    def to_json(self) -> str:
        payload = {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "strategy": self.strategy,
            "cost": self.cost,
            "allocation_mode": self.allocation_mode,
            "tickers": list(self.tickers),
            "dates": [d.isoformat() for d in self.dates],
            "weights": self.weights.tolist(),
            "turnover": self.turnover.tolist(),
            "wealth": self.wealth.tolist(),
            "cumulative_return": self.cumulative_return,
            "phase_returns": None if self.phase_returns is None else list(self.phase_returns),
        }
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "BacktestReport":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"report is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict) or payload.get("format") != REPORT_FORMAT:
            raise ArtifactError("report has unexpected format marker")
        phases = payload.get("phase_returns")
        return BacktestReport(
            strategy=payload["strategy"],
            cost=float(payload["cost"]),
            tickers=tuple(payload["tickers"]),
            dates=tuple(date.fromisoformat(d) for d in payload["dates"]),
            weights=np.array(payload["weights"], dtype=np.float64).reshape(
                len(payload["dates"]) - 1, len(payload["tickers"])
            ),
            turnover=np.array(payload["turnover"], dtype=np.float64),
            wealth=np.array(payload["wealth"], dtype=np.float64),
            cumulative_return=float(payload["cumulative_return"]),
            allocation_mode=payload.get("allocation_mode"),
            phase_returns=None if phases is None else tuple(float(x) for x in phases),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @staticmethod
    def load(path) -> "BacktestReport":
        p = Path(path)
        if not p.exists():
            raise ArtifactError(f"report not found: {p}")
        return BacktestReport.from_json(p.read_text(encoding="utf-8"))


def buy_hold_weights(n_assets: int) -> np.ndarray:
    """Equal weight across all assets."""
    if n_assets < 1:
        raise DataError("need at least one asset")
    return np.full(n_assets, 1.0 / n_assets)


def momentum_signal(past: np.ndarray, lookback: int = 5) -> np.ndarray:
    """True for assets whose mean return over the last `lookback` rows is > 0."""
    past = np.asarray(past, dtype=np.float64)
    if past.ndim != 2 or past.shape[0] < lookback:
        raise DataError(f"need at least {lookback} return rows for the signal, got shape {past.shape}")
    return past[-lookback:].mean(axis=0) > 0.0


def reversion_signal(past: np.ndarray, lookback: int = 5) -> np.ndarray:
    """True for assets whose mean return over the last `lookback` rows is < 0."""
    past = np.asarray(past, dtype=np.float64)
    if past.ndim != 2 or past.shape[0] < lookback:
        raise DataError(f"need at least {lookback} return rows for the signal, got shape {past.shape}")
    return past[-lookback:].mean(axis=0) < 0.0


def signal_weights(flags: np.ndarray) -> np.ndarray:
    """Equal weight across flagged assets; all cash when nothing is flagged."""
    flags = np.asarray(flags, dtype=bool)
    count = int(flags.sum())
    if count == 0:
        return np.zeros(flags.shape[0])
    return flags / count


def agent_allocation(member_qs: np.ndarray, mode: str = "threshold", k: int = 1) -> np.ndarray:
    """Weights from the ensemble's Q-values.

    member_qs has shape (3, n_assets, 2). Member Q-values are averaged, and an
    asset's margin is hold-Q minus cash-Q. `threshold` equal-weights every
    positive-margin asset; `topk` gives the k largest positive margins 1/k
    each, leaving the remainder in cash when fewer than k margins are positive.
    """
    member_qs = np.asarray(member_qs, dtype=np.float64)
    if member_qs.ndim != 3 or member_qs.shape[0] != ENSEMBLE_SIZE or member_qs.shape[2] != 2:
        raise DataError(f"expected member Q-values shaped ({ENSEMBLE_SIZE}, n_assets, 2), got {member_qs.shape}")
    mean_q = member_qs.mean(axis=0)
    margin = mean_q[:, 1] - mean_q[:, 0]
    positive = margin > 0.0
    if mode == "threshold":
        return signal_weights(positive)
    if mode == "topk":
        if not isinstance(k, int) or k < 1:
            raise DataError(f"topk needs k >= 1, got {k!r}")
        weights = np.zeros(margin.shape[0])
        order = np.argsort(-margin, kind="stable")
        chosen = [i for i in order if positive[i]][:k]
        weights[chosen] = 1.0 / k
        return weights
    raise DataError(f"unknown allocation mode {mode!r}")


def _policy_start(policy: PolicySpec, window: int) -> int:
    if policy.variant == "agent":
        return window
    if policy.variant in ("momentum", "reversion"):
        return policy.lookback
    return 0


def run(policy: PolicySpec, returns: ReturnMatrix, cost: float, window: int = 30) -> BacktestReport:
    """Backtest one policy over a return stretch.

    Decisions happen at each date index t from the policy's first fully
    informed row through the second-to-last row; the return at t + 1 is then
    realized. Weight paths, per-step turnover, and the compounded wealth curve
    (inception value 1.0) go into the report.
    """
    if cost < 0.0:
        raise ConfigError(f"cost must be >= 0, got {cost}")
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    rets = returns.returns
    n_rows, m = rets.shape
    t_start = _policy_start(policy, window)
    if n_rows < t_start + 2:
        raise DataError(
            f"{policy.variant} needs at least {t_start + 2} return rows (got {n_rows})"
        )
    if policy.variant == "agent":
        expected = window + 1
        got = policy.members[0].input_dim
        if got != expected:
            raise ArtifactError(f"ensemble expects input_dim {got}, but window {window} implies {expected}")

    n_steps = n_rows - 1 - t_start
    weights = np.zeros((n_steps, m))
    turnover = np.zeros(n_steps)
    wealth = np.ones(n_steps + 1)
    held = np.zeros(m)
    prev_invested = np.zeros(m)

    for step, t in enumerate(range(t_start, n_rows - 1)):
        if policy.variant == "buy_hold":
            target = buy_hold_weights(m) if step == 0 else held
        elif policy.variant == "momentum":
            target = signal_weights(momentum_signal(rets[: t + 1], policy.lookback))
        elif policy.variant == "reversion":
            target = signal_weights(reversion_signal(rets[: t + 1], policy.lookback))
        else:
            feats = np.empty((m, window + 1))
            feats[:, :window] = rets[t - window + 1 : t + 1, :].T
            feats[:, window] = prev_invested
            member_qs = np.stack([forward_batch(p, feats) for p in policy.members])
            target = agent_allocation(member_qs, policy.allocation_mode, policy.k)
            prev_invested = (target > 0.0).astype(np.float64)

        tau = 0.0 if step == 0 else float(np.abs(target - held).sum())
        r_next = rets[t + 1]
        growth = 1.0 + float(target @ r_next)
        wealth[step + 1] = wealth[step] * growth * (1.0 - cost * tau)
        held = target * (1.0 + r_next) / growth
        weights[step] = target
        turnover[step] = tau

    if not np.all(np.isfinite(wealth)):
        raise DataError("wealth path is not finite; inputs are out of range")

    return BacktestReport(
        strategy=policy.variant,
        cost=cost,
        tickers=returns.tickers,
        dates=tuple(returns.dates[t_start:]),
        weights=weights,
        turnover=turnover,
        wealth=wealth,
        cumulative_return=float(wealth[-1] - 1.0),
        allocation_mode=policy.allocation_mode if policy.variant == "agent" else None,
    )


def phase_split(report: BacktestReport, boundary1: date, boundary2: date) -> tuple[float, float, float]:
    """Chain-linked sub-period returns for three phases split at two dates.

    Each boundary maps to the latest wealth observation on or before it. The
    product identity (1+R1)(1+R2)(1+R3) = 1 + R_total holds exactly by
    construction. Every phase must contain at least one step.
    """
    if boundary2 <= boundary1:
        raise ConfigError(f"phase boundaries must be ordered, got {boundary1} >= {boundary2}")
    dates = list(report.dates)
    i1 = bisect_right(dates, boundary1) - 1
    i2 = bisect_right(dates, boundary2) - 1
    if i1 < 1:
        raise DataError(f"first phase boundary {boundary1} precedes the wealth path start {dates[0]}")
    if i2 <= i1:
        raise DataError(f"second phase boundary {boundary2} leaves the middle phase empty")
    if i2 > len(dates) - 2:
        raise DataError(f"second phase boundary {boundary2} leaves the final phase empty")
    w = report.wealth
    r1 = float(w[i1] / w[0] - 1.0)
    r2 = float(w[i2] / w[i1] - 1.0)
    r3 = float(w[-1] / w[i2] - 1.0)
    return r1, r2, r3


def attach_phases(report: BacktestReport, boundary1: date, boundary2: date) -> BacktestReport:
    return replace(report, phase_returns=phase_split(report, boundary1, boundary2))


def format_pct(value: float) -> str:
    """1.447 -> '144.7%'."""
    return f"{100.0 * value:.1f}%"


def cost_label(cost: float) -> str:
    """0.0001 -> '1 bp', 0.0005 -> '5 bps'."""
    bps = round(cost * 1e4, 10)
    text = f"{bps:g}"
    unit = "bp" if bps == 1.0 else "bps"
    return f"{text} {unit}"


def report_table(cells: dict) -> list:
    """Summary rows from a {(cost, size, kind, strategy): cumulative_return} grid.

    Rows group by cost level (ascending), then portfolio (size ascending, kind
    in big/random/small/all order); each cost block ends with a Mean row
    averaging the block per strategy. Returns a list of string rows whose
    first entry is the header.
    """
    if not cells:
        raise DataError("empty results grid")
    costs = sorted({key[0] for key in cells})
    portfolios = sorted({(key[1], key[2]) for key in cells}, key=lambda p: (p[0], _KIND_ORDER.index(p[1])))
    header = ["cost", "portfolio"] + [label for _, label in _STRATEGY_LABELS]
    rows = [header]
    for cost in costs:
        block = {name: [] for name, _ in _STRATEGY_LABELS}
        for size, kind in portfolios:
            row = [cost_label(cost), f"{size} {kind}"]
            for name, _ in _STRATEGY_LABELS:
                key = (cost, size, kind, name)
                if key not in cells:
                    raise DataError(f"results grid is missing cell {key}")
                value = cells[key]
                block[name].append(value)
                row.append(format_pct(value))
            rows.append(row)
        mean_row = [cost_label(cost), "Mean"]
        for name, _ in _STRATEGY_LABELS:
            mean_row.append(format_pct(sum(block[name]) / len(block[name])))
        rows.append(mean_row)
    return rows


def render_table(rows: list) -> str:
    """Monospace rendering with aligned columns."""
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for idx, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


__all__ = [
    "ALLOCATION_MODES",
    "BacktestReport",
    "ENSEMBLE_SIZE",
    "PolicySpec",
    "STRATEGIES",
    "agent_allocation",
    "attach_phases",
    "buy_hold_weights",
    "cost_label",
    "format_pct",
    "momentum_signal",
    "phase_split",
    "render_table",
    "report_table",
    "reversion_signal",
    "run",
    "signal_weights",
]
