"""Single-asset trading environment: two actions (0 = cash, 1 = hold the asset).

Holding earns the asset's next-day return; cash earns the cross-sectional average
of the *other* portfolio assets' returns. A one-way cost C is charged exactly when
the position changes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

ACTION_CASH = 0
ACTION_HOLD = 1


@dataclass(frozen=True)
class EnvConfig:
    """cost: one-way switch cost as a fraction (0.0005 = 5 bps); window: feature lookback."""

    cost: float
    window: int

    def __post_init__(self):
        if self.cost < 0:
            raise DataError("cost must be >= 0")
        if self.window < 1:
            raise DataError("window must be >= 1")


@dataclass(frozen=True)
class EnvState:
    """Position of one episode: asset column, current row t, previous action,
    the feature vector at t, and the last row of the episode window."""

    asset: int
    t: int
    prev_action: int
    features: np.ndarray
    end_row: int

    @property
    def terminal(self) -> bool:
        return self.t >= self.end_row


@dataclass(frozen=True)
class Transition:
    """Replay quintuple: (state, action, reward, next_state, terminal)."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool

    def __post_init__(self):
        if self.action not in (ACTION_CASH, ACTION_HOLD):
            raise DataError(f"action must be 0 or 1, got {self.action}")
        if len(self.state) != len(self.next_state):
            raise DataError("state and next_state must have equal length")


def _as_return_array(returns) -> np.ndarray:
    out = np.asarray(returns, dtype=np.float64)
    if out.ndim != 2:
        raise DataError(f"returns must be a (rows, assets) array, got shape {out.shape}")
    return out


def cash_return(returns, asset: int, t: int) -> float:
    """Mean return over all assets except `asset` at row t.

    `returns` is a (rows, assets) array of simple returns.
    """
    rets = _as_return_array(returns)
    m = rets.shape[1]
    if m < 2:
        raise DataError("cash return needs >= 2 assets in the portfolio")
    row = rets[t]
    return float((row.sum() - row[asset]) / (m - 1))


def reward(action: int, prev_action: int, r_hold: float, r_cash: float, cost: float) -> float:
    """Per-step reward.

    hold: r_hold - (1 - prev_action) * cost
    cash: r_cash - prev_action * cost

    Either branch pays `cost` exactly when the position changes.
    """
    if action not in (ACTION_CASH, ACTION_HOLD) or prev_action not in (ACTION_CASH, ACTION_HOLD):
        raise DataError(f"actions must be 0 or 1, got a_t={action}, a_prev={prev_action}")
    if cost < 0:
        raise DataError("cost must be >= 0")
    if action == ACTION_HOLD:
        return r_hold - (1 - prev_action) * cost
    return r_cash - prev_action * cost


def make_features(returns, asset: int, t: int, prev_action: int, window: int) -> np.ndarray:
    """Feature vector at row t: the asset's `window` most recent returns
    (rows t-window+1 .. t) followed by the previous action as 0.0/1.0."""
    rets = _as_return_array(returns)
    if t < window:
        raise DataError(f"t={t} has fewer than window={window} rows of history")
    if t >= rets.shape[0]:
        raise DataError(f"t={t} beyond last row {rets.shape[0] - 1}")
    out = np.empty(window + 1, dtype=np.float64)
    out[:window] = rets[t - window + 1 : t + 1, asset]
    out[window] = float(prev_action)
    return out


def reset(returns, asset: int, t0: int, cfg: EnvConfig, episode_len: int | None = None) -> EnvState:
    """Start an episode at row t0, in cash.

    The episode ends at row min(t0 + episode_len, last row); with no episode_len
    it runs to the end of the data. t0 must leave at least one step to take.
    """
    rets = _as_return_array(returns)
    last = rets.shape[0] - 1
    if not (cfg.window <= t0 <= last - 1):
        raise DataError(f"t0={t0} out of range [{cfg.window}, {last - 1}]")
    if episode_len is not None and episode_len < 1:
        raise DataError("episode_len must be >= 1")
    end_row = last if episode_len is None else min(t0 + episode_len, last)
    features = make_features(rets, asset, t0, ACTION_CASH, cfg.window)
    return EnvState(asset=asset, t=t0, prev_action=ACTION_CASH, features=features, end_row=end_row)


def step(state: EnvState, action: int, returns, cfg: EnvConfig) -> tuple[Transition, EnvState]:
    """Advance one row: reward from the chosen leg over row t+1, minus any switch cost."""
    rets = _as_return_array(returns)
    if state.terminal:
        raise DataError("cannot step a terminal state")
    t, i = state.t, state.asset
    r_hold = float(rets[t + 1, i])
    r_cash = cash_return(rets, i, t + 1)
    r = reward(action, state.prev_action, r_hold, r_cash, cfg.cost)
    terminal = t + 1 == state.end_row
    next_features = make_features(rets, i, t + 1, action, cfg.window)
    transition = Transition(state.features, action, r, next_features, terminal)
    next_state = EnvState(asset=i, t=t + 1, prev_action=action, features=next_features, end_row=state.end_row)
    return transition, next_state
