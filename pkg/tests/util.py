"""Shared fixtures and pure-Python reference implementations.

The reference code here deliberately avoids the library's own vectorized
paths: loops over plain floats, stdlib math only. Tests compare library
output against these independent oracles.
"""

from __future__ import annotations

import math
from datetime import date, timedelta

import numpy as np

from qfolio.data import ReturnMatrix
from qfolio.net import MLPParams


def calendar(n: int, start: date = date(2015, 1, 6)) -> tuple:
    return tuple(start + timedelta(days=i) for i in range(n))


def random_returns(n_rows: int, n_assets: int, seed: int, scale: float = 0.01) -> ReturnMatrix:
    rng = np.random.default_rng(seed)
    rets = scale * rng.standard_normal((n_rows, n_assets))
    tickers = tuple(f"A{i:02d}" for i in range(n_assets))
    return ReturnMatrix(calendar(n_rows), tickers, rets)


def constant_q_params(input_dim: int, q_cash: float, q_hold: float) -> MLPParams:
    """Zero-weight net whose output is the same (q_cash, q_hold) for every state."""
    h = 4
    return MLPParams(
        w1=np.zeros((h, input_dim)),
        b1=np.zeros(h),
        w2=np.zeros((h, h)),
        b2=np.zeros(h),
        w3=np.zeros((2, h)),
        b3=np.array([q_cash, q_hold]),
    )


def cash_leg(row, asset: int) -> float:
    """Reference cash return: mean of the other assets' returns, plain floats."""
    total = 0.0
    for v in row:
        total += float(v)
    return (total - float(row[asset])) / (len(row) - 1)


def episode_reward_oracle(rets, asset: int, t0: int, actions, cost: float) -> float:
    """Total reward of an action sequence, accumulated step by step.

    Step k decides action a_k at row t0 + k and realizes row t0 + k + 1;
    each step earns the chosen leg's return minus the cost when the position
    changed. The position starts in cash.
    """
    total = 0.0
    prev = 0
    for k, a in enumerate(actions):
        row = rets[t0 + k + 1]
        if a == 1:
            rw = float(row[asset]) - (1 - prev) * cost
        else:
            rw = cash_leg(row, asset) - prev * cost
        total += rw
        prev = a
    return total


def dp_optimal_score(returns: ReturnMatrix, window: int, cost: float) -> float:
    """Best achievable evaluation score by backward induction.

    Solves, per asset, max over action sequences of sum of log1p(reward) for
    decisions at rows window .. n-2 starting in cash, then converts back to
    mean compounded wealth minus one. Exactly the evaluation protocol's
    decision grid.
    """
    rets = returns.returns
    n, m = rets.shape
    total = 0.0
    for i in range(m):
        v_next = [0.0, 0.0]
        for t in range(n - 2, window - 1, -1):
            row = rets[t + 1]
            r_hold = float(row[i])
            r_cash = cash_leg(row, i)
            v_t = []
            for prev in (0, 1):
                best = -math.inf
                for a in (0, 1):
                    rw = r_hold - (1 - prev) * cost if a == 1 else r_cash - prev * cost
                    best = max(best, math.log1p(rw) + v_next[a])
                v_t.append(best)
            v_next = v_t
        total += math.expm1(v_next[0])
    return total / m


def fixed_policy_score(returns: ReturnMatrix, window: int, cost: float, action: int) -> float:
    """Evaluation score of always choosing one action (0 cash, 1 hold)."""
    rets = returns.returns
    n, m = rets.shape
    total = 0.0
    for i in range(m):
        wealth = 1.0
        prev = 0
        for t in range(window, n - 1):
            row = rets[t + 1]
            if action == 1:
                rw = float(row[i]) - (1 - prev) * cost
            else:
                rw = cash_leg(row, i) - prev * cost
            wealth *= 1.0 + rw
            prev = action
        total += wealth - 1.0
    return total / m


def naive_backtest(strategy: str, returns: ReturnMatrix, cost: float, lookback: int = 5):
    """Loop-based reference backtester for the baseline strategies.

    Returns (wealth list, turnover list). Wealth starts at 1.0; the first
    allocation is free; each later step pays cost times the L1 gap between
    the target weights and the drifted previous weights.
    """
    rets = [[float(v) for v in row] for row in returns.returns]
    n = len(rets)
    m = len(rets[0])
    if strategy == "buy_hold":
        t_start = 0
    elif strategy in ("momentum", "reversion"):
        t_start = lookback
    else:
        raise ValueError(f"no reference implementation for {strategy}")

    wealth = [1.0]
    turnover = []
    held = [0.0] * m
    for step, t in enumerate(range(t_start, n - 1)):
        if strategy == "buy_hold":
            target = [1.0 / m] * m if step == 0 else held[:]
        else:
            flags = []
            for j in range(m):
                s = 0.0
                for tt in range(t - lookback + 1, t + 1):
                    s += rets[tt][j]
                mean = s / lookback
                flags.append(mean > 0.0 if strategy == "momentum" else mean < 0.0)
            count = sum(flags)
            target = [(1.0 / count if f else 0.0) for f in flags] if count else [0.0] * m
        tau = 0.0
        if step > 0:
            for j in range(m):
                tau += abs(target[j] - held[j])
        port = 0.0
        for j in range(m):
            port += target[j] * rets[t + 1][j]
        growth = 1.0 + port
        wealth.append(wealth[-1] * growth * (1.0 - cost * tau))
        held = [target[j] * (1.0 + rets[t + 1][j]) / growth for j in range(m)]
        turnover.append(tau)
    return wealth, turnover
