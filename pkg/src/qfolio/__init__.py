"""qfolio: deep Q-learning portfolio toolkit.

Per-asset cash/hold trading environments, a from-scratch Q-network trained
with replayed minibatches against a target copy, and a turnover-cost-aware
portfolio backtester with baseline strategies and reproducible run artifacts.
"""

__version__ = "0.1.0"

from .data import (
    PortfolioSpec,
    PriceTable,
    ReturnMatrix,
    SplitSpec,
    SynthSpec,
    compute_returns,
    gen_synthetic,
    group_by_cap,
    load_caps,
    load_prices,
    split,
    write_prices_csv,
)
from .env import ACTION_CASH, ACTION_HOLD, EnvConfig, EnvState, Transition, cash_return, make_features, reset, reward, step
from .errors import ArtifactError, ConfigError, DataError, IntegrityError, QfolioError
from .net import AdamState, MLPParams, adam_step, forward, forward_batch, init_adam, init_params, loss_and_grads, sync_target, td_targets
from .replay import ReplayBuffer, TransitionBatch
from .agent import Checkpoint, TrainConfig, epsilon_greedy, evaluate, train, train_ensemble
from .backtest import BacktestReport, PolicySpec, agent_allocation, phase_split
from .backtest import run as run_backtest

__all__ = [
    "ACTION_CASH",
    "ACTION_HOLD",
    "AdamState",
    "ArtifactError",
    "BacktestReport",
    "Checkpoint",
    "ConfigError",
    "DataError",
    "EnvConfig",
    "EnvState",
    "IntegrityError",
    "MLPParams",
    "PolicySpec",
    "PortfolioSpec",
    "PriceTable",
    "QfolioError",
    "ReplayBuffer",
    "ReturnMatrix",
    "SplitSpec",
    "SynthSpec",
    "TrainConfig",
    "Transition",
    "TransitionBatch",
    "adam_step",
    "agent_allocation",
    "cash_return",
    "compute_returns",
    "epsilon_greedy",
    "evaluate",
    "forward",
    "forward_batch",
    "gen_synthetic",
    "group_by_cap",
    "init_adam",
    "init_params",
    "load_caps",
    "load_prices",
    "loss_and_grads",
    "make_features",
    "phase_split",
    "reset",
    "reward",
    "run_backtest",
    "split",
    "step",
    "sync_target",
    "td_targets",
    "train",
    "train_ensemble",
    "write_prices_csv",
    "__version__",
]
