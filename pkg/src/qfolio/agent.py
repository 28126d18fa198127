"""Q-learning agent: epsilon-greedy interaction with the single-asset trading
environment, replayed minibatch updates against a periodically synced target
network, and validation-driven checkpoint selection.

Training keeps whichever parameter snapshot scored best on validation data,
evaluated every `evaluation_interval` environment steps under the greedy
policy. One numpy Generator seeded once drives every random choice in a run,
so a (config, seed) pair fixes the result bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import env as env_mod
from . import net
from .data import ReturnMatrix
from .errors import ArtifactError, ConfigError, DataError
from .replay import ReplayBuffer

CHECKPOINT_FORMAT = "qfolio-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run.

    Defaults are production scale; desk-size experiments shrink
    total_iterations / memory_capacity / batch_size accordingly.
    """

    gamma: float = 0.9
    epsilon: float = 0.3
    total_iterations: int = 3_000_000
    memory_capacity: int = 300_000
    gradient_step_interval: int = 20
    evaluation_interval: int = 10_000
    batch_size: int = 1024
    hidden_width: int = 32
    learning_rate: float = 1e-3
    target_sync_interval: int = 1
    episode_length: int = 250
    warmup_threshold: int = 10_000
    window: int = 30
    cost: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        """Raise ConfigError naming the first offending field."""
        for name in ("gamma", "epsilon", "learning_rate", "cost"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{name} must be a number, got {value!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in [0, 1], got {self.epsilon}")
        for name in (
            "total_iterations",
            "memory_capacity",
            "gradient_step_interval",
            "evaluation_interval",
            "batch_size",
            "target_sync_interval",
            "episode_length",
            "window",
        ):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.hidden_width not in net.HIDDEN_WIDTHS:
            raise ConfigError(f"hidden_width must be one of {net.HIDDEN_WIDTHS}, got {self.hidden_width}")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if isinstance(self.warmup_threshold, bool) or not isinstance(self.warmup_threshold, int) or self.warmup_threshold < 1:
            raise ConfigError(f"warmup_threshold must be a positive integer, got {self.warmup_threshold!r}")
        if self.warmup_threshold > self.memory_capacity:
            raise ConfigError(
                f"warmup_threshold ({self.warmup_threshold}) exceeds memory_capacity ({self.memory_capacity})"
            )
        if self.batch_size > self.memory_capacity:
            raise ConfigError(f"batch_size ({self.batch_size}) exceeds memory_capacity ({self.memory_capacity})")
        if self.cost < 0.0:
            raise ConfigError(f"cost must be >= 0, got {self.cost}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")


@dataclass(frozen=True)
class Checkpoint:
    """Best-on-validation network snapshot plus bookkeeping."""

    params: net.MLPParams
    validation_score: float
    iteration_at_save: int
    train_stats: dict | None = None

    def save(self, path) -> None:
        payload = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "input_dim": self.params.input_dim,
            "hidden_width": self.params.hidden_width,
            "validation_score": self.validation_score,
            "iteration_at_save": self.iteration_at_save,
            "train_stats": self.train_stats,
            "params": net.params_to_jsonable(self.params),
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @staticmethod
    def load(path) -> "Checkpoint":
        p = Path(path)
        if not p.exists():
            raise ArtifactError(f"checkpoint not found: {p}")
        try:
            payload = json.loads(p.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ArtifactError(f"checkpoint {p} is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
            raise ArtifactError(f"checkpoint {p} has unexpected format marker")
        if payload.get("version") != CHECKPOINT_VERSION:
            raise ArtifactError(f"checkpoint {p} has unsupported version {payload.get('version')!r}")
        try:
            params = net.params_from_jsonable(payload["params"])
        except (KeyError, ValueError, TypeError) as exc:
            raise ArtifactError(f"checkpoint {p} has malformed parameter block: {exc}") from exc
        if params.input_dim != payload.get("input_dim") or params.hidden_width != payload.get("hidden_width"):
            raise ArtifactError(f"checkpoint {p} header disagrees with stored arrays")
        return Checkpoint(
            params=params,
            validation_score=float(payload["validation_score"]),
            iteration_at_save=int(payload["iteration_at_save"]),
            train_stats=payload.get("train_stats"),
        )


def epsilon_greedy(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Random action with probability epsilon, else argmax (exact ties broken at random)."""
    action, _ = _epsilon_greedy_traced(q_values, epsilon, rng)
    return action


def _epsilon_greedy_traced(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> tuple[int, bool]:
    q_values = np.asarray(q_values, dtype=np.float64)
    if q_values.shape != (net.N_ACTIONS,):
        raise DataError(f"expected {net.N_ACTIONS} action values, got shape {q_values.shape}")
    if not 0.0 <= epsilon <= 1.0:
        raise DataError(f"epsilon must be in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(0, net.N_ACTIONS)), True
    best = np.flatnonzero(q_values == q_values.max())
    if len(best) == 1:
        return int(best[0]), False
    return int(rng.choice(best)), False


def evaluate(params: net.MLPParams, returns: ReturnMatrix, cfg: TrainConfig) -> float:
    """Greedy-policy score on a return stretch: mean cumulative reward over assets.

    Runs every asset in lockstep from the first fully-windowed row, compounds
    per-step rewards into per-asset wealth, and reports mean(wealth - 1).
    Exact Q-ties resolve to cash so the score is deterministic.
    """
    w = cfg.window
    n_rows, m = returns.returns.shape
    if n_rows < w + 2:
        raise DataError(f"need at least window + 2 = {w + 2} return rows, got {n_rows}")
    if params.input_dim != w + 1:
        raise DataError(f"network input_dim {params.input_dim} does not match window + 1 = {w + 1}")

    rets = returns.returns
    row_sums = rets.sum(axis=1)
    wealth = np.ones(m)
    prev_actions = np.zeros(m, dtype=np.int64)
    for t in range(w, n_rows - 1):
        feats = np.empty((m, w + 1))
        feats[:, :w] = rets[t - w + 1 : t + 1, :].T
        feats[:, w] = prev_actions
        q = net.forward_batch(params, feats)
        actions = (q[:, env_mod.ACTION_HOLD] > q[:, env_mod.ACTION_CASH]).astype(np.int64)
        r_hold = rets[t + 1, :]
        r_cash = (row_sums[t + 1] - r_hold) / (m - 1)
        hold_mask = actions == env_mod.ACTION_HOLD
        reward = np.where(
            hold_mask,
            r_hold - (1 - prev_actions) * cfg.cost,
            r_cash - prev_actions * cfg.cost,
        )
        wealth *= 1.0 + reward
        prev_actions = actions
    return float(np.mean(wealth - 1.0))


def train(
    cfg: TrainConfig,
    train_returns: ReturnMatrix,
    val_returns: ReturnMatrix,
    progress_path=None,
) -> Checkpoint:
    """Run one agent to completion and return its best validation checkpoint.

    Each environment step interacts with a randomly started episode on a
    randomly drawn asset; every `gradient_step_interval` steps (after the
    replay warmup) one minibatch update runs against the target network, and
    the target re-syncs every `target_sync_interval` updates. Validation is
    scored every `evaluation_interval` steps; a snapshot is retained only when
    it strictly beats the incumbent.
    """
    cfg.validate()
    if set(train_returns.tickers) != set(val_returns.tickers):
        raise DataError("train and validation matrices must cover the same tickers")
    n_rows, m = train_returns.returns.shape
    if n_rows < cfg.window + 2:
        raise DataError(f"training data has {n_rows} return rows; need at least window + 2 = {cfg.window + 2}")
    if val_returns.returns.shape[0] < cfg.window + 2:
        raise DataError(
            f"validation data has {val_returns.returns.shape[0]} return rows; "
            f"need at least window + 2 = {cfg.window + 2}"
        )

    rng = np.random.default_rng(cfg.seed)
    input_dim = cfg.window + 1
    params = net.init_params(input_dim, cfg.hidden_width, rng)
    target = net.sync_target(params)
    opt = net.init_adam(params, learning_rate=cfg.learning_rate)
    buffer = ReplayBuffer(cfg.memory_capacity)
    env_cfg = env_mod.EnvConfig(cost=cfg.cost, window=cfg.window)

    stats = {
        "env_steps": 0,
        "gradient_steps": 0,
        "random_actions": 0,
        "greedy_actions": 0,
        "target_syncs": 0,
        "evaluations": 0,
    }

    progress = None
    if progress_path is not None:
        progress = open(progress_path, "w", encoding="utf-8")

    def record(iteration: int, score: float, is_best: bool):
        if progress is not None:
            progress.write(
                json.dumps({"iteration": iteration, "validation_score": score, "best": is_best}) + "\n"
            )

    try:
        score0 = evaluate(params, val_returns, cfg)
        stats["evaluations"] += 1
        best = Checkpoint(net.sync_target(params), score0, 0)
        record(0, score0, True)

        state = None
        for it in range(1, cfg.total_iterations + 1):
            if state is None:
                asset = int(rng.integers(0, m))
                t0 = int(rng.integers(cfg.window, n_rows - 1))
                state = env_mod.reset(train_returns.returns, asset, t0, env_cfg, cfg.episode_length)
            q = net.forward(params, state.features)
            action, was_random = _epsilon_greedy_traced(q, cfg.epsilon, rng)
            stats["random_actions" if was_random else "greedy_actions"] += 1
            transition, next_state = env_mod.step(state, action, train_returns.returns, env_cfg)
            buffer.push(transition)
            stats["env_steps"] += 1
            state = None if transition.terminal else next_state

            if it % cfg.gradient_step_interval == 0 and buffer.warmup_reached(cfg.warmup_threshold):
                batch = buffer.sample(cfg.batch_size, rng)
                targets = net.td_targets(batch, cfg.gamma, target)
                _, grads = net.loss_and_grads(params, batch, targets)
                params, opt = net.adam_step(params, grads, opt)
                stats["gradient_steps"] += 1
                if stats["gradient_steps"] % cfg.target_sync_interval == 0:
                    target = net.sync_target(params)
                    stats["target_syncs"] += 1

            if it % cfg.evaluation_interval == 0:
                score = evaluate(params, val_returns, cfg)
                stats["evaluations"] += 1
                is_best = score > best.validation_score
                if is_best:
                    best = Checkpoint(net.sync_target(params), score, it)
                record(it, score, is_best)
    finally:
        if progress is not None:
            progress.close()

    return dataclasses.replace(best, train_stats=dict(stats))


def train_ensemble(
    cfg: TrainConfig,
    train_returns: ReturnMatrix,
    val_returns: ReturnMatrix,
    seeds,
    progress_paths=None,
) -> list[Checkpoint]:
    """Train one agent per seed (exactly three, all distinct) and return their
    checkpoints in seed order."""
    seeds = [int(s) for s in seeds]
    if len(seeds) != 3:
        raise ConfigError(f"ensemble needs exactly 3 seeds, got {len(seeds)}")
    if len(set(seeds)) != 3:
        raise ConfigError(f"ensemble seeds must be distinct, got {seeds}")
    if progress_paths is not None and len(progress_paths) != 3:
        raise ConfigError("progress_paths must provide one path per seed")
    out = []
    for i, seed in enumerate(seeds):
        run_cfg = dataclasses.replace(cfg, seed=seed)
        path = None if progress_paths is None else progress_paths[i]
        out.append(train(run_cfg, train_returns, val_returns, progress_path=path))
    return out
