"""Q-function approximator built from first principles: a two-hidden-layer ReLU
MLP over the state features with a 2-unit output (one Q-value per action), a
semi-gradient TD loss with analytic backprop, and bias-corrected Adam.

Everything is double precision and purely functional: parameter containers are
immutable values, updates return new containers.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError
from .replay import TransitionBatch

HIDDEN_WIDTHS = (32, 64, 128)
N_ACTIONS = 2

_FIELDS = ("w1", "b1", "w2", "b2", "w3", "b3")


def _freeze(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MLPParams:
    """Weights of the Q-network.

    w1: (hidden, input), w2: (hidden, hidden), w3: (2, hidden); biases match.
    The same container also serves as the frozen target copy and as the shape
    template for gradients and optimizer moments.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        for name in _FIELDS:
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        h, d = self.w1.shape
        if self.b1.shape != (h,) or self.w2.shape != (h, h) or self.b2.shape != (h,):
            raise DataError("hidden layer shapes inconsistent")
        if self.w3.shape != (N_ACTIONS, h) or self.b3.shape != (N_ACTIONS,):
            raise DataError(f"output layer must have exactly {N_ACTIONS} units")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_width(self) -> int:
        return self.w1.shape[0]

    def arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, name) for name in _FIELDS)


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators (shaped like the params) plus step count."""

    m: MLPParams
    v: MLPParams
    step: int
    learning_rate: float
    beta1: float
    beta2: float
    eps: float


def init_params(input_dim: int, hidden_width: int, seed) -> MLPParams:
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.

    `seed` may be an int or an existing numpy Generator.
    """
    if input_dim < 1:
        raise DataError("input_dim must be >= 1")
    if hidden_width not in HIDDEN_WIDTHS:
        raise DataError(f"hidden_width must be one of {HIDDEN_WIDTHS}, got {hidden_width}")
    rng = np.random.default_rng(seed)

    def glorot(fan_out, fan_in):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in))

    h = hidden_width
    return MLPParams(
        w1=glorot(h, input_dim),
        b1=np.zeros(h),
        w2=glorot(h, h),
        b2=np.zeros(h),
        w3=glorot(N_ACTIONS, h),
        b3=np.zeros(N_ACTIONS),
    )


def forward_batch(params: MLPParams, states: np.ndarray) -> np.ndarray:
    """Q-values for a (batch, input_dim) stack of states; returns (batch, 2)."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != params.input_dim:
        raise DataError(f"states shape {states.shape} incompatible with input_dim {params.input_dim}")
    h1 = np.maximum(states @ params.w1.T + params.b1, 0.0)
    h2 = np.maximum(h1 @ params.w2.T + params.b2, 0.0)
    return h2 @ params.w3.T + params.b3


def forward(params: MLPParams, state: np.ndarray) -> np.ndarray:
    """Q-vector of length 2 for a single state."""
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (params.input_dim,):
        raise DataError(f"state shape {state.shape} incompatible with input_dim {params.input_dim}")
    return forward_batch(params, state[None, :])[0]


def td_targets(batch: TransitionBatch, gamma: float, target_params: MLPParams) -> np.ndarray:
    """Bootstrap targets y = r + gamma * max_a' Q(s', a'; target).

    Terminal transitions do not bootstrap: y = r.
    """
    if not 0.0 <= gamma < 1.0:
        raise DataError("gamma must satisfy 0 <= gamma < 1")
    next_q = forward_batch(target_params, batch.next_states)
    bootstrap = np.where(batch.terminals, 0.0, next_q.max(axis=1))
    return batch.rewards + gamma * bootstrap


def loss_and_grads(params: MLPParams, batch: TransitionBatch, targets: np.ndarray) -> tuple[float, MLPParams]:
    """Mean squared TD error and its semi-gradient.

    loss = mean_j (y_j - Q(s_j, a_j))^2, with y treated as a constant: gradients
    flow only through the prediction, and only the taken action's output unit
    receives error signal.
    """
    n = len(batch)
    if n == 0:
        raise DataError("empty batch")
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (n,):
        raise DataError(f"targets shape {targets.shape} does not match batch size {n}")

    states = batch.states
    z1 = states @ params.w1.T + params.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ params.w2.T + params.b2
    h2 = np.maximum(z2, 0.0)
    q = h2 @ params.w3.T + params.b3

    rows = np.arange(n)
    taken = q[rows, batch.actions]
    err = taken - targets
    loss = float(np.mean(err**2))

    dq = np.zeros_like(q)
    dq[rows, batch.actions] = 2.0 * err / n
    gw3 = dq.T @ h2
    gb3 = dq.sum(axis=0)
    dh2 = dq @ params.w3
    dz2 = dh2 * (z2 > 0.0)
    gw2 = dz2.T @ h1
    gb2 = dz2.sum(axis=0)
    dh1 = dz2 @ params.w2
    dz1 = dh1 * (z1 > 0.0)
    gw1 = dz1.T @ states
    gb1 = dz1.sum(axis=0)

    return loss, MLPParams(w1=gw1, b1=gb1, w2=gw2, b2=gb2, w3=gw3, b3=gb3)


def init_adam(
    params: MLPParams,
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """Fresh optimizer state: zero moments, step counter at zero."""
    zeros = MLPParams(*(np.zeros_like(a) for a in params.arrays()))
    return AdamState(m=zeros, v=zeros, step=0, learning_rate=learning_rate, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: MLPParams, grads: MLPParams, opt: AdamState) -> tuple[MLPParams, AdamState]:
    """One bias-corrected Adam update: p <- p - lr * m_hat / (sqrt(v_hat) + eps)."""
    t = opt.step + 1
    b1, b2 = opt.beta1, opt.beta2
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), opt.m.arrays(), opt.v.arrays()):
        m_t = b1 * m + (1.0 - b1) * g
        v_t = b2 * v + (1.0 - b2) * g**2
        m_hat = m_t / (1.0 - b1**t)
        v_hat = v_t / (1.0 - b2**t)
        new_p.append(p - opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.eps))
        new_m.append(m_t)
        new_v.append(v_t)
    return MLPParams(*new_p), replace(opt, m=MLPParams(*new_m), v=MLPParams(*new_v), step=t)


def sync_target(online: MLPParams) -> MLPParams:
    """Frozen deep copy for target computation; later online updates never touch it."""
    return MLPParams(*(a.copy() for a in online.arrays()))


def params_to_jsonable(params: MLPParams) -> dict:
    """JSON-safe encoding: shapes plus little-endian float64 bytes in base64.

    Byte-level encoding makes the round trip bit-exact.
    """
    out = {}
    for name in _FIELDS:
        a = np.ascontiguousarray(getattr(params, name), dtype="<f8")
        out[name] = {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}
    return out


def params_from_jsonable(obj: dict) -> MLPParams:
    arrays = {}
    for name in _FIELDS:
        entry = obj[name]
        raw = base64.b64decode(entry["data"])
        arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"])
    return MLPParams(**arrays)
