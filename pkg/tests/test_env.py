import numpy as np
import pytest

from qfolio.env import (
    ACTION_CASH,
    ACTION_HOLD,
    EnvConfig,
    Transition,
    cash_return,
    make_features,
    reset,
    reward,
    step,
)
from qfolio.errors import DataError

from util import cash_leg, random_returns


@pytest.fixture
def rets():
    return random_returns(40, 3, seed=5).returns


class TestReward:
    C = 0.0007

    def test_hold_after_hold_pays_nothing(self):
        assert reward(ACTION_HOLD, ACTION_HOLD, 0.01, 0.002, self.C) == 0.01

    def test_hold_after_cash_pays_cost(self):
        assert reward(ACTION_HOLD, ACTION_CASH, 0.01, 0.002, self.C) == 0.01 - self.C

    def test_cash_after_cash_pays_nothing(self):
        assert reward(ACTION_CASH, ACTION_CASH, 0.01, 0.002, self.C) == 0.002

    def test_cash_after_hold_pays_cost(self):
        assert reward(ACTION_CASH, ACTION_HOLD, 0.01, 0.002, self.C) == 0.002 - self.C

    def test_rejects_bad_action(self):
        with pytest.raises(DataError, match="0 or 1"):
            reward(2, 0, 0.01, 0.002, self.C)
        with pytest.raises(DataError, match="0 or 1"):
            reward(0, -1, 0.01, 0.002, self.C)

    def test_rejects_negative_cost(self):
        with pytest.raises(DataError, match="cost"):
            reward(0, 0, 0.01, 0.002, -0.1)


class TestCashReturn:
    def test_average_excludes_own_asset(self, rets):
        for t in (0, 7):
            for asset in range(3):
                assert cash_return(rets, asset, t) == cash_leg(rets[t], asset)

    def test_needs_two_assets(self):
        with pytest.raises(DataError, match=">= 2 assets"):
            cash_return(np.zeros((4, 1)), 0, 0)


class TestMakeFeatures:
    def test_window_slice_and_action_flag(self, rets):
        feats = make_features(rets, asset=1, t=9, prev_action=ACTION_HOLD, window=6)
        assert feats.shape == (7,)
        assert np.array_equal(feats[:6], rets[4:10, 1])
        assert feats[6] == 1.0

    def test_t_too_small(self, rets):
        with pytest.raises(DataError, match="history"):
            make_features(rets, 0, t=4, prev_action=0, window=5)

    def test_t_beyond_data(self, rets):
        with pytest.raises(DataError, match="beyond"):
            make_features(rets, 0, t=40, prev_action=0, window=5)


class TestReset:
    def test_starts_in_cash_with_features(self, rets):
        cfg = EnvConfig(cost=0.0, window=5)
        state = reset(rets, asset=2, t0=10, cfg=cfg, episode_len=8)
        assert state.prev_action == ACTION_CASH
        assert state.t == 10
        assert state.end_row == 18
        assert not state.terminal
        assert np.array_equal(state.features, make_features(rets, 2, 10, ACTION_CASH, 5))

    def test_episode_truncates_at_data_end(self, rets):
        cfg = EnvConfig(cost=0.0, window=5)
        state = reset(rets, asset=0, t0=35, cfg=cfg, episode_len=250)
        assert state.end_row == 39

    def test_no_episode_len_runs_to_end(self, rets):
        cfg = EnvConfig(cost=0.0, window=5)
        assert reset(rets, 0, 10, cfg).end_row == 39

    def test_t0_bounds(self, rets):
        cfg = EnvConfig(cost=0.0, window=5)
        with pytest.raises(DataError, match="out of range"):
            reset(rets, 0, 4, cfg)
        with pytest.raises(DataError, match="out of range"):
            reset(rets, 0, 39, cfg)


class TestStep:
    def test_hold_step_fields(self, rets):
        cfg = EnvConfig(cost=0.0005, window=5)
        state = reset(rets, asset=1, t0=10, cfg=cfg, episode_len=3)
        tr, nxt = step(state, ACTION_HOLD, rets, cfg)
        assert tr.action == ACTION_HOLD
        assert tr.reward == rets[11, 1] - 0.0005
        assert not tr.terminal
        assert np.array_equal(tr.state, state.features)
        assert np.array_equal(tr.next_state, make_features(rets, 1, 11, ACTION_HOLD, 5))
        assert nxt.t == 11
        assert nxt.prev_action == ACTION_HOLD

    def test_cash_step_reward(self, rets):
        cfg = EnvConfig(cost=0.0005, window=5)
        state = reset(rets, asset=1, t0=10, cfg=cfg, episode_len=3)
        tr, _ = step(state, ACTION_CASH, rets, cfg)
        assert tr.reward == cash_leg(rets[11], 1)

    def test_terminal_at_episode_end(self, rets):
        cfg = EnvConfig(cost=0.0, window=5)
        state = reset(rets, asset=0, t0=10, cfg=cfg, episode_len=2)
        tr, state = step(state, ACTION_HOLD, rets, cfg)
        assert not tr.terminal
        tr, state = step(state, ACTION_HOLD, rets, cfg)
        assert tr.terminal
        assert state.terminal
        with pytest.raises(DataError, match="terminal"):
            step(state, ACTION_HOLD, rets, cfg)

    def test_full_episode_reward_sequence(self, rets):
        cfg = EnvConfig(cost=0.001, window=5)
        state = reset(rets, asset=2, t0=6, cfg=cfg, episode_len=4)
        actions = [1, 1, 0, 1]
        rewards = []
        for a in actions:
            tr, state = step(state, a, rets, cfg)
            rewards.append(tr.reward)
        assert rewards[0] == rets[7, 2] - 0.001
        assert rewards[1] == rets[8, 2]
        assert rewards[2] == cash_leg(rets[9], 2) - 0.001
        assert rewards[3] == rets[10, 2] - 0.001


class TestEnvConfig:
    def test_validation(self):
        with pytest.raises(DataError, match="cost"):
            EnvConfig(cost=-0.1, window=5)
        with pytest.raises(DataError, match="window"):
            EnvConfig(cost=0.0, window=0)


class TestTransition:
    def test_validation(self):
        s = np.zeros(3)
        with pytest.raises(DataError, match="action"):
            Transition(s, 2, 0.0, s, False)
        with pytest.raises(DataError, match="length"):
            Transition(s, 1, 0.0, np.zeros(4), False)
