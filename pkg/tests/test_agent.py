import dataclasses
import json

import numpy as np
import pytest

from qfolio.agent import Checkpoint, TrainConfig, epsilon_greedy, evaluate, train, train_ensemble
from qfolio.errors import ArtifactError, ConfigError, DataError
from qfolio.net import init_params
from util import constant_q_params, fixed_policy_score, random_returns


def desk_config(**overrides) -> TrainConfig:
    base = dict(
        total_iterations=600,
        memory_capacity=500,
        warmup_threshold=100,
        batch_size=16,
        gradient_step_interval=20,
        evaluation_interval=200,
        episode_length=30,
        window=10,
        hidden_width=32,
        seed=7,
    )
    base.update(overrides)
    return TrainConfig(**base)


class TestTrainConfigValidation:
    def test_defaults_are_valid(self):
        TrainConfig().validate()

    @pytest.mark.parametrize(
        "field,value",
        [
            ("gamma", 1.0),
            ("gamma", -0.1),
            ("epsilon", 1.5),
            ("epsilon", -0.2),
            ("total_iterations", 0),
            ("memory_capacity", 0),
            ("gradient_step_interval", 0),
            ("evaluation_interval", 0),
            ("batch_size", 0),
            ("hidden_width", 48),
            ("learning_rate", 0.0),
            ("target_sync_interval", 0),
            ("episode_length", 0),
            ("warmup_threshold", 0),
            ("window", 0),
            ("cost", -0.001),
            ("seed", -1),
        ],
    )
    def test_bad_value_names_its_field(self, field, value):
        cfg = dataclasses.replace(TrainConfig(), **{field: value})
        with pytest.raises(ConfigError, match=field):
            cfg.validate()

    def test_warmup_cannot_exceed_memory(self):
        cfg = TrainConfig(memory_capacity=100, warmup_threshold=101)
        with pytest.raises(ConfigError, match="warmup_threshold"):
            cfg.validate()

    def test_batch_cannot_exceed_memory(self):
        cfg = TrainConfig(memory_capacity=100, batch_size=101, warmup_threshold=50)
        with pytest.raises(ConfigError, match="batch_size"):
            cfg.validate()

    def test_non_integer_iterations(self):
        cfg = dataclasses.replace(TrainConfig(), total_iterations=1000.0)
        with pytest.raises(ConfigError, match="total_iterations"):
            cfg.validate()


class TestEpsilonGreedy:
    def test_zero_epsilon_is_pure_argmax(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            q = rng.standard_normal(2)
            assert epsilon_greedy(q, 0.0, rng) == int(np.argmax(q))

    def test_full_epsilon_is_uniform(self):
        rng = np.random.default_rng(1)
        q = np.array([5.0, -5.0])
        picks = [epsilon_greedy(q, 1.0, rng) for _ in range(2000)]
        frac = sum(picks) / len(picks)
        assert 0.45 < frac < 0.55

    def test_exact_ties_split_randomly(self):
        rng = np.random.default_rng(2)
        q = np.array([1.5, 1.5])
        picks = [epsilon_greedy(q, 0.0, rng) for _ in range(2000)]
        frac = sum(picks) / len(picks)
        assert 0.45 < frac < 0.55

    def test_bad_inputs(self):
        rng = np.random.default_rng(0)
        with pytest.raises(DataError, match="epsilon"):
            epsilon_greedy(np.zeros(2), 1.5, rng)
        with pytest.raises(DataError, match="action values"):
            epsilon_greedy(np.zeros(3), 0.1, rng)


class TestEvaluate:
    def setup_method(self):
        self.returns = random_returns(60, 3, seed=9)
        self.cfg = desk_config(window=10, cost=0.0005)

    def test_always_hold_matches_reference(self):
        params = constant_q_params(11, q_cash=0.0, q_hold=1.0)
        got = evaluate(params, self.returns, self.cfg)
        want = fixed_policy_score(self.returns, 10, 0.0005, action=1)
        assert got == pytest.approx(want, rel=1e-12)

    def test_always_cash_matches_reference(self):
        params = constant_q_params(11, q_cash=1.0, q_hold=0.0)
        got = evaluate(params, self.returns, self.cfg)
        want = fixed_policy_score(self.returns, 10, 0.0005, action=0)
        assert got == pytest.approx(want, rel=1e-12)

    def test_exact_tie_resolves_to_cash(self):
        params = constant_q_params(11, q_cash=0.0, q_hold=0.0)
        got = evaluate(params, self.returns, self.cfg)
        want = fixed_policy_score(self.returns, 10, 0.0005, action=0)
        assert got == pytest.approx(want, rel=1e-12)

    def test_deterministic_and_non_mutating(self):
        params = init_params(11, 32, seed=3)
        before = [a.copy() for a in params.arrays()]
        a = evaluate(params, self.returns, self.cfg)
        b = evaluate(params, self.returns, self.cfg)
        assert a == b
        for x, y in zip(params.arrays(), before):
            np.testing.assert_array_equal(x, y)

    def test_window_mismatch(self):
        params = init_params(9, 32, seed=3)
        with pytest.raises(DataError, match="window"):
            evaluate(params, self.returns, self.cfg)

    def test_too_short_data(self):
        params = init_params(11, 32, seed=3)
        short = random_returns(11, 3, seed=1)
        with pytest.raises(DataError, match="rows"):
            evaluate(params, short, self.cfg)


class TestTrain:
    def setup_method(self):
        self.train_rm = random_returns(120, 3, seed=30)
        self.val_rm = random_returns(50, 3, seed=31)

    def test_step_accounting(self):
        cfg = desk_config()
        ckpt = train(cfg, self.train_rm, self.val_rm)
        stats = ckpt.train_stats
        assert stats["env_steps"] == 600
        # gradient updates run every 20 steps once 100 transitions are buffered
        assert stats["gradient_steps"] == len([i for i in range(1, 601) if i % 20 == 0 and i >= 100])
        assert stats["target_syncs"] == stats["gradient_steps"]
        assert stats["evaluations"] == 1 + 600 // 200
        assert stats["random_actions"] + stats["greedy_actions"] == 600

    def test_target_sync_interval(self):
        cfg = desk_config(target_sync_interval=5)
        ckpt = train(cfg, self.train_rm, self.val_rm)
        assert ckpt.train_stats["target_syncs"] == ckpt.train_stats["gradient_steps"] // 5

    def test_reproducible_and_seed_sensitive(self):
        cfg = desk_config(seed=42)
        a = train(cfg, self.train_rm, self.val_rm)
        b = train(cfg, self.train_rm, self.val_rm)
        c = train(dataclasses.replace(cfg, seed=43), self.train_rm, self.val_rm)
        for x, y in zip(a.params.arrays(), b.params.arrays()):
            np.testing.assert_array_equal(x, y)
        assert a.validation_score == b.validation_score
        assert any(not np.array_equal(x, y) for x, y in zip(a.params.arrays(), c.params.arrays()))

    def test_progress_log_tracks_running_best(self, tmp_path):
        path = tmp_path / "progress.jsonl"
        cfg = desk_config(evaluation_interval=100)
        ckpt = train(cfg, self.train_rm, self.val_rm, progress_path=path)
        records = [json.loads(line) for line in path.read_text().splitlines()]
        assert records[0]["iteration"] == 0 and records[0]["best"] is True
        assert [r["iteration"] for r in records] == [0, 100, 200, 300, 400, 500, 600]
        running = records[0]["validation_score"]
        for rec in records[1:]:
            assert rec["best"] == (rec["validation_score"] > running)
            running = max(running, rec["validation_score"])
        assert ckpt.validation_score == running

    def test_best_checkpoint_beats_or_equals_later_scores(self):
        cfg = desk_config(evaluation_interval=150)
        ckpt = train(cfg, self.train_rm, self.val_rm)
        assert ckpt.validation_score >= evaluate(ckpt.params, self.val_rm, cfg) - 1e-15

    def test_ticker_mismatch(self):
        other = random_returns(50, 4, seed=2)
        with pytest.raises(DataError, match="tickers"):
            train(desk_config(), self.train_rm, other)

    def test_too_short_training_data(self):
        tiny = random_returns(11, 3, seed=3)
        with pytest.raises(DataError, match="rows"):
            train(desk_config(), tiny, self.val_rm)


class TestCheckpointIO:
    def test_round_trip(self, tmp_path):
        params = init_params(11, 32, seed=5)
        ckpt = Checkpoint(params, validation_score=0.123, iteration_at_save=400, train_stats={"env_steps": 400})
        path = tmp_path / "agent.json"
        ckpt.save(path)
        back = Checkpoint.load(path)
        assert back.validation_score == 0.123
        assert back.iteration_at_save == 400
        assert back.train_stats == {"env_steps": 400}
        for a, b in zip(params.arrays(), back.params.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_save_is_byte_stable(self, tmp_path):
        params = init_params(5, 32, seed=6)
        ckpt = Checkpoint(params, 0.5, 100)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        ckpt.save(p1)
        ckpt.save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ArtifactError, match="not found"):
            Checkpoint.load(tmp_path / "nope.json")

    def test_corrupt_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{ not json")
        with pytest.raises(ArtifactError, match="JSON"):
            Checkpoint.load(path)

    def test_wrong_format_marker(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text(json.dumps({"format": "something-else"}))
        with pytest.raises(ArtifactError, match="format"):
            Checkpoint.load(path)

    def test_tampered_header(self, tmp_path):
        params = init_params(5, 32, seed=6)
        path = tmp_path / "agent.json"
        Checkpoint(params, 0.5, 100).save(path)
        payload = json.loads(path.read_text())
        payload["input_dim"] = 99
        path.write_text(json.dumps(payload))
        with pytest.raises(ArtifactError, match="disagrees"):
            Checkpoint.load(path)


class TestEnsemble:
    def setup_method(self):
        self.train_rm = random_returns(120, 3, seed=30)
        self.val_rm = random_returns(50, 3, seed=31)

    def test_members_match_individual_runs(self):
        cfg = desk_config(total_iterations=200, evaluation_interval=100)
        members = train_ensemble(cfg, self.train_rm, self.val_rm, seeds=[5, 6, 7])
        solo = train(dataclasses.replace(cfg, seed=6), self.train_rm, self.val_rm)
        for a, b in zip(members[1].params.arrays(), solo.params.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_needs_exactly_three_distinct_seeds(self):
        cfg = desk_config(total_iterations=200)
        with pytest.raises(ConfigError, match="3 seeds"):
            train_ensemble(cfg, self.train_rm, self.val_rm, seeds=[1, 2])
        with pytest.raises(ConfigError, match="distinct"):
            train_ensemble(cfg, self.train_rm, self.val_rm, seeds=[1, 1, 2])
