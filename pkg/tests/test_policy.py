import csv
import os
import shutil
import tempfile
from unittest import TestCase

import numpy as np
import pytest
import torch

from accdecoder.exceptions import ConfigError, CorruptStreamError, TrainingDivergedError
from accdecoder.features import ChunkState
from accdecoder.scheduler.a2c import TrainConfig, export_training_log, greedy_rewards, nstep_returns, train
from accdecoder.scheduler.env import Environment, StepResult
from accdecoder.scheduler.mdp import ACTION_COUNT, Action, RewardParams
from accdecoder.scheduler.policy import GREEDY, SAMPLE, Policy, load_policy, save_policy, select_action
from accdecoder.scheduler.replay import ReplayBuffer, ReplayConfig, Transition, train_replay


class BanditEnv(Environment):
    """
    Constant state; the reward is tr1 itself, so the best actions are those
    with the largest tr1. `length` chunks per episode.
    """
    state_dim = 4

    def __init__(self, length=1, episodes=2, poison=False):
        self.length = length
        self.episodes = episodes
        self.poison = poison
        self._t = 0

    @property
    def episode_count(self):
        return self.episodes

    def _state(self):
        return ChunkState(np.ones(2), np.array([0.5]), 0.25)

    def reset(self, episode=0):
        self._t = 0
        return self._state()

    def step(self, action):
        self._t += 1
        done = self._t >= self.length
        r = float('nan') if self.poison else action.tr1
        return StepResult(r, None if done else self._state(), done, None)


class PolicyTestCase(TestCase):

    def setUp(self):
        self.state = BanditEnv()._state()

    def test_fresh_policy_is_uniform(self):
        policy = Policy(4)
        probs = policy.probabilities(self.state)
        assert probs.shape == (ACTION_COUNT,)
        assert np.allclose(probs, 1.0 / 75)
        assert probs.sum() == pytest.approx(1.0)

    def test_greedy_follows_a_saturated_logit(self):
        policy = Policy(4)
        with torch.no_grad():
            policy.net.policy.bias[17] = 50.0
        for seed in range(5):
            assert select_action(policy, self.state, GREEDY) == Action.from_index(17)
            assert select_action(policy, self.state, SAMPLE, np.random.default_rng(seed)).index == 17

    def test_sampling_matches_probabilities(self):
        policy = Policy(4)
        with torch.no_grad():
            policy.net.policy.bias.copy_(torch.linspace(-2.0, 2.0, ACTION_COUNT))
        probs = policy.probabilities(self.state)
        draws = 100000
        counts = np.bincount(policy.sample(self.state, np.random.default_rng(0), size=draws), minlength=ACTION_COUNT)
        sigma = np.sqrt(draws * probs * (1 - probs))
        assert (np.abs(counts - draws * probs) <= 5 * sigma).all()

    def test_state_size_is_checked(self):
        with pytest.raises(ConfigError):
            Policy(5).probabilities(self.state)

    def test_selection_errors(self):
        policy = Policy(4)
        with pytest.raises(ConfigError):
            select_action(policy, self.state, SAMPLE)
        with pytest.raises(ConfigError):
            select_action(policy, self.state, 'softest')

    def test_seeded_init(self):
        a, b = Policy(4, seed=3), Policy(4, seed=3)
        assert a.value(self.state) == b.value(self.state)
        assert Policy(4, seed=4).value(self.state) != a.value(self.state)

    def test_snapshot_is_frozen(self):
        policy = Policy(4)
        twin = policy.snapshot()
        with torch.no_grad():
            policy.net.policy.bias[0] = 9.0
        assert np.allclose(twin.probabilities(self.state), 1.0 / 75)


class CheckpointTestCase(TestCase):

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.path = os.path.join(self.tmpdir, 'policy.bin')
        self.state = BanditEnv()._state()

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def test_round_trip_after_training(self):
        policy, _ = train([BanditEnv()], TrainConfig(episodes=4, workers=2, lr=1e-2, hidden=16))
        save_policy(policy, self.path)
        restored = load_policy(self.path)
        assert restored.hidden == 16
        assert restored.lr == pytest.approx(1e-2)
        assert np.array_equal(restored.probabilities(self.state), policy.probabilities(self.state))
        for old, new in zip(policy.net.parameters(), restored.net.parameters()):
            assert torch.equal(old, new)
            assert torch.equal(policy.optimizer.state[old]['exp_avg'], restored.optimizer.state[new]['exp_avg'])
        assert int(float(restored.optimizer.state[next(restored.net.parameters())]['step'])) == 2

    def test_untrained_policy(self):
        save_policy(Policy(4, hidden=8), self.path)
        restored = load_policy(self.path)
        assert not restored.optimizer.state
        assert np.allclose(restored.probabilities(self.state), 1.0 / 75)

    def test_corrupt_files(self):
        save_policy(Policy(4, hidden=8), self.path)
        with open(self.path, 'rb') as f:
            data = f.read()
        for bad in (b'XXXX' + data[4:], data[:-3], data[:10], data + b'\x00'):
            with open(self.path, 'wb') as f:
                f.write(bad)
            with pytest.raises(CorruptStreamError):
                load_policy(self.path)
        with pytest.raises(ConfigError):
            load_policy(os.path.join(self.tmpdir, 'missing.bin'))


def test_nstep_returns():
    rewards = [1.0, 0.0, 2.0]
    values = [0.5, 0.25, 4.0]
    # whole-episode horizon: plain discounted returns
    assert nstep_returns(rewards, values, 0.5).tolist() == [1.5, 1.0, 2.0]
    # one step: r_t + gamma * V(s_{t+1}), nothing past the end
    assert nstep_returns(rewards, values, 0.5, n_step=1).tolist() == [1.125, 2.0, 2.0]


class TrainTestCase(TestCase):

    def test_log_rows(self):
        _, log = train([BanditEnv(length=3)], TrainConfig(episodes=5, workers=2, hidden=16))
        assert [row.episode for row in log] == [0, 1, 2, 3, 4]
        assert [row.step for row in log] == [0, 0, 1, 1, 2]
        assert all(0.15 <= row.reward <= 2.25 for row in log)

    def test_undiscounted_single_chunk(self):
        _, log = train([BanditEnv()], TrainConfig(episodes=3, workers=1, hidden=16), RewardParams(gamma=0.0))
        assert all(row.return_ == row.reward for row in log)

    def test_reproducible(self):
        cfg = TrainConfig(episodes=6, workers=3, hidden=16, seed=11)
        _, first = train([BanditEnv(length=2)], cfg)
        _, second = train([BanditEnv(length=2)], cfg)
        assert first == second

    def test_learns_the_bandit(self):
        env = BanditEnv()
        before = Policy(4, hidden=32).probabilities(env._state())
        policy, _ = train([env], TrainConfig(episodes=1600, workers=8, lr=1e-2, hidden=32, seed=1))
        after = policy.probabilities(env._state())
        high = [a.index for a in Action.grid() if a.tr1 >= 0.5]
        assert after[high].sum() > before[high].sum() + 0.2
        assert select_action(policy, env._state()).tr1 >= 0.5
        assert np.mean(greedy_rewards(env, policy)) >= 0.5

    def test_divergence(self):
        with pytest.raises(TrainingDivergedError):
            train([BanditEnv(poison=True)], TrainConfig(episodes=1, workers=1, hidden=8))

    def test_on_update(self):
        seen = []
        train([BanditEnv()], TrainConfig(episodes=4, workers=2, hidden=8), on_update=lambda i, p: seen.append(i))
        assert seen == [0, 1]

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(episodes=0)
        with pytest.raises(ConfigError):
            TrainConfig(n_step=0)
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({'epochs': 3})
        with pytest.raises(ConfigError):
            train([])

    def test_export_training_log(self):
        _, log = train([BanditEnv()], TrainConfig(episodes=2, workers=1, hidden=8))
        tmpdir = tempfile.mkdtemp()
        try:
            path = os.path.join(tmpdir, 'train.csv')
            export_training_log(log, path)
            with open(path, newline='') as f:
                rows = list(csv.DictReader(f))
            assert len(rows) == 2
            assert list(rows[0]) == ['episode', 'step', 'reward', 'return', 'policy_loss', 'value_loss', 'entropy']
        finally:
            shutil.rmtree(tmpdir)


class ReplayTestCase(TestCase):

    def test_buffer_capacity(self):
        buffer = ReplayBuffer(capacity=3)
        for i in range(5):
            buffer.push(Transition(np.zeros(4), i, 0.0, None, 1.0))
        assert len(buffer) == 3
        batch = buffer.sample(10, np.random.default_rng(0))
        assert len(batch) == 3
        assert {t.action for t in batch} <= {2, 3, 4}
        with pytest.raises(ConfigError):
            ReplayBuffer(capacity=0)

    def test_defaults(self):
        cfg = ReplayConfig()
        assert (cfg.capacity, cfg.batch_size, cfg.ratio_clip) == (100000, 256, 1.0)

    def test_train_replay(self):
        cfg = ReplayConfig(episodes=5, hidden=16, batch_size=8, updates_per_episode=2)
        policy, log = train_replay(BanditEnv(length=3), cfg)
        assert len(log) == 5
        assert isinstance(policy, Policy)
        assert np.isfinite([row.value_loss for row in log]).all()
