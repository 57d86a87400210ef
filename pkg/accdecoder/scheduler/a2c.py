"""
Synchronous advantage actor-critic.

Each update, `workers` environments play one episode each with a frozen
snapshot of the current parameters; their transitions are pooled into one
loss and applied to the single shared parameter store. Everything is
sequential and seeded, so a run is reproducible from (corpus, seed, workers).
"""
import csv
import logging
import math
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple  # noqa

import numpy as np
import torch

from accdecoder.exceptions import ConfigError, TrainingDivergedError
from accdecoder.scheduler.env import Environment  # noqa
from accdecoder.scheduler.mdp import RewardParams, discounted_returns
from accdecoder.scheduler.policy import SAMPLE, Policy, select_action
from accdecoder.utils import derive_rng


__all__ = (
    'TrainConfig',
    'LogRow',
    'nstep_returns',
    'train',
    'export_training_log',
    'greedy_rewards',
)

logger = logging.getLogger(__name__)


class TrainConfig(object):
    """
    Kwargs:
        episodes: episodes in total (rounded up to whole updates)
        workers: environments per synchronous update
        lr: Adam learning rate
        entropy_coef: weight of the entropy bonus
        value_coef: weight of the critic regression
        n_step: bootstrap horizon in chunks; None uses the whole episode
        hidden: hidden layer width
        seed: seeds parameter init and every worker's action draws
        max_grad_norm: gradient clipping, None disables it
    """

    def __init__(self, episodes=200, workers=4, lr=1e-4, entropy_coef=0.01, value_coef=0.5,
                 n_step=None, hidden=128, seed=0, max_grad_norm=None):
        # type: (int, int, float, float, float, Optional[int], int, int, Optional[float]) -> None
        self.episodes = episodes
        self.workers = workers
        self.lr = lr
        self.entropy_coef = entropy_coef
        self.value_coef = value_coef
        self.n_step = n_step
        self.hidden = hidden
        self.seed = seed
        self.max_grad_norm = max_grad_norm
        if episodes < 1 or workers < 1:
            raise ConfigError('episodes and workers must be >= 1')
        if n_step is not None and n_step < 1:
            raise ConfigError('n_step must be >= 1')

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**(data or {}))
        except TypeError as e:
            raise ConfigError('bad training section: {}'.format(e))


LogRow = NamedTuple('LogRow', [
    ('episode', int),
    ('step', int),
    ('reward', float),
    ('return_', float),
    ('policy_loss', float),
    ('value_loss', float),
    ('entropy', float),
])


def nstep_returns(rewards, values, gamma, n_step=None):
    # type: (Sequence[float], Sequence[float], float, Optional[int]) -> np.ndarray
    """
    Kwargs:
        rewards: r_0..r_{T-1} of one episode
        values: critic estimates V(s_0)..V(s_{T-1})
        gamma: discount
        n_step: horizon; past the episode end nothing is bootstrapped

    Returns:
        (target for every step: n discounted rewards plus the discounted
        critic value n steps ahead)
    """
    horizon = len(rewards)
    n = horizon if n_step is None else n_step
    out = np.zeros(horizon)
    for t in range(horizon):
        end = min(t + n, horizon)
        bootstrap = values[end] * gamma ** (end - t) if end < horizon else 0.0
        out[t] = sum(gamma ** (k - t) * rewards[k] for k in range(t, end)) + bootstrap
    return out


def _play(env, episode, snapshot, rng):
    # type: (Environment, int, Policy, np.random.Generator) -> Tuple[List[np.ndarray], List[int], List[float]]
    states, actions, rewards = [], [], []
    state = env.reset(episode)
    done = False
    while not done:
        action = select_action(snapshot, state, SAMPLE, rng)
        result = env.step(action)
        states.append(state.vector())
        actions.append(action.index)
        rewards.append(result.reward)
        state, done = result.state, result.done
    return states, actions, rewards


def train(envs, cfg=None, params=None, policy=None, on_update=None):
    # type: (Sequence[Environment], Optional[TrainConfig], Optional[RewardParams], Optional[Policy], Optional[Callable[[int, Policy], None]]) -> Tuple[Policy, List[LogRow]]
    """
    Kwargs:
        envs: one environment per worker (extra workers reuse them round
            robin); all must expose the same episodes
        cfg: training settings
        params: reward parameters (for the discount)
        policy: continue training this policy instead of a fresh one
        on_update: called with (update index, policy) after every update

    Returns:
        (trained policy, one log row per episode)
    """
    cfg = cfg or TrainConfig()
    params = params or RewardParams()
    if not envs:
        raise ConfigError('training needs at least one environment')
    episodes = envs[0].episode_count
    if policy is None:
        policy = Policy(envs[0].state_dim, cfg.hidden, cfg.lr, seed=cfg.seed)
    log = []  # type: List[LogRow]
    updates = int(math.ceil(cfg.episodes / float(cfg.workers)))
    for update in range(updates):
        snapshot = policy.snapshot()
        batch_states, batch_actions, batch_targets = [], [], []
        played = []
        for w in range(cfg.workers):
            episode_number = update * cfg.workers + w
            env = envs[w % len(envs)]
            rng = derive_rng(cfg.seed, update, w)
            states, actions, rewards = _play(env, episode_number % episodes, snapshot, rng)
            values = [snapshot.value(s) for s in states]
            targets = nstep_returns(rewards, values, params.gamma, cfg.n_step)
            batch_states.extend(states)
            batch_actions.extend(actions)
            batch_targets.extend(targets)
            played.append((episode_number, rewards))

        log_probs, values, entropy = policy.evaluate(np.stack(batch_states), np.array(batch_actions))
        targets = torch.as_tensor(np.array(batch_targets), dtype=torch.float32)
        advantage = (targets - values).detach()
        policy_loss = -(log_probs * advantage).mean()
        value_loss = (targets - values).pow(2).mean()
        entropy_mean = entropy.mean()
        loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy_mean
        if not torch.isfinite(loss):
            raise TrainingDivergedError(
                'loss became {} at update {} (policy {:.4g}, value {:.4g}, entropy {:.4g})'.format(
                    float(loss), update, float(policy_loss), float(value_loss), float(entropy_mean)))
        policy.optimizer.zero_grad()
        loss.backward()
        if cfg.max_grad_norm:
            torch.nn.utils.clip_grad_norm_(policy.net.parameters(), cfg.max_grad_norm)
        policy.optimizer.step()

        for episode_number, rewards in played:
            if episode_number >= cfg.episodes:
                continue
            log.append(LogRow(episode_number, update, float(sum(rewards)),
                              float(discounted_returns(rewards, params.gamma)[0]),
                              float(policy_loss), float(value_loss), float(entropy_mean)))
        if update % 10 == 0 or update == updates - 1:
            recent = [row.reward for row in log[-cfg.workers * 10:]]
            logger.info('update %d/%d: mean episode reward %.4f, entropy %.3f',
                        update + 1, updates, float(np.mean(recent)) if recent else 0.0, float(entropy_mean))
        if on_update is not None:
            on_update(update, policy)
    return policy, log


def export_training_log(log, path):
    # type: (Sequence[LogRow], str) -> None
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(('episode', 'step', 'reward', 'return', 'policy_loss', 'value_loss', 'entropy'))
        for row in log:
            writer.writerow((row.episode, row.step, '{:.6f}'.format(row.reward), '{:.6f}'.format(row.return_),
                             '{:.6f}'.format(row.policy_loss), '{:.6f}'.format(row.value_loss),
                             '{:.6f}'.format(row.entropy)))


def greedy_rewards(env, policy):
    # type: (Environment, Policy) -> List[float]
    """
    Per-chunk rewards of the greedy policy over every episode of `env`.
    """
    rewards = []  # type: List[float]
    for episode in range(env.episode_count):
        state = env.reset(episode)
        done = False
        while not done:
            result = env.step(select_action(policy, state))
            rewards.append(result.reward)
            state, done = result.state, result.done
    return rewards
