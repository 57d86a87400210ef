"""
Off-policy actor-critic with an experience replay buffer, kept as a
comparison learner. Transitions remember the probability the behaviour
policy gave their action so the actor update can be importance weighted
(ratio clipped at `ratio_clip`).
"""
import logging
from collections import deque
from typing import Deque, List, NamedTuple, Optional, Sequence, Tuple  # noqa

import numpy as np
import torch

from accdecoder.exceptions import ConfigError, TrainingDivergedError
from accdecoder.scheduler.a2c import LogRow, TrainConfig
from accdecoder.scheduler.env import Environment  # noqa
from accdecoder.scheduler.mdp import Action, RewardParams, discounted_returns
from accdecoder.scheduler.policy import Policy
from accdecoder.utils import derive_rng


__all__ = (
    'Transition',
    'ReplayBuffer',
    'ReplayConfig',
    'train_replay',
)

logger = logging.getLogger(__name__)


Transition = NamedTuple('Transition', [
    ('state', np.ndarray),
    ('action', int),
    ('reward', float),
    ('next_state', Optional[np.ndarray]),
    ('behaviour_prob', float),
])


class ReplayBuffer(object):

    def __init__(self, capacity=100000):
        # type: (int) -> None
        if capacity < 1:
            raise ConfigError('replay capacity must be >= 1')
        self.capacity = capacity
        self._items = deque(maxlen=capacity)  # type: Deque[Transition]

    def push(self, transition):
        # type: (Transition) -> None
        self._items.append(transition)

    def sample(self, size, rng):
        # type: (int, np.random.Generator) -> List[Transition]
        picks = rng.integers(0, len(self._items), size=min(size, len(self._items)))
        return [self._items[i] for i in picks]

    def __len__(self):
        return len(self._items)


class ReplayConfig(TrainConfig):
    """
    TrainConfig plus buffer capacity, minibatch size, updates per episode and
    the importance ratio clip.
    """

    def __init__(self, capacity=100000, batch_size=256, updates_per_episode=4, ratio_clip=1.0, **kwargs):
        super(ReplayConfig, self).__init__(**kwargs)
        self.capacity = capacity
        self.batch_size = batch_size
        self.updates_per_episode = updates_per_episode
        self.ratio_clip = ratio_clip


def _update(policy, batch, params, cfg):
    # type: (Policy, List[Transition], RewardParams, ReplayConfig) -> Tuple[float, float, float]
    states = np.stack([t.state for t in batch])
    actions = np.array([t.action for t in batch])
    rewards = torch.as_tensor([t.reward for t in batch], dtype=torch.float32)
    behaviour = torch.as_tensor([t.behaviour_prob for t in batch], dtype=torch.float32)
    nonterminal = [i for i, t in enumerate(batch) if t.next_state is not None]
    next_values = torch.zeros(len(batch))
    if nonterminal:
        with torch.no_grad():
            _, v = policy.net(policy._tensor(np.stack([batch[i].next_state for i in nonterminal])))
        next_values[nonterminal] = v
    targets = rewards + params.gamma * next_values

    log_probs, values, entropy = policy.evaluate(states, actions)
    ratio = torch.clamp(log_probs.detach().exp() / behaviour, max=cfg.ratio_clip)
    advantage = (targets - values).detach()
    policy_loss = -(ratio * log_probs * advantage).mean()
    value_loss = (targets - values).pow(2).mean()
    entropy_mean = entropy.mean()
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy_mean
    if not torch.isfinite(loss):
        raise TrainingDivergedError('replay learner loss became {}'.format(float(loss)))
    policy.optimizer.zero_grad()
    loss.backward()
    policy.optimizer.step()
    return float(policy_loss), float(value_loss), float(entropy_mean)


def train_replay(env, cfg=None, params=None):
    # type: (Environment, Optional[ReplayConfig], Optional[RewardParams]) -> Tuple[Policy, List[LogRow]]
    cfg = cfg or ReplayConfig()
    params = params or RewardParams()
    policy = Policy(env.state_dim, cfg.hidden, cfg.lr, seed=cfg.seed)
    buffer = ReplayBuffer(cfg.capacity)
    log = []  # type: List[LogRow]
    for episode in range(cfg.episodes):
        rng = derive_rng(cfg.seed, episode, 0x4E)
        state = env.reset(episode % env.episode_count)
        rewards = []
        done = False
        while not done:
            probs = policy.probabilities(state)
            index = int(rng.choice(len(probs), p=probs))
            result = env.step(Action.from_index(index))
            buffer.push(Transition(state.vector(), index, result.reward,
                                   None if result.done else result.state.vector(), float(probs[index])))
            rewards.append(result.reward)
            state, done = result.state, result.done
        losses = (0.0, 0.0, 0.0)
        for _ in range(cfg.updates_per_episode):
            losses = _update(policy, buffer.sample(cfg.batch_size, rng), params, cfg)
        log.append(LogRow(episode, episode, float(sum(rewards)),
                          float(discounted_returns(rewards, params.gamma)[0]), *losses))
        if episode % 20 == 0:
            logger.info('replay episode %d: reward %.4f, buffer %d', episode, sum(rewards), len(buffer))
    return policy, log
