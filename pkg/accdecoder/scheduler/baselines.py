"""
Schedulers the learned policy is compared against: a fixed action, a
nearest-neighbour lookup in a profiled bank, the per-chunk grid oracle and,
for tiny chunks, the exhaustive per-frame assignment oracle.
"""
import itertools
import logging
from collections import Counter
from typing import List, Optional, Sequence, Tuple  # noqa

import numpy as np

from accdecoder.exceptions import ConfigError
from accdecoder.features import ChunkState  # noqa
from accdecoder.latency import REUSE, SR, TRANSFER
from accdecoder.pipeline import ChunkExecutor, ChunkOutcome  # noqa
from accdecoder.scheduler.env import ChunkEnv  # noqa
from accdecoder.scheduler.mdp import ACTION_COUNT, Action, RewardParams, reward


__all__ = (
    'StaticScheduler',
    'KNNBank',
    'oracle_search',
    'assignment_oracle',
    'build_bank',
)

logger = logging.getLogger(__name__)


class StaticScheduler(object):

    def __init__(self, action):
        # type: (Action) -> None
        self.action = action

    def __call__(self, state, t=0):
        # type: (ChunkState, int) -> Action
        return self.action


class KNNBank(object):
    """
    Profiled (state vector, best action) pairs; a query returns the action of
    the nearest state, or the most common action among the `k` nearest.
    """

    def __init__(self, states, actions, k=1):
        # type: (np.ndarray, Sequence[int], int) -> None
        self.actions = np.asarray(actions, dtype=np.int64)
        if len(self.actions):
            self.states = np.asarray(states, dtype=np.float64).reshape(len(self.actions), -1)
        else:
            self.states = np.zeros((0, 0))
        if k < 1:
            raise ConfigError('k must be >= 1')
        self.k = k

    def query(self, state, k=None):
        # type: (ChunkState, Optional[int]) -> Action
        if not len(self.actions):
            raise ConfigError('the KNN bank is empty')
        vector = state.vector() if isinstance(state, ChunkState) else np.asarray(state)
        if vector.shape[-1] != self.states.shape[1]:
            raise ConfigError('state has {} entries, bank holds {}'.format(vector.shape[-1], self.states.shape[1]))
        distances = np.linalg.norm(self.states - vector, axis=1)
        nearest = np.argsort(distances, kind='stable')[:k or self.k]
        votes = Counter(int(self.actions[i]) for i in nearest)
        best = max(votes.values())
        # ties go to the action of the nearer entry
        for i in nearest:
            if votes[int(self.actions[i])] == best:
                return Action.from_index(int(self.actions[i]))
        raise AssertionError('unreachable')

    def __call__(self, state, t=0):
        # type: (ChunkState, int) -> Action
        return self.query(state)

    def save(self, path):
        # type: (str) -> None
        with open(path, 'wb') as f:
            np.savez(f, states=self.states, actions=self.actions, k=np.array(self.k))

    @classmethod
    def load(cls, path, k=None):
        # type: (str, Optional[int]) -> KNNBank
        try:
            with np.load(path) as data:
                return cls(data['states'], data['actions'], k or int(data['k']))
        except (OSError, KeyError, ValueError) as e:
            raise ConfigError('cannot read KNN bank {}: {}'.format(path, e))

    def __len__(self):
        return len(self.actions)


def oracle_search(env, chunk_index, state):
    # type: (ChunkEnv, int, ChunkState) -> Tuple[Action, float, ChunkOutcome]
    """
    Evaluate all 75 actions on a chunk of the current episode. Ties go to the
    lower latency, then to the lower action index.
    """
    best = None
    for index in range(ACTION_COUNT):
        action = Action.from_index(index)
        r, outcome = env.evaluate(chunk_index, state, action)
        key = (-r, outcome.latency_ms, index)
        if best is None or key < best[0]:
            best = (key, action, r, outcome)
    return best[1], best[2], best[3]


def assignment_oracle(executor, chunk_index, params=None):
    # type: (ChunkExecutor, int, Optional[RewardParams]) -> Tuple[Tuple[int, ...], float]
    """
    Best reward over every per-frame assignment of a chunk (3^(k-1) with the
    key frame fixed); only sensible for chunks of a few frames.
    """
    params = params or RewardParams()
    k = len(executor.stream.chunks[chunk_index])
    if k > 10:
        raise ConfigError('assignment oracle over {} frames is too large'.format(k))
    seen = set()
    best = None
    for tail in itertools.product((SR, TRANSFER, REUSE), repeat=k - 1):
        labels = executor.forced(chunk_index, (SR,) + tail)
        if labels in seen:
            continue
        seen.add(labels)
        outcome = executor.run(chunk_index, labels)
        r = reward(outcome.mean_f1, outcome.latency_ms, params)
        key = (-r, outcome.latency_ms, labels)
        if best is None or key < best[0]:
            best = (key, outcome.assignment, r)
    return best[1], best[2]


def build_bank(env, k=1):
    # type: (ChunkEnv, int) -> KNNBank
    """
    Profile every episode of `env` along the oracle's own trajectory.
    """
    states, actions = [], []
    for episode in range(env.episode_count):
        state = env.reset(episode)
        done = False
        while not done:
            action, _, _ = oracle_search(env, env.chunk, state)
            states.append(state.vector())
            actions.append(action.index)
            result = env.step(action)
            state, done = result.state, result.done
    logger.info('built KNN bank of %d chunks', len(actions))
    return KNNBank(np.stack(states) if states else np.zeros((0, 0)), actions, k)
