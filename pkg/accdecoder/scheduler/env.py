"""
The chunk environment. An episode is one stream; a step is one chunk: the
action's thresholds classify the chunk's frames, the executor runs the
pipelines and the reward scores the outcome.
"""
import logging
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple  # noqa

import numpy as np

from accdecoder.exceptions import ConfigError
from accdecoder.features import ChunkState, chunk_state
from accdecoder.pipeline import ChunkExecutor, ChunkOutcome  # noqa
from accdecoder.scheduler.mdp import Action, RewardParams, classify_frames, reward
from accdecoder.utils import WallClock


__all__ = (
    'StepResult',
    'Environment',
    'ChunkEnv',
)

logger = logging.getLogger(__name__)


StepResult = NamedTuple('StepResult', [
    ('reward', float),
    ('state', Optional[ChunkState]),
    ('done', bool),
    ('outcome', Optional[ChunkOutcome]),
])


class Environment(object):
    """
    What the learners need: a number of episodes to pick from, `reset` to
    start one and `step` to advance it.
    """
    state_dim = 0

    @property
    def episode_count(self):
        # type: () -> int
        raise NotImplementedError

    def reset(self, episode):
        # type: (int) -> ChunkState
        raise NotImplementedError

    def step(self, action):
        # type: (Action) -> StepResult
        raise NotImplementedError


class ChunkEnv(Environment):

    def __init__(self, executors, params=None, theta=None, clock=None):
        # type: (Sequence[ChunkExecutor], Optional[RewardParams], Optional[float], Optional[WallClock]) -> None
        if not executors:
            raise ConfigError('the environment needs at least one stream')
        self.executors = list(executors)
        self.params = params or RewardParams()
        self.theta = theta
        self.clock = clock or WallClock()
        self._states = {}  # type: Dict[Tuple[int, int, Optional[int]], ChunkState]
        self._episode = 0
        self._executor = self.executors[0]
        self._chunk = 0
        self._state = None  # type: Optional[ChunkState]
        self._done = True

    @property
    def episode_count(self):
        # type: () -> int
        return len(self.executors)

    @property
    def state_dim(self):
        # type: () -> int
        return len(self.state_for(0, 0, None))

    @property
    def chunk(self):
        # type: () -> int
        return self._chunk

    @property
    def executor(self):
        # type: () -> ChunkExecutor
        return self._executor

    def state_for(self, episode, chunk_index, prev_inference):
        # type: (int, int, Optional[int]) -> ChunkState
        """
        State of a chunk given the display index of the previous chunk's last
        inference frame (None for the first chunk).
        """
        key = (episode, chunk_index, prev_inference)
        if key not in self._states:
            executor = self.executors[episode]
            stream = executor.stream
            prev_edge = None
            if prev_inference is not None:
                prev_edge = self.state_for(episode, chunk_index - 1, None).edges[
                    stream.chunks[chunk_index - 1].index(prev_inference)]
            with self.clock('features'):
                self._states[key] = chunk_state(stream.info, stream.chunks[chunk_index], prev_edge,
                                                self.theta, stream.chunk_size)
        return self._states[key]

    def frame_types(self, chunk_index):
        # type: (int) -> List[str]
        stream = self._executor.stream
        return [stream.info.by_display(d).frame_type for d in stream.chunks[chunk_index]]

    def reset(self, episode=0):
        # type: (int) -> ChunkState
        self._episode = episode % len(self.executors)
        self._executor = self.executors[self._episode]
        self._chunk = 0
        self._done = False
        self._state = self.state_for(self._episode, 0, None)
        return self._state

    def evaluate(self, chunk_index, state, action):
        # type: (int, ChunkState, Action) -> Tuple[float, ChunkOutcome]
        """
        Reward and outcome of `action` on a chunk of the current episode,
        without advancing it.
        """
        labels = classify_frames(state.diff_signal, action, self.frame_types(chunk_index))
        outcome = self._executor.run(chunk_index, labels)
        return reward(outcome.mean_f1, outcome.latency_ms, self.params), outcome

    def step(self, action):
        # type: (Action) -> StepResult
        if self._done or self._state is None:
            raise ConfigError('step() on a finished episode; call reset()')
        r, outcome = self.evaluate(self._chunk, self._state, action)
        logger.debug('episode %d chunk %d action %s: reward %.3f', self._episode, self._chunk, action, r)
        self._chunk += 1
        if self._chunk >= len(self._executor.stream.chunks):
            self._done = True
            self._state = None
        else:
            self._state = self.state_for(self._episode, self._chunk, outcome.last_inference())
        return StepResult(r, self._state, self._done, outcome)


def rollout(env, episode, choose):
    # type: (Environment, int, Callable[[ChunkState, int], Action]) -> Tuple[List[ChunkState], List[Action], List[float], List[ChunkOutcome]]
    """
    Play one episode with `choose(state, t) -> Action`.
    """
    states, actions, rewards, outcomes = [], [], [], []
    state = env.reset(episode)
    done = False
    t = 0
    while not done:
        action = choose(state, t)
        result = env.step(action)
        states.append(state)
        actions.append(action)
        rewards.append(result.reward)
        outcomes.append(result.outcome)
        state, done = result.state, result.done
        t += 1
    return states, actions, rewards, outcomes


def mean_reward(rewards):
    # type: (Sequence[float]) -> float
    return float(np.mean(rewards)) if len(rewards) else 0.0
