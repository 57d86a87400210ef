"""
The scheduling MDP: the 75-point threshold grid, frame classification under
a (tr1, tr2) pair, and the accuracy/latency reward.
"""
from typing import List, NamedTuple, Optional, Sequence, Tuple  # noqa

import numpy as np

from accdecoder.exceptions import ConfigError
from accdecoder.features import DiffSignal  # noqa
from accdecoder.latency import REUSE, SR, TRANSFER


__all__ = (
    'TR1_VALUES',
    'TR2_VALUES',
    'ACTION_COUNT',
    'Action',
    'RewardParams',
    'classify_frames',
    'reward',
    'discounted_returns',
)

TR1_VALUES = tuple(round(0.05 * i, 2) for i in range(1, 16))
TR2_VALUES = (0.5, 1.0, 1.5, 2.0, 2.5)
ACTION_COUNT = len(TR1_VALUES) * len(TR2_VALUES)

# accumulated differences are sums of floats; a hair of slack keeps
# 5 x 0.1 >= 0.5 true
_EPS = 1e-9


class Action(NamedTuple('Action', [('tr1', float), ('tr2', float)])):

    @property
    def index(self):
        # type: () -> int
        return TR1_VALUES.index(self.tr1) * len(TR2_VALUES) + TR2_VALUES.index(self.tr2)

    @classmethod
    def from_index(cls, index):
        # type: (int) -> Action
        if not 0 <= index < ACTION_COUNT:
            raise ConfigError('action index {} outside 0..{}'.format(index, ACTION_COUNT - 1))
        return cls(TR1_VALUES[index // len(TR2_VALUES)], TR2_VALUES[index % len(TR2_VALUES)])

    @classmethod
    def from_thresholds(cls, tr1, tr2):
        # type: (float, float) -> Action
        """
        Snap to the grid; values off the grid are a config error.
        """
        for value, grid in ((tr1, TR1_VALUES), (tr2, TR2_VALUES)):
            if not any(abs(value - g) < 1e-6 for g in grid):
                raise ConfigError('{} is not on the threshold grid {}'.format(value, grid))
        snap1 = min(TR1_VALUES, key=lambda g: abs(g - tr1))
        snap2 = min(TR2_VALUES, key=lambda g: abs(g - tr2))
        return cls(snap1, snap2)

    @classmethod
    def grid(cls):
        # type: () -> List[Action]
        return [cls.from_index(i) for i in range(ACTION_COUNT)]


class RewardParams(object):
    """
    Kwargs:
        alpha1: weight of mean accuracy
        alpha2: weight of the latency penalty
        tau: latency tolerance per chunk, simulated ms
        gamma: discount of the cumulative return
    """

    def __init__(self, alpha1=0.5, alpha2=0.5, tau=1000.0, gamma=0.99):
        # type: (float, float, float, float) -> None
        self.alpha1 = float(alpha1)
        self.alpha2 = float(alpha2)
        self.tau = float(tau)
        self.gamma = float(gamma)
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ConfigError('reward weights must be >= 0')
        if self.tau <= 0:
            raise ConfigError('tau must be > 0')
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError('gamma must be in [0, 1]')

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**(data or {}))
        except TypeError as e:
            raise ConfigError('bad reward parameters: {}'.format(e))

    def __repr__(self):
        return 'RewardParams(alpha1={}, alpha2={}, tau={}, gamma={})'.format(
            self.alpha1, self.alpha2, self.tau, self.gamma)


def penalty(latency_ms, p):
    # type: (float, RewardParams) -> int
    return 1 if latency_ms > p.tau else 0


def reward(mean_acc, latency_ms, p):
    # type: (float, float, RewardParams) -> float
    return p.alpha1 * mean_acc - p.alpha2 * penalty(latency_ms, p)


def classify_frames(diffs, action, frame_types=None):
    # type: (DiffSignal, Action, Optional[Sequence[str]]) -> Tuple[int, ...]
    """
    Kwargs:
        diffs: per-frame differences of the chunk, key frame first
        action: (tr1, tr2)
        frame_types: codec frame types; I-frames always go to pipeline 1

    Returns:
        (pipeline label per frame)

    A frame goes to pipeline 1 when its own difference exceeds tr1, to
    pipeline 2 when the difference accumulated since the last pipeline 1 or
    2 frame reaches tr2, and to pipeline 3 otherwise.
    """
    labels = [SR]
    accumulated = 0.0
    for f in range(1, len(diffs)):
        d = float(diffs.d[f])
        if frame_types is not None and frame_types[f] == 'I':
            labels.append(SR)
            accumulated = 0.0
            continue
        accumulated += d
        if d > action.tr1:
            labels.append(SR)
            accumulated = 0.0
        elif accumulated >= action.tr2 - _EPS:
            labels.append(TRANSFER)
            accumulated = 0.0
        else:
            labels.append(REUSE)
    return tuple(labels)


def discounted_returns(rewards, gamma, bootstrap=0.0):
    # type: (Sequence[float], float, float) -> np.ndarray
    """
    R_t = r_t + gamma * R_{t+1}, with R_T = bootstrap.
    """
    out = np.zeros(len(rewards))
    running = bootstrap
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        out[t] = running
    return out
