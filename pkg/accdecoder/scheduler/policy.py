"""
Actor-critic network over the chunk state, action selection, and the
checkpoint file.

Checkpoint layout (little-endian):

    magic 'ACCP', u8 version, f64 learning rate, u16 layer count
    per layer: u16 out, u16 in, f32[out*in] weights row-major, f32[out] bias
    u32 optimizer step count
    per parameter tensor (layer order, weight then bias):
        f32 first moment, f32 second moment (same shape as the tensor)

The layers are the two shared hidden layers, the actor head and the critic
head, in that order.
"""
import logging
import struct
from typing import List, Optional, Tuple  # noqa

import numpy as np
import torch
from torch import nn, optim

from accdecoder.exceptions import ConfigError, CorruptStreamError
from accdecoder.features import ChunkState  # noqa
from accdecoder.scheduler.mdp import ACTION_COUNT, Action


__all__ = (
    'ActorCritic',
    'Policy',
    'select_action',
    'save_policy',
    'load_policy',
)

logger = logging.getLogger(__name__)

MAGIC = b'ACCP'
VERSION = 1

SAMPLE = 'sample'
GREEDY = 'greedy'

_HEADER = struct.Struct('<4sBdH')
_LAYER = struct.Struct('<HH')


class ActorCritic(nn.Module):

    def __init__(self, state_dim, hidden=128, actions=ACTION_COUNT):
        # type: (int, int, int) -> None
        super(ActorCritic, self).__init__()
        self.body = nn.Sequential(
            nn.Linear(state_dim, hidden),
            nn.ReLU(),
            nn.Linear(hidden, hidden),
            nn.ReLU(),
        )
        self.policy = nn.Linear(hidden, actions)
        self.value = nn.Linear(hidden, 1)
        # a zero actor head starts every action at 1/75
        nn.init.zeros_(self.policy.weight)
        nn.init.zeros_(self.policy.bias)

    def forward(self, x):
        x = self.body(x)
        return self.policy(x), self.value(x).squeeze(-1)

    def linears(self):
        # type: () -> List[nn.Linear]
        return [self.body[0], self.body[2], self.policy, self.value]


class Policy(object):
    """
    The network plus its Adam optimizer; the unit that is trained, saved and
    used for action selection.
    """

    def __init__(self, state_dim, hidden=128, lr=1e-4, seed=0):
        # type: (int, int, float, int) -> None
        torch.manual_seed(seed)
        self.state_dim = state_dim
        self.hidden = hidden
        self.lr = lr
        self.net = ActorCritic(state_dim, hidden)
        self.optimizer = optim.Adam(self.net.parameters(), lr=lr)

    def _tensor(self, states):
        # type: (...) -> torch.Tensor
        if isinstance(states, ChunkState):
            states = states.vector()
        x = torch.as_tensor(np.asarray(states, dtype=np.float32))
        if x.shape[-1] != self.state_dim:
            raise ConfigError('state has {} entries, policy expects {}'.format(x.shape[-1], self.state_dim))
        return x

    def probabilities(self, state):
        # type: (ChunkState) -> np.ndarray
        with torch.no_grad():
            logits, _ = self.net(self._tensor(state))
            probs = torch.softmax(logits.double(), dim=-1).numpy()
        return probs / probs.sum()

    def value(self, state):
        # type: (ChunkState) -> float
        with torch.no_grad():
            _, v = self.net(self._tensor(state))
        return float(v)

    def evaluate(self, states, actions):
        # type: (np.ndarray, np.ndarray) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]
        """
        Returns:
            (log pi(a|s), V(s), entropy of pi(.|s)), one entry per state
        """
        logits, values = self.net(self._tensor(states))
        log_probs = torch.log_softmax(logits, dim=-1)
        chosen = log_probs.gather(1, torch.as_tensor(actions, dtype=torch.int64).unsqueeze(1)).squeeze(1)
        entropy = -(log_probs.exp() * log_probs).sum(dim=-1)
        return chosen, values, entropy

    def sample(self, state, rng, size=None):
        """
        Draw action indices from the softmax with a numpy generator.
        """
        return rng.choice(ACTION_COUNT, size=size, p=self.probabilities(state))

    def snapshot(self):
        # type: () -> Policy
        """
        A frozen copy for workers to act with while the learner updates.
        """
        twin = Policy.__new__(Policy)
        twin.state_dim, twin.hidden, twin.lr = self.state_dim, self.hidden, self.lr
        twin.net = ActorCritic(self.state_dim, self.hidden)
        twin.net.load_state_dict(self.net.state_dict())
        twin.optimizer = None
        return twin


def select_action(policy, state, mode=GREEDY, rng=None):
    # type: (Policy, ChunkState, str, Optional[np.random.Generator]) -> Action
    if mode == GREEDY:
        return Action.from_index(int(np.argmax(policy.probabilities(state))))
    if mode == SAMPLE:
        if rng is None:
            raise ConfigError('sampling needs a seeded generator')
        return Action.from_index(int(policy.sample(state, rng)))
    raise ConfigError('unknown selection mode {!r}'.format(mode))


def save_policy(policy, path):
    # type: (Policy, str) -> None
    layers = policy.net.linears()
    chunks = [_HEADER.pack(MAGIC, VERSION, policy.lr, len(layers))]
    for layer in layers:
        out_dim, in_dim = layer.weight.shape
        chunks.append(_LAYER.pack(out_dim, in_dim))
        chunks.append(layer.weight.detach().numpy().astype('<f4').tobytes())
        chunks.append(layer.bias.detach().numpy().astype('<f4').tobytes())
    params = [p for layer in layers for p in (layer.weight, layer.bias)]
    state = policy.optimizer.state if policy.optimizer is not None else {}
    step = int(float(state[params[0]]['step'])) if params[0] in state else 0
    chunks.append(struct.pack('<I', step))
    for p in params:
        for key in ('exp_avg', 'exp_avg_sq'):
            moment = state[p][key] if step else torch.zeros_like(p)
            chunks.append(moment.detach().numpy().astype('<f4').tobytes())
    with open(path, 'wb') as f:
        f.write(b''.join(chunks))
    logger.info('saved policy (%d optimizer steps) to %s', step, path)


def _floats(data, offset, count):
    # type: (bytes, int, int) -> Tuple[np.ndarray, int]
    end = offset + 4 * count
    if end > len(data):
        raise CorruptStreamError('policy checkpoint is truncated')
    return np.frombuffer(data[offset:end], dtype='<f4').copy(), end


def load_policy(path):
    # type: (str) -> Policy
    try:
        with open(path, 'rb') as f:
            data = f.read()
    except OSError as e:
        raise ConfigError('cannot read policy {}: {}'.format(path, e))
    if len(data) < _HEADER.size:
        raise CorruptStreamError('policy checkpoint is truncated')
    magic, version, lr, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC or version != VERSION:
        raise CorruptStreamError('{} is not a version {} policy checkpoint'.format(path, VERSION))
    if count != 4:
        raise CorruptStreamError('expected 4 layers, found {}'.format(count))
    offset = _HEADER.size
    arrays = []
    dims = []
    for _ in range(count):
        if offset + _LAYER.size > len(data):
            raise CorruptStreamError('policy checkpoint is truncated')
        out_dim, in_dim = _LAYER.unpack_from(data, offset)
        offset += _LAYER.size
        weight, offset = _floats(data, offset, out_dim * in_dim)
        bias, offset = _floats(data, offset, out_dim)
        arrays.append((weight.reshape(out_dim, in_dim), bias))
        dims.append((out_dim, in_dim))
    state_dim, hidden = dims[0][1], dims[0][0]
    if dims[1] != (hidden, hidden) or dims[2] != (ACTION_COUNT, hidden) or dims[3] != (1, hidden):
        raise CorruptStreamError('unexpected layer shapes {}'.format(dims))

    policy = Policy(state_dim, hidden, lr)
    layers = policy.net.linears()
    with torch.no_grad():
        for layer, (weight, bias) in zip(layers, arrays):
            layer.weight.copy_(torch.from_numpy(weight))
            layer.bias.copy_(torch.from_numpy(bias))

    if offset + 4 > len(data):
        raise CorruptStreamError('policy checkpoint is truncated')
    step, = struct.unpack_from('<I', data, offset)
    offset += 4
    for layer in layers:
        for p in (layer.weight, layer.bias):
            first, offset = _floats(data, offset, p.numel())
            second, offset = _floats(data, offset, p.numel())
            if step:
                policy.optimizer.state[p] = {
                    'step': torch.tensor(float(step)),
                    'exp_avg': torch.from_numpy(first.reshape(tuple(p.shape))),
                    'exp_avg_sq': torch.from_numpy(second.reshape(tuple(p.shape))),
                }
    if offset != len(data):
        raise CorruptStreamError('{} trailing bytes in policy checkpoint'.format(len(data) - offset))
    return policy
