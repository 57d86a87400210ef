"""
Simulated latency. Chunk latency is a pure function of how many frames went
through each pipeline, so every reported number can be re-derived from the
assignment counts.
"""
from typing import Any, Dict, Mapping, Optional  # noqa

from accdecoder.exceptions import ConfigError


__all__ = (
    'SR',
    'TRANSFER',
    'REUSE',
    'LR_INFER',
    'PIPELINES',
    'LatencyModel',
)

# frame pipeline labels
SR = 1
TRANSFER = 2
REUSE = 3
# detect on the bicubic upscale of the LR frame; only the all-infer baseline uses it
LR_INFER = 4

PIPELINES = (SR, TRANSFER, REUSE, LR_INFER)
INFERENCE_BEARING = frozenset((SR, TRANSFER, LR_INFER))

PIPELINE_NAMES = {SR: 'sr', TRANSFER: 'transfer', REUSE: 'reuse', LR_INFER: 'lr_infer'}


class LatencyModel(object):
    """
    Kwargs (all simulated ms):
        sr_cost: one SR pass on an anchor frame
        infer_cost: one detector pass
        transfer_cost: HR reconstruction of one frame from cached references
        reuse_cost: shifting one frame's boxes
        feature_cost: feature extraction, every frame
        sched_cost: one scheduler decision, every chunk
    """
    FIELDS = ('sr_cost', 'infer_cost', 'transfer_cost', 'reuse_cost', 'feature_cost', 'sched_cost')

    def __init__(self, sr_cost=60.0, infer_cost=25.0, transfer_cost=3.0, reuse_cost=1.0,
                 feature_cost=0.5, sched_cost=2.0):
        # type: (float, float, float, float, float, float) -> None
        self.sr_cost = float(sr_cost)
        self.infer_cost = float(infer_cost)
        self.transfer_cost = float(transfer_cost)
        self.reuse_cost = float(reuse_cost)
        self.feature_cost = float(feature_cost)
        self.sched_cost = float(sched_cost)
        for name in self.FIELDS:
            if getattr(self, name) < 0:
                raise ConfigError('{} must be >= 0'.format(name))

    @classmethod
    def from_dict(cls, data):
        # type: (Optional[Mapping[str, float]]) -> LatencyModel
        data = dict(data or {})
        unknown = set(data) - set(cls.FIELDS)
        if unknown:
            raise ConfigError('unknown latency keys: {}'.format(', '.join(sorted(unknown))))
        return cls(**data)

    @classmethod
    def for_components(cls, enhancer, detector, overrides=None):
        # type: (Any, Any, Optional[Mapping[str, float]]) -> LatencyModel
        """
        A model charging the enhancer's and the detector's own `cost_ms` for
        SR and inference. Keys in `overrides` win over both.
        """
        data = {}  # type: Dict[str, float]
        for name, component in (('sr_cost', enhancer), ('infer_cost', detector)):
            cost = getattr(component, 'cost_ms', None)
            if cost is not None:
                data[name] = cost
        data.update(overrides or {})
        return cls.from_dict(data)

    def frame_cost(self, label):
        # type: (int) -> float
        if label == SR:
            return self.sr_cost + self.infer_cost
        if label == TRANSFER:
            return self.transfer_cost + self.infer_cost
        if label == REUSE:
            return self.reuse_cost
        if label == LR_INFER:
            return self.infer_cost
        raise ValueError('unknown pipeline label {!r}'.format(label))

    def chunk_latency(self, counts, frames=None):
        # type: (Mapping[int, int], Optional[int]) -> float
        """
        Sum of per-frame pipeline costs, feature extraction on every frame
        and one scheduler decision.
        """
        frames = sum(counts.values()) if frames is None else frames
        total = sum(self.frame_cost(label) * n for label, n in sorted(counts.items()))
        return total + self.feature_cost * frames + self.sched_cost

    def breakdown(self, counts, frames=None):
        # type: (Mapping[int, int], Optional[int]) -> Dict[str, float]
        """
        The same sum split by kind of work: sr, inference, transfer, reuse,
        overhead (features + scheduler).
        """
        frames = sum(counts.values()) if frames is None else frames
        inferred = sum(n for label, n in counts.items() if label in INFERENCE_BEARING)
        return {
            'sr': self.sr_cost * counts.get(SR, 0),
            'inference': self.infer_cost * inferred,
            'transfer': self.transfer_cost * counts.get(TRANSFER, 0),
            'reuse': self.reuse_cost * counts.get(REUSE, 0),
            'overhead': self.feature_cost * frames + self.sched_cost,
        }

    def as_dict(self):
        # type: () -> Dict[str, float]
        return {name: getattr(self, name) for name in self.FIELDS}

    def __repr__(self):
        return 'LatencyModel({})'.format(', '.join('{}={}'.format(k, v) for k, v in self.as_dict().items()))
