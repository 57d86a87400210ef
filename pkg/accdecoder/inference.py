"""
Detector interface and the parametric mock detector.

The mock sees through the frame to the ground-truth tracks; how much of the
truth it reports depends on how close the frame it is given is to the true HR
frame (PSNR), which is what makes enhancement worth paying for.
"""
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple  # noqa

import numpy as np
import yaml

from accdecoder.codec import Frame  # noqa
from accdecoder.exceptions import ConfigError
from accdecoder.registry import register_detector
from accdecoder.reuse import INFERRED, Detection, load_detections
from accdecoder.scenegen import BBox, Track  # noqa
from accdecoder.utils import derive_rng, psnr, round_half_away


__all__ = (
    'QualityTier',
    'MockDetectorParams',
    'QualityProbe',
    'Detector',
    'MockDetector',
    'ReplayDetector',
    'iou',
    'truth_at',
    'evaluate_f1',
)

logger = logging.getLogger(__name__)

GroundTruth = Tuple[BBox, int]


class QualityTier(object):

    def __init__(self, min_psnr, min_area, p_miss, jitter):
        # type: (float, float, float, float) -> None
        self.min_psnr = float(min_psnr)
        self.min_area = float(min_area)
        self.p_miss = float(p_miss)
        self.jitter = float(jitter)

    def __repr__(self):
        return 'QualityTier(>={} dB: area>={}, p_miss={}, jitter={})'.format(
            self.min_psnr, self.min_area, self.p_miss, self.jitter)


DEFAULT_TIERS = (
    QualityTier(45.0, 64, 0.0, 0.0),
    QualityTier(35.0, 256, 0.05, 1.0),
    QualityTier(25.0, 1024, 0.2, 2.0),
    QualityTier(float('-inf'), 4096, 0.5, 4.0),
)


class MockDetectorParams(object):
    """
    Kwargs:
        tiers: quality tiers, looked up by the highest `min_psnr` the frame
            reaches
        false_positive_rate: mean number of spurious boxes per frame
        seed: base seed of all per-object draws
        cost_ms: simulated latency of one detection pass
    """

    def __init__(self, tiers=DEFAULT_TIERS, false_positive_rate=0.0, seed=0, cost_ms=25.0):
        # type: (Sequence[QualityTier], float, int, float) -> None
        if not tiers:
            raise ConfigError('at least one quality tier is needed')
        self.tiers = sorted(tiers, key=lambda t: -t.min_psnr)
        if self.tiers[-1].min_psnr != float('-inf'):
            # frames below every tier get the last one
            last = self.tiers[-1]
            self.tiers[-1] = QualityTier(float('-inf'), last.min_area, last.p_miss, last.jitter)
        if false_positive_rate < 0:
            raise ConfigError('false_positive_rate must be >= 0')
        for t in self.tiers:
            if not 0.0 <= t.p_miss <= 1.0 or t.min_area < 0 or t.jitter < 0:
                raise ConfigError('bad quality tier {!r}'.format(t))
        self.false_positive_rate = float(false_positive_rate)
        self.seed = seed
        self.cost_ms = float(cost_ms)

    def tier(self, quality):
        # type: (float) -> QualityTier
        for t in self.tiers:
            if quality >= t.min_psnr:
                return t
        return self.tiers[-1]

    @classmethod
    def from_yaml(cls, path, seed=0):
        # type: (str, int) -> MockDetectorParams
        """
        Tier file layout:

            tiers:
              - {min_psnr: 45, min_area: 64, p_miss: 0.0, jitter: 0.0}
              - {min_psnr: 35, min_area: 256, p_miss: 0.05, jitter: 1.0}
            false_positive_rate: 0.0
            cost_ms: 25
        """
        try:
            with open(path) as f:
                data = yaml.safe_load(f) or {}
            tiers = [QualityTier(**t) for t in data.get('tiers', ())] or list(DEFAULT_TIERS)
            return cls(tiers,
                       false_positive_rate=data.get('false_positive_rate', 0.0),
                       seed=data.get('seed', seed),
                       cost_ms=data.get('cost_ms', 25.0))
        except (OSError, yaml.YAMLError, TypeError) as e:
            raise ConfigError('cannot read tier file {}: {}'.format(path, e))


class QualityProbe(object):
    """
    PSNR of analysis frames against the true HR frames, remembered per frame.
    """

    def __init__(self):
        self.values = {}  # type: Dict[int, float]

    def __call__(self, frame, hr_frame):
        # type: (Frame, Frame) -> float
        q = psnr(frame.pixels, hr_frame.pixels)
        self.values[frame.display_index] = q
        return q

    def exact(self, display_index):
        # type: (int) -> bool
        return self.values.get(display_index) == float('inf')


class Detector(object):
    """
    Subclasses implement `detect`. `hr_frame` and `tracks` are only there
    for simulator detectors; real ones ignore them.
    """
    cost_ms = 25.0

    def detect(self, frame, hr_frame=None, tracks=None):
        # type: (Frame, Optional[Frame], Optional[Sequence[Track]]) -> List[Detection]
        raise NotImplementedError


def _clamp_box(x, y, w, h, width, height):
    # type: (float, float, float, float, int, int) -> BBox
    w = min(max(w, 1), width)
    h = min(max(h, 1), height)
    x = min(max(x, 0), width - w)
    y = min(max(y, 0), height - h)
    return BBox(x, y, w, h)


class MockDetector(Detector):

    def __init__(self, params=None):
        # type: (Optional[MockDetectorParams]) -> None
        self.params = params or MockDetectorParams()
        self.cost_ms = self.params.cost_ms
        self.probe = QualityProbe()

    def detect(self, frame, hr_frame=None, tracks=None):
        # type: (Frame, Optional[Frame], Optional[Sequence[Track]]) -> List[Detection]
        if hr_frame is None or tracks is None:
            raise ConfigError('the mock detector needs the true HR frame and tracks')
        t = frame.display_index
        tier = self.params.tier(self.probe(frame, hr_frame))
        out = []  # type: List[Detection]
        for track in tracks:
            box = track.boxes[t] if t < len(track.boxes) else None
            if box is None or box.w * box.h < tier.min_area:
                continue
            rng = derive_rng(self.params.seed, t, track.object_id)
            draw = rng.random()
            if draw < tier.p_miss:
                continue
            if tier.jitter > 0:
                dx, dy, dw, dh = rng.normal(0.0, tier.jitter, size=4)
            else:
                dx = dy = dw = dh = 0.0
            jittered = _clamp_box(box.x + round_half_away(dx), box.y + round_half_away(dy),
                                  box.w + round_half_away(dw), box.h + round_half_away(dh),
                                  frame.width, frame.height)
            out.append(Detection(jittered, track.class_id, round(0.5 + 0.5 * draw, 4), INFERRED, 0))
        if self.params.false_positive_rate:
            out.extend(self._false_positives(frame))
        return out

    def _false_positives(self, frame):
        # type: (Frame) -> List[Detection]
        rng = derive_rng(self.params.seed, frame.display_index, 0xF9)
        out = []
        for _ in range(int(rng.poisson(self.params.false_positive_rate))):
            w, h = (int(v) for v in rng.integers(8, 48, size=2))
            x = int(rng.integers(0, max(1, frame.width - w)))
            y = int(rng.integers(0, max(1, frame.height - h)))
            out.append(Detection(_clamp_box(x, y, w, h, frame.width, frame.height),
                                 int(rng.integers(0, 3)), round(float(rng.uniform(0.3, 0.6)), 4), INFERRED, 0))
        return out


class ReplayDetector(Detector):
    """
    Replays detections produced offline by an external detector, read from a
    detections CSV.
    """

    def __init__(self, path, cost_ms=25.0):
        # type: (str, float) -> None
        self.path = path
        self.cost_ms = cost_ms
        self._by_frame = load_detections(path)

    def detect(self, frame, hr_frame=None, tracks=None):
        # type: (Frame, Optional[Frame], Optional[Sequence[Track]]) -> List[Detection]
        return [d._replace(source=INFERRED, span=0) for d in self._by_frame.get(frame.display_index, ())]


def iou(a, b):
    # type: (BBox, BBox) -> float
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    if union <= 0:
        return 0.0
    return float(inter) / union


def truth_at(tracks, frame):
    # type: (Sequence[Track], int) -> List[GroundTruth]
    return [(tr.boxes[frame], tr.class_id) for tr in tracks
            if frame < len(tr.boxes) and tr.boxes[frame] is not None]


def evaluate_f1(predicted, truth, iou_threshold=0.5):
    # type: (Sequence[Detection], Sequence[GroundTruth], float) -> Tuple[float, float, float]
    """
    Greedy one-to-one matching by descending IoU between predictions and
    same-class truths.

    Returns:
        (precision, recall, f1); all 1.0 when both sides are empty
    """
    if not predicted and not truth:
        return 1.0, 1.0, 1.0
    pairs = []
    for i, det in enumerate(predicted):
        for j, (box, class_id) in enumerate(truth):
            if det.class_id != class_id:
                continue
            overlap = iou(det.bbox, box)
            if overlap >= iou_threshold:
                pairs.append((-overlap, i, j))
    pairs.sort()
    used_pred, used_truth = set(), set()
    for _, i, j in pairs:
        if i in used_pred or j in used_truth:
            continue
        used_pred.add(i)
        used_truth.add(j)
    tp = len(used_pred)
    precision = tp / float(len(predicted)) if predicted else 0.0
    recall = tp / float(len(truth)) if truth else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


@register_detector('mock')
def _mock_factory(arg, seed=0, **context):
    if arg:
        return MockDetector(MockDetectorParams.from_yaml(arg, seed=seed))
    return MockDetector(MockDetectorParams(seed=seed))


@register_detector('replay')
def _replay_factory(arg, **context):
    if not arg:
        raise ConfigError('replay detector needs a detections CSV, e.g. replay:dets.csv')
    return ReplayDetector(arg)
