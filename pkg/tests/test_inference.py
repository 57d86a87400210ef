import os
import shutil
import tempfile
from unittest import TestCase

import numpy as np
import pytest
import yaml

from accdecoder.codec import Frame
from accdecoder.exceptions import ConfigError
from accdecoder.inference import (
    DEFAULT_TIERS,
    MockDetector,
    MockDetectorParams,
    QualityTier,
    ReplayDetector,
    evaluate_f1,
    iou,
    truth_at,
)
from accdecoder.registry import detectors
from accdecoder.reuse import INFERRED, REUSED, Detection, export_detections
from accdecoder.scenegen import BBox, Track


def _det(box, class_id=0):
    return Detection(box, class_id, 0.9, INFERRED, 0)


def test_iou():
    a = BBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BBox(5, 0, 10, 10)) == pytest.approx(50 / 150.0)
    assert iou(a, BBox(20, 20, 5, 5)) == 0.0
    assert iou(BBox(0, 0, 0, 0), BBox(0, 0, 0, 0)) == 0.0


class F1TestCase(TestCase):

    def test_both_empty(self):
        assert evaluate_f1([], []) == (1.0, 1.0, 1.0)

    def test_one_side_empty(self):
        assert evaluate_f1([], [(BBox(0, 0, 8, 8), 0)])[2] == 0.0
        assert evaluate_f1([_det(BBox(0, 0, 8, 8))], [])[2] == 0.0

    def test_perfect(self):
        truth = [(BBox(0, 0, 8, 8), 0), (BBox(20, 20, 8, 8), 1)]
        predicted = [_det(BBox(20, 20, 8, 8), 1), _det(BBox(0, 0, 8, 8), 0)]
        assert evaluate_f1(predicted, truth) == (1.0, 1.0, 1.0)

    def test_class_must_match(self):
        truth = [(BBox(0, 0, 8, 8), 0)]
        assert evaluate_f1([_det(BBox(0, 0, 8, 8), 2)], truth)[2] == 0.0

    def test_one_to_one(self):
        truth = [(BBox(0, 0, 10, 10), 0)]
        predicted = [_det(BBox(0, 0, 10, 10)), _det(BBox(1, 0, 10, 10))]
        precision, recall, f1 = evaluate_f1(predicted, truth)
        assert (precision, recall) == (0.5, 1.0)
        assert f1 == pytest.approx(2 / 3.0)

    def test_iou_threshold(self):
        truth = [(BBox(0, 0, 10, 10), 0)]
        # IoU 1/3
        predicted = [_det(BBox(5, 0, 10, 10))]
        assert evaluate_f1(predicted, truth)[2] == 0.0
        assert evaluate_f1(predicted, truth, iou_threshold=0.3)[2] == 1.0


def test_truth_at():
    tracks = [Track(0, 1, [BBox(0, 0, 4, 4), None]), Track(1, 2, [BBox(1, 1, 4, 4)])]
    assert truth_at(tracks, 0) == [(BBox(0, 0, 4, 4), 1), (BBox(1, 1, 4, 4), 2)]
    assert truth_at(tracks, 1) == []


class MockDetectorTestCase(TestCase):

    def setUp(self):
        rng = np.random.default_rng(9)
        self.hr = Frame(rng.integers(0, 256, size=(96, 128)), 0)
        self.tracks = [
            Track(0, 0, [BBox(10, 10, 40, 40)]),
            Track(1, 1, [BBox(70, 30, 40, 30)]),
            Track(2, 0, [None]),
        ]

    def test_exact_frame_sees_the_truth(self):
        out = MockDetector().detect(self.hr, self.hr, self.tracks)
        assert [d.bbox for d in out] == [BBox(10, 10, 40, 40), BBox(70, 30, 40, 30)]
        assert [d.class_id for d in out] == [0, 1]
        assert all(0.5 <= d.confidence <= 1.0 and d.source == INFERRED for d in out)

    def test_poor_frame_misses_small_objects(self):
        grey = Frame(np.full((96, 128), 128), 0)
        detector = MockDetector()
        # the last tier needs 4096 px of area
        assert detector.detect(grey, self.hr, self.tracks) == []
        assert detector.probe.values[0] < 25.0
        assert not detector.probe.exact(0)

    def test_deterministic(self):
        params = MockDetectorParams(tiers=[QualityTier(float('-inf'), 0, 0.3, 3.0)], seed=4)
        first = MockDetector(params).detect(self.hr, self.hr, self.tracks)
        second = MockDetector(params).detect(self.hr, self.hr, self.tracks)
        assert first == second
        for d in first:
            assert 0 <= d.bbox.x and d.bbox.x + d.bbox.w <= 128
            assert 0 <= d.bbox.y and d.bbox.y + d.bbox.h <= 96

    def test_false_positives(self):
        params = MockDetectorParams(false_positive_rate=3.0, seed=1)
        out = MockDetector(params).detect(self.hr, self.hr, [])
        again = MockDetector(params).detect(self.hr, self.hr, [])
        assert out == again
        assert all(0.3 <= d.confidence <= 0.6 for d in out)

    def test_needs_ground_truth(self):
        with pytest.raises(ConfigError):
            MockDetector().detect(self.hr)


class TierTestCase(TestCase):

    def test_lookup(self):
        params = MockDetectorParams()
        assert params.tier(float('inf')) is params.tiers[0]
        assert params.tier(40.0).min_psnr == 35.0
        assert params.tier(-5.0).min_psnr == float('-inf')
        assert len(params.tiers) == len(DEFAULT_TIERS)

    def test_bottom_tier_catches_all(self):
        params = MockDetectorParams(tiers=[QualityTier(30, 0, 0.0, 0.0)])
        assert params.tier(10.0).min_psnr == float('-inf')

    def test_validation(self):
        with pytest.raises(ConfigError):
            MockDetectorParams(tiers=[])
        with pytest.raises(ConfigError):
            MockDetectorParams(tiers=[QualityTier(30, 0, 1.5, 0.0)])
        with pytest.raises(ConfigError):
            MockDetectorParams(false_positive_rate=-1)


class DetectorFilesTestCase(TestCase):

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def test_tier_file(self):
        path = os.path.join(self.tmpdir, 'tiers.yaml')
        with open(path, 'w') as f:
            yaml.safe_dump({'tiers': [{'min_psnr': 40, 'min_area': 10, 'p_miss': 0.1, 'jitter': 0.5}],
                            'cost_ms': 12}, f)
        params = MockDetectorParams.from_yaml(path)
        assert params.cost_ms == 12.0
        assert params.tiers[0].min_psnr == float('-inf')
        assert detectors.create('mock:{}'.format(path)).cost_ms == 12.0
        with pytest.raises(ConfigError):
            MockDetectorParams.from_yaml(os.path.join(self.tmpdir, 'missing.yaml'))

    def test_replay(self):
        path = os.path.join(self.tmpdir, 'dets.csv')
        export_detections([(0, 3, Detection(BBox(1, 2, 8, 8), 1, 0.75, REUSED, 2))], path)
        detector = detectors.create('replay:{}'.format(path))
        assert isinstance(detector, ReplayDetector)
        out = detector.detect(Frame(np.zeros((16, 16)), 3))
        assert out[0].bbox == BBox(1, 2, 8, 8)
        assert out[0].source == INFERRED
        assert out[0].span == 0
        assert detector.detect(Frame(np.zeros((16, 16)), 0)) == []
        with pytest.raises(ConfigError):
            detectors.create('replay')

    def test_mock_selector(self):
        assert isinstance(detectors.create('mock', seed=3), MockDetector)
        assert detectors.create('mock', seed=3).params.seed == 3
