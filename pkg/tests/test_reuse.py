import os
import shutil
import tempfile
from unittest import TestCase

import numpy as np
import pytest

from accdecoder.codec import INTER, INTRA, BlockRecord, EncodedFrame, MotionVector
from accdecoder.enhance import OracleSR
from accdecoder.exceptions import ConfigError, CorruptStreamError, ReuseUnavailableError
from accdecoder.harness.calibrate import reuse_iou_by_span
from accdecoder.inference import MockDetector
from accdecoder.pipeline import ChunkExecutor
from accdecoder.reuse import (
    INFERRED,
    REUSED,
    Detection,
    MVField,
    RefGraph,
    accumulate_mv,
    export_detections,
    filter_mvs,
    load_detections,
    shift_bboxes,
)
from accdecoder.scenegen import BBox, ObjectSpec, SceneSpec


ROWS, COLS = 2, 3


def _frame(frame_type, coding_index, display_index, ref=None, mv=(0, 0), intra_at=(), mv_at=None):
    blocks = []
    for y in range(ROWS):
        for x in range(COLS):
            residual = np.zeros((16, 16), dtype=np.int16)
            if ref is None or (x, y) in intra_at:
                blocks.append(BlockRecord(x, y, INTRA, residual))
            else:
                block_mv = (mv_at or {}).get((x, y), mv)
                blocks.append(BlockRecord(x, y, INTER, residual, ref_index=ref, mv=MotionVector(*block_mv)))
    return EncodedFrame(frame_type, coding_index, display_index, blocks)


def _graph(*frames):
    graph = RefGraph(ROWS, COLS)
    for frame in frames:
        graph.add_frame(frame, COLS)
    graph.link()
    return graph


def _det(x, y, w=16, h=16):
    return Detection(BBox(x, y, w, h), 0, 0.9, INFERRED, 0)


class AccumulateTestCase(TestCase):

    def test_forward_chain_adds_up(self):
        graph = _graph(
            _frame('I', 0, 0),
            _frame('P', 1, 1, ref=0, mv=(2, 0)),
            _frame('P', 2, 2, ref=1, mv=(2, 1)),
        )
        field = accumulate_mv(graph, 0, 2)
        assert (field.dx == 4).all()
        assert (field.dy == 1).all()
        assert field.valid.all()

    def test_backward_hop_is_negated(self):
        # B at display 1 predicts from the P at display 2, content moving right by 1
        graph = _graph(
            _frame('I', 0, 0),
            _frame('P', 1, 2, ref=0, mv=(2, 0)),
            _frame('B', 2, 1, ref=1, mv=(-1, 0)),
        )
        assert (accumulate_mv(graph, 1, 2).dx == 1).all()
        assert (accumulate_mv(graph, 2, 1).dx == -1).all()
        # display 0 -> 1 walks through the P at display 2
        assert (accumulate_mv(graph, 0, 1).dx == 1).all()

    def test_same_frame(self):
        graph = _graph(_frame('I', 0, 0))
        field = accumulate_mv(graph, 0, 0)
        assert not field.dx.any() and field.valid.all()

    def test_no_path(self):
        graph = _graph(_frame('I', 0, 0), _frame('I', 1, 1))
        with pytest.raises(ReuseUnavailableError):
            accumulate_mv(graph, 0, 1)
        with pytest.raises(ReuseUnavailableError):
            accumulate_mv(graph, 0, 7)

    def test_intra_block_invalidates(self):
        graph = _graph(_frame('I', 0, 0), _frame('P', 1, 1, ref=0, mv=(3, 0), intra_at=[(0, 0)]))
        field = accumulate_mv(graph, 0, 1)
        assert not field.valid[0, 0]
        assert field.dx[0, 0] == 0
        assert field.valid.sum() == ROWS * COLS - 1
        assert field.dx[1, 2] == 3

    def test_hops_follow_accumulated_offset(self):
        graph = _graph(
            _frame('I', 0, 0),
            _frame('P', 1, 1, ref=0, mv=(10, 0), mv_at={(0, 0): (7, 0)}),
            _frame('P', 2, 2, ref=1, mv=(10, 0)),
            _frame('P', 3, 3, ref=2, mv=(10, 0)),
        )
        field = accumulate_mv(graph, 0, 3)
        # column 2 sits 20 px right of column 1 after two hops, not of column 0
        assert field.dx[0].tolist() == [27, 27, 30]
        assert field.valid.all()

    def test_chain_mixing_still_and_moving_hops_is_invalid(self):
        graph = _graph(
            _frame('I', 0, 0),
            _frame('P', 1, 1, ref=0, mv=(2, 0)),
            _frame('P', 2, 2, ref=1, mv=(0, 0), mv_at={(1, 0): (2, 0)}),
        )
        field = accumulate_mv(graph, 0, 2)
        assert field.valid.sum() == 1
        assert field.valid[0, 1] and field.dx[0, 1] == 4
        assert not field.dx[~field.valid].any()

        still = _graph(_frame('I', 0, 0), _frame('P', 1, 1, ref=0), _frame('P', 2, 2, ref=1))
        field = accumulate_mv(still, 0, 2)
        assert field.valid.all() and not field.dx.any()

    def test_dangling_reference(self):
        graph = RefGraph(ROWS, COLS)
        graph.add_frame(_frame('P', 1, 1, ref=0), COLS)
        with pytest.raises(CorruptStreamError):
            graph.link()

    def test_references_of(self):
        graph = _graph(_frame('I', 0, 0), _frame('P', 1, 2, ref=0), _frame('B', 2, 1, ref=1))
        assert graph.references_of(1) == [2]
        assert graph.references_of(0) == []
        assert len(graph) == 3


def test_filter_mvs():
    mvs = np.array([[0, 0], [2, 0], [2, 0], [2, 0], [20, 0]], dtype=np.float64)
    assert filter_mvs(mvs).tolist() == [[2, 0], [2, 0], [2, 0]]
    assert len(filter_mvs(np.zeros((3, 2)))) == 0
    assert len(filter_mvs(np.zeros((0, 2)))) == 0


class ShiftTestCase(TestCase):

    def test_uniform_field(self):
        field = MVField.uniform(6, 8, 3, -2)
        moved = shift_bboxes([_det(40, 40)], field, (128, 96), span_delta=2)
        assert moved[0].bbox == BBox(43, 38, 16, 16)
        assert moved[0].source == REUSED
        assert moved[0].span == 2

    def test_clamped_to_frame(self):
        field = MVField.uniform(6, 8, 10, -5)
        moved = shift_bboxes([_det(110, 0)], field, (128, 96))
        assert moved[0].bbox == BBox(112, 0, 16, 16)

    def test_scaled(self):
        field = MVField.uniform(6, 8, 2, 0)
        moved = shift_bboxes([_det(40, 40)], field, (256, 192), scale=2)
        assert moved[0].bbox.x == 44

    def test_no_motion(self):
        moved = shift_bboxes([_det(40, 40)], MVField.zeros(6, 8), (128, 96))
        assert moved[0].bbox == BBox(40, 40, 16, 16)

    def test_invalid_entries_ignored(self):
        field = MVField.uniform(6, 8, 4, 0)
        field.valid[:] = False
        field.dx[:] = 0
        moved = shift_bboxes([_det(40, 40)], field, (128, 96))
        assert moved[0].bbox.x == 40


def test_reuse_on_translating_object(stream_factory):
    stream = stream_factory(qp=0, background='flat', velocity=(2, 0))
    executor = ChunkExecutor(stream, OracleSR(1, stream.hr_frames), MockDetector())
    scores = reuse_iou_by_span(executor, max_span=3)
    assert sorted(scores) == [1, 2, 3]
    assert scores[1] >= 0.9


def test_reuse_on_static_scene(stream_factory):
    stream = stream_factory(qp=0, background='flat', velocity=(0, 0))
    executor = ChunkExecutor(stream, OracleSR(1, stream.hr_frames), MockDetector())
    scores = reuse_iou_by_span(executor, max_span=5)
    assert all(v == 1.0 for v in scores.values())


def _translating_scene(background, scale_factor):
    # block-aligned rows, LR speed of 2 px/frame at either scale
    obj = ObjectSpec(size=(64, 32), position=(32, 32), contrast=40, segments=[(0, 2 * scale_factor, 0)])
    return SceneSpec(256, 128, 30, seed=11, background=background, objects=[obj])


TRANSLATING = [
    ('flat', 0, 1),
    ('flat', 0, 2),
    ('texture', 4, 1),
    ('texture', 4, 2),
]


@pytest.mark.parametrize('background,qp,scale_factor', TRANSLATING)
def test_reuse_keeps_up_with_constant_velocity(stream_factory, background, qp, scale_factor):
    stream = stream_factory(scale_factor=scale_factor, qp=qp, spec=_translating_scene(background, scale_factor))
    executor = ChunkExecutor(stream, OracleSR(scale_factor, stream.hr_frames), MockDetector())
    scores = reuse_iou_by_span(executor, max_span=3)
    assert sorted(scores) == [1, 2, 3]
    assert scores[1] >= scores[2] >= scores[3] >= 0.9


@pytest.mark.parametrize('background,qp,scale_factor', TRANSLATING)
def test_accumulated_mvs_match_true_displacement(stream_factory, background, qp, scale_factor):
    stream = stream_factory(scale_factor=scale_factor, qp=qp, spec=_translating_scene(background, scale_factor))
    graph = ChunkExecutor(stream, OracleSR(scale_factor, stream.hr_frames), MockDetector()).reference_graph(0)
    boxes = stream.tracks[0].boxes
    block = 16 * scale_factor
    checked = 0
    for src in (0, 5, 10, 15, 20):
        for span in (1, 2, 3):
            dst = src + span
            field = accumulate_mv(graph, src, dst)
            true_dx = (boxes[dst].x - boxes[src].x) / float(scale_factor)
            # blocks the object covers in every frame from src to dst
            left, right = boxes[dst].x, boxes[src].x + boxes[src].w
            top, bottom = boxes[src].y, boxes[src].y + boxes[src].h
            for row in range(top // block, bottom // block):
                for col in range(-(-left // block), right // block):
                    assert field.valid[row, col]
                    assert abs(field.dx[row, col] - true_dx) <= 1
                    assert abs(field.dy[row, col]) <= 1
                    checked += 1
    assert checked >= 15


class DetectionsFileTestCase(TestCase):

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.path = os.path.join(self.tmpdir, 'dets.csv')

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def test_export_and_load(self):
        rows = [(0, 0, _det(1, 2)), (2, 1, _det(5, 6)._replace(source=REUSED, span=1)), (1, 2, _det(7, 8))]
        export_detections(rows, self.path)
        loaded = load_detections(self.path)
        assert sorted(loaded) == [0, 1, 2]
        assert loaded[1][0].bbox == BBox(5, 6, 16, 16)
        assert loaded[1][0].source == REUSED
        assert loaded[1][0].span == 1
        assert loaded[0][0].confidence == pytest.approx(0.9)

    def test_malformed(self):
        with open(self.path, 'w') as f:
            f.write('frame,x\n1,2\n')
        with pytest.raises(ConfigError):
            load_detections(self.path)
        with pytest.raises(ConfigError):
            load_detections(os.path.join(self.tmpdir, 'missing.csv'))
