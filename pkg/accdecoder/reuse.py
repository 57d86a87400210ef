"""
Pipeline 3: carry detections of the last inference frame to later frames by
the motion vectors the codec already computed.
"""
import csv
import logging
from collections import deque
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple  # noqa

import numpy as np

from accdecoder.codec import MB, CodecInfo, EncodedFrame  # noqa
from accdecoder.exceptions import ConfigError, CorruptStreamError, ReuseUnavailableError
from accdecoder.scenegen import BBox
from accdecoder.utils import round_half_away, round_half_up


__all__ = (
    'INFERRED',
    'REUSED',
    'Detection',
    'MVField',
    'RefGraph',
    'build_reference_graph',
    'accumulate_mv',
    'shift_bboxes',
    'export_detections',
    'load_detections',
)

logger = logging.getLogger(__name__)

INFERRED = 'inferred'
REUSED = 'reused'

# filter cut: drop MVs longer than mean + FILTER_SIGMA * std (non-zero set)
FILTER_SIGMA = 0.8


Detection = NamedTuple('Detection', [
    ('bbox', BBox),
    ('class_id', int),
    ('confidence', float),
    ('source', str),
    ('span', int),
])


class MVField(object):
    """
    Per-macroblock displacement (dx, dy) of content between two display-order
    frames, indexed by the later frame's macroblock grid. Entries whose chain
    crossed an intra block, or mixed still and moving hops, are flagged
    invalid.
    """

    def __init__(self, dx, dy, valid):
        # type: (np.ndarray, np.ndarray, np.ndarray) -> None
        self.dx = dx
        self.dy = dy
        self.valid = valid

    @classmethod
    def zeros(cls, mb_rows, mb_cols):
        # type: (int, int) -> MVField
        return cls(np.zeros((mb_rows, mb_cols), dtype=np.int64),
                   np.zeros((mb_rows, mb_cols), dtype=np.int64),
                   np.ones((mb_rows, mb_cols), dtype=bool))

    @classmethod
    def uniform(cls, mb_rows, mb_cols, dx, dy):
        # type: (int, int, int, int) -> MVField
        field = cls.zeros(mb_rows, mb_cols)
        field.dx[:] = dx
        field.dy[:] = dy
        return field

    @property
    def shape(self):
        # type: () -> Tuple[int, int]
        return self.dx.shape

    def __repr__(self):
        return 'MVField({}x{}, {} valid)'.format(self.shape[1], self.shape[0], int(self.valid.sum()))


class RefGraph(object):
    """
    Frames as nodes, one edge per (frame, reference) pair; each edge carries
    the frame's per-macroblock MVs towards that reference.
    """

    def __init__(self, mb_rows, mb_cols):
        # type: (int, int) -> None
        self.mb_rows = mb_rows
        self.mb_cols = mb_cols
        self.coding_of = {}  # type: Dict[int, int]
        self.display_of = {}  # type: Dict[int, int]
        # (frame coding index, reference coding index) -> (dx, dy, valid)
        self.edges = {}  # type: Dict[Tuple[int, int], Tuple[np.ndarray, np.ndarray, np.ndarray]]
        self._adjacent = {}  # type: Dict[int, List[int]]

    def add_frame(self, frame, mb_cols):
        # type: (EncodedFrame, int) -> None
        ci = frame.coding_index
        self.coding_of[frame.display_index] = ci
        self.display_of[ci] = frame.display_index
        self._adjacent.setdefault(ci, [])
        for ref in frame.references:
            dx = np.zeros((self.mb_rows, self.mb_cols), dtype=np.int64)
            dy = np.zeros_like(dx)
            valid = np.zeros((self.mb_rows, self.mb_cols), dtype=bool)
            for b in frame.blocks:
                if b.is_inter and b.ref_index == ref:
                    dx[b.mb_y, b.mb_x] = b.mv.dx
                    dy[b.mb_y, b.mb_x] = b.mv.dy
                    valid[b.mb_y, b.mb_x] = True
            self.edges[(ci, ref)] = (dx, dy, valid)

    def link(self):
        # type: () -> None
        for (ci, ref) in self.edges:
            if ref not in self.display_of:
                raise CorruptStreamError('frame {} references coding index {} outside the graph'.format(
                    self.display_of[ci], ref))
        adjacent = {ci: set() for ci in self.display_of}  # type: Dict[int, set]
        for (ci, ref) in self.edges:
            adjacent[ci].add(ref)
            adjacent[ref].add(ci)
        self._adjacent = {ci: sorted(n) for ci, n in adjacent.items()}

    def references_of(self, display_index):
        # type: (int) -> List[int]
        ci = self.coding_of[display_index]
        return sorted(self.display_of[ref] for (c, ref) in self.edges if c == ci)

    def path(self, from_coding, to_coding):
        # type: (int, int) -> Optional[List[int]]
        """
        Shortest chain of coding indices from `to_coding` back to
        `from_coding`, edges walked in either direction. Neighbours are
        explored in coding order so ties resolve the same way every run.
        """
        previous = {to_coding: None}  # type: Dict[int, Optional[int]]
        queue = deque([to_coding])
        while queue:
            node = queue.popleft()
            if node == from_coding:
                chain = [node]
                while previous[chain[-1]] is not None:
                    chain.append(previous[chain[-1]])
                return list(reversed(chain))
            for n in self._adjacent.get(node, ()):
                if n not in previous:
                    previous[n] = node
                    queue.append(n)
        return None

    def __len__(self):
        return len(self.display_of)


def build_reference_graph(info, display_indices=None):
    # type: (CodecInfo, Optional[Iterable[int]]) -> RefGraph
    """
    Kwargs:
        info: decode-time metadata
        display_indices: restrict the graph to these frames (a chunk plus
            whatever it references); all frames by default
    """
    graph = RefGraph(info.mb_rows, info.mb_cols)
    frames = info.frames if display_indices is None else [info.by_display(d) for d in display_indices]
    for frame in frames:
        graph.add_frame(frame, info.mb_cols)
    graph.link()
    return graph


def accumulate_mv(graph, from_display, to_display):
    # type: (RefGraph, int, int) -> MVField
    """
    Displacement of content from frame `from_display` to frame `to_display`,
    composed hop by hop. Each hop looks up the macroblock the content sits in
    after the offset accumulated so far (rounded to the nearest block);
    backward hops contribute the negated MV.

    An entry is invalid when any hop crosses an intra block, or when its
    chain mixes zero and non-zero hops: such a chain ran over an object edge
    and its sum is only part of the object's motion.
    """
    rows, cols = graph.mb_rows, graph.mb_cols
    if from_display == to_display:
        return MVField.zeros(rows, cols)
    try:
        src, dst = graph.coding_of[from_display], graph.coding_of[to_display]
    except KeyError as e:
        raise ReuseUnavailableError('frame {} is not in the reference graph'.format(e.args[0]))
    chain = graph.path(src, dst)
    if chain is None:
        raise ReuseUnavailableError('no reference path from frame {} to frame {}'.format(from_display, to_display))

    # the chain runs from the target back to the source
    acc_x = np.zeros((rows, cols), dtype=np.int64)
    acc_y = np.zeros((rows, cols), dtype=np.int64)
    valid = np.ones((rows, cols), dtype=bool)
    moving = np.zeros((rows, cols), dtype=bool)
    still = np.zeros((rows, cols), dtype=bool)
    base_y, base_x = np.mgrid[0:rows, 0:cols]
    pos_y, pos_x = base_y, base_x
    for here, there in zip(chain, chain[1:]):
        if (here, there) in graph.edges:
            dx, dy, ok = graph.edges[(here, there)]
            sign = 1
        else:
            dx, dy, ok = graph.edges[(there, here)]
            sign = -1
        hop_x = dx[pos_y, pos_x]
        hop_y = dy[pos_y, pos_x]
        valid &= ok[pos_y, pos_x]
        zero = (hop_x == 0) & (hop_y == 0)
        still |= zero
        moving |= ~zero
        acc_x += sign * hop_x
        acc_y += sign * hop_y
        # content now at p sat at p - acc in the frame the next hop starts from
        pos_x = np.clip(round_half_up(base_x - acc_x / float(MB)), 0, cols - 1).astype(np.int64)
        pos_y = np.clip(round_half_up(base_y - acc_y / float(MB)), 0, rows - 1).astype(np.int64)

    valid &= ~(moving & still)
    acc_x[~valid] = 0
    acc_y[~valid] = 0
    return MVField(acc_x, acc_y, valid)


def _collect(bbox, field, scale):
    # type: (BBox, MVField, int) -> np.ndarray
    """
    Valid MVs (in analysis pixels) of the macroblocks overlapping the bbox
    grown by one macroblock on every side.
    """
    block = MB * scale
    x0, y0 = bbox.x - block, bbox.y - block
    x1, y1 = bbox.x + bbox.w + block, bbox.y + bbox.h + block
    rows, cols = field.shape
    c0, c1 = max(0, int(np.floor(x0 / block))), min(cols, int(np.ceil(x1 / block)))
    r0, r1 = max(0, int(np.floor(y0 / block))), min(rows, int(np.ceil(y1 / block)))
    if c0 >= c1 or r0 >= r1:
        return np.zeros((0, 2))
    valid = field.valid[r0:r1, c0:c1]
    mvs = np.stack([field.dx[r0:r1, c0:c1][valid], field.dy[r0:r1, c0:c1][valid]], axis=1)
    return mvs.astype(np.float64) * scale


def filter_mvs(mvs):
    # type: (np.ndarray) -> np.ndarray
    """
    Drop zero MVs, then those longer than mean + 0.8 std of the remaining
    magnitudes.
    """
    if not len(mvs):
        return mvs
    magnitude = np.hypot(mvs[:, 0], mvs[:, 1])
    moving = mvs[magnitude > 0]
    magnitude = magnitude[magnitude > 0]
    if not len(moving):
        return moving
    cut = magnitude.mean() + FILTER_SIGMA * magnitude.std()
    return moving[magnitude <= cut]


def mean_shift(dets_bbox, field, scale=1):
    # type: (BBox, MVField, int) -> Tuple[float, float]
    survivors = filter_mvs(_collect(dets_bbox, field, scale))
    if not len(survivors):
        return 0.0, 0.0
    return float(survivors[:, 0].mean()), float(survivors[:, 1].mean())


def shift_bboxes(dets, field, frame_dims, scale=1, span_delta=1):
    # type: (Sequence[Detection], MVField, Tuple[int, int], int, int) -> List[Detection]
    """
    Kwargs:
        dets: detections of the source frame
        field: accumulated MVs from the source frame to the target frame, in
            codec (LR) pixels
        frame_dims: (width, height) of the analysis frame
        scale: analysis pixels per codec pixel
        span_delta: display distance added to each detection's span

    Returns:
        (detections moved by the mean of their filtered MVs, clamped to the
        frame, marked reused)
    """
    width, height = frame_dims
    out = []
    for det in dets:
        mx, my = mean_shift(det.bbox, field, scale)
        sx, sy = round_half_away(mx), round_half_away(my)
        b = det.bbox
        x = min(max(b.x + sx, 0), max(width - b.w, 0))
        y = min(max(b.y + sy, 0), max(height - b.h, 0))
        out.append(det._replace(bbox=BBox(x, y, b.w, b.h), source=REUSED, span=det.span + span_delta))
    return out


DETECTION_COLUMNS = ('frame', 'display_index', 'object_class', 'x', 'y', 'w', 'h', 'confidence', 'source', 'span')


def export_detections(rows, path):
    # type: (Iterable[Tuple[int, int, Detection]], str) -> None
    """
    Kwargs:
        rows: (coding index, display index, detection), written in the given
            order
    """
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(DETECTION_COLUMNS)
        for coding_index, display_index, d in rows:
            writer.writerow((coding_index, display_index, d.class_id,
                             d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h,
                             '{:.4f}'.format(d.confidence), d.source, d.span))


def load_detections(path):
    # type: (str) -> Dict[int, List[Detection]]
    """
    Detections keyed by display index.
    """
    out = {}  # type: Dict[int, List[Detection]]
    try:
        with open(path, newline='') as f:
            for row in csv.DictReader(f):
                det = Detection(
                    BBox(float(row['x']), float(row['y']), float(row['w']), float(row['h'])),
                    int(row['object_class']), float(row['confidence']),
                    row.get('source') or INFERRED, int(row.get('span') or 0),
                )
                out.setdefault(int(row['display_index']), []).append(det)
    except (OSError, KeyError, ValueError) as e:
        raise ConfigError('cannot read detections {}: {}'.format(path, e))
    return out
