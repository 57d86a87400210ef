"""
Cheap decode-time features for the scheduler: binarized Laplacian edge maps
of residual planes, the edge-map difference between frames and a fixed 128-d
key-frame descriptor.
"""
import csv
import logging
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple  # noqa

import cv2
import numpy as np

from accdecoder.codec import CodecInfo, Frame  # noqa
from accdecoder.conf import settings
from accdecoder.exceptions import ConfigError


__all__ = (
    'DESCRIPTOR_DIM',
    'DiffSignal',
    'ChunkState',
    'edge_map',
    'frame_diff',
    'keyframe_descriptor',
    'chunk_state',
    'state_dim',
    'export_diff_signal',
)

logger = logging.getLogger(__name__)

DESCRIPTOR_DIM = 128


def edge_map(plane, theta=None):
    # type: (np.ndarray, Optional[float]) -> np.ndarray
    """
    Only the rows and columns around non-zero pixels are filtered: a pixel
    whose 4-neighbourhood is all zero has no response, and residual planes
    are mostly zero.

    Kwargs:
        plane: residual (or raw) plane, any integer or float dtype
        theta: binarization threshold in 8-bit units, settings default

    Returns:
        (bool map, True where |Laplacian| > theta; borders are zero-padded)
    """
    if theta is None:
        theta = settings.LAPLACIAN_THRESHOLD
    h, w = plane.shape
    rows = np.flatnonzero(np.any(plane, axis=1))
    if rows.size == h:
        return _laplacian_edges(plane, theta)
    out = np.zeros((h, w), dtype=bool)
    for start, stop in _runs(rows):
        lo, hi = max(start - 1, 0), min(stop + 1, h)
        top, bottom = max(lo - 1, 0), min(hi + 1, h)
        cols = np.flatnonzero(np.any(plane[top:bottom], axis=0))
        left, right = max(cols[0] - 1, 0), min(cols[-1] + 2, w)
        first, last = max(left - 1, 0), min(right + 1, w)
        window = _laplacian_edges(plane[top:bottom, first:last], theta)
        out[lo:hi, left:right] = window[lo - top:hi - top, left - first:right - first]
    return out


def _laplacian_edges(plane, theta):
    # type: (np.ndarray, float) -> np.ndarray
    response = cv2.Laplacian(plane.astype(np.float32), cv2.CV_32F, ksize=1, borderType=cv2.BORDER_CONSTANT)
    return np.abs(response) > theta


def _runs(rows):
    # type: (np.ndarray) -> Iterable[Tuple[int, int]]
    """
    [start, stop) of every run of consecutive indices in a sorted array.
    """
    breaks = np.flatnonzero(np.diff(rows) > 1)
    starts = np.concatenate([rows[:1], rows[breaks + 1]])
    stops = np.concatenate([rows[breaks], rows[-1:]]) + 1
    return zip(starts.tolist(), stops.tolist())


def frame_diff(a, b):
    # type: (np.ndarray, np.ndarray) -> float
    """
    Fraction of pixels where two edge maps disagree.
    """
    if a.shape != b.shape:
        raise ValueError('edge maps differ in shape: {} vs {}'.format(a.shape, b.shape))
    if not a.size:
        return 0.0
    return float(np.count_nonzero(a != b)) / a.size


@lru_cache(maxsize=4)
def _projection(side, seed):
    # type: (int, int) -> np.ndarray
    rng = np.random.default_rng(seed)
    gaussian = rng.standard_normal((side * side, DESCRIPTOR_DIM))
    q, r = np.linalg.qr(gaussian)
    # fix column signs so the basis does not depend on the LAPACK build
    q *= np.sign(np.diag(r))
    q.setflags(write=False)
    return q


def keyframe_descriptor(frame, side=None, seed=None):
    # type: (Frame, Optional[int], Optional[int]) -> np.ndarray
    """
    Box-filter the frame down to side x side, centre it to [-1, 1] and
    project onto a fixed seeded orthonormal basis of 128 directions.
    """
    side = side or settings.DESCRIPTOR_SIDE
    seed = settings.DESCRIPTOR_SEED if seed is None else seed
    small = cv2.resize(frame.pixels.astype(np.float32), (side, side), interpolation=cv2.INTER_AREA)
    x = (small.astype(np.float64).ravel() - 128.0) / 127.5
    return _projection(side, seed).T.dot(x)


class DiffSignal(object):
    """
    Per-frame edge-map differences of one chunk; `d[0]` belongs to the key
    frame and is always 0.
    """

    def __init__(self, d):
        # type: (Sequence[float]) -> None
        self.d = np.asarray(d, dtype=np.float64)

    def cumulative(self, inference_mask):
        # type: (Sequence[bool]) -> np.ndarray
        """
        Running sum of d since the last inference-bearing frame, which resets
        it to zero.
        """
        out = np.zeros_like(self.d)
        total = 0.0
        for i, value in enumerate(self.d):
            total += value
            out[i] = total
            if inference_mask[i]:
                total = 0.0
        return out

    def __len__(self):
        return len(self.d)


class ChunkState(object):
    """
    The scheduler observation: key-frame descriptor, per-frame differences of
    frames 2..k, and the difference between the key frame and the previous
    chunk's last inference frame. `edges` keeps the chunk's edge maps for the
    next chunk's cross difference; it is not part of the vector.
    """

    def __init__(self, key_desc, intra_diffs, cross_diff, edges=None):
        # type: (np.ndarray, np.ndarray, float, Optional[List[np.ndarray]]) -> None
        self.key_desc = np.asarray(key_desc, dtype=np.float64)
        self.intra_diffs = np.asarray(intra_diffs, dtype=np.float64)
        self.cross_diff = float(cross_diff)
        self.edges = edges or []

    @property
    def diff_signal(self):
        # type: () -> DiffSignal
        return DiffSignal(np.concatenate([[0.0], self.intra_diffs]))

    def vector(self):
        # type: () -> np.ndarray
        return np.concatenate([self.key_desc, self.intra_diffs, [self.cross_diff]]).astype(np.float32)

    def __len__(self):
        return len(self.key_desc) + len(self.intra_diffs) + 1

    def __repr__(self):
        return 'ChunkState(dim={}, mean_d={:.3f}, cross={:.3f})'.format(
            len(self), float(self.intra_diffs.mean()) if len(self.intra_diffs) else 0.0, self.cross_diff)


def state_dim(chunk_size=None):
    # type: (Optional[int]) -> int
    return DESCRIPTOR_DIM + (chunk_size or settings.CHUNK_SIZE)


def chunk_state(info, display_indices, prev_edge=None, theta=None, chunk_size=None):
    # type: (CodecInfo, Sequence[int], Optional[np.ndarray], Optional[float], Optional[int]) -> ChunkState
    """
    Kwargs:
        info: decode-time metadata of the stream
        display_indices: the chunk's frames in display order, key frame first
        prev_edge: edge map of the previous chunk's last inference frame;
            None for the first chunk
        theta: edge threshold
        chunk_size: expected chunk length, settings default

    Returns:
        (ChunkState)
    """
    expected = chunk_size or settings.CHUNK_SIZE
    if len(display_indices) != expected:
        raise ConfigError('chunk has {} frames, expected {}'.format(len(display_indices), expected))
    edges = [edge_map(info.residual_plane(d), theta) for d in display_indices]
    # the key frame carries an intra residual, not a temporal one, so frame 2
    # is measured against an empty map
    previous = [np.zeros_like(edges[0])] + edges[1:-1]
    intra_diffs = np.array([frame_diff(e, p) for e, p in zip(edges[1:], previous)])
    cross = 0.0 if prev_edge is None else frame_diff(edges[0], prev_edge)
    key = keyframe_descriptor(info.decoded(display_indices[0]))
    return ChunkState(key, intra_diffs, cross, edges)


def nonzero_density(plane):
    # type: (np.ndarray) -> float
    return float(np.count_nonzero(plane)) / plane.size if plane.size else 0.0


def export_diff_signal(rows, path):
    # type: (Iterable[Tuple[int, int, float, float]], str) -> None
    """
    Debug dump, one row per frame: (coding index, display index, d, D).
    """
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(('frame', 'display_index', 'd', 'D'))
        for coding_index, display_index, d, acc in rows:
            writer.writerow((coding_index, display_index, '{:.6f}'.format(d), '{:.6f}'.format(acc)))
