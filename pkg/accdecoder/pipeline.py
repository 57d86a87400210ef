"""
Stream preparation and the chunk executor: given a per-frame pipeline
assignment, run pipelines 1-3 over one chunk, score the detections against
ground truth and account the simulated latency.
"""
import logging
from collections import Counter
from typing import Dict, List, Optional, Sequence, Tuple  # noqa

import numpy as np

from accdecoder.codec import Bitstream, CodecInfo, EncoderConfig, Frame, decode, encode, read_bitstream  # noqa
from accdecoder.conf import settings
from accdecoder.enhance import AnchorCache, Enhancer, bicubic_upscale, enhance_anchor, transfer_frame  # noqa
from accdecoder.exceptions import ConfigError, ReuseUnavailableError
from accdecoder.inference import Detector, evaluate_f1, truth_at  # noqa
from accdecoder.latency import INFERENCE_BEARING, LR_INFER, REUSE, SR, TRANSFER, LatencyModel
from accdecoder.reuse import Detection, RefGraph, accumulate_mv, build_reference_graph, shift_bboxes  # noqa
from accdecoder.scenegen import SceneSpec, Track, downscale, generate  # noqa


__all__ = (
    'Stream',
    'ChunkOutcome',
    'ChunkExecutor',
)

logger = logging.getLogger(__name__)


class Stream(object):
    """
    One video as every pipeline sees it: true HR frames and tracks, the
    decoded LR frames and the codec metadata, split into chunks of display
    indices.
    """

    def __init__(self, name, hr_frames, tracks, lr_frames, info, scale_factor, chunk_size=None):
        # type: (str, List[Frame], List[Track], List[Frame], CodecInfo, int, Optional[int]) -> None
        self.name = name
        self.hr_frames = hr_frames
        self.tracks = tracks
        self.lr_frames = lr_frames
        self.info = info
        self.scale_factor = scale_factor
        self.chunk_size = chunk_size or settings.CHUNK_SIZE
        full = len(lr_frames) // self.chunk_size
        if not full:
            raise ConfigError('stream {} has {} frames, fewer than one chunk of {}'.format(
                name, len(lr_frames), self.chunk_size))
        dropped = len(lr_frames) - full * self.chunk_size
        if dropped:
            logger.warning('stream %s: dropping %d trailing frames that do not fill a chunk', name, dropped)
        self.chunks = [list(range(c * self.chunk_size, (c + 1) * self.chunk_size)) for c in range(full)]

    @classmethod
    def from_scene(cls, spec, encoder_cfg, scale_factor=1, chunk_size=None, name=None):
        # type: (SceneSpec, EncoderConfig, int, Optional[int], Optional[str]) -> Stream
        """
        Render the scene, box-filter it to LR, encode and decode it.
        """
        spec.validate(scale_factor)
        hr_frames, tracks = generate(spec)
        bitstream = encode(downscale(hr_frames, scale_factor), encoder_cfg, scale_factor=scale_factor)
        lr_frames, info = decode(bitstream)
        chunk_size = chunk_size or settings.CHUNK_SIZE
        if encoder_cfg.intra_period and encoder_cfg.intra_period != chunk_size:
            logger.warning('intra period %d differs from chunk size %d; chunks will share references',
                           encoder_cfg.intra_period, chunk_size)
        return cls(name or 'scene-{}'.format(spec.seed), hr_frames, tracks, lr_frames, info,
                   scale_factor, chunk_size)

    @classmethod
    def from_bitstream(cls, data, spec, chunk_size=None, name=None):
        # type: (bytes, SceneSpec, Optional[int], Optional[str]) -> Stream
        """
        A stream read from an encoded file. The scene is still needed for
        ground truth.
        """
        bitstream = read_bitstream(data)
        scale = bitstream.scale_factor
        if (bitstream.width * scale, bitstream.height * scale) != (spec.width, spec.height):
            raise ConfigError('bitstream {}x{} at scale {} does not match scene {}x{}'.format(
                bitstream.width, bitstream.height, scale, spec.width, spec.height))
        hr_frames, tracks = generate(spec)
        lr_frames, info = decode(bitstream)
        if len(lr_frames) > len(hr_frames):
            raise ConfigError('bitstream has more frames than the scene')
        return cls(name or 'bitstream-{}'.format(spec.seed), hr_frames, tracks, lr_frames, info,
                   scale, chunk_size)

    @property
    def hr_dims(self):
        # type: () -> Tuple[int, int]
        return self.hr_frames[0].width, self.hr_frames[0].height

    def __len__(self):
        return len(self.chunks)

    def __repr__(self):
        return 'Stream({}, {} chunks, scale {})'.format(self.name, len(self.chunks), self.scale_factor)


class ChunkOutcome(object):
    """
    Result of executing one assignment on one chunk. `assignment` is the
    effective one, after forced and promoted frames.
    """

    def __init__(self, chunk_index, display_indices, assignment, f1, detections, latency_ms, promoted=0,
                 anchors=()):
        # type: (int, List[int], Tuple[int, ...], np.ndarray, List[List[Detection]], float, int, Tuple[int, ...]) -> None
        self.chunk_index = chunk_index
        self.display_indices = display_indices
        self.assignment = assignment
        self.f1 = f1
        self.detections = detections
        self.latency_ms = latency_ms
        self.promoted = promoted
        # coding indices that entered the anchor cache, in coding order
        self.anchors = anchors

    @property
    def mean_f1(self):
        # type: () -> float
        return float(self.f1.mean())

    @property
    def counts(self):
        # type: () -> Dict[int, int]
        return dict(Counter(self.assignment))

    def last_inference(self):
        # type: () -> int
        """
        Display index of the last inference-bearing frame.
        """
        for d, label in reversed(list(zip(self.display_indices, self.assignment))):
            if label in INFERENCE_BEARING:
                return d
        return self.display_indices[0]


class ChunkExecutor(object):
    """
    Runs assignments on the chunks of one stream. Chunks do not share state
    (each starts from an empty anchor cache and its own reference graph), so
    outcomes are memoized per (chunk, assignment).
    """

    def __init__(self, stream, enhancer, detector, latency=None):
        # type: (Stream, Enhancer, Detector, Optional[LatencyModel]) -> None
        if enhancer.scale_factor != stream.scale_factor:
            raise ConfigError('enhancer scale {} does not match stream scale {}'.format(
                enhancer.scale_factor, stream.scale_factor))
        self.stream = stream
        self.enhancer = enhancer
        self.detector = detector
        self.latency = latency or LatencyModel.for_components(enhancer, detector)
        self._memo = {}  # type: Dict[Tuple[int, Tuple[int, ...]], ChunkOutcome]
        self._graphs = {}  # type: Dict[int, RefGraph]

    def forced(self, chunk_index, assignment):
        # type: (int, Sequence[int]) -> Tuple[int, ...]
        """
        The key frame and every I-frame go to pipeline 1.
        """
        indices = self.stream.chunks[chunk_index]
        if len(assignment) != len(indices):
            raise ConfigError('assignment has {} labels for a chunk of {}'.format(len(assignment), len(indices)))
        out = list(assignment)
        for i, d in enumerate(indices):
            if i == 0 or self.stream.info.by_display(d).frame_type == 'I':
                out[i] = SR
        return tuple(out)

    def run(self, chunk_index, assignment, force=True):
        # type: (int, Sequence[int], bool) -> ChunkOutcome
        """
        Kwargs:
            chunk_index: position of the chunk in the stream
            assignment: one pipeline label per frame, display order
            force: send the key frame and I-frames to pipeline 1; only the
                LR-inference baseline turns this off
        """
        labels = self.forced(chunk_index, assignment) if force else tuple(assignment)
        if len(labels) != len(self.stream.chunks[chunk_index]):
            raise ConfigError('assignment length does not match chunk {}'.format(chunk_index))
        key = (chunk_index, labels)
        if key not in self._memo:
            self._memo[key] = self._execute(chunk_index, list(key[1]))
        return self._memo[key]

    def reference_graph(self, chunk_index):
        # type: (int) -> RefGraph
        if chunk_index not in self._graphs:
            indices = self.stream.chunks[chunk_index]
            info = self.stream.info
            members = set(indices)
            # keep only frames whose references stay inside the chunk
            closed = [d for d in indices if all(
                info.frames[r].display_index in members for r in info.by_display(d).references)]
            self._graphs[chunk_index] = build_reference_graph(info, closed)
        return self._graphs[chunk_index]

    def _execute(self, chunk_index, labels):
        # type: (int, List[int]) -> ChunkOutcome
        stream = self.stream
        info = stream.info
        indices = stream.chunks[chunk_index]
        position = {d: i for i, d in enumerate(indices)}
        scale = stream.scale_factor
        cache = AnchorCache()
        detections = [[] for _ in indices]  # type: List[List[Detection]]
        reconstructed = {}  # type: Dict[int, Frame]

        # HR reconstruction and detection in coding order; reuse frames are
        # reconstructed too, in case they get promoted, but never cached
        for frame_meta in sorted((info.by_display(d) for d in indices), key=lambda f: f.coding_index):
            d = frame_meta.display_index
            label = labels[position[d]]
            lr = stream.lr_frames[d]
            if label == SR:
                hr = enhance_anchor(lr, self.enhancer, cache, frame_meta.coding_index)
            elif label == LR_INFER:
                hr = Frame(bicubic_upscale(lr.pixels, scale), d)
            else:
                hr = transfer_frame(frame_meta, cache, scale, lr, store=label != REUSE)
            reconstructed[d] = hr
            if label != REUSE:
                detections[position[d]] = self.detector.detect(hr, stream.hr_frames[d], stream.tracks)

        promoted = 0
        for i, d in enumerate(indices):
            if labels[i] != REUSE:
                continue
            source = None
            for j in range(i - 1, -1, -1):
                if labels[j] in INFERENCE_BEARING:
                    source = j
                    break
            try:
                if source is None:
                    raise ReuseUnavailableError('no inference frame before {}'.format(d))
                field = accumulate_mv(self.reference_graph(chunk_index), indices[source], d)
            except ReuseUnavailableError as e:
                logger.warning('chunk %d frame %d: %s; running inference instead', chunk_index, d, e)
                labels[i] = TRANSFER
                promoted += 1
                detections[i] = self.detector.detect(reconstructed[d], stream.hr_frames[d], stream.tracks)
                continue
            detections[i] = shift_bboxes(detections[source], field, stream.hr_dims,
                                         scale=scale, span_delta=d - indices[source])

        f1 = np.array([evaluate_f1(detections[i], truth_at(stream.tracks, d))[2] for i, d in enumerate(indices)])
        counts = Counter(labels)
        latency = self.latency.chunk_latency(counts, len(indices))
        logger.debug('chunk %d of %s: counts %s, f1 %.3f, %.1f ms', chunk_index, stream.name,
                     dict(counts), float(f1.mean()), latency)
        return ChunkOutcome(chunk_index, indices, tuple(labels), f1, detections, latency, promoted,
                            tuple(cache.stored))
