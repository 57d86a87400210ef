"""
A deterministic toy block-based codec.

Frames are split into 16x16 macroblocks. Each block of a P/B frame is either
predicted from one reference frame through an integer-pel motion vector or
predicted intra from the DC of its decoded left/top neighbours. Residuals are
kept in the spatial domain and quantized by a uniform step.

Motion vectors follow the content: `mv = (dx, dy)` means the block's content
sat at `(x - dx, y - dy)` in the reference frame, so a scene translating by
(2, 0) per frame yields mv (2, 0).
"""
import logging
import struct
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple  # noqa

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from accdecoder.exceptions import ConfigError, CorruptStreamError


__all__ = (
    'MB',
    'Frame',
    'MotionVector',
    'BlockRecord',
    'EncodedFrame',
    'Bitstream',
    'EncoderConfig',
    'CodecInfo',
    'quant_step',
    'motion_search',
    'encode',
    'decode',
    'write_bitstream',
    'read_bitstream',
)

logger = logging.getLogger(__name__)

MB = 16

MAGIC = b'ACCD'
VERSION = 1

INTRA = 0
INTER = 1

FRAME_TYPES = ('I', 'P', 'B')

# forward/backward reference spans stay below these (display-order frames)
MAX_FORWARD_SPAN = 3
MAX_BACKWARD_SPAN = 2


class Frame(object):
    """
    A single 8-bit luma plane with its playback position.
    """
    __slots__ = ('pixels', 'display_index')

    def __init__(self, pixels, display_index=0):
        # type: (np.ndarray, int) -> None
        self.pixels = np.asarray(pixels, dtype=np.uint8)
        self.display_index = display_index

    @property
    def height(self):
        # type: () -> int
        return self.pixels.shape[0]

    @property
    def width(self):
        # type: () -> int
        return self.pixels.shape[1]

    def __repr__(self):
        return 'Frame(#{}, {}x{})'.format(self.display_index, self.width, self.height)


MotionVector = NamedTuple('MotionVector', [('dx', int), ('dy', int)])

ZERO_MV = MotionVector(0, 0)


class BlockRecord(object):
    __slots__ = ('mb_x', 'mb_y', 'mode', 'ref_index', 'mv', 'residual')

    def __init__(self, mb_x, mb_y, mode, residual, ref_index=None, mv=None):
        # type: (int, int, int, np.ndarray, Optional[int], Optional[MotionVector]) -> None
        self.mb_x = mb_x
        self.mb_y = mb_y
        self.mode = mode
        self.ref_index = ref_index
        self.mv = mv
        self.residual = residual

    @property
    def is_inter(self):
        # type: () -> bool
        return self.mode == INTER

    def __repr__(self):
        if self.is_inter:
            return 'BlockRecord(({}, {}) inter ref={} mv={})'.format(
                self.mb_x, self.mb_y, self.ref_index, tuple(self.mv))
        return 'BlockRecord(({}, {}) intra)'.format(self.mb_x, self.mb_y)


class EncodedFrame(object):

    def __init__(self, frame_type, coding_index, display_index, blocks):
        # type: (str, int, int, List[BlockRecord]) -> None
        self.frame_type = frame_type
        self.coding_index = coding_index
        self.display_index = display_index
        self.blocks = blocks

    def block_at(self, mb_x, mb_y, mb_cols):
        # type: (int, int, int) -> BlockRecord
        return self.blocks[mb_y * mb_cols + mb_x]

    @property
    def references(self):
        # type: () -> List[int]
        """
        Distinct coding indices referenced by any block, sorted.
        """
        return sorted({b.ref_index for b in self.blocks if b.is_inter})

    def __repr__(self):
        return 'EncodedFrame({} coding={} display={})'.format(
            self.frame_type, self.coding_index, self.display_index)


class EncoderConfig(object):
    """
    Kwargs:
        qp: quantization parameter, 0 keeps residuals lossless
        search_range: motion search window radius in pixels
        gop: frame-type pattern; its leading 'I' opens every intra period and
            the remaining characters cycle until the next one
        intra_period: distance between forced I-frames; 0 repeats the whole
            pattern instead
    """

    def __init__(self, qp=0, search_range=8, gop='IPPPPPPP', intra_period=30):
        # type: (int, int, str, int) -> None
        self.qp = qp
        self.search_range = search_range
        self.gop = gop.upper()
        self.intra_period = intra_period
        self.validate()

    def validate(self):
        # type: () -> None
        if self.qp < 0 or self.qp > 255:
            raise ConfigError('QP must be in [0, 255], got {}'.format(self.qp))
        if self.search_range < 0:
            raise ConfigError('search_range must be >= 0')
        if self.intra_period < 0:
            raise ConfigError('intra_period must be >= 0')
        if not self.gop or self.gop[0] != 'I':
            raise ConfigError('GOP pattern must start with I, got {!r}'.format(self.gop))
        if set(self.gop) - set(FRAME_TYPES):
            raise ConfigError('GOP pattern may only contain I, P, B: {!r}'.format(self.gop))
        if len(self.gop) > 255:
            raise ConfigError('GOP pattern longer than 255')
        cycle = self._cycle()
        if cycle and 'B' in cycle and set(cycle) == {'B'}:
            raise ConfigError('GOP pattern {!r} has no anchor for its B-frames'.format(self.gop))
        # longest B run over two laps catches runs wrapping around the cycle
        run = longest = 0
        for ch in self.gop + cycle * 2:
            run = run + 1 if ch == 'B' else 0
            longest = max(longest, run)
        if longest > MAX_BACKWARD_SPAN:
            raise ConfigError(
                'GOP pattern {!r} puts {} B-frames in a row; reference spans are capped at '
                'forward {} / backward {}'.format(
                    self.gop, longest, MAX_FORWARD_SPAN, MAX_BACKWARD_SPAN))

    def _cycle(self):
        # type: () -> str
        return self.gop[1:] if self.intra_period else self.gop

    def frame_types(self, count):
        # type: (int) -> List[str]
        """
        Display-order frame types for `count` frames. B-frames that have no
        following anchor inside their intra period are coded as P.
        """
        types = []  # type: List[str]
        cycle = self._cycle()
        for d in range(count):
            if self.intra_period:
                k = d % self.intra_period
                if k == 0:
                    types.append('I')
                elif cycle:
                    types.append(cycle[(k - 1) % len(cycle)])
                else:
                    types.append('I')
            else:
                types.append(cycle[d % len(cycle)])
        for d in range(count - 1, -1, -1):
            if types[d] != 'B':
                continue
            nxt = _next_anchor(types, d, self.intra_period)
            if nxt is None:
                types[d] = 'P'
        return types


def _segment_end(d, count, intra_period):
    # type: (int, int, int) -> int
    if not intra_period:
        return count
    return min(count, (d // intra_period + 1) * intra_period)


def _next_anchor(types, d, intra_period):
    # type: (Sequence[str], int, int) -> Optional[int]
    end = _segment_end(d, len(types), intra_period)
    for j in range(d + 1, end):
        if types[j] != 'B':
            return j
    return None


def _prev_anchor(types, d):
    # type: (Sequence[str], int) -> Optional[int]
    for j in range(d - 1, -1, -1):
        if types[j] != 'B':
            return j
    return None


def plan_gop(types, intra_period):
    # type: (Sequence[str], int) -> Tuple[List[int], Dict[int, List[int]]]
    """
    Returns:
        (coding order as display indices, display index -> reference display
        indices, forward reference first)
    """
    order = []  # type: List[int]
    refs = {}  # type: Dict[int, List[int]]
    pending_b = []  # type: List[int]
    for d, t in enumerate(types):
        if t == 'I':
            refs[d] = []
        elif t == 'P':
            prev = _prev_anchor(types, d)
            if prev is None:
                raise ConfigError('P-frame {} has no earlier anchor'.format(d))
            refs[d] = [prev]
        else:
            prev = _prev_anchor(types, d)
            nxt = _next_anchor(types, d, intra_period)
            refs[d] = [r for r in (prev, nxt) if r is not None]
            pending_b.append(d)
            continue
        order.append(d)
        order.extend(pending_b)
        pending_b = []
    order.extend(pending_b)
    return order, refs


def quant_step(qp):
    # type: (int) -> int
    return 1 if qp == 0 else 2 * qp


def quantize(residual, q):
    # type: (np.ndarray, int) -> np.ndarray
    """
    Levels; `levels * q` deviates from `residual` by at most q/2 per pixel.
    """
    return np.floor(residual.astype(np.float64) / q + 0.5).astype(np.int16)


def _block(raster, x0, y0):
    return raster[y0:y0 + MB, x0:x0 + MB]


def _dc_prediction(recon, x0, y0):
    # type: (np.ndarray, int, int) -> int
    """
    Mean of the decoded column left of and row above the block, 128 when
    neither exists.
    """
    neighbours = []
    if x0 > 0:
        neighbours.append(recon[y0:y0 + MB, x0 - 1])
    if y0 > 0:
        neighbours.append(recon[y0 - 1, x0:x0 + MB])
    if not neighbours:
        return 128
    values = np.concatenate(neighbours).astype(np.int64)
    return int((2 * values.sum() + values.size) // (2 * values.size))


def _search(target_block, reference, x0, y0, search_range):
    # type: (np.ndarray, np.ndarray, int, int, int) -> Tuple[MotionVector, int]
    """
    Exhaustive SAD over every integer offset whose reference block lies fully
    inside the frame.
    """
    height, width = reference.shape
    dx_lo, dx_hi = max(-search_range, x0 - (width - MB)), min(search_range, x0)
    dy_lo, dy_hi = max(-search_range, y0 - (height - MB)), min(search_range, y0)
    window = reference[y0 - dy_hi:y0 - dy_lo + MB, x0 - dx_hi:x0 - dx_lo + MB].astype(np.int32)
    candidates = sliding_window_view(window, (MB, MB))
    sad = np.abs(candidates - target_block.astype(np.int32)).sum(axis=(2, 3)).ravel()
    rows, cols = candidates.shape[:2]
    dy = np.repeat(dy_hi - np.arange(rows), cols)
    dx = np.tile(dx_hi - np.arange(cols), rows)
    best = np.lexsort((dx, dy, np.abs(dx) + np.abs(dy), sad))[0]
    return MotionVector(int(dx[best]), int(dy[best])), int(sad[best])


def motion_search(target_block, reference, center, search_range):
    # type: (np.ndarray, Frame, Tuple[int, int], int) -> Tuple[MotionVector, np.ndarray]
    """
    Kwargs:
        target_block: 16x16 raster being coded
        reference: frame searched
        center: (mb_x, mb_y) grid position of the target block
        search_range: window radius in pixels

    Returns:
        (SAD-optimal motion vector, target - reference block at that vector)

    Ties go to the smallest |dx|+|dy|, then the smallest dy, then dx.
    """
    x0, y0 = center[0] * MB, center[1] * MB
    mv, _ = _search(target_block, reference.pixels, x0, y0, search_range)
    predicted = _block(reference.pixels, x0 - mv.dx, y0 - mv.dy)
    return mv, target_block.astype(np.int16) - predicted.astype(np.int16)


class Bitstream(object):

    def __init__(self, width, height, qp, gop, scale_factor, frames):
        # type: (int, int, int, str, int, List[EncodedFrame]) -> None
        self.width = width
        self.height = height
        self.qp = qp
        self.gop = gop
        self.scale_factor = scale_factor
        self.frames = frames

    @property
    def frame_count(self):
        # type: () -> int
        return len(self.frames)

    @property
    def mb_cols(self):
        # type: () -> int
        return self.width // MB

    @property
    def mb_rows(self):
        # type: () -> int
        return self.height // MB

    def __repr__(self):
        return 'Bitstream({}x{} qp={} gop={} frames={})'.format(
            self.width, self.height, self.qp, self.gop, self.frame_count)


def _encode_frame(target, references, q, search_range):
    # type: (np.ndarray, List[Tuple[int, np.ndarray]], int, int) -> Tuple[List[BlockRecord], np.ndarray]
    height, width = target.shape
    recon = np.zeros_like(target)
    blocks = []  # type: List[BlockRecord]
    for mb_y in range(height // MB):
        for mb_x in range(width // MB):
            x0, y0 = mb_x * MB, mb_y * MB
            blk = _block(target, x0, y0).astype(np.int16)

            best = None  # type: Optional[Tuple[int, MotionVector, int]]
            for ref_index, ref in references:
                mv, sad = _search(blk, ref, x0, y0, search_range)
                if best is None or sad < best[2]:
                    best = (ref_index, mv, sad)

            dc = _dc_prediction(recon, x0, y0)
            intra_cost = int(np.abs(blk - dc).sum())
            if best is not None and not intra_cost < best[2]:
                ref_index, mv, _ = best
                ref = dict(references)[ref_index]
                prediction = _block(ref, x0 - mv.dx, y0 - mv.dy).astype(np.int16)
                record = BlockRecord(mb_x, mb_y, INTER, None, ref_index=ref_index, mv=mv)
            else:
                prediction = np.full((MB, MB), dc, dtype=np.int16)
                record = BlockRecord(mb_x, mb_y, INTRA, None)

            residual = quantize(blk - prediction, q) * q
            record.residual = residual.astype(np.int16)
            recon[y0:y0 + MB, x0:x0 + MB] = np.clip(prediction + record.residual, 0, 255)
            blocks.append(record)
    return blocks, recon


def encode(video, cfg, scale_factor=1):
    # type: (Sequence[Frame], EncoderConfig, int) -> Bitstream
    """
    Kwargs:
        video: frames in display order
        cfg: encoder settings
        scale_factor: downscale applied upstream, recorded in the header for
            the transfer pipeline

    Returns:
        (Bitstream with frames in coding order)
    """
    if not video:
        raise ConfigError('cannot encode an empty video')
    height, width = video[0].height, video[0].width
    if width % MB or height % MB:
        raise ConfigError('frame size {}x{} is not a multiple of {}'.format(width, height, MB))
    if any(f.pixels.shape != (height, width) for f in video):
        raise ConfigError('all frames must share one size')

    q = quant_step(cfg.qp)
    types = cfg.frame_types(len(video))
    order, refs = plan_gop(types, cfg.intra_period)
    coding_of = {}  # type: Dict[int, int]
    recon = {}  # type: Dict[int, np.ndarray]
    frames = []  # type: List[EncodedFrame]
    for coding_index, d in enumerate(order):
        coding_of[d] = coding_index
        references = [(coding_of[r], recon[r]) for r in refs[d]]
        blocks, recon[d] = _encode_frame(video[d].pixels, references, q, cfg.search_range)
        frames.append(EncodedFrame(types[d], coding_index, d, blocks))
        logger.debug('encoded display %d as %s (coding %d, refs %s)', d, types[d], coding_index, refs[d])

    bitstream = Bitstream(width, height, cfg.qp, cfg.gop, scale_factor, frames)
    check_reference_spans(bitstream)
    return bitstream


def check_reference_spans(bitstream):
    # type: (Bitstream) -> None
    display_of = {f.coding_index: f.display_index for f in bitstream.frames}
    for frame in bitstream.frames:
        for ref in frame.references:
            span = frame.display_index - display_of[ref]
            if span > MAX_FORWARD_SPAN or -span > MAX_BACKWARD_SPAN:
                raise ConfigError('frame {} references display {} (span {})'.format(
                    frame.display_index, display_of[ref], span))


class CodecInfo(object):
    """
    Decode-time metadata: every frame's blocks, type and indices, plus the
    decoded rasters. This is what the enhance, reuse and features modules
    consume.
    """

    def __init__(self, bitstream, decoded):
        # type: (Bitstream, Dict[int, np.ndarray]) -> None
        self.bitstream = bitstream
        self.frames = bitstream.frames
        self._by_display = {f.display_index: f for f in bitstream.frames}
        self._decoded = decoded

    @property
    def mb_cols(self):
        # type: () -> int
        return self.bitstream.mb_cols

    @property
    def mb_rows(self):
        # type: () -> int
        return self.bitstream.mb_rows

    def by_display(self, display_index):
        # type: (int) -> EncodedFrame
        return self._by_display[display_index]

    def decoded(self, display_index):
        # type: (int) -> Frame
        return Frame(self._decoded[display_index], display_index)

    def residual_plane(self, display_index):
        # type: (int) -> np.ndarray
        """
        Dequantized residual of the whole frame. For intra blocks this is the
        residual against the DC prediction, so I-frames have one too.
        """
        frame = self._by_display[display_index]
        plane = np.zeros((self.bitstream.height, self.bitstream.width), dtype=np.int16)
        for b in frame.blocks:
            plane[b.mb_y * MB:(b.mb_y + 1) * MB, b.mb_x * MB:(b.mb_x + 1) * MB] = b.residual
        return plane

    def __len__(self):
        return len(self.frames)


def decode(bitstream):
    # type: (Bitstream) -> Tuple[List[Frame], CodecInfo]
    """
    Returns:
        (frames in display order, CodecInfo)
    """
    recon_by_coding = {}  # type: Dict[int, np.ndarray]
    decoded = {}  # type: Dict[int, np.ndarray]
    cols = bitstream.mb_cols
    for position, frame in enumerate(bitstream.frames):
        if frame.coding_index != position:
            raise CorruptStreamError('frame at position {} claims coding index {}'.format(
                position, frame.coding_index))
        if len(frame.blocks) != cols * bitstream.mb_rows:
            raise CorruptStreamError('frame {} has {} blocks'.format(position, len(frame.blocks)))
        recon = np.zeros((bitstream.height, bitstream.width), dtype=np.uint8)
        for b in frame.blocks:
            x0, y0 = b.mb_x * MB, b.mb_y * MB
            if b.is_inter:
                ref = recon_by_coding.get(b.ref_index)
                if ref is None:
                    raise CorruptStreamError('frame {} references coding index {} before it is decoded'.format(
                        frame.coding_index, b.ref_index))
                if not (0 <= x0 - b.mv.dx <= bitstream.width - MB and 0 <= y0 - b.mv.dy <= bitstream.height - MB):
                    raise CorruptStreamError('motion vector {} leaves the frame'.format(tuple(b.mv)))
                prediction = _block(ref, x0 - b.mv.dx, y0 - b.mv.dy).astype(np.int16)
            else:
                prediction = np.int16(_dc_prediction(recon, x0, y0))
            recon[y0:y0 + MB, x0:x0 + MB] = np.clip(prediction + b.residual, 0, 255)
        recon_by_coding[frame.coding_index] = recon
        if frame.display_index in decoded:
            raise CorruptStreamError('display index {} appears twice'.format(frame.display_index))
        decoded[frame.display_index] = recon

    if sorted(decoded) != list(range(len(decoded))):
        raise CorruptStreamError('display indices are not a permutation of 0..{}'.format(len(decoded) - 1))
    info = CodecInfo(bitstream, decoded)
    return [info.decoded(d) for d in range(len(decoded))], info


# -- file format (little-endian) ----------------------------------------------

_HEADER = struct.Struct('<4sBHHB')
_FRAME = struct.Struct('<BII')
_INTER = struct.Struct('<Ihh')


def write_bitstream(bitstream):
    # type: (Bitstream) -> bytes
    q = quant_step(bitstream.qp)
    gop = bitstream.gop.encode('ascii')
    out = [
        _HEADER.pack(MAGIC, VERSION, bitstream.width, bitstream.height, bitstream.qp),
        struct.pack('<B', len(gop)), gop,
        struct.pack('<BI', bitstream.scale_factor, bitstream.frame_count),
    ]
    for frame in bitstream.frames:
        out.append(_FRAME.pack(FRAME_TYPES.index(frame.frame_type), frame.coding_index, frame.display_index))
        for b in frame.blocks:
            out.append(struct.pack('<B', b.mode))
            if b.is_inter:
                out.append(_INTER.pack(b.ref_index, b.mv.dx, b.mv.dy))
            out.append((b.residual // q).astype('<i2').tobytes())
    return b''.join(out)


class _Reader(object):

    def __init__(self, data):
        # type: (bytes) -> None
        self.data = data
        self.offset = 0

    def take(self, size):
        # type: (int) -> bytes
        if self.offset + size > len(self.data):
            raise CorruptStreamError('truncated stream at byte {}'.format(self.offset))
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt):
        # type: (struct.Struct) -> tuple
        return fmt.unpack(self.take(fmt.size))


def read_bitstream(data):
    # type: (bytes) -> Bitstream
    reader = _Reader(data)
    magic, version, width, height, qp = reader.unpack(_HEADER)
    if magic != MAGIC:
        raise CorruptStreamError('bad magic {!r}'.format(magic))
    if version != VERSION:
        raise CorruptStreamError('unsupported version {}'.format(version))
    if width % MB or height % MB or not width or not height:
        raise CorruptStreamError('bad frame size {}x{}'.format(width, height))
    gop_len, = reader.unpack(struct.Struct('<B'))
    gop = reader.take(gop_len).decode('ascii', errors='replace')
    scale_factor, frame_count = reader.unpack(struct.Struct('<BI'))
    q = quant_step(qp)

    blocks_per_frame = (width // MB) * (height // MB)
    frames = []  # type: List[EncodedFrame]
    for _ in range(frame_count):
        type_code, coding_index, display_index = reader.unpack(_FRAME)
        if type_code >= len(FRAME_TYPES):
            raise CorruptStreamError('bad frame type {}'.format(type_code))
        blocks = []
        for i in range(blocks_per_frame):
            mode, = struct.unpack('<B', reader.take(1))
            ref_index = mv = None
            if mode == INTER:
                ref_index, dx, dy = reader.unpack(_INTER)
                mv = MotionVector(dx, dy)
            elif mode != INTRA:
                raise CorruptStreamError('bad block mode {}'.format(mode))
            levels = np.frombuffer(reader.take(MB * MB * 2), dtype='<i2').reshape(MB, MB)
            residual = (levels.astype(np.int32) * q).astype(np.int16)
            blocks.append(BlockRecord(i % (width // MB), i // (width // MB), mode, residual,
                                      ref_index=ref_index, mv=mv))
        frames.append(EncodedFrame(FRAME_TYPES[type_code], coding_index, display_index, blocks))
    if reader.offset != len(data):
        raise CorruptStreamError('{} trailing bytes'.format(len(data) - reader.offset))
    return Bitstream(width, height, qp, gop, scale_factor, frames)
