from unittest import TestCase

import numpy as np
import pytest

from accdecoder.codec import (
    MB,
    EncoderConfig,
    Frame,
    MotionVector,
    decode,
    encode,
    motion_search,
    plan_gop,
    quant_step,
    quantize,
    read_bitstream,
    write_bitstream,
)
from accdecoder.exceptions import ConfigError, CorruptStreamError
from accdecoder.scenegen import generate, random_scene
from accdecoder.utils import psnr


GOPS = ('IPPPPPPP', 'IPBPB', 'IBBP', 'IPPBPPB', 'I')


def _brute_force(target, reference, mb_x, mb_y, search_range):
    height, width = reference.shape
    x0, y0 = mb_x * MB, mb_y * MB
    best = None
    for dy in range(-search_range, search_range + 1):
        for dx in range(-search_range, search_range + 1):
            rx, ry = x0 - dx, y0 - dy
            if rx < 0 or ry < 0 or rx + MB > width or ry + MB > height:
                continue
            block = reference[ry:ry + MB, rx:rx + MB].astype(np.int32)
            sad = int(np.abs(target.astype(np.int32) - block).sum())
            key = (sad, abs(dx) + abs(dy), dy, dx)
            if best is None or key < best:
                best = key
    return MotionVector(best[3], best[2])


class MotionSearchTestCase(TestCase):

    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(7)
        for _ in range(150):
            # few grey levels so that SAD ties actually happen
            reference = rng.integers(0, 4, size=(64, 64)).astype(np.uint8)
            mb_x, mb_y = (int(v) for v in rng.integers(0, 4, size=2))
            target = rng.integers(0, 4, size=(MB, MB)).astype(np.uint8)
            search_range = int(rng.integers(0, 9))
            mv, residual = motion_search(target, Frame(reference), (mb_x, mb_y), search_range)
            assert mv == _brute_force(target, reference, mb_x, mb_y, search_range)
            x0, y0 = mb_x * MB - mv.dx, mb_y * MB - mv.dy
            expected = target.astype(np.int16) - reference[y0:y0 + MB, x0:x0 + MB].astype(np.int16)
            assert np.array_equal(residual, expected)

    def test_vector_follows_content(self):
        rng = np.random.default_rng(3)
        reference = rng.integers(0, 256, size=(64, 64)).astype(np.uint8)
        # content moved right by 2 and down by 1
        moved = np.roll(np.roll(reference, 2, axis=1), 1, axis=0)
        target = moved[MB:2 * MB, MB:2 * MB]
        mv, residual = motion_search(target, Frame(reference), (1, 1), 8)
        assert mv == MotionVector(2, 1)
        assert not residual.any()

    def test_zero_range(self):
        block = np.full((MB, MB), 9, dtype=np.uint8)
        mv, _ = motion_search(block, Frame(np.zeros((32, 32), dtype=np.uint8)), (0, 0), 0)
        assert mv == MotionVector(0, 0)


class EncoderConfigTestCase(TestCase):

    def test_frame_types(self):
        cfg = EncoderConfig(gop='IPB', intra_period=6)
        assert cfg.frame_types(12) == ['I', 'P', 'B', 'P', 'B', 'P'] * 2

    def test_trailing_b_becomes_p(self):
        # the B before the next I-frame has no anchor inside its period
        cfg = EncoderConfig(gop='IPB', intra_period=5)
        assert cfg.frame_types(5) == ['I', 'P', 'B', 'P', 'P']

    def test_no_intra_period_repeats_pattern(self):
        cfg = EncoderConfig(gop='IPP', intra_period=0)
        assert cfg.frame_types(7) == ['I', 'P', 'P', 'I', 'P', 'P', 'I']

    def test_rejected_patterns(self):
        for gop in ('PIP', 'IBBB', 'IBB', 'IXP', ''):
            with pytest.raises(ConfigError):
                EncoderConfig(gop=gop)
        with pytest.raises(ConfigError):
            EncoderConfig(qp=-1)
        with pytest.raises(ConfigError):
            EncoderConfig(search_range=-2)

    def test_coding_order(self):
        types = EncoderConfig(gop='IBBP', intra_period=30).frame_types(7)
        order, refs = plan_gop(types, 30)
        assert order == [0, 3, 1, 2, 6, 4, 5]
        assert refs[1] == [0, 3]
        assert refs[3] == [0]


def test_quant_step():
    assert quant_step(0) == 1
    assert quant_step(4) == 8
    levels = quantize(np.array([-4, -3, 3, 4, 12]), 8)
    assert list(levels * 8) == [0, 0, 0, 8, 16]


def test_qp0_round_trip_is_exact(scene_factory):
    hr, _ = generate(scene_factory(frame_count=20, velocity=(3, 1)))
    for gop in GOPS:
        frames, info = decode(encode(hr, EncoderConfig(qp=0, gop=gop, intra_period=10)))
        assert len(frames) == len(hr)
        for original, decoded in zip(hr, frames):
            assert np.array_equal(original.pixels, decoded.pixels), gop
        assert [f.display_index for f in frames] == list(range(len(hr)))
        assert len(info) == len(hr)


def test_qp4_psnr_floor(scene_factory):
    hr, _ = generate(scene_factory(frame_count=16, noise=2.0))
    frames, _ = decode(encode(hr, EncoderConfig(qp=4, gop='IPPBPPB', intra_period=16)))
    # quantization error is at most q/2 = 4 per pixel
    assert min(psnr(o.pixels, d.pixels) for o, d in zip(hr, frames)) >= 35.0


def test_reference_spans(scene_factory):
    hr, _ = generate(scene_factory(frame_count=15))
    bitstream = encode(hr, EncoderConfig(gop='IBBP', intra_period=15))
    display_of = {f.coding_index: f.display_index for f in bitstream.frames}
    for frame in bitstream.frames:
        for ref in frame.references:
            span = frame.display_index - display_of[ref]
            assert -2 <= span <= 3
            assert ref < frame.coding_index


def test_encode_rejects_bad_input():
    with pytest.raises(ConfigError):
        encode([], EncoderConfig())
    with pytest.raises(ConfigError):
        encode([Frame(np.zeros((20, 32)))], EncoderConfig())
    with pytest.raises(ConfigError):
        encode([Frame(np.zeros((16, 32))), Frame(np.zeros((32, 32)))], EncoderConfig())


class BitstreamTestCase(TestCase):

    def setUp(self):
        rng = np.random.default_rng(11)
        base = rng.integers(0, 256, size=(32, 48)).astype(np.uint8)
        video = [Frame(np.roll(base, t, axis=1), t) for t in range(6)]
        self.bitstream = encode(video, EncoderConfig(qp=2, gop='IPB', intra_period=6), scale_factor=2)
        self.data = write_bitstream(self.bitstream)

    def test_read_back(self):
        restored = read_bitstream(self.data)
        assert (restored.width, restored.height, restored.qp) == (48, 32, 2)
        assert restored.gop == 'IPB'
        assert restored.scale_factor == 2
        frames, _ = decode(restored)
        expected, _ = decode(self.bitstream)
        for a, b in zip(frames, expected):
            assert np.array_equal(a.pixels, b.pixels)

    def test_bad_magic(self):
        with pytest.raises(CorruptStreamError):
            read_bitstream(b'XXXX' + self.data[4:])

    def test_truncated(self):
        with pytest.raises(CorruptStreamError):
            read_bitstream(self.data[:len(self.data) // 2])
        with pytest.raises(CorruptStreamError):
            read_bitstream(self.data[:3])

    def test_trailing_bytes(self):
        with pytest.raises(CorruptStreamError):
            read_bitstream(self.data + b'\x00')

    def test_reference_before_decode(self):
        block = next(b for b in self.bitstream.frames[1].blocks if b.is_inter)
        block.ref_index = 5
        with pytest.raises(CorruptStreamError):
            decode(self.bitstream)


@pytest.mark.slow
def test_round_trip_on_corpus():
    for seed in range(20):
        spec = random_scene(seed, width=128, height=128, frame_count=30, objects=4)
        hr, _ = generate(spec)
        gop = GOPS[seed % len(GOPS)]
        frames, _ = decode(read_bitstream(write_bitstream(encode(hr, EncoderConfig(qp=0, gop=gop)))))
        assert all(np.array_equal(o.pixels, d.pixels) for o, d in zip(hr, frames))
