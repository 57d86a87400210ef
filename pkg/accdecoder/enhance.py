"""
Pipeline 1 (super-resolve anchor frames) and pipeline 2 (carry the
enhancement to referencing frames through motion vectors and residuals).
"""
import logging
import os
from abc import ABC, abstractmethod
from collections import OrderedDict
from typing import Dict, List, Optional, Sequence  # noqa

import cv2
import numpy as np

from accdecoder.codec import MB, BlockRecord, EncodedFrame, Frame  # noqa
from accdecoder.conf import settings
from accdecoder.exceptions import CacheMissError, ConfigError
from accdecoder.registry import register_enhancer
from accdecoder.utils import derive_rng


__all__ = (
    'Enhancer',
    'OracleSR',
    'BicubicUp',
    'IdentityEnhancer',
    'NoisyOracleSR',
    'AnchorCache',
    'bicubic_upscale',
    'transfer_block',
    'transfer_frame',
    'enhance_anchor',
    'export_enhanced',
)

logger = logging.getLogger(__name__)


def bicubic_upscale(pixels, scale):
    # type: (np.ndarray, int) -> np.ndarray
    if scale == 1:
        return pixels.copy()
    h, w = pixels.shape
    return cv2.resize(pixels, (w * scale, h * scale), interpolation=cv2.INTER_CUBIC)


class Enhancer(ABC):
    """
    Turns an LR frame into an HR frame `scale_factor` times larger.
    """
    cost_ms = 60.0

    def __init__(self, scale_factor):
        # type: (int) -> None
        self.scale_factor = scale_factor

    @abstractmethod
    def enhance(self, frame):
        # type: (Frame) -> Frame
        pass


class BicubicUp(Enhancer):
    """
    Plain interpolation; the lower bound for any SR model and, at scale 1,
    the identity enhancer.
    """

    def enhance(self, frame):
        # type: (Frame) -> Frame
        return Frame(bicubic_upscale(frame.pixels, self.scale_factor), frame.display_index)


class IdentityEnhancer(BicubicUp):

    def __init__(self):
        super(IdentityEnhancer, self).__init__(1)


class OracleSR(Enhancer):
    """
    Returns the ground-truth HR frame: what a perfect SR model would output.
    """

    def __init__(self, scale_factor, hr_frames):
        # type: (int, Sequence[Frame]) -> None
        super(OracleSR, self).__init__(scale_factor)
        self._hr = {f.display_index: f for f in hr_frames}

    def enhance(self, frame):
        # type: (Frame) -> Frame
        try:
            hr = self._hr[frame.display_index]
        except KeyError:
            raise ConfigError('no ground truth for frame {}'.format(frame.display_index))
        return Frame(hr.pixels.copy(), frame.display_index)


class NoisyOracleSR(OracleSR):
    """
    Ground truth plus seeded Gaussian noise sized for a target PSNR.
    """

    def __init__(self, scale_factor, hr_frames, psnr_db, seed=0):
        # type: (int, Sequence[Frame], float, int) -> None
        super(NoisyOracleSR, self).__init__(scale_factor, hr_frames)
        self.psnr_db = float(psnr_db)
        self.seed = seed
        # rounding to 8 bits adds 1/12 to the error variance
        self.sigma = float(np.sqrt(max(255.0 ** 2 / 10 ** (self.psnr_db / 10.0) - 1.0 / 12.0, 0.0)))

    def enhance(self, frame):
        # type: (Frame) -> Frame
        hr = super(NoisyOracleSR, self).enhance(frame).pixels.astype(np.float64)
        noise = derive_rng(self.seed, frame.display_index, 0xE4).normal(0.0, self.sigma, size=hr.shape)
        return Frame(np.clip(np.floor(hr + noise + 0.5), 0, 255), frame.display_index)


class AnchorCache(object):
    """
    HR outputs of pipeline 1 and 2 keyed by coding index. The oldest coding
    index is evicted once `capacity` entries are held; `stored` lists every
    coding index ever put, in order.
    """

    def __init__(self, capacity=None):
        # type: (Optional[int]) -> None
        self.capacity = capacity or settings.ANCHOR_CACHE_CAPACITY
        self._frames = OrderedDict()  # type: OrderedDict[int, Frame]
        self.stored = []  # type: List[int]
        self.misses = 0

    def put(self, coding_index, frame):
        # type: (int, Frame) -> None
        self._frames[coding_index] = frame
        self.stored.append(coding_index)
        while len(self._frames) > self.capacity:
            evicted = min(self._frames)
            del self._frames[evicted]

    def get(self, coding_index):
        # type: (int) -> Frame
        try:
            return self._frames[coding_index]
        except KeyError:
            self.misses += 1
            raise CacheMissError('coding index {} is not cached'.format(coding_index))

    def __contains__(self, coding_index):
        return coding_index in self._frames

    def __len__(self):
        return len(self._frames)


def transfer_block(block, cache, scale):
    # type: (BlockRecord, AnchorCache, int) -> np.ndarray
    """
    HR reconstruction of one inter block: the MV scaled by `scale` fetches a
    (16s x 16s) region of the cached HR reference, border pixels replicated,
    and the bilinearly upscaled residual is added on top.
    """
    reference = cache.get(block.ref_index).pixels
    size = MB * scale
    height, width = reference.shape
    x0 = (block.mb_x * MB - block.mv.dx) * scale
    y0 = (block.mb_y * MB - block.mv.dy) * scale
    ys = np.clip(np.arange(y0, y0 + size), 0, height - 1)
    xs = np.clip(np.arange(x0, x0 + size), 0, width - 1)
    region = reference[np.ix_(ys, xs)].astype(np.float32)
    if scale == 1:
        residual = block.residual.astype(np.float32)
    else:
        residual = cv2.resize(block.residual.astype(np.float32), (size, size), interpolation=cv2.INTER_LINEAR)
    return np.clip(np.floor(region + residual + 0.5), 0, 255).astype(np.uint8)


def transfer_frame(frame_meta, cache, scale, lr_frame, store=True):
    # type: (EncodedFrame, AnchorCache, int, Frame, bool) -> Frame
    """
    Kwargs:
        frame_meta: the frame's codec metadata
        cache: HR frames by coding index
        scale: SR amplification factor
        lr_frame: the codec's LR decode of this frame, upscaled bicubically
            for intra blocks and for inter blocks whose reference is not cached
        store: add the result to `cache`; off for frames that only pipeline 3
            handles, which must not serve as references

    Returns:
        (HR frame)
    """
    fallback = bicubic_upscale(lr_frame.pixels, scale)
    out = fallback.copy()
    size = MB * scale
    missed = 0
    for block in frame_meta.blocks:
        if not block.is_inter:
            continue
        try:
            hr_block = transfer_block(block, cache, scale)
        except CacheMissError:
            missed += 1
            continue
        out[block.mb_y * size:(block.mb_y + 1) * size, block.mb_x * size:(block.mb_x + 1) * size] = hr_block
    if missed:
        logger.debug('frame %d: %d inter blocks fell back to bicubic (reference not cached)',
                     frame_meta.display_index, missed)
    result = Frame(out, frame_meta.display_index)
    if store:
        cache.put(frame_meta.coding_index, result)
    return result


def enhance_anchor(frame, enhancer, cache, coding_index):
    # type: (Frame, Enhancer, AnchorCache, int) -> Frame
    hr = enhancer.enhance(frame)
    cache.put(coding_index, hr)
    return hr


def export_enhanced(frames, directory):
    # type: (Sequence[Frame], str) -> None
    """
    Debug dump of HR frames as raw planar files.
    """
    os.makedirs(directory, exist_ok=True)
    for f in frames:
        f.pixels.tofile(os.path.join(directory, 'hr_{:05d}_{}x{}.y'.format(f.display_index, f.width, f.height)))


@register_enhancer('bicubic')
def _bicubic_factory(arg, scale_factor=1, **context):
    return BicubicUp(scale_factor)


@register_enhancer('identity')
def _identity_factory(arg, scale_factor=1, **context):
    if scale_factor != 1:
        raise ConfigError('the identity enhancer only works at scale 1')
    return IdentityEnhancer()


@register_enhancer('oracle')
def _oracle_factory(arg, scale_factor=1, hr_frames=None, **context):
    if hr_frames is None:
        raise ConfigError('the oracle enhancer needs ground-truth HR frames')
    return OracleSR(scale_factor, hr_frames)


@register_enhancer('noisy')
def _noisy_factory(arg, scale_factor=1, hr_frames=None, seed=0, **context):
    if hr_frames is None:
        raise ConfigError('the noisy oracle enhancer needs ground-truth HR frames')
    try:
        psnr_db = float(arg)
    except (TypeError, ValueError):
        raise ConfigError('noisy enhancer needs a PSNR, e.g. noisy:30')
    return NoisyOracleSR(scale_factor, hr_frames, psnr_db, seed=seed)
