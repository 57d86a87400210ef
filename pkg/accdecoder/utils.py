import logging
import time
from abc import ABC, abstractmethod
from collections import defaultdict
from functools import wraps
from typing import Callable, Dict, Optional, Union  # noqa

import numpy as np


logger = logging.getLogger(__name__)


class ContextDecorator(ABC):

    @abstractmethod
    def __enter__(self):
        pass

    @abstractmethod
    def __exit__(self, *args):
        pass

    @abstractmethod
    def __call__(self, f):
        pass


class WallClock(ContextDecorator):
    """
    Accumulate real elapsed time per label. Used next to the simulated
    latency model to report how much host time the features and scheduler
    actually take.

    Use as a decorator or context manager:

        clock = WallClock()
        with clock('features'):
            ...
        clock.totals['features']  # seconds
    """

    def __init__(self):
        # type: () -> None
        self.totals = defaultdict(float)  # type: Dict[str, float]
        self._label = None  # type: Optional[str]
        self._start = 0.0

    def __call__(self, label_or_func):
        # type: (Union[str, Callable]) -> Union[WallClock, Callable]
        """
        `clock('label')` selects the label for a `with` block; `@clock` on a
        function times every call under the function's name.
        """
        if callable(label_or_func):
            func = label_or_func

            @wraps(func)
            def wrapped(*args, **kwargs):
                start = time.perf_counter()
                try:
                    return func(*args, **kwargs)
                finally:
                    self.totals[func.__name__] += time.perf_counter() - start

            return wrapped

        self._label = label_or_func
        return self

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *args):
        elapsed = time.perf_counter() - self._start
        self.totals[self._label or 'default'] += elapsed
        self._label = None

    def ms(self, label):
        # type: (str) -> float
        return self.totals.get(label, 0.0) * 1000.0


def round_half_up(values):
    """
    Integer rounding with .5 going up, the rule used wherever pixels are
    averaged.
    """
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5).astype(np.int64)


def round_half_away(value):
    # type: (float) -> int
    if value >= 0:
        return int(np.floor(value + 0.5))
    return -int(np.floor(-value + 0.5))


def psnr(a, b):
    # type: (np.ndarray, np.ndarray) -> float
    """
    Peak signal-to-noise ratio for 8-bit rasters; `inf` for identical input.
    """
    if a.shape != b.shape:
        raise ValueError('PSNR of mismatched shapes {} and {}'.format(a.shape, b.shape))
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0:
        return float('inf')
    return float(10.0 * np.log10(255.0 ** 2 / mse))


def derive_rng(*parts):
    # type: (*int) -> np.random.Generator
    """
    A generator that depends only on the integer parts given, so per-frame or
    per-object draws do not depend on processing order.
    """
    return np.random.default_rng(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]))
