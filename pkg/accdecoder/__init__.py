from accdecoder.__about__ import __version__  # noqa
from accdecoder.exceptions import (  # noqa
    AccDecoderError,
    CacheMissError,
    ConfigError,
    CorruptStreamError,
    ReuseUnavailableError,
    SpecError,
    TrainingDivergedError,
)
from accdecoder.registry import register_detector, register_enhancer  # noqa
