class AccDecoderError(Exception):
    """
    Base for errors the CLI turns into an exit status.
    """
    exit_code = 1


class ConfigError(AccDecoderError):
    exit_code = 1


class SpecError(ConfigError):
    """
    A SceneSpec that cannot be rendered (e.g. an object leaves the frame
    while still live).
    """


class CorruptStreamError(AccDecoderError):
    exit_code = 2


class TrainingDivergedError(AccDecoderError):
    exit_code = 3


class ReuseUnavailableError(AccDecoderError):
    """
    No reference path connects the inference frame and the target frame;
    the caller has to run inference instead.
    """


class CacheMissError(AccDecoderError):
    pass
