import warnings
from importlib import import_module
from typing import Any, Callable, Dict, Optional, Tuple  # noqa

from accdecoder.conf import settings
from accdecoder.exceptions import ConfigError


__all__ = (
    'Registry',
    'enhancers',
    'detectors',
    'register_enhancer',
    'register_detector',
    'parse_selector',
)


def _get_from_path(import_path):
    # type: (str) -> Callable
    """
    Kwargs:
        import_path: full import path (to a factory function or class)

    Returns:
        (the factory)
    """
    module_name, obj_name = import_path.rsplit('.', 1)
    try:
        module = import_module(module_name)
        return getattr(module, obj_name)
    except (ImportError, AttributeError) as e:
        raise ConfigError('cannot import {!r}: {}'.format(import_path, e))


def _pre_import():
    # type: () -> None
    """
    Ensure that modules containing factories get imported so that their
    calls to `register` are made.
    """
    for import_path in settings.REGISTRATION_IMPORTS:
        import_module(import_path)


def parse_selector(selector):
    # type: (str) -> Tuple[str, Optional[str]]
    """
    'noisy:30' -> ('noisy', '30'); 'oracle' -> ('oracle', None)
    """
    if not selector:
        raise ConfigError('empty selector')
    name, sep, arg = selector.partition(':')
    return name.strip(), (arg.strip() if sep else None)


class Registry(object):
    """
    Name -> factory map for one kind of pluggable component.

    Factories are called as `factory(arg, **context)` where `arg` is the part
    of the selector after the colon (or None) and `context` carries whatever
    the caller has at hand (ground-truth frames, scale factor, ...).
    """

    def __init__(self, kind):
        # type: (str) -> None
        self.kind = kind
        self._factory_map = {}  # type: Dict[str, Callable]

    def register(self, name, factory=None):
        # type: (str, Optional[Callable]) -> Callable
        """
        Kwargs:
            name: selector name, e.g. 'bicubic'
            factory: callable building the component

        Returns:
            (decorator)

        Usage:

            enhancers.register('bicubic', BicubicFactory)

            @enhancers.register('oracle')
            def oracle(arg, hr_frames=None, **context):
                return OracleSR(hr_frames)
        """
        if name in self._factory_map:
            warnings.warn('{} {!r} registered again, replacing'.format(self.kind, name))
        if factory is not None:
            self._factory_map[name] = factory

        def decorator(decorated_factory):
            self._factory_map[name] = decorated_factory
            return decorated_factory

        return decorator

    def names(self):
        _pre_import()
        return sorted(self._factory_map)

    def get_factory(self, name):
        # type: (str) -> Callable
        _pre_import()
        try:
            return self._factory_map[name]
        except KeyError:
            if '.' in name:
                return _get_from_path(name)
            raise ConfigError('unknown {} {!r} (known: {})'.format(
                self.kind, name, ', '.join(sorted(self._factory_map))))

    def create(self, selector, **context):
        # type: (str, **Any) -> Any
        name, arg = parse_selector(selector)
        return self.get_factory(name)(arg, **context)


enhancers = Registry('enhancer')
detectors = Registry('detector')

register_enhancer = enhancers.register
register_detector = detectors.register
