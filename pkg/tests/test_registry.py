import os
import shutil
import sys
import tempfile
from contextlib import contextmanager
from unittest import TestCase

import pytest
from faker import Faker
from flexisettings.utils import override_settings

from accdecoder.conf import settings
from accdecoder.enhance import BicubicUp
from accdecoder.exceptions import ConfigError
from accdecoder.inference import MockDetector
from accdecoder.registry import Registry, detectors, enhancers, parse_selector


fake = Faker()


@contextmanager
def dynamic_registration_module(detector_name):
    """
    Write a temporary module that registers a detector (without importing
    it) and point REGISTRATION_IMPORTS at it.
    """
    tmpdir = tempfile.mkdtemp()

    module_name = '_'.join(fake.words(nb=3))
    assert module_name not in sys.modules

    with open(os.path.join(tmpdir, '{}.py'.format(module_name)), 'w+') as tmp:
        tmp.write("""
from accdecoder import register_detector
from accdecoder.inference import MockDetector, MockDetectorParams


@register_detector('{}')
def seeded_mock(arg, **context):
    return MockDetector(MockDetectorParams(seed=int(arg or 0)))
""".format(detector_name))

    sys.path.append(tmpdir)
    try:
        with override_settings(settings, REGISTRATION_IMPORTS=(module_name,)):
            yield module_name
    finally:
        sys.path.pop(sys.path.index(tmpdir))
        shutil.rmtree(tmpdir)


class RegistrationTestCase(TestCase):

    def test_registration_imports(self):
        with override_settings(settings, REGISTRATION_IMPORTS=('tests.registrations',)):
            assert 'perfect' in detectors.names()
            assert detectors.create('perfect').cost_ms == 25.0
            upscale = enhancers.create('upscale', scale_factor=2)
            assert isinstance(upscale, BicubicUp)
            assert upscale.scale_factor == 2

    def test_dynamic_module_is_imported_on_lookup(self):
        name = 'detector_{}'.format(fake.word())
        with dynamic_registration_module(name) as module_name:
            assert module_name not in sys.modules
            detector = detectors.create('{}:7'.format(name))
            assert isinstance(detector, MockDetector)
            assert module_name in sys.modules
            assert detector.params.seed == 7

    def test_builtins_are_registered(self):
        assert {'bicubic', 'oracle'} <= set(enhancers.names())
        assert {'mock', 'replay'} <= set(detectors.names())


class RegistryTestCase(TestCase):

    def setUp(self):
        self.registry = Registry('widget')

    def test_register_and_create(self):
        self.registry.register('echo', lambda arg, **context: (arg, context))
        assert self.registry.create('echo:3', scale_factor=2) == ('3', {'scale_factor': 2})
        assert self.registry.create('echo') == (None, {})

    def test_decorator(self):
        @self.registry.register('twice')
        def twice(arg, **context):
            return 2 * int(arg)

        assert self.registry.create('twice:21') == 42
        assert self.registry.names() == ['twice']

    def test_register_again_warns(self):
        self.registry.register('echo', lambda arg, **context: 1)
        replacement = lambda arg, **context: 2  # noqa: E731
        with pytest.warns(UserWarning):
            self.registry.register('echo', replacement)
        assert self.registry.get_factory('echo') is replacement

    def test_dotted_path(self):
        assert self.registry.get_factory('accdecoder.enhance.BicubicUp') is BicubicUp
        with pytest.raises(ConfigError):
            self.registry.get_factory('accdecoder.enhance.NoSuchEnhancer')
        with pytest.raises(ConfigError):
            self.registry.get_factory('no_such_package.factory')

    def test_unknown_name(self):
        self.registry.register('echo', lambda arg, **context: arg)
        with pytest.raises(ConfigError) as excinfo:
            self.registry.create('nope')
        assert 'echo' in str(excinfo.value)


def test_parse_selector():
    assert parse_selector('noisy:30') == ('noisy', '30')
    assert parse_selector('oracle') == ('oracle', None)
    assert parse_selector('static: 0.3,1.0') == ('static', '0.3,1.0')
    assert parse_selector('replay:') == ('replay', '')
    with pytest.raises(ConfigError):
        parse_selector('')
