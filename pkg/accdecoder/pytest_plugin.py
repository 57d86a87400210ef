"""
Fixtures for suites that exercise accdecoder components on small synthetic
streams, plus a `slow` marker that is skipped unless `--run-slow` is given.
"""
import pytest

from accdecoder.codec import EncoderConfig
from accdecoder.pipeline import Stream
from accdecoder.scenegen import ObjectSpec, SceneSpec


def pytest_addoption(parser):
    parser.addoption('--run-slow', action='store_true', default=False,
                     help='run tests marked slow (corpus-scale checks)')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: corpus-scale check, needs --run-slow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--run-slow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --run-slow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


def _scene(width=128, height=96, frame_count=30, seed=0, background='texture', velocity=(2, 1),
           objects=None, **kwargs):
    if objects is None:
        objects = [ObjectSpec(size=(24, 16), position=(20, 30), segments=[(0, velocity[0], velocity[1])])]
    return SceneSpec(width, height, frame_count, seed=seed, background=background, objects=objects, **kwargs)


@pytest.fixture
def scene_factory():
    """
    Build a small SceneSpec: one textured-background clip with a single
    translating rectangle unless told otherwise.

        spec = scene_factory(frame_count=60, velocity=(1, 0))
    """
    return _scene


@pytest.fixture
def stream_factory(scene_factory):
    """
    Render, encode and decode a scene into a Stream.

        stream = stream_factory(scale_factor=2, gop='IPPBPPB', frame_count=60, velocity=(1, 0))
    """
    def factory(scale_factor=1, qp=4, gop='IPPPPPPP', chunk_size=30, search_range=8, spec=None, **scene):
        spec = spec or scene_factory(**scene)
        cfg = EncoderConfig(qp=qp, search_range=search_range, gop=gop, intra_period=chunk_size)
        return Stream.from_scene(spec, cfg, scale_factor, chunk_size)

    return factory
