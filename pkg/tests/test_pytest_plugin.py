
# https://docs.pytest.org/en/latest/writing_plugins.html#testing-plugins
pytest_plugins = 'pytester'


CONFTEST = """
pytest_plugins = 'accdecoder.pytest_plugin'
"""

TESTS = """
import pytest


def test_stream_factory(stream_factory):
    stream = stream_factory(scale_factor=2, frame_count=60, velocity=(1, 0))
    assert len(stream.lr_frames) == 60
    assert len(stream.chunks) == 2
    assert stream.hr_frames[0].pixels.shape == (96, 128)


def test_scene_factory(scene_factory):
    spec = scene_factory(velocity=(3, 0))
    assert (spec.width, spec.height) == (128, 96)


@pytest.mark.slow
def test_corpus_scale():
    pass
"""


def test_slow_tests_are_skipped(testdir):
    testdir.makeconftest(CONFTEST)
    testdir.makepyfile(TESTS)

    result = testdir.runpytest()

    result.assert_outcomes(passed=2, skipped=1)


def test_run_slow(testdir):
    testdir.makeconftest(CONFTEST)
    testdir.makepyfile(TESTS)

    result = testdir.runpytest('--run-slow')

    result.assert_outcomes(passed=3)
