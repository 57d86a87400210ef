"""
RunConfig: one YAML file describing where the video comes from, how it is
coded and analysed, how chunks are scheduled and where results go.

    scene: scenes/crossing.yaml     # or `corpus:` for generated streams
    bitstream: null                 # optional pre-encoded input (scene still gives the ground truth)
    codec: {qp: 4, search_range: 8, gop: IPPPPPPP, intra_period: 30}
    scale_factor: 2
    enhancer: oracle                # oracle | bicubic | noisy:<psnr_db> | dotted.path.factory
    detector: mock                  # mock | mock:<tier-file> | replay:<csv> | dotted.path.factory
    scheduler: static:0.35,1.5      # drl:<ckpt> | static:<tr1>,<tr2> | knn:<bank> | oracle
    reward: {alpha1: 0.5, alpha2: 0.5, tau: 1000, gamma: 0.99}
    latency: {transfer_cost: 3}     # sr_cost / infer_cost default to the components' cost_ms
    theta: 8
    chunk_size: 30
    output: out/
    seed: 0
    corpus: {streams: 8, seed: 100, frame_count: 120, width: 256, height: 256,
             objects: 6, max_speed: 6.0}
    train: {episodes: 400, workers: 4, lr: 0.0001}
    bench: {configs: [accdecoder, all_sr, all_infer, all_reuse], plot: true, workers: 2}
"""
import os
from typing import Any, Dict, List, Optional, Tuple  # noqa

import yaml

from accdecoder.codec import EncoderConfig
from accdecoder.conf import settings
from accdecoder.exceptions import ConfigError
from accdecoder.latency import LatencyModel
from accdecoder.registry import parse_selector
from accdecoder.scheduler.mdp import Action, RewardParams


__all__ = (
    'SCHEDULER_MODES',
    'RunConfig',
    'CorpusConfig',
    'load_run_config',
)

SCHEDULER_MODES = ('drl', 'static', 'knn', 'oracle')

_KEYS = {
    'scene', 'bitstream', 'codec', 'scale_factor', 'enhancer', 'detector', 'scheduler', 'reward',
    'latency', 'theta', 'chunk_size', 'output', 'seed', 'corpus', 'train', 'bench',
}


class CorpusConfig(object):
    """
    A corpus of generated busy scenes, stream i seeded with `seed + i`.
    """

    def __init__(self, streams=8, seed=100, frame_count=120, width=256, height=256, objects=6,
                 max_speed=6.0, background='texture', noise=1.0):
        # type: (int, int, int, int, int, int, float, str, float) -> None
        self.streams = streams
        self.seed = seed
        self.frame_count = frame_count
        self.width = width
        self.height = height
        self.objects = objects
        self.max_speed = max_speed
        self.background = background
        self.noise = noise
        if streams < 1:
            raise ConfigError('corpus needs at least one stream')

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**(data or {}))
        except TypeError as e:
            raise ConfigError('bad corpus section: {}'.format(e))


class RunConfig(object):

    def __init__(self, scene=None, bitstream=None, codec=None, scale_factor=1, enhancer='oracle',
                 detector='mock', scheduler='static:0.35,1.5', reward=None, latency=None, theta=None,
                 chunk_size=None, output='out', seed=0, corpus=None, train=None, bench=None,
                 base_dir=None):
        self.base_dir = base_dir or os.getcwd()
        self.scene = self.resolve(scene)
        self.bitstream = self.resolve(bitstream)
        self.chunk_size = int(chunk_size or settings.CHUNK_SIZE)
        codec = dict(codec or {})
        codec.setdefault('intra_period', self.chunk_size)
        try:
            self.codec = EncoderConfig(**codec)
        except TypeError as e:
            raise ConfigError('bad codec section: {}'.format(e))
        self.scale_factor = int(scale_factor)
        if self.scale_factor < 1:
            raise ConfigError('scale_factor must be >= 1')
        self.enhancer = enhancer
        self.detector = detector
        self.scheduler = scheduler
        self.scheduler_mode, self.scheduler_arg = self.parse_scheduler(scheduler)
        self.reward = RewardParams.from_dict(reward)
        # only the keys the file sets; the rest come from the enhancer and detector
        self.latency_overrides = dict(latency or {})
        self.latency = LatencyModel.from_dict(latency)
        self.theta = settings.LAPLACIAN_THRESHOLD if theta is None else float(theta)
        self.output = self.resolve(output)
        self.seed = int(seed)
        self.corpus = CorpusConfig.from_dict(corpus) if corpus is not None else None
        self.train = dict(train or {})
        self.bench = dict(bench or {})
        if self.scene is None and self.corpus is None:
            raise ConfigError('a run needs a scene or a corpus')
        if self.bitstream is not None and self.scene is None:
            raise ConfigError('a bitstream input still needs its scene for ground truth')

    def resolve(self, value):
        # type: (Optional[str]) -> Optional[str]
        if value is None:
            return None
        return value if os.path.isabs(value) else os.path.join(self.base_dir, value)

    @staticmethod
    def parse_scheduler(selector):
        # type: (str) -> Tuple[str, Any]
        """
        Returns:
            (mode, argument): a checkpoint or bank path, an Action for
            static, None for oracle
        """
        mode, arg = parse_selector(selector)
        if mode not in SCHEDULER_MODES:
            raise ConfigError('scheduler must be one of {}, got {!r}'.format(', '.join(SCHEDULER_MODES), selector))
        if mode == 'oracle':
            if arg:
                raise ConfigError('the oracle scheduler takes no argument')
            return mode, None
        if not arg:
            raise ConfigError('scheduler {!r} needs an argument'.format(mode))
        if mode == 'static':
            try:
                tr1, tr2 = (float(v) for v in arg.split(','))
            except ValueError:
                raise ConfigError('static scheduler expects static:<tr1>,<tr2>, got {!r}'.format(selector))
            return mode, Action.from_thresholds(tr1, tr2)
        return mode, arg

    def replace(self, **changes):
        # type: (**Any) -> RunConfig
        """
        A copy with some top-level keys changed, e.g. another scheduler.
        """
        data = self.as_dict()
        data.update(changes)
        return RunConfig(base_dir=self.base_dir, **data)

    def as_dict(self):
        # type: () -> Dict[str, Any]
        return {
            'scene': self.scene,
            'bitstream': self.bitstream,
            'codec': {'qp': self.codec.qp, 'search_range': self.codec.search_range,
                      'gop': self.codec.gop, 'intra_period': self.codec.intra_period},
            'scale_factor': self.scale_factor,
            'enhancer': self.enhancer,
            'detector': self.detector,
            'scheduler': self.scheduler,
            'reward': {'alpha1': self.reward.alpha1, 'alpha2': self.reward.alpha2,
                       'tau': self.reward.tau, 'gamma': self.reward.gamma},
            'latency': dict(self.latency_overrides),
            'theta': self.theta,
            'chunk_size': self.chunk_size,
            'output': self.output,
            'seed': self.seed,
            'corpus': None if self.corpus is None else dict(vars(self.corpus)),
            'train': dict(self.train),
            'bench': dict(self.bench),
        }

    def __repr__(self):
        return 'RunConfig(scene={}, scheduler={}, enhancer={}, detector={})'.format(
            self.scene or 'corpus', self.scheduler, self.enhancer, self.detector)


def load_run_config(path=None):
    # type: (Optional[str]) -> RunConfig
    """
    Read a RunConfig; without a path the `ACCDECODER_CONFIG` file is used.
    Relative paths inside resolve against the file's directory.
    """
    path = path or settings.DEFAULT_CONFIG_PATH
    if not path:
        raise ConfigError('no run config given and ACCDECODER_CONFIG is not set')
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError('cannot read run config {}: {}'.format(path, e))
    if not isinstance(data, dict):
        raise ConfigError('run config {} is not a mapping'.format(path))
    unknown = set(data) - _KEYS
    if unknown:
        raise ConfigError('unknown run config keys: {}'.format(', '.join(sorted(unknown))))
    return RunConfig(base_dir=os.path.dirname(os.path.abspath(path)), **data)
