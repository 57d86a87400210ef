"""
End-to-end runs: build the streams a RunConfig names, schedule every chunk
with the configured scheduler (or a single-pipeline baseline), and write the
per-chunk reports and display-order detections.

Report CSV columns:

    stream, chunk, tr1, tr2, n_sr, n_transfer, n_reuse, n_lr_infer,
    promoted, mean_f1, latency_ms, reward, penalty, f1

`f1` holds the per-frame scores joined with ';'. Wall-clock figures are
logged, never written, so two identical runs give identical files.
"""
import csv
import logging
import os
from typing import Callable, Dict, List, Optional, Sequence, Tuple  # noqa

import numpy as np

# imported for their enhancer / detector registrations
import accdecoder.enhance  # noqa
import accdecoder.inference  # noqa
from accdecoder.exceptions import ConfigError
from accdecoder.features import ChunkState, export_diff_signal  # noqa
from accdecoder.harness.config import RunConfig  # noqa
from accdecoder.latency import INFERENCE_BEARING, LR_INFER, REUSE, SR, TRANSFER, LatencyModel
from accdecoder.pipeline import ChunkExecutor, ChunkOutcome, Stream  # noqa
from accdecoder.registry import detectors, enhancers, parse_selector
from accdecoder.reuse import export_detections
from accdecoder.scenegen import load_scene_spec, random_scene
from accdecoder.scheduler.baselines import KNNBank, StaticScheduler, oracle_search
from accdecoder.scheduler.env import ChunkEnv
from accdecoder.scheduler.mdp import Action, RewardParams, penalty, reward  # noqa
from accdecoder.scheduler.policy import load_policy, select_action
from accdecoder.utils import WallClock


__all__ = (
    'ALL_SR',
    'ALL_INFER',
    'ALL_REUSE',
    'BASELINES',
    'REPORT_COLUMNS',
    'ChunkReport',
    'build_streams',
    'make_executor',
    'make_env',
    'run_accdecoder',
    'run_baseline',
    'run_baseline_all_sr',
    'run_baseline_all_infer',
    'run_baseline_all_reuse',
    'write_reports',
    'write_detections',
    'write_features',
    'save_run',
)

logger = logging.getLogger(__name__)

ALL_SR = 'all_sr'
ALL_INFER = 'all_infer'
ALL_REUSE = 'all_reuse'
BASELINES = (ALL_SR, ALL_INFER, ALL_REUSE)

REPORT_COLUMNS = (
    'stream', 'chunk', 'tr1', 'tr2', 'n_sr', 'n_transfer', 'n_reuse', 'n_lr_infer',
    'promoted', 'mean_f1', 'latency_ms', 'reward', 'penalty', 'f1',
)

# selectors whose argument is a file
_FILE_ARGS = ('mock', 'replay')


class ChunkReport(object):
    """
    What one scheduled chunk did and scored. `action` is None for the
    single-pipeline baselines.
    """

    def __init__(self, stream, chunk_index, counts, f1, latency_ms, reward, penalty, action=None,
                 promoted=0, outcome=None, wall_ms=0.0):
        # type: (str, int, Dict[int, int], np.ndarray, float, float, bool, Optional[Action], int, Optional[ChunkOutcome], float) -> None
        self.stream = stream
        self.chunk_index = chunk_index
        self.counts = {label: int(counts.get(label, 0)) for label in (SR, TRANSFER, REUSE, LR_INFER)}
        self.f1 = np.asarray(f1, dtype=np.float64)
        self.latency_ms = float(latency_ms)
        self.reward = float(reward)
        self.penalty = bool(penalty)
        self.action = action
        self.promoted = promoted
        self.outcome = outcome
        self.wall_ms = wall_ms

    @classmethod
    def from_outcome(cls, stream, outcome, params, action=None, wall_ms=0.0):
        # type: (str, ChunkOutcome, RewardParams, Optional[Action], float) -> ChunkReport
        return cls(stream, outcome.chunk_index, outcome.counts, outcome.f1, outcome.latency_ms,
                   reward(outcome.mean_f1, outcome.latency_ms, params),
                   penalty(outcome.latency_ms, params) > 0, action, outcome.promoted, outcome, wall_ms)

    @property
    def mean_f1(self):
        # type: () -> float
        return float(self.f1.mean()) if len(self.f1) else 0.0

    @property
    def frames(self):
        # type: () -> int
        return sum(self.counts.values())

    def row(self):
        # type: () -> Tuple
        tr1, tr2 = (self.action.tr1, self.action.tr2) if self.action is not None else ('', '')
        return (
            self.stream, self.chunk_index, tr1, tr2,
            self.counts[SR], self.counts[TRANSFER], self.counts[REUSE], self.counts[LR_INFER],
            self.promoted, '{:.6f}'.format(self.mean_f1), '{:.3f}'.format(self.latency_ms),
            '{:.6f}'.format(self.reward), int(self.penalty),
            ';'.join('{:.4f}'.format(v) for v in self.f1),
        )

    def __repr__(self):
        return 'ChunkReport({} #{}: f1 {:.3f}, {:.1f} ms)'.format(
            self.stream, self.chunk_index, self.mean_f1, self.latency_ms)


def build_streams(cfg):
    # type: (RunConfig) -> List[Stream]
    """
    One stream for a scene (optionally read from a pre-encoded bitstream),
    or `corpus.streams` generated ones.
    """
    if cfg.scene is not None:
        spec = load_scene_spec(cfg.scene)
        name = os.path.splitext(os.path.basename(cfg.scene))[0]
        if cfg.bitstream is not None:
            try:
                with open(cfg.bitstream, 'rb') as f:
                    data = f.read()
            except OSError as e:
                raise ConfigError('cannot read bitstream {}: {}'.format(cfg.bitstream, e))
            return [Stream.from_bitstream(data, spec, cfg.chunk_size, name=name)]
        return [Stream.from_scene(spec, cfg.codec, cfg.scale_factor, cfg.chunk_size, name=name)]

    corpus = cfg.corpus
    streams = []
    for i in range(corpus.streams):
        spec = random_scene(corpus.seed + i, corpus.width, corpus.height, corpus.frame_count,
                            corpus.objects, corpus.max_speed, corpus.background, corpus.noise)
        streams.append(Stream.from_scene(spec, cfg.codec, cfg.scale_factor, cfg.chunk_size,
                                         name='corpus-{:03d}'.format(i)))
    logger.info('built %d corpus streams (%d chunks)', len(streams), sum(len(s) for s in streams))
    return streams


def _resolve_selector(cfg, selector):
    # type: (RunConfig, str) -> str
    name, arg = parse_selector(selector)
    if arg and name in _FILE_ARGS:
        return '{}:{}'.format(name, cfg.resolve(arg))
    return selector


def make_executor(cfg, stream):
    # type: (RunConfig, Stream) -> ChunkExecutor
    enhancer = enhancers.create(cfg.enhancer, scale_factor=stream.scale_factor,
                                hr_frames=stream.hr_frames, seed=cfg.seed)
    detector = detectors.create(_resolve_selector(cfg, cfg.detector), seed=cfg.seed)
    latency = LatencyModel.for_components(enhancer, detector, cfg.latency_overrides)
    return ChunkExecutor(stream, enhancer, detector, latency)


def make_env(cfg, executors, clock=None):
    # type: (RunConfig, Sequence[ChunkExecutor], Optional[WallClock]) -> ChunkEnv
    return ChunkEnv(executors, cfg.reward, cfg.theta, clock)


def _scheduler(cfg, env):
    # type: (RunConfig, ChunkEnv) -> Callable[[ChunkState, int], Action]
    mode, arg = cfg.scheduler_mode, cfg.scheduler_arg
    if mode == 'static':
        return StaticScheduler(arg)
    if mode == 'knn':
        return KNNBank.load(cfg.resolve(arg))
    if mode == 'oracle':
        return lambda state, t: oracle_search(env, env.chunk, state)[0]
    policy = load_policy(cfg.resolve(arg))
    if policy.state_dim != env.state_dim:
        raise ConfigError('policy expects a state of {} entries, the streams give {}'.format(
            policy.state_dim, env.state_dim))
    return lambda state, t: select_action(policy, state)


def run_accdecoder(cfg, executors=None):
    # type: (RunConfig, Optional[Sequence[ChunkExecutor]]) -> List[ChunkReport]
    """
    Schedule every chunk of every stream with the configured scheduler.

    Kwargs:
        cfg: the run
        executors: reuse executors (and their memoized chunk outcomes)
            instead of building the streams again
    """
    if executors is None:
        executors = [make_executor(cfg, s) for s in build_streams(cfg)]
    clock = WallClock()
    env = make_env(cfg, executors, clock)
    choose = _scheduler(cfg, env)
    reports = []  # type: List[ChunkReport]
    for episode in range(env.episode_count):
        stream = env.executors[episode].stream
        state = env.reset(episode)
        done = False
        t = 0
        while not done:
            before = clock.ms('scheduler')
            with clock('scheduler'):
                action = choose(state, t)
            result = env.step(action)
            report = ChunkReport.from_outcome(stream.name, result.outcome, cfg.reward, action,
                                              wall_ms=clock.ms('scheduler') - before)
            logger.info('%s chunk %d: action (%.2f, %.2f), counts %s, f1 %.3f, %.1f ms, reward %.4f',
                        stream.name, report.chunk_index, action.tr1, action.tr2,
                        [report.counts[label] for label in (SR, TRANSFER, REUSE)],
                        report.mean_f1, report.latency_ms, report.reward)
            reports.append(report)
            state, done = result.state, result.done
            t += 1
    simulated = sum(r.latency_ms for r in reports)
    logger.info('wall clock: features %.1f ms, scheduler %.1f ms; simulated total %.1f ms',
                clock.ms('features'), clock.ms('scheduler'), simulated)
    return reports


def _baseline_labels(kind, size):
    # type: (str, int) -> Tuple[List[int], bool]
    if kind == ALL_SR:
        return [SR] * size, True
    if kind == ALL_INFER:
        # the key frame is analysed at low resolution too
        return [LR_INFER] * size, False
    if kind == ALL_REUSE:
        return [REUSE] * size, True
    raise ConfigError('unknown baseline {!r} (known: {})'.format(kind, ', '.join(BASELINES)))


def run_baseline(cfg, kind, executors=None):
    # type: (RunConfig, str, Optional[Sequence[ChunkExecutor]]) -> List[ChunkReport]
    """
    Send every frame down one pipeline; all-reuse still runs SR and
    inference on each key frame. Baselines pay the same feature and
    scheduler overheads as a scheduled run.
    """
    _baseline_labels(kind, 1)
    if executors is None:
        executors = [make_executor(cfg, s) for s in build_streams(cfg)]
    reports = []  # type: List[ChunkReport]
    for executor in executors:
        stream = executor.stream
        for chunk_index, indices in enumerate(stream.chunks):
            labels, force = _baseline_labels(kind, len(indices))
            outcome = executor.run(chunk_index, labels, force=force)
            reports.append(ChunkReport.from_outcome(stream.name, outcome, cfg.reward))
    logger.info('%s: mean f1 %.3f over %d chunks', kind,
                float(np.mean([r.mean_f1 for r in reports])) if reports else 0.0, len(reports))
    return reports


def run_baseline_all_sr(cfg, executors=None):
    return run_baseline(cfg, ALL_SR, executors)


def run_baseline_all_infer(cfg, executors=None):
    return run_baseline(cfg, ALL_INFER, executors)


def run_baseline_all_reuse(cfg, executors=None):
    return run_baseline(cfg, ALL_REUSE, executors)


def write_reports(reports, path):
    # type: (Sequence[ChunkReport], str) -> None
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_COLUMNS)
        for report in reports:
            writer.writerow(report.row())


def write_detections(reports, executor, path):
    # type: (Sequence[ChunkReport], ChunkExecutor, str) -> None
    """
    Detections of one stream's reports, strictly in display order.
    """
    info = executor.stream.info
    rows = []
    for report in sorted(reports, key=lambda r: r.chunk_index):
        if report.stream != executor.stream.name or report.outcome is None:
            continue
        outcome = report.outcome
        for d, dets in zip(outcome.display_indices, outcome.detections):
            coding_index = info.by_display(d).coding_index
            rows.extend((coding_index, d, det) for det in dets)
    export_detections(rows, path)


def save_run(cfg, label, reports, executors):
    # type: (RunConfig, str, Sequence[ChunkReport], Sequence[ChunkExecutor]) -> str
    """
    Write `<output>/<label>.csv` plus one detections file per stream.

    Returns:
        (path of the report CSV)
    """
    os.makedirs(cfg.output, exist_ok=True)
    path = os.path.join(cfg.output, '{}.csv'.format(label))
    write_reports(reports, path)
    for executor in executors:
        write_detections(reports, executor, os.path.join(
            cfg.output, '{}-detections-{}.csv'.format(label, executor.stream.name)))
    logger.info('wrote %d chunk reports to %s', len(reports), path)
    return path


def write_features(env, reports, directory):
    # type: (ChunkEnv, Sequence[ChunkReport], str) -> None
    """
    One `features-<stream>.csv` per stream: every frame's difference d and
    the difference D accumulated since the last inference frame of the
    reported assignment.
    """
    os.makedirs(directory, exist_ok=True)
    by_key = {(r.stream, r.chunk_index): r for r in reports}
    for episode, executor in enumerate(env.executors):
        stream = executor.stream
        rows = []
        for chunk_index, indices in enumerate(stream.chunks):
            report = by_key.get((stream.name, chunk_index))
            if report is None or report.outcome is None:
                continue
            signal = env.state_for(episode, chunk_index, None).diff_signal
            accumulated = signal.cumulative([label in INFERENCE_BEARING for label in report.outcome.assignment])
            for i, d in enumerate(indices):
                rows.append((stream.info.by_display(d).coding_index, d, signal.d[i], accumulated[i]))
        export_diff_signal(rows, os.path.join(directory, 'features-{}.csv'.format(stream.name)))
