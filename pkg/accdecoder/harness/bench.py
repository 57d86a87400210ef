"""
Benchmark AccDecoder against the single-pipeline baselines (or any other
scheduler) on the same streams.

Summary CSV columns: config, chunks, mean_f1, mean_latency_ms, fps,
mean_reward. `fps` is the effective analytics speed, frames per chunk over
the mean simulated chunk latency.
"""
import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, NamedTuple, Optional, Sequence  # noqa

import numpy as np

from accdecoder.exceptions import ConfigError
from accdecoder.harness.config import RunConfig  # noqa
from accdecoder.harness.runner import BASELINES, ChunkReport, build_streams, make_executor, run_accdecoder, \
    run_baseline, write_reports  # noqa
from accdecoder.pipeline import ChunkExecutor, Stream  # noqa


__all__ = (
    'ACCDECODER',
    'DEFAULT_CONFIGS',
    'SummaryRow',
    'summarize',
    'bench',
    'write_summary',
    'plot_summary',
)

logger = logging.getLogger(__name__)

ACCDECODER = 'accdecoder'
DEFAULT_CONFIGS = (ACCDECODER,) + BASELINES

SummaryRow = NamedTuple('SummaryRow', [
    ('config', str),
    ('chunks', int),
    ('mean_f1', float),
    ('mean_latency_ms', float),
    ('fps', float),
    ('mean_reward', float),
])


def summarize(config, reports, chunk_size):
    # type: (str, Sequence[ChunkReport], int) -> SummaryRow
    if not reports:
        return SummaryRow(config, 0, 0.0, 0.0, 0.0, 0.0)
    latency = float(np.mean([r.latency_ms for r in reports]))
    return SummaryRow(
        config, len(reports),
        float(np.mean([r.mean_f1 for r in reports])),
        latency,
        1000.0 * chunk_size / latency if latency > 0 else float('inf'),
        float(np.mean([r.reward for r in reports])),
    )


def _run_config(cfg, name, executors):
    # type: (RunConfig, str, Sequence[ChunkExecutor]) -> List[ChunkReport]
    """
    `accdecoder` uses the run's own scheduler, baseline names run the
    baseline, anything else is taken as a scheduler selector.
    """
    if name == ACCDECODER:
        return run_accdecoder(cfg, executors)
    if name in BASELINES:
        return run_baseline(cfg, name, executors)
    return run_accdecoder(cfg.replace(scheduler=name), executors)


def _bench_stream(cfg, configs, stream):
    # type: (RunConfig, Sequence[str], Stream) -> Dict[str, List[ChunkReport]]
    # configs on one stream share the executor and its memoized outcomes
    executor = make_executor(cfg, stream)
    return {name: _run_config(cfg, name, [executor]) for name in configs}


def bench(cfg, configs=None, streams=None, workers=None, plot=None):
    # type: (RunConfig, Optional[Sequence[str]], Optional[Sequence[Stream]], Optional[int], Optional[bool]) -> List[SummaryRow]
    """
    Kwargs:
        cfg: the run; `cfg.bench` supplies defaults for the other kwargs
        configs: names to compare, see `_run_config`
        streams: prebuilt streams, otherwise built from `cfg`
        workers: streams benchmarked concurrently
        plot: also write `summary.png`

    Returns:
        (one summary row per config, in the given order)
    """
    configs = list(configs or cfg.bench.get('configs') or DEFAULT_CONFIGS)
    workers = workers or int(cfg.bench.get('workers', 1))
    plot = cfg.bench.get('plot', False) if plot is None else plot
    streams = list(streams) if streams is not None else build_streams(cfg)
    if not streams:
        raise ConfigError('bench needs at least one stream')

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_bench_stream, cfg, configs, s) for s in streams]
        # stream order, whatever the completion order
        per_stream = [future.result() for future in futures]

    rows = []
    os.makedirs(cfg.output, exist_ok=True)
    for name in configs:
        reports = [r for results in per_stream for r in results[name]]
        row = summarize(name, reports, cfg.chunk_size)
        logger.info('%s: f1 %.3f, %.1f ms/chunk, %.1f fps, reward %.4f',
                    name, row.mean_f1, row.mean_latency_ms, row.fps, row.mean_reward)
        rows.append(row)
        write_reports(reports,
                      os.path.join(cfg.output, '{}.csv'.format(_file_label(name))))
    write_summary(rows, os.path.join(cfg.output, 'summary.csv'))
    if plot:
        plot_summary(rows, os.path.join(cfg.output, 'summary.png'))
    return rows


def _file_label(name):
    # type: (str) -> str
    return ''.join(c if c.isalnum() or c in '-_.' else '_' for c in name)


def write_summary(rows, path):
    # type: (Sequence[SummaryRow], str) -> None
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(SummaryRow._fields)
        for row in rows:
            writer.writerow((row.config, row.chunks, '{:.6f}'.format(row.mean_f1),
                             '{:.3f}'.format(row.mean_latency_ms), '{:.3f}'.format(row.fps),
                             '{:.6f}'.format(row.mean_reward)))


def plot_summary(rows, path):
    # type: (Sequence[SummaryRow], str) -> None
    """
    Scatter of accuracy against effective speed, one point per config.
    """
    import matplotlib
    matplotlib.use('agg')
    import matplotlib.pyplot as plt

    plt.figure(figsize=(6, 4.5))
    for row in rows:
        plt.scatter(row.fps, row.mean_f1, s=40)
        plt.annotate(row.config, (row.fps, row.mean_f1), textcoords='offset points', xytext=(5, 5))
    plt.xlabel('effective fps')
    plt.ylabel('mean F1')
    plt.grid(True, alpha=0.3)
    plt.tight_layout()
    plt.savefig(path)
    plt.close()
    logger.info('wrote %s', path)
