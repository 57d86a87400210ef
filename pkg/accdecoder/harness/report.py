"""
Where the simulated time goes: per kind of work (sr, inference, transfer,
reuse, overhead) totals and shares over a set of chunk reports.
"""
import csv
import glob
import logging
import os
from typing import Dict, List, NamedTuple, Optional, Sequence  # noqa

import numpy as np

from accdecoder.exceptions import ConfigError
from accdecoder.harness.runner import REPORT_COLUMNS, ChunkReport
from accdecoder.latency import LR_INFER, REUSE, SR, TRANSFER, LatencyModel
from accdecoder.scheduler.mdp import Action


__all__ = (
    'BREAKDOWN_KINDS',
    'Breakdown',
    'report_breakdown',
    'load_reports',
    'report_directory',
    'write_breakdown',
)

logger = logging.getLogger(__name__)

BREAKDOWN_KINDS = ('sr', 'inference', 'transfer', 'reuse', 'overhead')

Breakdown = NamedTuple('Breakdown', [
    ('name', str),
    ('chunks', int),
    ('totals', Dict[str, float]),
    ('shares', Dict[str, float]),
])


def report_breakdown(reports, latency=None, name='run'):
    # type: (Sequence[ChunkReport], Optional[LatencyModel], str) -> Breakdown
    """
    Re-derive every chunk's latency from its pipeline counts and split it.
    The shares sum to 1 (all zero for an empty or zero-cost run).
    """
    latency = latency or LatencyModel()
    totals = dict.fromkeys(BREAKDOWN_KINDS, 0.0)
    for report in reports:
        for kind, value in latency.breakdown(report.counts, report.frames).items():
            totals[kind] += value
    grand = sum(totals.values())
    shares = {kind: (value / grand if grand > 0 else 0.0) for kind, value in totals.items()}
    return Breakdown(name, len(reports), totals, shares)


def load_reports(path):
    # type: (str) -> List[ChunkReport]
    out = []
    try:
        with open(path, newline='') as f:
            reader = csv.DictReader(f)
            if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
                raise ConfigError('{} is not a chunk report'.format(path))
            for row in reader:
                action = Action(float(row['tr1']), float(row['tr2'])) if row['tr1'] else None
                counts = {SR: int(row['n_sr']), TRANSFER: int(row['n_transfer']),
                          REUSE: int(row['n_reuse']), LR_INFER: int(row['n_lr_infer'])}
                f1 = np.array([float(v) for v in row['f1'].split(';') if v])
                out.append(ChunkReport(row['stream'], int(row['chunk']), counts, f1, float(row['latency_ms']),
                                       float(row['reward']), row['penalty'] == '1', action,
                                       int(row['promoted'])))
    except (OSError, KeyError, ValueError) as e:
        raise ConfigError('cannot read chunk reports {}: {}'.format(path, e))
    return out


def _is_report(path):
    # type: (str) -> bool
    with open(path, newline='') as f:
        header = next(csv.reader(f), None)
    return tuple(header or ()) == REPORT_COLUMNS


def report_directory(directory, latency=None):
    # type: (str, Optional[LatencyModel]) -> List[Breakdown]
    """
    A breakdown for every chunk report CSV in `directory`, written next to
    them as `breakdown.csv`.
    """
    if not os.path.isdir(directory):
        raise ConfigError('{} is not a directory'.format(directory))
    breakdowns = []
    for path in sorted(glob.glob(os.path.join(directory, '*.csv'))):
        if not _is_report(path):
            continue
        name = os.path.splitext(os.path.basename(path))[0]
        breakdown = report_breakdown(load_reports(path), latency, name)
        logger.info('%s: %s', name, ', '.join(
            '{} {:.0%}'.format(kind, breakdown.shares[kind]) for kind in BREAKDOWN_KINDS))
        breakdowns.append(breakdown)
    if not breakdowns:
        raise ConfigError('no chunk reports in {}'.format(directory))
    write_breakdown(breakdowns, os.path.join(directory, 'breakdown.csv'))
    return breakdowns


def write_breakdown(breakdowns, path):
    # type: (Sequence[Breakdown], str) -> None
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(('name', 'chunks') + tuple('{}_ms'.format(k) for k in BREAKDOWN_KINDS)
                        + tuple('{}_share'.format(k) for k in BREAKDOWN_KINDS))
        for b in breakdowns:
            writer.writerow((b.name, b.chunks)
                            + tuple('{:.3f}'.format(b.totals[k]) for k in BREAKDOWN_KINDS)
                            + tuple('{:.4f}'.format(b.shares[k]) for k in BREAKDOWN_KINDS))
