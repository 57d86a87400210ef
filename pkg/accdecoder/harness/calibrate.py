"""
Measure the quantities the cost model and thresholds are tuned against:

- codec PSNR floor of the decoded LR frames
- PSNR gain of transferred frames over bicubic with anchors every few frames
- IoU of reused boxes as the reuse span grows
- cost of the Laplacian on residuals against the Laplacian on full frames,
  and how well the mean frame difference predicts the accuracy lost by
  pure reuse
- the grid oracle's reward against the per-frame assignment oracle on
  short chunks
- the pipeline assignment ratios of a scheduled run

Results go to `<output>/calibration.yaml`.
"""
import logging
import os
import time
from collections import defaultdict
from typing import Any, Dict, List, Optional, Sequence, Tuple  # noqa

import numpy as np
import yaml

from accdecoder.enhance import AnchorCache, Enhancer, bicubic_upscale, enhance_anchor, transfer_frame  # noqa
from accdecoder.exceptions import ReuseUnavailableError
from accdecoder.features import edge_map
from accdecoder.harness.config import RunConfig  # noqa
from accdecoder.harness.runner import ALL_REUSE, ALL_SR, ChunkReport, build_streams, make_env, make_executor, \
    run_accdecoder, run_baseline  # noqa
from accdecoder.inference import iou
from accdecoder.latency import INFERENCE_BEARING, REUSE, SR
from accdecoder.pipeline import ChunkExecutor, Stream  # noqa
from accdecoder.reuse import INFERRED, Detection, accumulate_mv, shift_bboxes
from accdecoder.scenegen import downscale
from accdecoder.scheduler.baselines import assignment_oracle, oracle_search
from accdecoder.scheduler.env import ChunkEnv  # noqa
from accdecoder.scheduler.mdp import RewardParams  # noqa
from accdecoder.utils import psnr


__all__ = (
    'codec_psnr',
    'transfer_gain',
    'reuse_iou_by_span',
    'feature_economy',
    'diff_reuse_correlation',
    'oracle_ratio',
    'assignment_ratios',
    'calibrate',
)

logger = logging.getLogger(__name__)


def codec_psnr(streams):
    # type: (Sequence[Stream]) -> Tuple[float, float]
    """
    Returns:
        (lowest, mean) PSNR of decoded LR frames against the encoder input
    """
    values = []
    for stream in streams:
        originals = downscale(stream.hr_frames[:len(stream.lr_frames)], stream.scale_factor)
        values.extend(psnr(o.pixels, d.pixels) for o, d in zip(originals, stream.lr_frames))
    finite = [v for v in values if np.isfinite(v)]
    if not finite:
        return float('inf'), float('inf')
    return min(finite), float(np.mean(finite))


def transfer_gain(stream, enhancer, anchor_every=8):
    # type: (Stream, Enhancer, int) -> Tuple[float, float]
    """
    Enhance every `anchor_every`-th frame of each chunk (and I-frames) and
    transfer the rest.

    Returns:
        (mean PSNR of transferred frames, mean PSNR of bicubic on the same
        frames), both against the true HR frames
    """
    transferred, bicubic = [], []
    info = stream.info
    for indices in stream.chunks:
        anchors = {d for i, d in enumerate(indices) if i % anchor_every == 0}
        cache = AnchorCache()
        for meta in sorted((info.by_display(d) for d in indices), key=lambda f: f.coding_index):
            d = meta.display_index
            lr = stream.lr_frames[d]
            if d in anchors or meta.frame_type == 'I':
                enhance_anchor(lr, enhancer, cache, meta.coding_index)
                continue
            hr = transfer_frame(meta, cache, stream.scale_factor, lr)
            truth = stream.hr_frames[d].pixels
            transferred.append(psnr(truth, hr.pixels))
            bicubic.append(psnr(truth, bicubic_upscale(lr.pixels, stream.scale_factor)))
    return _finite_mean(transferred), _finite_mean(bicubic)


def _finite_mean(values):
    # type: (Sequence[float]) -> float
    finite = [v for v in values if np.isfinite(v)]
    return float(np.mean(finite)) if finite else float('inf')


def reuse_iou_by_span(executor, max_span=10, source_every=5):
    # type: (ChunkExecutor, int, int) -> Dict[int, float]
    """
    Start from the true boxes of a source frame, reuse them `span` frames
    later and score each against the same object's true box.

    Returns:
        (span -> mean IoU), spans without a reference path are left out
    """
    stream = executor.stream
    scores = defaultdict(list)  # type: Dict[int, List[float]]
    for chunk_index, indices in enumerate(stream.chunks):
        graph = executor.reference_graph(chunk_index)
        for start in range(0, len(indices), source_every):
            src = indices[start]
            for span in range(1, max_span + 1):
                if start + span >= len(indices):
                    break
                dst = indices[start + span]
                tracks = [tr for tr in stream.tracks
                          if tr.boxes[src] is not None and tr.boxes[dst] is not None]
                if not tracks:
                    continue
                try:
                    field = accumulate_mv(graph, src, dst)
                except ReuseUnavailableError:
                    continue
                dets = [Detection(tr.boxes[src], tr.class_id, 1.0, INFERRED, 0) for tr in tracks]
                moved = shift_bboxes(dets, field, stream.hr_dims, stream.scale_factor, span)
                scores[span].extend(iou(det.bbox, tr.boxes[dst]) for det, tr in zip(moved, tracks))
    return {span: float(np.mean(v)) for span, v in sorted(scores.items())}


def feature_economy(streams, theta=None, repeats=3):
    # type: (Sequence[Stream], Optional[float], int) -> Tuple[float, float]
    """
    Returns:
        (seconds for the edge maps of the residual planes, seconds for the
        edge maps of the decoded frames) over every frame
    """
    residual_s = frame_s = 0.0
    for _ in range(repeats):
        for stream in streams:
            planes = [stream.info.residual_plane(d) for d in range(len(stream.lr_frames))]
            start = time.perf_counter()
            for plane in planes:
                edge_map(plane, theta)
            residual_s += time.perf_counter() - start
            start = time.perf_counter()
            for frame in stream.lr_frames:
                edge_map(frame.pixels, theta)
            frame_s += time.perf_counter() - start
    return residual_s, frame_s


def diff_reuse_correlation(env, sr_reports, reuse_reports):
    # type: (ChunkEnv, Sequence[ChunkReport], Sequence[ChunkReport]) -> float
    """
    Pearson correlation between a chunk's mean frame difference and the F1
    lost by reusing instead of enhancing every frame.
    """
    diffs, drops = [], []
    by_chunk = {(r.stream, r.chunk_index): r for r in reuse_reports}
    names = [e.stream.name for e in env.executors]
    for sr in sr_reports:
        reuse = by_chunk.get((sr.stream, sr.chunk_index))
        if reuse is None:
            continue
        state = env.state_for(names.index(sr.stream), sr.chunk_index, None)
        diffs.append(float(np.mean(state.intra_diffs)))
        drops.append(sr.mean_f1 - reuse.mean_f1)
    if len(diffs) < 2 or np.std(diffs) == 0 or np.std(drops) == 0:
        return 0.0
    return float(np.corrcoef(diffs, drops)[0, 1])


def oracle_ratio(env, params):
    # type: (ChunkEnv, RewardParams) -> Tuple[float, float, int]
    """
    Walk every episode along the grid oracle's trajectory and compare its
    chunk rewards with the assignment oracle's.

    Returns:
        (mean grid reward, mean assignment reward, chunks)
    """
    grid, exhaustive = [], []
    for episode in range(env.episode_count):
        state = env.reset(episode)
        done = False
        while not done:
            action, r, _ = oracle_search(env, env.chunk, state)
            _, best = assignment_oracle(env.executor, env.chunk, params)
            grid.append(r)
            exhaustive.append(best)
            result = env.step(action)
            state, done = result.state, result.done
    return float(np.mean(grid)), float(np.mean(exhaustive)), len(grid)


def assignment_ratios(reports):
    # type: (Sequence[ChunkReport]) -> Dict[str, float]
    """
    Fractions of frames enhanced, analysed by the detector, and reused.
    """
    frames = sum(r.frames for r in reports)
    if not frames:
        return {'sr': 0.0, 'inference': 0.0, 'reuse': 0.0}
    inferred = sum(n for r in reports for label, n in r.counts.items() if label in INFERENCE_BEARING)
    return {
        'sr': sum(r.counts[SR] for r in reports) / float(frames),
        'inference': inferred / float(frames),
        'reuse': sum(r.counts[REUSE] for r in reports) / float(frames),
    }


def calibrate(cfg, oracle_chunk=6, max_span=10):
    # type: (RunConfig, int, int) -> Dict[str, Any]
    """
    Run every measurement on the streams of `cfg` and write them out.

    Kwargs:
        cfg: the run (its scheduler gives the assignment ratios)
        oracle_chunk: chunk length for the assignment oracle comparison
        max_span: longest reuse span measured
    """
    streams = build_streams(cfg)
    executors = [make_executor(cfg, s) for s in streams]
    env = make_env(cfg, executors)
    results = {}  # type: Dict[str, Any]

    low, mean = codec_psnr(streams)
    results['codec_psnr'] = {'min': low, 'mean': mean}

    gains = [transfer_gain(e.stream, e.enhancer) for e in executors]
    results['transfer'] = {
        'transfer_psnr': _finite_mean([g[0] for g in gains]),
        'bicubic_psnr': _finite_mean([g[1] for g in gains]),
    }
    results['transfer']['gain_db'] = results['transfer']['transfer_psnr'] - results['transfer']['bicubic_psnr']

    spans = defaultdict(list)  # type: Dict[int, List[float]]
    for executor in executors:
        for span, value in reuse_iou_by_span(executor, max_span).items():
            spans[span].append(value)
    results['reuse_iou'] = {span: float(np.mean(v)) for span, v in sorted(spans.items())}

    residual_s, frame_s = feature_economy(streams, cfg.theta)
    sr_reports = run_baseline(cfg, ALL_SR, executors)
    reuse_reports = run_baseline(cfg, ALL_REUSE, executors)
    results['features'] = {
        'residual_s': residual_s,
        'frame_s': frame_s,
        'ratio': residual_s / frame_s if frame_s > 0 else 0.0,
        'diff_reuse_pearson': diff_reuse_correlation(env, sr_reports, reuse_reports),
    }

    short = cfg.replace(chunk_size=oracle_chunk, codec=dict(cfg.as_dict()['codec'], intra_period=oracle_chunk))
    short_env = make_env(short, [make_executor(short, s) for s in build_streams(short)])
    grid, exhaustive, chunks = oracle_ratio(short_env, short.reward)
    results['oracle'] = {
        'chunk_size': oracle_chunk,
        'chunks': chunks,
        'grid_reward': grid,
        'assignment_reward': exhaustive,
        'ratio': grid / exhaustive if exhaustive > 0 else 0.0,
    }

    results['assignment'] = assignment_ratios(run_accdecoder(cfg, executors))

    os.makedirs(cfg.output, exist_ok=True)
    path = os.path.join(cfg.output, 'calibration.yaml')
    with open(path, 'w') as f:
        yaml.safe_dump(results, f, default_flow_style=False, sort_keys=False)
    logger.info('transfer gain %.2f dB, grid/assignment oracle %.3f, reuse share %.2f; wrote %s',
                results['transfer']['gain_db'], results['oracle']['ratio'],
                results['assignment']['reuse'], path)
    return results
