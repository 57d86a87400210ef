"""
accdecoder command line.

    accdecoder encode scene.yaml -o clip.acc --qp 4 --scale 2
    accdecoder train -c run.yaml -o policy.ckpt
    accdecoder run -c run.yaml [--scheduler oracle | --baseline all_sr]
    accdecoder bench -c run.yaml
    accdecoder report out/
    accdecoder calibrate -c run.yaml

Without `-c` the `ACCDECODER_CONFIG` file is used. Exit status: 0 ok,
1 configuration error, 2 corrupt input, 3 training diverged.
"""
import argparse
import logging
import os
import sys
from typing import List, Optional, Sequence  # noqa

from accdecoder.codec import EncoderConfig, encode, write_bitstream
from accdecoder.conf import settings
from accdecoder.exceptions import AccDecoderError, ConfigError
from accdecoder.harness.bench import bench
from accdecoder.harness.calibrate import calibrate
from accdecoder.harness.config import load_run_config
from accdecoder.harness.report import report_directory
from accdecoder.harness.runner import BASELINES, build_streams, make_env, make_executor, run_accdecoder, \
    run_baseline, save_run, write_features
from accdecoder.scenegen import downscale, export_tracks, generate, import_frames, load_scene_spec
from accdecoder.scheduler.a2c import TrainConfig, export_training_log, train
from accdecoder.scheduler.baselines import build_bank
from accdecoder.scheduler.policy import save_policy
from accdecoder.scheduler.replay import ReplayConfig, train_replay


logger = logging.getLogger('accdecoder')


def _encode(args):
    # type: (argparse.Namespace) -> int
    cfg = EncoderConfig(qp=args.qp, search_range=args.search_range, gop=args.gop, intra_period=args.intra_period)
    if args.input.endswith('.json'):
        frames = import_frames(args.input)
        scale = 1
    else:
        spec = load_scene_spec(args.input)
        spec.validate(args.scale)
        hr_frames, tracks = generate(spec)
        frames = downscale(hr_frames, args.scale)
        scale = args.scale
        if args.tracks:
            export_tracks(tracks, args.tracks)
    data = write_bitstream(encode(frames, cfg, scale_factor=scale))
    with open(args.output, 'wb') as f:
        f.write(data)
    logger.info('encoded %d frames into %s (%d bytes)', len(frames), args.output, len(data))
    return 0


def _train(args):
    # type: (argparse.Namespace) -> int
    cfg = load_run_config(args.config)
    section = dict(cfg.train)
    if args.episodes:
        section['episodes'] = args.episodes
    if args.workers:
        section['workers'] = args.workers
    section.setdefault('seed', cfg.seed)
    env = make_env(cfg, [make_executor(cfg, s) for s in build_streams(cfg)])
    if args.replay:
        policy, log = train_replay(env, ReplayConfig.from_dict(section), cfg.reward)
    else:
        policy, log = train([env], TrainConfig.from_dict(section), cfg.reward)
    save_policy(policy, args.output)
    os.makedirs(cfg.output, exist_ok=True)
    export_training_log(log, os.path.join(cfg.output, 'training.csv'))
    if args.bank:
        build_bank(env, args.k).save(args.bank)
        logger.info('saved KNN bank to %s', args.bank)
    return 0


def _run(args):
    # type: (argparse.Namespace) -> int
    cfg = load_run_config(args.config)
    if args.scheduler:
        cfg = cfg.replace(scheduler=args.scheduler)
    executors = [make_executor(cfg, s) for s in build_streams(cfg)]
    if args.baseline:
        reports = run_baseline(cfg, args.baseline, executors)
        label = args.baseline
    else:
        reports = run_accdecoder(cfg, executors)
        label = 'accdecoder'
    save_run(cfg, label, reports, executors)
    if args.features:
        write_features(make_env(cfg, executors), reports, cfg.output)
    return 0


def _bench(args):
    # type: (argparse.Namespace) -> int
    cfg = load_run_config(args.config)
    bench(cfg, configs=args.configs or None, workers=args.workers, plot=True if args.plot else None)
    return 0


def _report(args):
    # type: (argparse.Namespace) -> int
    latency = load_run_config(args.config).latency if args.config else None
    report_directory(args.directory, latency)
    return 0


def _calibrate(args):
    # type: (argparse.Namespace) -> int
    calibrate(load_run_config(args.config), oracle_chunk=args.oracle_chunk, max_span=args.max_span)
    return 0


def get_parser():
    # type: () -> argparse.ArgumentParser
    parser = argparse.ArgumentParser(prog='accdecoder', description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument('-v', '--verbose', action='store_true', help='log at DEBUG')
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    p = sub.add_parser('encode', help='encode a scene spec or a raw frame manifest')
    p.add_argument('input', help='scene YAML or frame manifest JSON')
    p.add_argument('-o', '--output', required=True, help='bitstream file')
    p.add_argument('--qp', type=int, default=4)
    p.add_argument('--search-range', type=int, default=8)
    p.add_argument('--gop', default='IPPPPPPP')
    p.add_argument('--intra-period', type=int, default=settings.CHUNK_SIZE)
    p.add_argument('--scale', type=int, default=1, help='downscale factor applied before encoding')
    p.add_argument('--tracks', help='also write the ground-truth tracks CSV here')
    p.set_defaults(func=_encode)

    p = sub.add_parser('train', help='train the actor-critic scheduler')
    p.add_argument('-c', '--config')
    p.add_argument('-o', '--output', required=True, help='policy checkpoint')
    p.add_argument('--episodes', type=int)
    p.add_argument('--workers', type=int)
    p.add_argument('--replay', action='store_true', help='use the off-policy replay learner')
    p.add_argument('--bank', help='also profile a KNN bank into this file')
    p.add_argument('-k', type=int, default=1, help='neighbours consulted by the bank')
    p.set_defaults(func=_train)

    p = sub.add_parser('run', help='schedule every chunk and write reports')
    p.add_argument('-c', '--config')
    p.add_argument('--scheduler', help='override the configured scheduler')
    p.add_argument('--baseline', choices=BASELINES)
    p.add_argument('--features', action='store_true', help='dump per-frame differences')
    p.set_defaults(func=_run)

    p = sub.add_parser('bench', help='compare configs on the same streams')
    p.add_argument('-c', '--config')
    p.add_argument('configs', nargs='*', help='accdecoder, baselines or scheduler selectors')
    p.add_argument('--workers', type=int)
    p.add_argument('--plot', action='store_true')
    p.set_defaults(func=_bench)

    p = sub.add_parser('report', help='latency breakdown of the reports in a directory')
    p.add_argument('directory')
    p.add_argument('-c', '--config', help='take the cost model from this run config')
    p.set_defaults(func=_report)

    p = sub.add_parser('calibrate', help='measure codec, transfer, reuse and oracle quantities')
    p.add_argument('-c', '--config')
    p.add_argument('--oracle-chunk', type=int, default=6)
    p.add_argument('--max-span', type=int, default=10)
    p.set_defaults(func=_calibrate)
    return parser


def configure_logging(verbose=False):
    # type: (bool) -> None
    logging.basicConfig(level=logging.DEBUG if verbose else settings.LOG_LEVEL, format=settings.LOG_FORMAT)


def main(argv=None):
    # type: (Optional[Sequence[str]]) -> int
    args = get_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.func(args)
    except AccDecoderError as e:
        logger.error('%s: %s', type(e).__name__, e)
        return e.exit_code
    except OSError as e:
        logger.error('%s', e)
        return ConfigError.exit_code


if __name__ == '__main__':
    sys.exit(main())
