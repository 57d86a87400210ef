"""
Corpus-scale orderings: the grid oracle against the per-frame assignment
oracle, the trained scheduler against its baselines, the speed/accuracy
tradeoff, reuse drift and the residual features.
"""
import os
import shutil
import tempfile
from collections import defaultdict

import numpy as np
import pytest

from accdecoder.harness.bench import ACCDECODER, bench
from accdecoder.harness.calibrate import diff_reuse_correlation, feature_economy, oracle_ratio, reuse_iou_by_span
from accdecoder.harness.config import RunConfig
from accdecoder.harness.runner import ALL_INFER, ALL_REUSE, ALL_SR, build_streams, make_env, make_executor, \
    run_baseline
from accdecoder.scheduler.a2c import TrainConfig, train
from accdecoder.scheduler.baselines import StaticScheduler, build_bank, oracle_search
from accdecoder.scheduler.env import rollout
from accdecoder.scheduler.mdp import Action
from accdecoder.scheduler.policy import save_policy, select_action


pytestmark = pytest.mark.slow

CORPUS = {'frame_count': 120, 'width': 128, 'height': 128, 'objects': 4, 'max_speed': 6.0, 'noise': 0.5}

# 1.5x the all-reuse chunk cost
TAU = 190


def _config(output, seed, streams, **changes):
    data = {
        'corpus': dict(CORPUS, seed=seed, streams=streams),
        'codec': {'qp': 4, 'gop': 'IPPPPPPP'},
        'scale_factor': 2,
        'enhancer': 'oracle',
        'detector': 'mock',
        'reward': {'tau': TAU},
        'output': output,
        'base_dir': output,
    }
    data.update(changes)
    return RunConfig(**data)


def _env(cfg):
    return make_env(cfg, [make_executor(cfg, s) for s in build_streams(cfg)])


def _mean_reward(env, choose):
    rewards = []
    for episode in range(env.episode_count):
        rewards.extend(rollout(env, episode, choose)[2])
    return float(np.mean(rewards))


@pytest.fixture(scope='module')
def workdir():
    path = tempfile.mkdtemp()
    yield path
    shutil.rmtree(path)


@pytest.fixture(scope='module')
def held_out(workdir):
    cfg = _config(workdir, 500, 4)
    return cfg, _env(cfg)


@pytest.fixture(scope='module')
def trained(workdir):
    cfg = _config(workdir, 100, 8)
    env = _env(cfg)
    policy, _ = train([env], TrainConfig(episodes=1200, workers=4, lr=1e-3, seed=0), cfg.reward)
    return env, policy


def test_grid_oracle_is_close_to_the_assignment_oracle(workdir):
    # 10 streams of ten 6-frame chunks
    corpus = dict(CORPUS, seed=300, streams=10, frame_count=60)
    cfg = _config(workdir, 300, 10, corpus=corpus, chunk_size=6, reward={'tau': 1000})
    grid, exhaustive, chunks = oracle_ratio(_env(cfg), cfg.reward)
    assert chunks == 100
    assert grid <= exhaustive + 1e-12
    assert grid >= 0.9 * exhaustive


def test_trained_scheduler_beats_its_baselines(trained, held_out):
    train_env, policy = trained
    _, env = held_out
    learned = _mean_reward(env, lambda state, t: select_action(policy, state))
    grid = _mean_reward(env, lambda state, t: oracle_search(env, env.chunk, state)[0])
    static = max(_mean_reward(env, StaticScheduler(action)) for action in Action.grid())
    knn = _mean_reward(env, build_bank(train_env))
    assert learned >= 0.95 * grid
    assert learned > static
    assert learned > knn


def test_tradeoff_against_single_pipeline_baselines(trained, held_out, workdir):
    _, policy = trained
    cfg, env = held_out
    path = os.path.join(workdir, 'policy.ckpt')
    save_policy(policy, path)
    rows = bench(cfg.replace(scheduler='drl:{}'.format(path)), configs=[ACCDECODER, ALL_SR, ALL_REUSE],
                 streams=[e.stream for e in env.executors], workers=1, plot=False)
    ours, all_sr, all_reuse = rows
    assert ours.fps >= 3 * all_sr.fps
    assert ours.mean_f1 >= all_sr.mean_f1 - 0.05
    assert ours.mean_f1 >= all_reuse.mean_f1 + 0.10
    assert ours.mean_latency_ms <= 1.5 * all_reuse.mean_latency_ms


def test_baselines_trade_accuracy_for_latency(held_out):
    cfg, env = held_out
    f1, latency = {}, {}
    for name in (ALL_SR, ALL_INFER, ALL_REUSE):
        reports = run_baseline(cfg, name, env.executors)
        f1[name] = np.mean([r.mean_f1 for r in reports])
        latency[name] = np.mean([r.latency_ms for r in reports])
    assert latency[ALL_REUSE] < latency[ALL_INFER] < latency[ALL_SR]
    assert f1[ALL_SR] >= f1[ALL_INFER]
    assert f1[ALL_SR] > f1[ALL_REUSE]


def test_reuse_drifts_with_span(held_out):
    _, env = held_out
    spans = defaultdict(list)
    for executor in env.executors:
        for span, value in reuse_iou_by_span(executor, max_span=9, source_every=3).items():
            spans[span].append(value)
    scores = {span: np.mean(v) for span, v in spans.items()}
    assert scores[1] >= scores[3] >= scores[6] >= scores[9]


def test_residual_features_are_cheap_and_predictive(held_out):
    cfg, env = held_out
    residual_s, frame_s = feature_economy([e.stream for e in env.executors], cfg.theta, repeats=5)
    assert residual_s <= frame_s
    all_sr = run_baseline(cfg, ALL_SR, env.executors)
    all_reuse = run_baseline(cfg, ALL_REUSE, env.executors)
    assert diff_reuse_correlation(env, all_sr, all_reuse) >= 0.5
