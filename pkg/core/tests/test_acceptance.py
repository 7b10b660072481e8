"""Long-running learning checks on desk-scale scenarios.

Skipped unless MEC_RUN_SLOW=1; MEC_WORKERS sets the sweep parallelism.
"""
import os
import tempfile
import unittest

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from core.harness import ExperimentSpec, aggregate_sweep, load_run_outputs, run_experiment, tail_records
from core.oracle import brute_force_allocation_oracle, single_step_dl_utility
from core.trainers import MalsTrainer, run_random, train

from .utils import tiny_network, tiny_train

RUN_SLOW = os.environ.get('MEC_RUN_SLOW') == '1'
SWEEP_VALUES = [0.0, 0.25, 0.5, 0.75, 1.0]


def desk_network(**overrides):
    values = dict(n_ues=3, m_mbs=2, t_steps=20)
    values.update(overrides)
    return tiny_network(**values)


def desk_train(seed, **overrides):
    values = dict(total_steps=50_000, horizon=2048, epochs=10, group_size=64, hidden_sizes=(64, 64), seed=seed)
    values.update(overrides)
    return tiny_train(**values)


def reward_mean(records):
    return float(np.mean([record.reward_sum for record in records]))


def head_records(records, fraction):
    return records[:max(1, int(np.ceil(fraction * len(records))))]


@unittest.skipUnless(RUN_SLOW, 'set MEC_RUN_SLOW=1 to run the learning checks')
class LearningTests(SimpleTestCase):
    def test_allocator_approaches_the_oracle_on_a_frozen_world(self):
        cfg = tiny_network(frozen_world=True, t_steps=1, battery_init=1e6, varkappa=0.0)
        hits = 0
        for seed in range(10):
            trainer = MalsTrainer(cfg, tiny_train(total_steps=20_000, horizon=512, epochs=4, group_size=64,
                                                  hidden_sizes=(32, 32), seed=seed))
            trainer.train()
            world = trainer.env.reset()
            alloc, _, _ = trainer.dl_actor.sample(trainer.env.dl_observation(), None, greedy=True)
            oracle = brute_force_allocation_oracle(world, cfg, trainer.weights)
            achieved = single_step_dl_utility(world, cfg, trainer.weights, alloc)
            if abs(achieved - oracle.best_utility) <= 0.05 * abs(oracle.best_utility):
                hits += 1
        self.assertGreaterEqual(hits, 8)

    def test_rewards_improve_over_training(self):
        improved = beats_random = 0
        for seed in range(10):
            log = train('mals', desk_network(), desk_train(seed))
            episodes = log.episodes
            tail = reward_mean(tail_records(episodes, 0.1))
            improved += tail > reward_mean(head_records(episodes, 0.1))
            beats_random += tail >= reward_mean(run_random(desk_network(), 50, seed))
        self.assertGreaterEqual(improved, 8)
        self.assertEqual(beats_random, 10)

    def test_loss_sharing_against_baselines(self):
        tails = {}
        for algorithm in ('mals', 'ida', 'ctde'):
            tails[algorithm] = [
                reward_mean(tail_records(train(algorithm, desk_network(), desk_train(seed)).episodes, 0.1))
                for seed in range(5)
            ]
        self.assertGreaterEqual(np.mean(tails['mals']), np.mean(tails['ctde']))
        self.assertLessEqual(np.ptp(tails['mals']), np.ptp(tails['ida']))


@unittest.skipUnless(RUN_SLOW, 'set MEC_RUN_SLOW=1 to run the weight sweeps')
class WeightSweepTests(SimpleTestCase):
    def sweep(self, axis):
        with tempfile.TemporaryDirectory() as tmp:
            spec = ExperimentSpec(algorithm='mals', seeds=[0, 1, 2], output_dir=tmp, axis=axis,
                                  values=SWEEP_VALUES, network=desk_network(), train=desk_train(0),
                                  workers=settings.MEC_WORKERS)
            run_experiment(spec)
            _, outputs, missing = load_run_outputs(tmp)
        return aggregate_sweep(outputs, 0.1, missing)

    def test_downlink_weight(self):
        summary = self.sweep('q')
        self.assertFalse(summary['partial'])
        self.assertLessEqual(summary['spearman']['avg_dl_delay'], -0.8)
        self.assertLessEqual(summary['spearman']['min_cum_earning'], -0.8)

    def test_uplink_weight(self):
        summary = self.sweep('h')
        self.assertFalse(summary['partial'])
        self.assertLessEqual(summary['spearman']['avg_ul_delay'], -0.8)
        self.assertGreaterEqual(summary['spearman']['max_cum_battery_pct'], 0.8)
