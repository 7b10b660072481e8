import json
import math
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase
from scipy import stats

from core.exceptions import ShapeError, TrainingAborted
from core.neural import AdamOptimizer, CriticNetwork, DlActor, load_checkpoint
from core.rng import RngStream, fork_stream
from core.trainers import (
    TRAINERS,
    CtdeTrainer,
    IdaTrainer,
    MalsTrainer,
    TrainingLog,
    TrajectoryBuffer,
    compute_gae,
    evaluate_policy,
    load_actors,
    mals_critic_update,
    normalize_advantages,
    ppo_loss_and_grads,
    ppo_surrogate,
    random_allocation,
    run_random,
    train,
)

from .utils import max_relative_error, numeric_gradients, tiny_network, tiny_train


def filled_buffer(trainer, steps):
    buffer = TrajectoryBuffer(steps)
    trainer.env.reset()
    for _ in range(steps):
        buffer.add(trainer.rollout_step())
    return buffer


class GaeTests(SimpleTestCase):
    def test_zero_discount_is_one_step_advantage(self):
        rewards = np.array([1.0, -2.0, 0.5])
        values = np.array([0.3, 0.1, -0.4])
        adv, targets = compute_gae(rewards, values, np.array([9.0, 9.0, 9.0]), np.zeros(3), 0.0, 0.95)
        np.testing.assert_allclose(adv, rewards - values)
        np.testing.assert_allclose(targets, rewards)

    def test_terminal_step_drops_bootstrap(self):
        adv, _ = compute_gae([2.0], [0.5], [100.0], [1.0], 0.99, 0.95)
        self.assertEqual(adv[0], 1.5)

    def test_done_restarts_the_recursion(self):
        rewards = np.array([1.0, 1.0, 1.0, 1.0])
        values = np.zeros(4)
        next_values = np.zeros(4)
        dones = np.array([0.0, 1.0, 0.0, 0.0])
        adv, _ = compute_gae(rewards, values, next_values, dones, 0.5, 1.0)
        np.testing.assert_allclose(adv, [1.5, 1.0, 1.5, 1.0])

    def test_monte_carlo_limit(self):
        rewards = np.array([1.0, 2.0, 3.0])
        values = np.array([0.5, -1.0, 2.0])
        next_values = np.array([-1.0, 2.0, 4.0])
        adv, targets = compute_gae(rewards, values, next_values, np.zeros(3), 1.0, 1.0)
        np.testing.assert_allclose(targets, [1.0 + 2.0 + 3.0 + 4.0, 2.0 + 3.0 + 4.0, 3.0 + 4.0])
        np.testing.assert_allclose(adv, targets - values)

    def test_recursion_matches_explicit_discounted_sum(self):
        rng = RngStream(5)
        for _ in range(50):
            n = int(rng.integers(1, 30))
            rewards = rng.normal(0.0, 5.0, n)
            values = rng.normal(0.0, 5.0, n)
            next_values = rng.normal(0.0, 5.0, n)
            dones = (rng.uniform(0.0, 1.0, n) < 0.15).astype(float)
            gamma, lam = rng.uniform(0.5, 1.0), rng.uniform(0.0, 1.0)
            adv, _ = compute_gae(rewards, values, next_values, dones, gamma, lam)

            deltas = rewards + gamma * next_values * (1.0 - dones) - values
            explicit = np.zeros(n)
            for t in range(n):
                for k in range(t, n):
                    explicit[t] += (gamma * lam) ** (k - t) * deltas[k]
                    if dones[k]:
                        break
            np.testing.assert_allclose(adv, explicit, rtol=1e-10, atol=1e-10)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            compute_gae(np.zeros(3), np.zeros(2), np.zeros(3), np.zeros(3), 0.9, 0.9)

    def test_normalize(self):
        adv = normalize_advantages(np.array([1.0, 2.0, 3.0, 4.0]))
        self.assertAlmostEqual(float(adv.mean()), 0.0, places=12)
        self.assertAlmostEqual(float(adv.std()), 1.0, places=6)


class SurrogateTests(SimpleTestCase):
    def test_clipped_branch_has_exactly_zero_gradient(self):
        old = np.zeros(4)
        new = np.log(np.array([1.5, 0.5, 1.5, 0.5]))
        adv = np.array([1.0, -1.0, -1.0, 1.0])
        surrogate, grad, ratios = ppo_surrogate(new, old, adv, 0.2)
        self.assertEqual(grad[0], 0.0)
        self.assertEqual(grad[1], 0.0)
        self.assertNotEqual(grad[2], 0.0)
        self.assertNotEqual(grad[3], 0.0)
        self.assertAlmostEqual(surrogate, (1.2 - 0.8 - 1.5 + 0.5) / 4, places=12)

    def test_unit_ratio_gives_mean_advantage(self):
        adv = np.array([0.5, -1.0, 2.0])
        surrogate, grad, ratios = ppo_surrogate(np.full(3, -1.2), np.full(3, -1.2), adv, 0.2)
        np.testing.assert_array_equal(ratios, np.ones(3))
        self.assertAlmostEqual(surrogate, float(adv.mean()), places=12)
        np.testing.assert_allclose(grad, adv / 3)

    def test_gradient_matches_finite_differences(self):
        rng = RngStream(0)
        old = rng.normal(0.0, 1.0, 12)
        new = old + rng.uniform(-0.5, 0.5, 12)
        adv = rng.normal(0.0, 1.0, 12)
        _, grad, _ = ppo_surrogate(new, old, adv, 0.2)
        numeric = numeric_gradients(lambda: ppo_surrogate(new, old, adv, 0.2)[0], [new])
        self.assertLess(max_relative_error([grad], numeric), 1e-4)

    def test_non_finite_ratio_aborts(self):
        with self.assertRaises(TrainingAborted):
            ppo_surrogate(np.array([0.0]), np.array([-np.inf]), np.array([1.0]), 0.2)

    def test_actor_loss_gradient_matches_finite_differences(self):
        actor = DlActor(4, 2, 2, (6,), RngStream(1))
        rng = RngStream(2)
        states = rng.normal(0.0, 1.0, (6, 4))
        actions = rng.integers(1, 3, (6, 2))
        old, _ = actor.evaluate(states, actions)
        old = old + rng.normal(0.0, 0.05, 6)
        adv = rng.normal(0.0, 1.0, 6)
        _, grads = ppo_loss_and_grads(actor, states, actions, old, adv, 0.2)
        numeric = numeric_gradients(
            lambda: ppo_loss_and_grads(actor, states, actions, old, adv, 0.2)[0], actor.parameters()
        )
        self.assertLess(max_relative_error(grads, numeric), 1e-4)

    def test_actor_loss_gradients_on_random_networks(self):
        rng = RngStream(7)
        for index in range(50):
            state_dim, n_ues, m_mbs = (int(v) for v in rng.integers(2, 5, 3))
            hidden = tuple(int(w) for w in rng.integers(2, 6, int(rng.integers(1, 3))))
            actor = DlActor(state_dim, n_ues, m_mbs, hidden, fork_stream(rng, f'actor{index}'))
            states = rng.normal(0.0, 1.0, (6, state_dim))
            actions = rng.integers(1, m_mbs + 1, (6, n_ues))
            old, _ = actor.evaluate(states, actions)
            # ratios well inside or well outside the clip range, away from its kinks
            shift = np.where(rng.uniform(0.0, 1.0, 6) < 0.5, rng.uniform(-0.05, 0.05, 6), rng.uniform(0.5, 1.0, 6))
            old = old - shift * np.sign(rng.normal(0.0, 1.0, 6))
            adv = rng.normal(0.0, 1.0, 6)

            def loss():
                return ppo_loss_and_grads(actor, states, actions, old, adv, 0.2)[0]

            _, grads = ppo_loss_and_grads(actor, states, actions, old, adv, 0.2)
            with self.subTest(network=index, hidden=hidden):
                self.assertLess(max_relative_error(grads, numeric_gradients(loss, actor.parameters())), 1e-4)


class CriticLossTests(SimpleTestCase):
    def setUp(self):
        self.critic = CriticNetwork({'dl': 4, 'ul': 4}, (6, 6), RngStream(3))
        rng = RngStream(4)
        self.dl_batch = (rng.normal(0.0, 1.0, (8, 4)), rng.normal(0.0, 1.0, 8))
        self.ul_batch = (rng.normal(0.0, 1.0, (8, 4)), rng.normal(0.0, 1.0, 8))

    def test_shared_loss_is_weighted_sum(self):
        optimizer = AdamOptimizer(self.critic.parameters(), 1e-3)
        loss_ul, loss_dl, loss = mals_critic_update(self.critic, self.dl_batch, self.ul_batch, 0.7, 0.3, optimizer)
        self.assertAlmostEqual(loss, 0.7 * loss_ul + 0.3 * loss_dl, places=12)

    def test_gradient_is_additive_in_the_loss_weights(self):
        rng = RngStream(6)
        _, _, grads_ul = self.critic.loss_and_grads({'dl': self.dl_batch, 'ul': self.ul_batch}, {'ul': 1.0, 'dl': 0.0})
        _, _, grads_dl = self.critic.loss_and_grads({'dl': self.dl_batch, 'ul': self.ul_batch}, {'ul': 0.0, 'dl': 1.0})
        for _ in range(20):
            kappa1, kappa2 = rng.uniform(0.0, 2.0, 2)
            _, _, grads = self.critic.loss_and_grads(
                {'dl': self.dl_batch, 'ul': self.ul_batch}, {'ul': kappa1, 'dl': kappa2}
            )
            for g, g_ul, g_dl in zip(grads, grads_ul, grads_dl):
                np.testing.assert_allclose(g, kappa1 * g_ul + kappa2 * g_dl, rtol=1e-10, atol=1e-12)

    def test_zero_dl_weight_freezes_dl_branch(self):
        slices = self.critic.parameter_slices()
        frozen = [self.critic.parameters()[i].copy() for i in list(slices['adapter:dl']) + list(slices['head:dl'])]
        optimizer = AdamOptimizer(self.critic.parameters(), 1e-2)
        for _ in range(3):
            mals_critic_update(self.critic, self.dl_batch, self.ul_batch, 1.0, 0.0, optimizer)
        after = [self.critic.parameters()[i] for i in list(slices['adapter:dl']) + list(slices['head:dl'])]
        for a, b in zip(frozen, after):
            np.testing.assert_array_equal(a, b)
        backbone = [self.critic.parameters()[i] for i in slices['backbone']]
        self.assertTrue(any(np.any(p != 0) for p in backbone))


class TrainingLogTests(SimpleTestCase):
    def test_steps_must_not_go_backwards(self):
        log = TrainingLog()
        log.append_update({'step': 10})
        log.append_update({'step': 10})
        with self.assertRaises(ValueError):
            log.append_update({'step': 5})

    def test_json_lines(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'log.jsonl')
            log = TrainingLog(path)
            log.append_update({'step': 1, 'round': 1})
            log.close()
            with open(path) as handle:
                kinds = [json.loads(line)['kind'] for line in handle]
        self.assertEqual(kinds, ['update', 'summary'])

    def test_buffer_capacity(self):
        buffer = TrajectoryBuffer(1)
        buffer.add(object())
        self.assertTrue(buffer.full)
        with self.assertRaises(ShapeError):
            buffer.add(object())


class TrainerTests(SimpleTestCase):
    def test_target_sync_schedule(self):
        log = train('mals', tiny_network(), tiny_train(total_steps=40, horizon=10, target_sync_interval=2))
        self.assertEqual([u['synced'] for u in log.updates], [False, True, False, True])
        self.assertEqual([u['step'] for u in log.updates], [10, 20, 30, 40])

    def test_trailing_partial_batch_is_used(self):
        log = train('mals', tiny_network(), tiny_train(total_steps=25, horizon=10))
        self.assertEqual([u['batch'] for u in log.updates], [10, 10, 5])

    def test_update_records_share_one_schema(self):
        keys = set()
        for algorithm in ('mals', 'ida', 'ctde'):
            log = train(algorithm, tiny_network(), tiny_train(total_steps=10, horizon=10))
            keys.add(tuple(sorted(log.updates[0])))
        self.assertEqual(len(keys), 1)
        self.assertEqual(set(next(iter(keys))), {'round', 'step', 'batch', 'synced', 'actor_dl', 'actor_ul',
                                                 'critic_dl', 'critic_ul', 'critic'})

    def test_ctde_critic_sees_both_observations(self):
        cfg = tiny_network()
        trainer = CtdeTrainer(cfg, tiny_train())
        self.assertEqual(trainer.critic.input_dims, {'joint': cfg.dl_state_dim + cfg.ul_state_dim})
        batch = filled_buffer(trainer, 6).as_arrays()
        adv_dl, adv_ul, _ = trainer.advantages(batch)
        np.testing.assert_array_equal(adv_dl, adv_ul)

    def test_ida_critics_ignore_the_other_agents_rewards(self):
        cfg = tiny_network()
        trainer = IdaTrainer(cfg, tiny_train())
        batch = filled_buffer(trainer, 8).as_arrays()
        adv_dl, adv_ul, targets = trainer.advantages(batch)
        shifted = dict(batch, dl_reward=batch['dl_reward'] + 100.0)
        shifted_dl, shifted_ul, shifted_targets = trainer.advantages(shifted)
        np.testing.assert_array_equal(adv_ul, shifted_ul)
        np.testing.assert_array_equal(targets['ul'], shifted_targets['ul'])
        self.assertTrue(np.all(shifted_dl > adv_dl))

    def test_shared_critic_couples_the_heads(self):
        cfg = tiny_network()
        results = []
        for offset in (0.0, 100.0):
            trainer = MalsTrainer(cfg, tiny_train())
            batch = filled_buffer(trainer, 8).as_arrays()
            batch['dl_reward'] = batch['dl_reward'] + offset
            _, _, targets = trainer.advantages(batch)
            trainer.update_critics(batch, targets, np.arange(8))
            results.append(trainer.critic.values(batch['ul_state'], 'ul'))
        self.assertFalse(np.array_equal(results[0], results[1]))

    def test_private_critics_stay_separate(self):
        cfg = tiny_network()
        results = []
        for offset in (0.0, 100.0):
            trainer = IdaTrainer(cfg, tiny_train())
            batch = filled_buffer(trainer, 8).as_arrays()
            batch['dl_reward'] = batch['dl_reward'] + offset
            _, _, targets = trainer.advantages(batch)
            trainer.update_critics(batch, targets, np.arange(8))
            results.append(trainer.ul_critic.values(batch['ul_state'], 'ul'))
        np.testing.assert_array_equal(results[0], results[1])

    def test_same_seed_same_run(self):
        runs = []
        with tempfile.TemporaryDirectory() as tmp:
            for name in ('a', 'b'):
                path = os.path.join(tmp, f'{name}.npz')
                log = train('mals', tiny_network(), tiny_train(), checkpoint_path=path)
                runs.append((log.updates, log.episodes, load_checkpoint(path)[2]))
        self.assertEqual(runs[0][0], runs[1][0])
        self.assertEqual(runs[0][1], runs[1][1])
        for name, params in runs[0][2].items():
            for key, value in params.items():
                np.testing.assert_array_equal(value, runs[1][2][name][key])

    def test_zero_steps_still_writes_checkpoint(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'checkpoint.npz')
            log = train('ida', tiny_network(), tiny_train(total_steps=0), checkpoint_path=path)
            self.assertEqual(log.updates, [])
            self.assertEqual(log.checkpoint_path, path)
            algorithm, _, networks = load_checkpoint(path)
        self.assertEqual(algorithm, 'ida')
        self.assertEqual(set(networks), {'dl_actor', 'ul_actor', 'dl_critic', 'ul_critic'})

    def test_abort_writes_diagnostic_checkpoint(self):
        trainer = MalsTrainer(tiny_network(), tiny_train())
        buffer = filled_buffer(trainer, 4)
        buffer.transitions[0].dl_logp = -math.inf
        with tempfile.TemporaryDirectory() as tmp:
            trainer.checkpoint_dir = tmp
            with self.assertRaises(TrainingAborted) as ctx:
                trainer.update(buffer)
            self.assertEqual(ctx.exception.checkpoint_path, os.path.join(tmp, 'diagnostic.npz'))
            self.assertTrue(os.path.isfile(ctx.exception.checkpoint_path))

    def test_registry(self):
        self.assertEqual(sorted(TRAINERS), ['ctde', 'ida', 'mals'])


class BaselineTests(SimpleTestCase):
    def test_random_allocation_is_uniform(self):
        cfg = tiny_network(n_ues=3, m_mbs=4)
        rng = RngStream(5)
        draws = np.concatenate([random_allocation(cfg, rng) for _ in range(4000)])
        counts = np.bincount(draws, minlength=5)[1:]
        self.assertEqual(counts.sum(), 12000)
        self.assertGreater(stats.chisquare(counts).pvalue, 1e-3)

    def test_random_baseline_episodes(self):
        records = run_random(tiny_network(), 3, seed=1)
        self.assertEqual([r.episode for r in records], [1, 2, 3])
        self.assertTrue(all(1 <= r.steps_survived <= 5 for r in records))
        self.assertEqual(records, run_random(tiny_network(), 3, seed=1))

    def test_evaluate_saved_policy(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'checkpoint.npz')
            train('ctde', tiny_network(), tiny_train(), checkpoint_path=path)
            algorithm, net_cfg, train_cfg, _, _ = load_actors(path)
            first = evaluate_policy(path, 2, seed=3)
            second = evaluate_policy(path, 2, seed=3)
        self.assertEqual(algorithm, 'ctde')
        self.assertEqual(net_cfg, tiny_network())
        self.assertEqual(train_cfg.hidden_sizes, (8, 8))
        self.assertEqual(len(first), 2)
        self.assertEqual(first, second)
