"""PPO training for the DL and UL agents.

``PolicyTrainer`` owns the rollout loop (DL sample, DL step, UL sample,
UL step, store) and the grouped-minibatch update. The three critic layouts
are subclasses:

    MalsTrainer  one critic, a 'dl' and a 'ul' head over a shared backbone,
                 trained on the weighted sum of both head losses
    IdaTrainer   a private single-head critic per agent
    CtdeTrainer  one critic over concat(s^d, s^u) and a common reward

Advantages use the target critic; targets are synchronised every
``target_sync_interval`` update rounds.
"""
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from .config import dump_config, load_config
from .environment import MecEnvironment
from .exceptions import ShapeError, TrainingAborted
from .metrics import metrics_from_ledger
from .neural import (
    AdamOptimizer,
    CriticNetwork,
    DlActor,
    UlActor,
    dl_policy_sample,
    load_checkpoint,
    save_checkpoint,
    ul_policy_sample,
)
from .rewards import RewardWeights, common_reward, downlink_reward, uplink_reward
from .rng import RngStream, fork_stream

logger = logging.getLogger(__name__)

ADVANTAGE_EPS = 1e-8


@dataclass
class Transition:
    dl_state: np.ndarray
    alloc: np.ndarray
    dl_logp: float
    dl_reward: float
    ul_state: np.ndarray
    ul_raw: np.ndarray
    ul_powers: np.ndarray
    ul_logp: float
    ul_reward: float
    common_reward: float
    dl_next: np.ndarray
    ul_next: np.ndarray
    done: bool
    step: int


class TrajectoryBuffer:
    def __init__(self, horizon):
        self.horizon = horizon
        self.transitions = []

    def __len__(self):
        return len(self.transitions)

    @property
    def full(self):
        return len(self.transitions) >= self.horizon

    def add(self, transition):
        if self.full:
            raise ShapeError(f"trajectory buffer already holds {self.horizon} transitions")
        self.transitions.append(transition)

    def clear(self):
        self.transitions = []

    def as_arrays(self):
        """Stack every Transition field into one array per field"""
        if not self.transitions:
            return {}
        names = [f.name for f in fields(Transition)]
        batch = {name: np.array([getattr(t, name) for t in self.transitions]) for name in names}
        batch['done'] = batch['done'].astype(float)
        return batch


class TrainingLog:
    """Append-only record of update rounds and finished episodes.

    When ``path`` is given every record is also streamed to it as one JSON
    object per line.
    """

    def __init__(self, path=None):
        self.path = path
        self.updates = []
        self.episodes = []
        self.wall_clock = 0.0
        self.checkpoint_path = None
        self._handle = open(path, 'w', encoding='utf-8') if path else None

    @property
    def last_step(self):
        return self.updates[-1]['step'] if self.updates else 0

    def append_update(self, record):
        if record['step'] < self.last_step:
            raise ValueError(f"update at step {record['step']} logged after step {self.last_step}")
        self.updates.append(record)
        self._write({'kind': 'update', **record})

    def append_episode(self, metrics):
        self.episodes.append(metrics)
        self._write({'kind': 'episode', **asdict(metrics)})

    def close(self):
        if self._handle is not None:
            self._write({'kind': 'summary', 'wall_clock': self.wall_clock,
                         'updates': len(self.updates), 'episodes': len(self.episodes)})
            self._handle.close()
            self._handle = None

    def _write(self, record):
        if self._handle is not None:
            self._handle.write(json.dumps(record, sort_keys=True) + '\n')
            self._handle.flush()


def compute_gae(rewards, values, next_values, dones, gamma, lam):
    """Backward GAE recursion; a done step zeroes the bootstrap and restarts.

    Returns (advantages, value_targets) with value_targets = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    next_values = np.asarray(next_values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if not (rewards.shape == values.shape == next_values.shape == dones.shape) or rewards.ndim != 1:
        raise ShapeError(
            f"GAE inputs must be equal-length vectors, got {rewards.shape}, {values.shape}, "
            f"{next_values.shape}, {dones.shape}"
        )
    advantages = np.zeros_like(rewards)
    last = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values[t] * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        advantages[t] = last
    return advantages, advantages + values


def normalize_advantages(advantages):
    return (advantages - advantages.mean()) / (advantages.std() + ADVANTAGE_EPS)


def ppo_surrogate(new_logp, old_logp, advantages, clip_eps):
    """Clipped surrogate mean(min(rho*A, clip(rho)*A)) and its gradient w.r.t. new_logp.

    Returns (surrogate, grad_new_logp, ratios). Samples on the clipped branch
    get exactly zero gradient.
    """
    ratios = np.exp(np.asarray(new_logp) - np.asarray(old_logp))
    if not np.all(np.isfinite(ratios)):
        raise TrainingAborted(f"non-finite probability ratio in a batch of {len(ratios)}")
    unclipped = ratios * advantages
    clipped = np.clip(ratios, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    surrogate = float(np.mean(np.minimum(unclipped, clipped)))
    inside = (ratios >= 1.0 - clip_eps) & (ratios <= 1.0 + clip_eps)
    active = (unclipped < clipped) | inside
    grad = np.where(active, advantages * ratios, 0.0) / len(ratios)
    return surrogate, grad, ratios


def ppo_loss_and_grads(actor, states, actions, old_logp, advantages, clip_eps):
    """Negated surrogate and its parameter gradients (Adam descends on it)"""
    new_logp, context = actor.evaluate(states, actions)
    surrogate, grad_logp, _ = ppo_surrogate(new_logp, old_logp, advantages, clip_eps)
    return -surrogate, actor.backward(context, -grad_logp)


def ppo_actor_update(actor, states, actions, old_logp, advantages, clip_eps, optimizer):
    """One Adam step on a minibatch; ``optimizer`` carries the learning rate and moments"""
    loss, grads = ppo_loss_and_grads(actor, states, actions, old_logp, advantages, clip_eps)
    if not np.isfinite(loss):
        raise TrainingAborted(f"non-finite actor loss {loss}")
    optimizer.step(grads)
    return loss


def critic_update(critic, batches, weights, optimizer):
    losses, total, grads = critic.loss_and_grads(batches, weights)
    if not np.isfinite(total):
        raise TrainingAborted(f"non-finite critic loss {total}")
    optimizer.step(grads)
    return losses, total


def mals_critic_update(critic, dl_batch, ul_batch, kappa1, kappa2, optimizer):
    """Shared-loss step on L = kappa1 * L^u + kappa2 * L^d; returns (L^u, L^d, L)"""
    losses, total = critic_update(
        critic, {'dl': dl_batch, 'ul': ul_batch}, {'ul': kappa1, 'dl': kappa2}, optimizer
    )
    return losses['ul'], losses['dl'], total


def sync_target(critic):
    critic.sync_target()
    return critic


def random_allocation(cfg, rng):
    return rng.integers(1, cfg.m_mbs + 1, cfg.n_ues)


def random_powers(cfg, rng):
    return rng.uniform(cfg.p_ul_min, cfg.p_ul_max, cfg.n_ues)


def play_step(env, weights, allocate, power_control, step=0):
    """Run one DL+UL iteration and score it.

    ``allocate(s_d)`` returns (alloc, log-prob) and ``power_control(s_u)``
    returns (powers, log-prob, raw action). The UL reward is computed first
    because the DL reward embeds it.
    """
    dl_state = env.dl_observation()
    alloc, dl_logp = allocate(dl_state)
    dl_outcome = env.step_downlink(alloc)
    ul_state = env.ul_observation()
    powers, ul_logp, raw = power_control(ul_state)
    ul_outcome, done = env.step_uplink(powers)
    depleted = env.world.depleted
    r_u = uplink_reward(ul_outcome, env.ledger, weights, depleted)
    r_d = downlink_reward(dl_outcome, env.ledger, weights, depleted, ul_reward=r_u)
    r_c = common_reward(dl_outcome, ul_outcome, env.ledger, weights, depleted)
    env.ledger.record_rewards(r_d, r_u)
    return Transition(
        dl_state=dl_state, alloc=np.asarray(alloc), dl_logp=dl_logp, dl_reward=r_d,
        ul_state=ul_state, ul_raw=np.asarray(raw, dtype=float), ul_powers=np.asarray(powers),
        ul_logp=ul_logp, ul_reward=r_u, common_reward=r_c,
        dl_next=env.dl_observation(), ul_next=env.ul_observation(),
        done=bool(done), step=step,
    )


def run_episodes(env, weights, episodes, allocate, power_control):
    records = []
    step = 0
    env.reset()
    while len(records) < episodes:
        step += 1
        transition = play_step(env, weights, allocate, power_control, step)
        if transition.done:
            records.append(metrics_from_ledger(env.ledger, weights, len(records) + 1, step))
            if len(records) < episodes:
                env.reset()
    return records


class PolicyTrainer:
    algorithm = None

    def __init__(self, net_cfg, train_cfg, log=None, trace=None):
        self.net_cfg = net_cfg
        self.train_cfg = train_cfg
        self.config_text = dump_config(net_cfg, train_cfg)
        root = RngStream(train_cfg.seed)
        init_rng = fork_stream(root, 'init')
        self.policy_rng = fork_stream(root, 'policy')
        self.batch_rng = fork_stream(root, 'minibatch')
        self.env = MecEnvironment(net_cfg, fork_stream(root, 'env'), trace=trace)
        self.weights = RewardWeights.from_config(net_cfg)

        hidden = tuple(train_cfg.hidden_sizes)
        self.dl_actor = DlActor(net_cfg.dl_state_dim, net_cfg.n_ues, net_cfg.m_mbs, hidden, init_rng)
        self.ul_actor = UlActor(net_cfg.ul_state_dim, net_cfg.n_ues, hidden, init_rng,
                                logstd_init=train_cfg.gaussian_logstd_init)
        self.dl_optimizer = AdamOptimizer(self.dl_actor.parameters(), train_cfg.lr_actor)
        self.ul_optimizer = AdamOptimizer(self.ul_actor.parameters(), train_cfg.lr_actor)
        self.build_critics(init_rng)

        self.log = log if log is not None else TrainingLog()
        self.global_step = 0
        self.rounds = 0
        self.syncs = 0
        self.checkpoint_dir = None
        self._warned_reward_floor = False

    def build_critics(self, rng):
        raise NotImplementedError

    def critics(self):
        raise NotImplementedError

    def advantages(self, batch):
        """Return (DL advantages, UL advantages, critic value targets)"""
        raise NotImplementedError

    def update_critics(self, batch, targets, idx):
        raise NotImplementedError

    def networks(self):
        return {'dl_actor': self.dl_actor, 'ul_actor': self.ul_actor, **self.critics()}

    def save_checkpoint(self, path):
        return save_checkpoint(path, self.networks(), self.config_text, self.algorithm)

    def _gae(self, critic, head, rewards, states, next_states, dones):
        values = critic.values(states, head, use_target=True)
        next_values = critic.values(next_states, head, use_target=True)
        return compute_gae(rewards, values, next_values, dones,
                           self.train_cfg.gamma, self.train_cfg.lambda_gae)

    def _allocate(self, state):
        alloc, logp, _ = dl_policy_sample(self.dl_actor, state, self.policy_rng)
        return alloc, logp

    def _power_control(self, state):
        return ul_policy_sample(self.ul_actor, state, self.policy_rng, self.net_cfg.p_ul_min, self.net_cfg.p_ul_max)

    def rollout_step(self):
        self.global_step += 1
        transition = play_step(self.env, self.weights, self._allocate, self._power_control, self.global_step)
        penalty = self.weights.penalty
        if (not self.env.world.depleted and not self._warned_reward_floor
                and min(transition.dl_reward, transition.ul_reward) < penalty):
            logger.warning(
                f"Step {self.global_step}: non-penalty reward below the depletion penalty {penalty:g}"
            )
            self._warned_reward_floor = True
        if transition.done:
            metrics = metrics_from_ledger(self.env.ledger, self.weights, len(self.log.episodes) + 1,
                                          self.global_step)
            self.log.append_episode(metrics)
            logger.debug(f"Episode {metrics.episode}: reward {metrics.reward_sum:.3f}, "
                         f"steps {metrics.steps_survived}")
            self.env.reset()
        return transition

    def train(self):
        started = time.monotonic()
        cfg = self.train_cfg
        logger.info(f"Training {self.algorithm} for {cfg.total_steps} steps (seed {cfg.seed})")
        buffer = TrajectoryBuffer(cfg.horizon)
        self.env.reset()
        try:
            while self.global_step < cfg.total_steps:
                buffer.add(self.rollout_step())
                if buffer.full or self.global_step == cfg.total_steps:
                    self.update(buffer)
                    buffer.clear()
        finally:
            self.log.wall_clock = time.monotonic() - started
        logger.info(f"Finished {self.algorithm}: {self.rounds} update rounds, {self.syncs} target syncs, "
                    f"{len(self.log.episodes)} episodes in {self.log.wall_clock:.1f}s")
        return self.log

    def update(self, buffer):
        try:
            self._update(buffer)
        except TrainingAborted as exc:
            path = None
            if self.checkpoint_dir is not None:
                path = self.save_checkpoint(os.path.join(self.checkpoint_dir, "diagnostic.npz"))
            logger.error(f"Update round {self.rounds + 1} aborted at step {self.global_step}: {exc}")
            raise TrainingAborted(str(exc), checkpoint_path=path) from exc

    def _update(self, buffer):
        cfg = self.train_cfg
        batch = buffer.as_arrays()
        adv_dl, adv_ul, targets = self.advantages(batch)
        if cfg.normalize_advantages:
            adv_dl = normalize_advantages(adv_dl)
            adv_ul = normalize_advantages(adv_ul)

        size = len(buffer)
        group = max(1, min(cfg.group_size, size))
        totals = {'actor_dl': 0.0, 'actor_ul': 0.0}
        critic_totals = {}
        minibatches = 0
        for _ in range(cfg.epochs):
            order = self.batch_rng.permutation(size)
            for start in range(0, size, group):
                idx = order[start:start + group]
                totals['actor_dl'] += ppo_actor_update(
                    self.dl_actor, batch['dl_state'][idx], batch['alloc'][idx], batch['dl_logp'][idx],
                    adv_dl[idx], cfg.clip_eps, self.dl_optimizer,
                )
                totals['actor_ul'] += ppo_actor_update(
                    self.ul_actor, batch['ul_state'][idx], batch['ul_raw'][idx], batch['ul_logp'][idx],
                    adv_ul[idx], cfg.clip_eps, self.ul_optimizer,
                )
                for key, value in self.update_critics(batch, targets, idx).items():
                    if value is not None:
                        critic_totals[key] = critic_totals.get(key, 0.0) + value
                    else:
                        critic_totals.setdefault(key, None)
                minibatches += 1

        self.rounds += 1
        synced = self.rounds % cfg.target_sync_interval == 0
        if synced:
            for critic in self.critics().values():
                sync_target(critic)
            self.syncs += 1

        record = {'round': self.rounds, 'step': self.global_step, 'batch': size, 'synced': synced}
        for key, value in {**totals, **critic_totals}.items():
            record[key] = None if value is None else value / max(minibatches, 1)
        self.log.append_update(record)
        logger.info(f"Round {self.rounds} at step {self.global_step}: actor_dl {record['actor_dl']:.4f}, "
                    f"actor_ul {record['actor_ul']:.4f}, critic {record['critic']:.4f}")


class MalsTrainer(PolicyTrainer):
    algorithm = 'mals'

    def build_critics(self, rng):
        dims = {'dl': self.net_cfg.dl_state_dim, 'ul': self.net_cfg.ul_state_dim}
        self.critic = CriticNetwork(dims, tuple(self.train_cfg.hidden_sizes), rng)
        self.critic_optimizer = AdamOptimizer(self.critic.parameters(), self.train_cfg.lr_critic)

    def critics(self):
        return {'critic': self.critic}

    def advantages(self, batch):
        adv_dl, target_dl = self._gae(self.critic, 'dl', batch['dl_reward'], batch['dl_state'],
                                      batch['dl_next'], batch['done'])
        adv_ul, target_ul = self._gae(self.critic, 'ul', batch['ul_reward'], batch['ul_state'],
                                      batch['ul_next'], batch['done'])
        return adv_dl, adv_ul, {'dl': target_dl, 'ul': target_ul}

    def update_critics(self, batch, targets, idx):
        loss_ul, loss_dl, loss = mals_critic_update(
            self.critic,
            (batch['dl_state'][idx], targets['dl'][idx]),
            (batch['ul_state'][idx], targets['ul'][idx]),
            self.net_cfg.kappa1, self.net_cfg.kappa2, self.critic_optimizer,
        )
        return {'critic_dl': loss_dl, 'critic_ul': loss_ul, 'critic': loss}


class IdaTrainer(PolicyTrainer):
    algorithm = 'ida'

    def build_critics(self, rng):
        hidden = tuple(self.train_cfg.hidden_sizes)
        self.dl_critic = CriticNetwork({'dl': self.net_cfg.dl_state_dim}, hidden, rng)
        self.ul_critic = CriticNetwork({'ul': self.net_cfg.ul_state_dim}, hidden, rng)
        self.dl_critic_optimizer = AdamOptimizer(self.dl_critic.parameters(), self.train_cfg.lr_critic)
        self.ul_critic_optimizer = AdamOptimizer(self.ul_critic.parameters(), self.train_cfg.lr_critic)

    def critics(self):
        return {'dl_critic': self.dl_critic, 'ul_critic': self.ul_critic}

    def advantages(self, batch):
        adv_dl, target_dl = self._gae(self.dl_critic, 'dl', batch['dl_reward'], batch['dl_state'],
                                      batch['dl_next'], batch['done'])
        adv_ul, target_ul = self._gae(self.ul_critic, 'ul', batch['ul_reward'], batch['ul_state'],
                                      batch['ul_next'], batch['done'])
        return adv_dl, adv_ul, {'dl': target_dl, 'ul': target_ul}

    def update_critics(self, batch, targets, idx):
        losses_dl, _ = critic_update(self.dl_critic, {'dl': (batch['dl_state'][idx], targets['dl'][idx])},
                                     {'dl': 1.0}, self.dl_critic_optimizer)
        losses_ul, _ = critic_update(self.ul_critic, {'ul': (batch['ul_state'][idx], targets['ul'][idx])},
                                     {'ul': 1.0}, self.ul_critic_optimizer)
        return {'critic_dl': losses_dl['dl'], 'critic_ul': losses_ul['ul'],
                'critic': losses_dl['dl'] + losses_ul['ul']}


class CtdeTrainer(PolicyTrainer):
    algorithm = 'ctde'

    def build_critics(self, rng):
        joint = self.net_cfg.dl_state_dim + self.net_cfg.ul_state_dim
        self.critic = CriticNetwork({'joint': joint}, tuple(self.train_cfg.hidden_sizes), rng)
        self.critic_optimizer = AdamOptimizer(self.critic.parameters(), self.train_cfg.lr_critic)

    def critics(self):
        return {'critic': self.critic}

    @staticmethod
    def joint_states(batch):
        return np.hstack([batch['dl_state'], batch['ul_state']]), np.hstack([batch['dl_next'], batch['ul_next']])

    def advantages(self, batch):
        states, next_states = self.joint_states(batch)
        adv, target = self._gae(self.critic, 'joint', batch['common_reward'], states, next_states, batch['done'])
        return adv, adv.copy(), {'joint': target, 'states': states}

    def update_critics(self, batch, targets, idx):
        losses, total = critic_update(self.critic, {'joint': (targets['states'][idx], targets['joint'][idx])},
                                      {'joint': 1.0}, self.critic_optimizer)
        return {'critic_dl': None, 'critic_ul': None, 'critic': total}


TRAINERS = {cls.algorithm: cls for cls in (MalsTrainer, IdaTrainer, CtdeTrainer)}


def train(algorithm, net_cfg, train_cfg, log=None, trace=None, checkpoint_path=None, checkpoint_dir=None):
    """Train one run; the final checkpoint is written even when total_steps is 0"""
    trainer = TRAINERS[algorithm](net_cfg, train_cfg, log=log, trace=trace)
    trainer.checkpoint_dir = checkpoint_dir
    log = trainer.train()
    if checkpoint_path is not None:
        log.checkpoint_path = trainer.save_checkpoint(checkpoint_path)
    return log


def train_mals(net_cfg, train_cfg, **kwargs):
    return train('mals', net_cfg, train_cfg, **kwargs)


def train_ida(net_cfg, train_cfg, **kwargs):
    return train('ida', net_cfg, train_cfg, **kwargs)


def train_ctde(net_cfg, train_cfg, **kwargs):
    return train('ctde', net_cfg, train_cfg, **kwargs)


def run_random(net_cfg, episodes, seed, trace=None):
    """Uniform allocation and uniform UL power, no learning"""
    root = RngStream(seed)
    env = MecEnvironment(net_cfg, fork_stream(root, 'env'), trace=trace)
    rng = fork_stream(root, 'policy')
    weights = RewardWeights.from_config(net_cfg)

    def allocate(state):
        return random_allocation(net_cfg, rng), 0.0

    def power_control(state):
        powers = random_powers(net_cfg, rng)
        return powers, 0.0, (powers - net_cfg.p_ul_min) / (net_cfg.p_ul_max - net_cfg.p_ul_min)

    return run_episodes(env, weights, episodes, allocate, power_control)


def load_actors(checkpoint_path):
    """Rebuild both actors from a checkpoint; returns (algorithm, net_cfg, train_cfg, dl_actor, ul_actor)"""
    algorithm, config_text, networks = load_checkpoint(checkpoint_path)
    net_cfg, train_cfg = load_config(config_text)
    rng = RngStream(train_cfg.seed)
    hidden = tuple(train_cfg.hidden_sizes)
    dl_actor = DlActor(net_cfg.dl_state_dim, net_cfg.n_ues, net_cfg.m_mbs, hidden, rng)
    ul_actor = UlActor(net_cfg.ul_state_dim, net_cfg.n_ues, hidden, rng)
    dl_actor.load_state_dict(networks['dl_actor'])
    ul_actor.load_state_dict(networks['ul_actor'])
    return algorithm, net_cfg, train_cfg, dl_actor, ul_actor


def evaluate_policy(checkpoint_path, episodes, seed, trace=None):
    """Greedy rollouts (argmax allocation, mean UL power) of a saved policy"""
    _, net_cfg, _, dl_actor, ul_actor = load_actors(checkpoint_path)
    root = RngStream(seed)
    env = MecEnvironment(net_cfg, fork_stream(root, 'env'), trace=trace)
    weights = RewardWeights.from_config(net_cfg)

    def allocate(state):
        alloc, logp, _ = dl_actor.sample(state, None, greedy=True)
        return alloc, logp

    def power_control(state):
        return ul_actor.sample(state, None, net_cfg.p_ul_min, net_cfg.p_ul_max, greedy=True)

    return run_episodes(env, weights, episodes, allocate, power_control)
