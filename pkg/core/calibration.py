"""Calibration survey of a scenario's link budget and battery sizing.

Rolls out a few fixed, non-learning policies and reports the link budget
(median DL SNR over every UE-MBS pair), the latency scale, how many episodes
reach the horizon without a battery depleting, and the lowest non-penalty
reward seen. ``CalibrationReport.failures()`` lists every target the scenario
misses; the ``calibrate`` command exits non-zero when it is not empty.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .environment import MecEnvironment
from .exceptions import ConfigError
from .rewards import RewardWeights
from .rng import RngStream, fork_stream
from .trainers import play_step, random_allocation, random_powers

logger = logging.getLogger(__name__)

SNR_TARGET_DB = (0.0, 20.0)
DL_LATENCY_TARGET_S = (0.01, 10.0)
SURVIVAL_TARGET = 0.9
SURVEY_POLICIES = ('random', 'min_power', 'max_power')


def link_snr_db(world, cfg):
    """DL SNR in dB of every (UE, MBS) pair at the UE's current DL power, interference ignored"""
    noise = cfg.bandwidth_hz * cfg.noise_psd_dl
    snr = world.dl_powers[:, None] * world.gains.power / noise
    return 10.0 * np.log10(snr)


def survey_policy(name, cfg, rng):
    """(allocate, power_control) callables for one survey policy; allocations are always uniform"""
    def allocate(state):
        return random_allocation(cfg, rng), 0.0

    def fixed(power):
        def power_control(state):
            powers = np.full(cfg.n_ues, float(power))
            return powers, 0.0, (powers - cfg.p_ul_min) / (cfg.p_ul_max - cfg.p_ul_min)
        return power_control

    def uniform(state):
        powers = random_powers(cfg, rng)
        return powers, 0.0, (powers - cfg.p_ul_min) / (cfg.p_ul_max - cfg.p_ul_min)

    if name == 'random':
        return allocate, uniform
    if name == 'min_power':
        return allocate, fixed(cfg.p_ul_min)
    if name == 'max_power':
        return allocate, fixed(cfg.p_ul_max)
    raise ConfigError(f"unknown survey policy {name!r}; expected one of {SURVEY_POLICIES}")


@dataclass(frozen=True)
class PolicySurvival:
    policy: str
    episodes: int
    reached_horizon: int
    depleted: int
    mean_steps: float
    max_battery_used: float  # percent of Bat0, worst UE over all episodes
    reward_floor: float  # lowest non-penalty DL or UL reward

    @property
    def survival_rate(self):
        return self.reached_horizon / self.episodes if self.episodes else 0.0


@dataclass
class CalibrationReport:
    median_dl_snr_db: float
    dl_latency_median: float
    ul_latency_median: float
    dl_latency_p95: float
    ul_energy_median: float
    penalty: float
    policies: dict = field(default_factory=dict)

    @property
    def reward_floor(self):
        return min(p.reward_floor for p in self.policies.values())

    @property
    def penalty_dominated(self):
        return self.penalty < self.reward_floor

    def failures(self, survival_target=SURVIVAL_TARGET):
        found = []
        low, high = SNR_TARGET_DB
        if not low <= self.median_dl_snr_db <= high:
            found.append(f"median DL SNR {self.median_dl_snr_db:.2f} dB outside [{low:g}, {high:g}] dB")
        low, high = DL_LATENCY_TARGET_S
        if not low <= self.dl_latency_median <= high:
            found.append(f"median DL latency {self.dl_latency_median:.4g} s outside [{low:g}, {high:g}] s")
        moderate = self.policies.get('min_power')
        if moderate is not None and moderate.survival_rate < survival_target:
            found.append(
                f"min-power policy reached the horizon in {moderate.reached_horizon}/{moderate.episodes} episodes"
            )
        if not self.penalty_dominated:
            found.append(f"non-penalty reward {self.reward_floor:.4f} is not above the penalty {self.penalty:g}")
        return found


def calibrate(cfg, episodes=20, seed=0, policies=SURVEY_POLICIES):
    """Survey ``episodes`` episodes per policy, all policies on the same MBS layout"""
    weights = RewardWeights.from_config(cfg)
    snr, dl_latencies, ul_latencies, energies = [], [], [], []
    survival = {}
    for name in policies:
        root = RngStream(seed)
        env = MecEnvironment(cfg, fork_stream(root, 'env'))
        allocate, power_control = survey_policy(name, cfg, fork_stream(root, f'survey:{name}'))
        reached = depleted = steps = 0
        worst_used, floor = 0.0, np.inf
        for _ in range(episodes):
            env.reset()
            while True:
                if name == policies[0]:
                    snr.append(link_snr_db(env.world, cfg).ravel())
                transition = play_step(env, weights, allocate, power_control)
                if not env.world.depleted:
                    floor = min(floor, transition.dl_reward, transition.ul_reward)
                if transition.done:
                    break
            ledger = env.ledger
            steps += ledger.ul_steps
            depleted += int(ledger.depleted)
            reached += int(not ledger.depleted and ledger.ul_steps == cfg.t_steps)
            worst_used = max(worst_used, ledger.max_cum_q())
            dl_latencies.append(np.concatenate(ledger.dl_latencies))
            ul_latencies.append(np.concatenate(ledger.ul_latencies))
            energies.append(np.concatenate(ledger.energies))
        survival[name] = PolicySurvival(
            policy=name,
            episodes=episodes,
            reached_horizon=reached,
            depleted=depleted,
            mean_steps=steps / episodes if episodes else 0.0,
            max_battery_used=float(worst_used),
            reward_floor=float(floor),
        )
        logger.info(f"Calibration {name}: {reached}/{episodes} episodes reached step {cfg.t_steps}, "
                    f"{depleted} depleted, reward floor {floor:.4f}")

    dl = np.concatenate(dl_latencies)
    return CalibrationReport(
        median_dl_snr_db=float(np.median(np.concatenate(snr))),
        dl_latency_median=float(np.median(dl)),
        ul_latency_median=float(np.median(np.concatenate(ul_latencies))),
        dl_latency_p95=float(np.percentile(dl, 95)),
        ul_energy_median=float(np.median(np.concatenate(energies))),
        penalty=cfg.penalty,
        policies=survival,
    )
