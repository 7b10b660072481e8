"""Episodic play-to-earn MEC environment.

One iteration is a DL phase (UE-MBS allocation, NOMA downlink) followed by a
UL phase (per-UE transmit power, NOMA uplink). Mobility and fresh iteration
inputs are applied after the UL phase. MBS indices in allocations are 1-based.
"""
import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import GainMatrix, Position, gain_matrix
from .exceptions import InvalidActionError, MecError, ZeroRateError
from .rewards import EpisodeLedger, earning_potential
from .rng import RngStream, fork_stream

logger = logging.getLogger(__name__)


@dataclass
class EnvStreams:
    placement: RngStream
    mobility: RngStream
    data: RngStream
    channel: RngStream

    @classmethod
    def from_rng(cls, rng):
        return cls(
            placement=fork_stream(rng, 'placement'),
            mobility=fork_stream(rng, 'mobility'),
            data=fork_stream(rng, 'data'),
            channel=fork_stream(rng, 'channel'),
        )


@dataclass
class WorldState:
    step: int
    ue_xy: np.ndarray
    mbs_xy: np.ndarray
    gains: GainMatrix
    dl_sizes: np.ndarray
    ul_sizes: np.ndarray
    dl_powers: np.ndarray
    battery: np.ndarray
    battery_init: float
    cum_energy: np.ndarray
    cum_q: np.ndarray
    cum_earning: np.ndarray
    alloc: np.ndarray = None
    downlink_done: bool = False
    done: bool = False
    depleted: bool = False

    @property
    def n_ues(self):
        return self.ue_xy.shape[0]

    @property
    def ue_positions(self):
        return [Position(float(x), float(y)) for x, y in self.ue_xy]

    @property
    def mbs_positions(self):
        return [Position(float(x), float(y)) for x, y in self.mbs_xy]


@dataclass
class DlOutcome:
    rates: np.ndarray
    latencies: np.ndarray
    earnings: np.ndarray


@dataclass
class UlOutcome:
    rates: np.ndarray
    latencies: np.ndarray
    energies: np.ndarray
    q_fractions: np.ndarray
    powers: np.ndarray = field(default=None)


def order_downlink(gains_to_mbs, noise_psd, ue_set):
    """SIC decoding order for one MBS: |g|^2 / sigma^2 descending, ties by UE index"""
    ratio = {i: abs(gains_to_mbs[i]) ** 2 / noise_psd for i in ue_set}
    return sorted(ue_set, key=lambda i: (-ratio[i], i))


def order_uplink(powers, gains_to_mbs, ue_set):
    """SIC decoding order for one MBS: received power p|g|^2 descending, ties by UE index"""
    received = {i: powers[i] * abs(gains_to_mbs[i]) ** 2 for i in ue_set}
    return sorted(ue_set, key=lambda i: (-received[i], i))


def _members(alloc, mbs_index):
    return [int(i) for i in np.flatnonzero(alloc == mbs_index + 1)]


def downlink_rates(gains, alloc, dl_powers, bandwidth, noise_psd):
    """Downlink rate of every UE given a 1-based allocation.

    A UE decodes after the UEs ordered before it on its MBS; their superposed
    power, seen through the UE's own channel, is its residual interference.
    """
    gain_power = np.abs(gains) ** 2
    rates = np.zeros(len(alloc))
    noise = bandwidth * noise_psd
    for v in range(gains.shape[1]):
        order = order_downlink(gains[:, v], noise_psd, _members(alloc, v))
        earlier_power = 0.0
        for i in order:
            interference = earlier_power * gain_power[i, v]
            rates[i] = bandwidth * np.log2(1.0 + dl_powers[i] * gain_power[i, v] / (interference + noise))
            earlier_power += dl_powers[i]
    return rates


def uplink_rates(gains, alloc, ul_powers, bandwidth, noise_psd):
    """Uplink rate of every UE; interference comes from later-ordered UEs of the same MBS"""
    gain_power = np.abs(gains) ** 2
    rates = np.zeros(len(alloc))
    noise = bandwidth * noise_psd
    for v in range(gains.shape[1]):
        order = order_uplink(ul_powers, gains[:, v], _members(alloc, v))
        received = [ul_powers[i] * gain_power[i, v] for i in order]
        for position, i in enumerate(order):
            interference = float(np.sum(received[position + 1:]))
            rates[i] = bandwidth * np.log2(1.0 + received[position] / (interference + noise))
    return rates


def downlink_rate(world, cfg, ue):
    rates = downlink_rates(world.gains.gains, world.alloc, world.dl_powers, cfg.bandwidth_hz, cfg.noise_psd_dl)
    return float(rates[ue])


def uplink_rate(world, cfg, ul_powers, ue):
    rates = uplink_rates(world.gains.gains, world.alloc, np.asarray(ul_powers, dtype=float),
                         cfg.bandwidth_hz, cfg.noise_psd_ul)
    return float(rates[ue])


def downlink_latency(size_bits, rate):
    """Transmission delay size / rate; also used for the uplink"""
    rate = np.asarray(rate, dtype=float)
    if np.any(rate <= 0):
        raise ZeroRateError("zero rate")
    latency = np.asarray(size_bits, dtype=float) / rate
    return float(latency) if latency.ndim == 0 else latency


def uplink_energy_and_q(p_ul, latency, battery_init):
    """Energy E = p * latency and its share Q of the initial battery, in percent"""
    energy = np.asarray(p_ul, dtype=float) * np.asarray(latency, dtype=float)
    q = 100.0 * energy / battery_init
    if energy.ndim == 0:
        return float(energy), float(q)
    return energy, q


def apply_mobility(xy, displacement, cfg):
    """Move by ``displacement`` and clamp into [0, X_max] x [0, Y_max]"""
    moved = np.asarray(xy, dtype=float) + np.asarray(displacement, dtype=float)
    moved[..., 0] = np.clip(moved[..., 0], 0.0, cfg.area_x_max)
    moved[..., 1] = np.clip(moved[..., 1], 0.0, cfg.area_y_max)
    return moved


def sample_mobility(world, cfg, rng):
    """New UE positions after one random step per coordinate"""
    n = world.n_ues
    displacement = np.column_stack([
        rng.uniform(-cfg.step_x_max, cfg.step_x_max, n),
        rng.uniform(-cfg.step_y_max, cfg.step_y_max, n),
    ])
    return apply_mobility(world.ue_xy, displacement, cfg)


def sample_iteration_inputs(world, cfg, data_rng, channel_rng):
    """Draw (dl_sizes, ul_sizes, dl_powers, gains) for the world's current step"""
    n = world.n_ues
    dl_sizes = data_rng.uniform(cfg.dl_data_min, cfg.dl_data_max, n)
    ul_sizes = data_rng.uniform(cfg.ul_data_min, cfg.ul_data_max, n)
    dl_powers = data_rng.uniform(cfg.p_dl_min, cfg.p_dl_max, n)
    gains = gain_matrix(world.ue_xy, world.mbs_xy, cfg, channel_rng, step=world.step)
    return dl_sizes, ul_sizes, dl_powers, gains


def place_mbs(cfg, rng):
    return np.column_stack([
        rng.uniform(0.0, cfg.area_x_max, cfg.m_mbs),
        rng.uniform(0.0, cfg.area_y_max, cfg.m_mbs),
    ])


def init_world(cfg, streams, mbs_xy=None):
    """Fresh episode state: UEs uniform in the area, full batteries, step 1"""
    if isinstance(streams, RngStream):
        streams = EnvStreams.from_rng(streams)
    if mbs_xy is None:
        mbs_xy = place_mbs(cfg, streams.placement)
    n = cfg.n_ues
    ue_xy = np.column_stack([
        streams.placement.uniform(0.0, cfg.area_x_max, n),
        streams.placement.uniform(0.0, cfg.area_y_max, n),
    ])
    world = WorldState(
        step=1,
        ue_xy=ue_xy,
        mbs_xy=np.array(mbs_xy, dtype=float),
        gains=None,
        dl_sizes=None,
        ul_sizes=None,
        dl_powers=None,
        battery=np.full(n, float(cfg.battery_init)),
        battery_init=float(cfg.battery_init),
        cum_energy=np.zeros(n),
        cum_q=np.zeros(n),
        cum_earning=np.zeros(n),
    )
    world.dl_sizes, world.ul_sizes, world.dl_powers, world.gains = sample_iteration_inputs(
        world, cfg, streams.data, streams.channel
    )
    return world


def dl_observation(world, cfg):
    """|g| (row-major N x M, scaled by 1/sqrt(beta0)) then D_i / dl_data_max"""
    gains = np.abs(world.gains.gains).ravel() / np.sqrt(cfg.beta0)
    return np.concatenate([gains, world.dl_sizes / cfg.dl_data_max])


def ul_observation(world, cfg):
    """|g| (scaled by 1/sqrt(beta0)) then battery percentage / 100"""
    gains = np.abs(world.gains.gains).ravel() / np.sqrt(cfg.beta0)
    battery_pct = 100.0 * world.battery / world.battery_init
    return np.concatenate([gains, battery_pct / 100.0])


def validate_allocation(alloc, cfg):
    alloc = np.asarray(alloc)
    if alloc.shape != (cfg.n_ues,):
        raise InvalidActionError(f"allocation must have {cfg.n_ues} entries, got shape {alloc.shape}")
    if not np.issubdtype(alloc.dtype, np.integer):
        if not np.all(np.mod(alloc, 1) == 0):
            raise InvalidActionError(f"allocation entries must be integers, got {alloc.tolist()}")
        alloc = alloc.astype(int)
    bad = [int(a) for a in alloc if a < 1 or a > cfg.m_mbs]
    if bad:
        raise InvalidActionError(f"MBS index out of [1,{cfg.m_mbs}]: {bad}")
    return alloc.astype(int)


def validate_powers(ul_powers, cfg):
    powers = np.asarray(ul_powers, dtype=float)
    if powers.shape != (cfg.n_ues,):
        raise InvalidActionError(f"uplink powers must have {cfg.n_ues} entries, got shape {powers.shape}")
    if np.any(~np.isfinite(powers)) or np.any(powers < cfg.p_ul_min) or np.any(powers > cfg.p_ul_max):
        raise InvalidActionError(
            f"uplink power out of [{cfg.p_ul_min:g},{cfg.p_ul_max:g}] W: {powers.tolist()}"
        )
    return powers


def step_downlink(world, cfg, alloc):
    if world.done:
        raise MecError("episode is over; reset the environment")
    if world.downlink_done:
        raise MecError(f"downlink phase of step {world.step} already executed")
    world.alloc = validate_allocation(alloc, cfg)
    rates = downlink_rates(world.gains.gains, world.alloc, world.dl_powers, cfg.bandwidth_hz, cfg.noise_psd_dl)
    latencies = downlink_latency(world.dl_sizes, rates)
    earnings = earning_potential(rates, cfg.profitability)
    world.cum_earning = world.cum_earning + earnings
    world.downlink_done = True
    return DlOutcome(rates=rates, latencies=latencies, earnings=earnings)


def step_uplink(world, cfg, ul_powers, streams=None):
    """UL phase, battery accounting, termination, then mobility and fresh inputs.

    ``streams`` supplies the mobility, data and channel streams for the next
    iteration; without it (frozen worlds) the current inputs are kept.
    """
    if world.done:
        raise MecError("episode is over; reset the environment")
    if not world.downlink_done:
        raise MecError(f"uplink phase of step {world.step} requested before its downlink phase")
    powers = validate_powers(ul_powers, cfg)
    rates = uplink_rates(world.gains.gains, world.alloc, powers, cfg.bandwidth_hz, cfg.noise_psd_ul)
    latencies = downlink_latency(world.ul_sizes, rates)
    energies, q_fractions = uplink_energy_and_q(powers, latencies, world.battery_init)

    world.cum_energy = world.cum_energy + energies
    world.battery = world.battery_init - world.cum_energy
    world.cum_q = 100.0 * world.cum_energy / world.battery_init
    world.downlink_done = False

    if np.any(world.battery < 0):
        world.done = True
        world.depleted = True
    elif world.step >= cfg.t_steps:
        world.done = True
    else:
        world.step += 1
        if streams is not None:
            world.ue_xy = sample_mobility(world, cfg, streams.mobility)
            world.dl_sizes, world.ul_sizes, world.dl_powers, world.gains = sample_iteration_inputs(
                world, cfg, streams.data, streams.channel
            )
    outcome = UlOutcome(rates=rates, latencies=latencies, energies=energies,
                        q_fractions=q_fractions, powers=powers)
    return outcome, world.done


class MecEnvironment:
    """Owns the world, its random streams and the episode ledger.

    Args:
        cfg: NetworkConfig
        rng: root RngStream of the run
        trace: optional callable receiving one dict per DL and per UL phase
    """

    def __init__(self, cfg, rng, trace=None):
        self.cfg = cfg
        self.streams = EnvStreams.from_rng(rng)
        self.mbs_xy = place_mbs(cfg, self.streams.placement)
        self.trace = trace
        self.world = None
        self.ledger = None
        self.episode = 0
        self._snapshot = None

    def reset(self):
        if self.cfg.frozen_world and self._snapshot is not None:
            self.world = copy.deepcopy(self._snapshot)
        else:
            self.world = init_world(self.cfg, self.streams, mbs_xy=self.mbs_xy)
            if self.cfg.frozen_world:
                self._snapshot = copy.deepcopy(self.world)
        self.ledger = EpisodeLedger(self.cfg.n_ues)
        self.episode += 1
        return self.world

    def dl_observation(self):
        return dl_observation(self.world, self.cfg)

    def ul_observation(self):
        return ul_observation(self.world, self.cfg)

    def step_downlink(self, alloc):
        outcome = step_downlink(self.world, self.cfg, alloc)
        self.ledger.record_downlink(outcome)
        if self.trace is not None:
            self.trace({
                'episode': self.episode,
                'step': self.world.step,
                'phase': 'dl',
                'alloc': self.world.alloc.tolist(),
                'powers': self.world.dl_powers.tolist(),
                'gains': np.abs(self.world.gains.gains).tolist(),
                'rates': outcome.rates.tolist(),
                'latencies': outcome.latencies.tolist(),
                'earnings': outcome.earnings.tolist(),
            })
        return outcome

    def step_uplink(self, ul_powers):
        step = self.world.step
        streams = None if self.cfg.frozen_world else self.streams
        outcome, done = step_uplink(self.world, self.cfg, ul_powers, streams)
        self.ledger.record_uplink(outcome, self.world.depleted)
        if self.trace is not None:
            self.trace({
                'episode': self.episode,
                'step': step,
                'phase': 'ul',
                'powers': outcome.powers.tolist(),
                'rates': outcome.rates.tolist(),
                'latencies': outcome.latencies.tolist(),
                'energies': outcome.energies.tolist(),
                'batteries': self.world.battery.tolist(),
                'done': done,
                'depleted': self.world.depleted,
            })
        if done:
            logger.debug(f"Episode {self.episode} ended at step {step} (depleted={self.world.depleted})")
        return outcome, done
