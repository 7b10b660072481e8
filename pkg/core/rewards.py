"""Earning potential, per-step DL/UL rewards and episode-level utilities.

The ledger keeps the raw per-step, per-UE quantities; cumulative sums are
maintained incrementally and can always be recomputed from the raw entries.
Utilities are values to be minimised; rewards are values to be maximised.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import LedgerMismatchError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardWeights:
    q: float
    h: float
    b: float
    f: float
    P: float
    w1: float
    w2: float
    varkappa: float
    penalty: float
    literal_ul: bool = False

    @classmethod
    def from_config(cls, cfg):
        return cls(
            q=cfg.weight_q,
            h=cfg.weight_h,
            b=cfg.scale_b,
            f=cfg.scale_f,
            P=cfg.profitability,
            w1=cfg.weight_w1,
            w2=cfg.weight_w2,
            varkappa=cfg.varkappa,
            penalty=cfg.penalty,
            literal_ul=cfg.literal_ul_reward,
        )


def earning_potential(rate, P):
    """omega(r) = P * ln(1 + r)"""
    return P * np.log1p(rate)


class EpisodeLedger:
    """Per-step, per-UE record of one episode"""

    def __init__(self, n_ues):
        self.n_ues = n_ues
        self.dl_latencies = []
        self.earnings = []
        self.ul_latencies = []
        self.energies = []
        self.q_fractions = []
        self.cum_earning = np.zeros(n_ues)
        self.cum_q = np.zeros(n_ues)
        self.dl_rewards = []
        self.ul_rewards = []
        self.depleted = False

    @property
    def dl_steps(self):
        return len(self.dl_latencies)

    @property
    def ul_steps(self):
        return len(self.ul_latencies)

    def record_downlink(self, outcome):
        if self.dl_steps != self.ul_steps:
            raise LedgerMismatchError(f"downlink step {self.dl_steps + 1} recorded before uplink step {self.dl_steps}")
        self.dl_latencies.append(np.array(outcome.latencies, dtype=float))
        self.earnings.append(np.array(outcome.earnings, dtype=float))
        self.cum_earning = self.cum_earning + outcome.earnings

    def record_uplink(self, outcome, depleted=False):
        if self.ul_steps + 1 != self.dl_steps:
            raise LedgerMismatchError(f"uplink step {self.ul_steps + 1} has no matching downlink step")
        self.ul_latencies.append(np.array(outcome.latencies, dtype=float))
        self.energies.append(np.array(outcome.energies, dtype=float))
        self.q_fractions.append(np.array(outcome.q_fractions, dtype=float))
        self.cum_q = self.cum_q + outcome.q_fractions
        self.depleted = self.depleted or bool(depleted)

    def record_rewards(self, dl_reward, ul_reward):
        self.dl_rewards.append(float(dl_reward))
        self.ul_rewards.append(float(ul_reward))

    def min_cum_earning(self):
        return float(np.min(self.cum_earning))

    def max_cum_q(self):
        return float(np.max(self.cum_q))


def _check_latest(entries, latencies, what):
    if not entries or not np.array_equal(entries[-1], latencies):
        raise LedgerMismatchError(f"{what} outcome is not the latest step recorded in the ledger")


def uplink_reward(ul_outcome, ledger, weights, depleted=False):
    """UL agent reward for the step just recorded.

    Default mode penalises the worst-case cumulative battery percentage; the
    literal mode adds ``(1 - h) * f * min_i sum Q`` instead.
    """
    _check_latest(ledger.ul_latencies, ul_outcome.latencies, 'uplink')
    if depleted:
        return weights.penalty
    latency_term = -weights.h * float(np.sum(ul_outcome.latencies)) / ledger.n_ues
    if weights.literal_ul:
        return latency_term + (1.0 - weights.h) * weights.f * float(np.min(ledger.cum_q))
    return latency_term - (1.0 - weights.h) * weights.f * float(np.max(ledger.cum_q))


def downlink_reward(dl_outcome, ledger, weights, depleted=False, ul_reward=0.0):
    """DL agent reward; finalized after the UL phase since it embeds varkappa * R^u"""
    _check_latest(ledger.dl_latencies, dl_outcome.latencies, 'downlink')
    if ledger.ul_steps != ledger.dl_steps:
        raise LedgerMismatchError("downlink reward needs the uplink phase of the same step")
    if depleted:
        return weights.penalty
    latency_term = -weights.q * float(np.sum(dl_outcome.latencies)) / ledger.n_ues
    earning_term = (1.0 - weights.q) * weights.b * float(np.min(ledger.cum_earning))
    return latency_term + earning_term + weights.varkappa * ul_reward


def common_reward(dl_outcome, ul_outcome, ledger, weights, depleted=False):
    """Single shared reward: the negated per-step share of the overall objective"""
    _check_latest(ledger.dl_latencies, dl_outcome.latencies, 'downlink')
    _check_latest(ledger.ul_latencies, ul_outcome.latencies, 'uplink')
    if depleted:
        return weights.penalty
    n = ledger.n_ues
    dl_part = (
        weights.q * float(np.sum(dl_outcome.latencies)) / n
        - (1.0 - weights.q) * weights.b * float(np.min(ledger.cum_earning))
    )
    ul_part = (
        weights.h * float(np.sum(ul_outcome.latencies)) / n
        + (1.0 - weights.h) * weights.f * float(np.max(ledger.cum_q))
    )
    return -(weights.w1 * dl_part + weights.w2 * ul_part)


def episode_dl_utility(ledger, weights):
    total_latency = float(np.sum(ledger.dl_latencies)) if ledger.dl_latencies else 0.0
    earnings = np.sum(ledger.earnings, axis=0) if ledger.earnings else np.zeros(ledger.n_ues)
    return weights.q * total_latency / ledger.n_ues - (1.0 - weights.q) * weights.b * float(np.min(earnings))


def episode_ul_utility(ledger, weights):
    total_latency = float(np.sum(ledger.ul_latencies)) if ledger.ul_latencies else 0.0
    q_totals = np.sum(ledger.q_fractions, axis=0) if ledger.q_fractions else np.zeros(ledger.n_ues)
    return weights.h * total_latency / ledger.n_ues + (1.0 - weights.h) * weights.f * float(np.max(q_totals))


def overall_objective(ledger, weights):
    return weights.w1 * episode_dl_utility(ledger, weights) + weights.w2 * episode_ul_utility(ledger, weights)
