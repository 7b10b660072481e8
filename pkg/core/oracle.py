"""Exhaustive search over UE-MBS allocations for tiny instances.

Only usable as a test and evaluation oracle: the table has M^N rows.
"""
import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .environment import downlink_latency, downlink_rates
from .exceptions import OracleSizeError
from .rewards import earning_potential

logger = logging.getLogger(__name__)

MAX_ALLOCATIONS = 4096


@dataclass
class OracleResult:
    best_alloc: tuple
    best_utility: float
    table: list  # (alloc, utility) in lexicographic allocation order


def single_step_dl_utility(world, cfg, weights, alloc):
    """q * mean DL latency - (1 - q) * b * min earning for one iteration from ``world``"""
    alloc = np.asarray(alloc, dtype=int)
    rates = downlink_rates(world.gains.gains, alloc, world.dl_powers, cfg.bandwidth_hz, cfg.noise_psd_dl)
    latencies = downlink_latency(world.dl_sizes, rates)
    earnings = earning_potential(rates, cfg.profitability)
    total_latency = float(np.sum(latencies))
    return weights.q * total_latency / world.n_ues - (1.0 - weights.q) * weights.b * float(np.min(earnings))


def brute_force_allocation_oracle(world, cfg, weights):
    """Evaluate every allocation of the world's current iteration and return the argmin.

    UL powers do not enter the DL utility, so the world's UL state is ignored.
    """
    n_alloc = cfg.m_mbs ** world.n_ues
    if n_alloc > MAX_ALLOCATIONS:
        raise OracleSizeError(
            f"{cfg.m_mbs}^{world.n_ues} = {n_alloc} allocations exceeds the oracle bound {MAX_ALLOCATIONS}"
        )
    table = []
    for alloc in itertools.product(range(1, cfg.m_mbs + 1), repeat=world.n_ues):
        table.append((alloc, single_step_dl_utility(world, cfg, weights, alloc)))
    best_alloc, best_utility = min(table, key=lambda row: row[1])
    logger.debug(f"Oracle searched {n_alloc} allocations; best {best_alloc} -> {best_utility:.6g}")
    return OracleResult(best_alloc=best_alloc, best_utility=best_utility, table=table)
