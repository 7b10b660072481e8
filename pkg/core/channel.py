"""Rician small-scale fading over distance-based path loss.

Gains are regenerated once per DL+UL iteration and shared by both phases
(equal UL/DL channel conditions). Each MBS serves on its own channel, so only
the (UE, MBS) entry matters for a UE assigned to that MBS.
"""
from dataclasses import dataclass

import numpy as np

# LOS component, unit-power constant
LOS_COMPONENT = 1.0 + 0.0j
# Reference distance L0 in meters; shorter distances are clamped to it
REFERENCE_DISTANCE = 1.0


@dataclass(frozen=True)
class Position:
    x: float
    y: float


@dataclass
class GainMatrix:
    gains: np.ndarray  # complex, shape (N, M)
    step: int

    @property
    def power(self):
        """|g|^2 per entry"""
        return np.abs(self.gains) ** 2


def distance(ue, mbs):
    return float(np.hypot(ue.x - mbs.x, ue.y - mbs.y))


def large_scale_gain(dist, beta0, alpha):
    """beta = beta0 * dist^(-alpha), with dist clamped to the 1 m reference"""
    return beta0 * np.power(np.maximum(dist, REFERENCE_DISTANCE), -alpha)


def rician_sample(rng, k_factor, size=None):
    """Draw zeta = sqrt(K/(K+1)) * LOS + sqrt(1/(K+1)) * CN(0, 1)"""
    if np.isinf(k_factor):
        los, nlos = 1.0, 0.0
    else:
        los = np.sqrt(k_factor / (k_factor + 1.0))
        nlos = np.sqrt(1.0 / (k_factor + 1.0))
    scatter = rng.standard_complex_normal(size)
    return los * LOS_COMPONENT + nlos * scatter


def channel_gain(beta, zeta):
    return np.sqrt(beta) * zeta


def distance_matrix(ue_xy, mbs_xy):
    """Pairwise UE-MBS distances for (N, 2) and (M, 2) coordinate arrays"""
    delta = ue_xy[:, None, :] - mbs_xy[None, :, :]
    return np.hypot(delta[..., 0], delta[..., 1])


def gain_matrix(ue_xy, mbs_xy, cfg, rng, step=1):
    """Fresh N x M complex gains for one iteration.

    Entry (i, v) equals ``channel_gain(large_scale_gain(distance(i, v)), zeta[i, v])``
    where ``zeta`` is a single ``rician_sample`` draw of shape (N, M).
    """
    ue_xy = np.asarray(ue_xy, dtype=float)
    mbs_xy = np.asarray(mbs_xy, dtype=float)
    beta = large_scale_gain(distance_matrix(ue_xy, mbs_xy), cfg.beta0, cfg.pathloss_alpha)
    zeta = rician_sample(rng, cfg.rician_k, size=beta.shape)
    return GainMatrix(gains=channel_gain(beta, zeta), step=step)
