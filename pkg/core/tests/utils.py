import dataclasses

import numpy as np

from core.config import NetworkConfig, TrainConfig


def tiny_network(**overrides):
    values = dict(n_ues=2, m_mbs=2, t_steps=5)
    values.update(overrides)
    return dataclasses.replace(NetworkConfig(), **values)


def tiny_train(**overrides):
    values = dict(total_steps=40, horizon=20, epochs=2, group_size=8, hidden_sizes=(8, 8), seed=0)
    values.update(overrides)
    return dataclasses.replace(TrainConfig(), **values)


def numeric_gradients(loss, arrays, eps=1e-5):
    """Central finite differences of ``loss()`` w.r.t. every entry of every array (modified in place)"""
    grads = []
    for array in arrays:
        grad = np.zeros_like(array)
        for index in np.ndindex(array.shape):
            saved = array[index]
            array[index] = saved + eps
            plus = loss()
            array[index] = saved - eps
            minus = loss()
            array[index] = saved
            grad[index] = (plus - minus) / (2.0 * eps)
        grads.append(grad)
    return grads


def max_relative_error(analytic, numeric, floor=1e-5):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = np.maximum(np.abs(a) + np.abs(n), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / scale)))
    return worst
