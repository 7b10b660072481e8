"""Small numpy networks with exact backpropagation.

``MlpParams`` is a stack of affine layers, tanh between them and a chosen
activation on the output. Actors and critics are built from it and expose
``parameters()`` (live arrays, updated in place by ``adam_step``) plus
``state_dict()``/``load_state_dict()`` for checkpoints.
"""
import copy
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ShapeError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class MlpParams:
    weights: list
    biases: list
    output_activation: str = 'identity'

    @classmethod
    def init(cls, sizes, rng, output_activation='identity', output_scale=1.0):
        weights, biases = [], []
        for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = 1.0 / math.sqrt(fan_in)
            if layer == len(sizes) - 2:
                scale *= output_scale
            weights.append(rng.normal(0.0, 1.0, (fan_in, fan_out)) * scale)
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, output_activation)

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def arrays(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


@dataclass
class MlpCache:
    params: MlpParams
    inputs: list
    outputs: list
    squeeze: bool


def mlp_forward(params, x):
    """Return (output, cache); accepts a single vector or a (B, in) batch"""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[-1] != params.sizes[0]:
        raise ShapeError(f"input width {x.shape[-1]} does not match layer width {params.sizes[0]}")
    inputs, outputs = [], []
    h = x
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        if layer < last or params.output_activation == 'tanh':
            h = np.tanh(z)
        else:
            h = z
        outputs.append(h)
    cache = MlpCache(params, inputs, outputs, squeeze)
    return (h[0] if squeeze else h), cache


def mlp_backward(cache, grad_output):
    """Gradients of sum(output * grad_output) w.r.t. [W0, b0, ...] and the input"""
    params = cache.params
    g = np.asarray(grad_output, dtype=float)
    if cache.squeeze:
        g = g[None, :]
    if g.shape != cache.outputs[-1].shape:
        raise ShapeError(f"output gradient shape {g.shape} does not match cached output {cache.outputs[-1].shape}")
    last = len(params.weights) - 1
    grads = [None] * (2 * len(params.weights))
    for layer in range(last, -1, -1):
        if layer < last or params.output_activation == 'tanh':
            g = g * (1.0 - cache.outputs[layer] ** 2)
        grads[2 * layer] = cache.inputs[layer].T @ g
        grads[2 * layer + 1] = g.sum(axis=0)
        g = g @ params.weights[layer].T
    return grads, (g[0] if cache.squeeze else g)


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kwargs):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kwargs)


def adam_step(params, grads, state, lr):
    """Bias-corrected Adam descent step on a loss, applied in place"""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(f"{len(params)} parameters, {len(grads)} gradients, {len(state.m)} moment slots")
    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params


class AdamOptimizer:
    def __init__(self, params, lr):
        self.params = params
        self.lr = lr
        self.state = AdamState.for_params(params)

    def step(self, grads):
        adam_step(self.params, grads, self.state, self.lr)


def softmax_blocks(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def log_softmax_blocks(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def scale_power(raw, p_min, p_max):
    """Map a clamped [0, 1] action onto [p_min, p_max]"""
    clamped = np.clip(raw, 0.0, 1.0)
    return np.clip(p_min + clamped * (p_max - p_min), p_min, p_max)


def gaussian_log_prob(raw, mean, log_std):
    """Sum over dimensions of the diagonal Gaussian log-density"""
    z = (raw - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - HALF_LOG_2PI, axis=-1)


class DlActor:
    """Factored categorical policy: one M-way softmax block per UE"""

    def __init__(self, state_dim, n_ues, m_mbs, hidden_sizes, rng):
        self.n_ues = n_ues
        self.m_mbs = m_mbs
        self.mlp = MlpParams.init([state_dim, *hidden_sizes, n_ues * m_mbs], rng, output_scale=0.01)

    def parameters(self):
        return self.mlp.arrays()

    def logits(self, states):
        out, _ = mlp_forward(self.mlp, states)
        return out.reshape(out.shape[:-1] + (self.n_ues, self.m_mbs))

    def probabilities(self, states):
        return softmax_blocks(self.logits(states))

    def sample(self, state, rng, greedy=False):
        """Return (1-based allocation, joint log-prob, probability blocks)"""
        logits = self.logits(state)
        probs = softmax_blocks(logits)
        if greedy:
            choice = np.argmax(probs, axis=-1)
        else:
            u = rng.uniform(0.0, 1.0, self.n_ues)
            cdf = np.cumsum(probs, axis=-1)
            choice = np.array([np.searchsorted(cdf[i], u[i], side='right') for i in range(self.n_ues)])
            choice = np.minimum(choice, self.m_mbs - 1)
        log_probs = log_softmax_blocks(logits)
        logp = float(np.sum(log_probs[np.arange(self.n_ues), choice]))
        return choice + 1, logp, probs

    def evaluate(self, states, actions):
        """Joint log-probs of 1-based allocations; returns (logp, context for backward)"""
        out, cache = mlp_forward(self.mlp, states)
        batch = out.shape[0]
        logits = out.reshape(batch, self.n_ues, self.m_mbs)
        index = np.asarray(actions, dtype=int) - 1
        log_probs = log_softmax_blocks(logits)
        picked = np.take_along_axis(log_probs, index[..., None], axis=-1)[..., 0]
        return picked.sum(axis=-1), (cache, softmax_blocks(logits), index)

    def backward(self, context, grad_logp):
        cache, probs, index = context
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, index[..., None], 1.0, axis=-1)
        grad_logits = (onehot - probs) * np.asarray(grad_logp)[:, None, None]
        grads, _ = mlp_backward(cache, grad_logits.reshape(grad_logits.shape[0], -1))
        return grads

    def state_dict(self):
        return _mlp_state('mlp', self.mlp)

    def load_state_dict(self, state):
        _load_mlp_state('mlp', self.mlp, state)


class UlActor:
    """Diagonal Gaussian policy over raw actions, clamped to [0, 1] then scaled"""

    def __init__(self, state_dim, n_ues, hidden_sizes, rng, logstd_init=-0.5):
        self.n_ues = n_ues
        self.mlp = MlpParams.init([state_dim, *hidden_sizes, n_ues], rng, output_scale=0.01)
        # start the mean mid-range
        self.mlp.biases[-1][:] = 0.5
        self.log_std = np.full(n_ues, float(logstd_init))

    def parameters(self):
        return self.mlp.arrays() + [self.log_std]

    def mean(self, states):
        out, _ = mlp_forward(self.mlp, states)
        return out

    def sample(self, state, rng, p_min, p_max, greedy=False):
        """Return (powers in W, log-prob of the raw action, raw action)"""
        mean = self.mean(state)
        if greedy:
            raw = mean.copy()
        else:
            raw = mean + np.exp(self.log_std) * rng.normal(0.0, 1.0, self.n_ues)
        logp = float(gaussian_log_prob(raw, mean, self.log_std))
        return scale_power(raw, p_min, p_max), logp, raw

    def evaluate(self, states, raw_actions):
        mean, cache = mlp_forward(self.mlp, states)
        raw = np.asarray(raw_actions, dtype=float)
        return gaussian_log_prob(raw, mean, self.log_std), (cache, raw, mean)

    def backward(self, context, grad_logp):
        cache, raw, mean = context
        grad_logp = np.asarray(grad_logp)[:, None]
        inv_var = np.exp(-2.0 * self.log_std)
        diff = raw - mean
        grad_mean = diff * inv_var * grad_logp
        grad_log_std = ((diff * diff * inv_var - 1.0) * grad_logp).sum(axis=0)
        grads, _ = mlp_backward(cache, grad_mean)
        return grads + [grad_log_std]

    def state_dict(self):
        state = _mlp_state('mlp', self.mlp)
        state['log_std'] = self.log_std
        return state

    def load_state_dict(self, state):
        _load_mlp_state('mlp', self.mlp, state)
        self.log_std[...] = state['log_std']


@dataclass
class CriticNets:
    adapters: dict
    backbone: MlpParams
    heads: dict = field(default_factory=dict)

    def arrays(self):
        out = []
        for name in self.adapters:
            out.extend(self.adapters[name].arrays())
        out.extend(self.backbone.arrays())
        for name in self.heads:
            out.extend(self.heads[name].arrays())
        return out


class CriticNetwork:
    """Value network with one input adapter and one scalar head per named input.

    All heads share the backbone. With two heads ('dl', 'ul') this is the
    loss-sharing critic; with a single head it is a plain critic.
    """

    def __init__(self, input_dims, hidden_sizes, rng):
        self.input_dims = dict(input_dims)
        width = hidden_sizes[0]
        adapters = {
            name: MlpParams.init([dim, width], rng, output_activation='tanh')
            for name, dim in self.input_dims.items()
        }
        # a single width still gets one shared layer
        backbone_sizes = list(hidden_sizes) if len(hidden_sizes) > 1 else [width, width]
        backbone = MlpParams.init(backbone_sizes, rng, output_activation='tanh')
        heads = {name: MlpParams.init([hidden_sizes[-1], 1], rng) for name in self.input_dims}
        self.nets = CriticNets(adapters, backbone, heads)
        self.target = copy.deepcopy(self.nets)

    @property
    def head_names(self):
        return list(self.input_dims)

    def parameters(self):
        return self.nets.arrays()

    def parameter_slices(self):
        """Map 'adapter:<name>', 'backbone', 'head:<name>' to index ranges in parameters()"""
        slices, start = {}, 0
        for name in self.nets.adapters:
            n = len(self.nets.adapters[name].arrays())
            slices[f'adapter:{name}'] = range(start, start + n)
            start += n
        n = len(self.nets.backbone.arrays())
        slices['backbone'] = range(start, start + n)
        start += n
        for name in self.nets.heads:
            n = len(self.nets.heads[name].arrays())
            slices[f'head:{name}'] = range(start, start + n)
            start += n
        return slices

    def _check_head(self, head, states):
        if head not in self.input_dims:
            raise ShapeError(f"critic has no head {head!r}; heads are {self.head_names}")
        width = np.shape(states)[-1]
        if width != self.input_dims[head]:
            raise ShapeError(f"head {head!r} expects states of width {self.input_dims[head]}, got {width}")

    def _forward(self, nets, states, head):
        self._check_head(head, states)
        h, adapter_cache = mlp_forward(nets.adapters[head], states)
        h, backbone_cache = mlp_forward(nets.backbone, h)
        value, head_cache = mlp_forward(nets.heads[head], h)
        return value[..., 0], (adapter_cache, backbone_cache, head_cache)

    def values(self, states, head, use_target=False):
        value, _ = self._forward(self.target if use_target else self.nets, states, head)
        return value

    def loss_and_grads(self, batches, weights):
        """Weighted sum of per-head mean squared errors and its gradient.

        Args:
            batches: head name -> (states, value targets)
            weights: head name -> loss weight

        Returns:
            (per-head losses, total loss, gradients aligned with parameters())
        """
        slices = self.parameter_slices()
        grads = [np.zeros_like(p) for p in self.parameters()]
        losses, total = {}, 0.0
        for head, (states, targets) in batches.items():
            states = np.atleast_2d(np.asarray(states, dtype=float))
            targets = np.asarray(targets, dtype=float).reshape(-1)
            value, (adapter_cache, backbone_cache, head_cache) = self._forward(self.nets, states, head)
            error = value - targets
            loss = float(np.mean(error * error))
            losses[head] = loss
            weight = weights.get(head, 0.0)
            total += weight * loss
            grad_value = (weight * 2.0 / len(targets)) * error
            head_grads, g = mlp_backward(head_cache, grad_value[:, None])
            for index, grad in zip(slices[f'head:{head}'], head_grads):
                grads[index] += grad
            backbone_grads, g = mlp_backward(backbone_cache, g)
            for index, grad in zip(slices['backbone'], backbone_grads):
                grads[index] += grad
            adapter_grads, _ = mlp_backward(adapter_cache, g)
            for index, grad in zip(slices[f'adapter:{head}'], adapter_grads):
                grads[index] += grad
        return losses, total, grads

    def sync_target(self):
        self.target = copy.deepcopy(self.nets)

    def state_dict(self, prefix=''):
        state = {}
        for name, params in self.nets.adapters.items():
            state.update(_mlp_state(f'{prefix}adapter_{name}', params))
        state.update(_mlp_state(f'{prefix}backbone', self.nets.backbone))
        for name, params in self.nets.heads.items():
            state.update(_mlp_state(f'{prefix}head_{name}', params))
        return state

    def load_state_dict(self, state, prefix=''):
        for name, params in self.nets.adapters.items():
            _load_mlp_state(f'{prefix}adapter_{name}', params, state)
        _load_mlp_state(f'{prefix}backbone', self.nets.backbone, state)
        for name, params in self.nets.heads.items():
            _load_mlp_state(f'{prefix}head_{name}', params, state)
        self.sync_target()


def dl_policy_sample(actor, state, rng, greedy=False):
    return actor.sample(state, rng, greedy=greedy)


def ul_policy_sample(actor, state, rng, p_min, p_max, greedy=False):
    return actor.sample(state, rng, p_min, p_max, greedy=greedy)


def critic_values(critic, state, head, use_target=False):
    return critic.values(state, head, use_target=use_target)


def _mlp_state(prefix, params):
    state = {}
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        state[f'{prefix}.W{layer}'] = w
        state[f'{prefix}.b{layer}'] = b
    return state


def _load_mlp_state(prefix, params, state):
    for layer in range(len(params.weights)):
        for kind, target in (('W', params.weights[layer]), ('b', params.biases[layer])):
            key = f'{prefix}.{kind}{layer}'
            if key not in state:
                raise ShapeError(f"checkpoint is missing {key}")
            if state[key].shape != target.shape:
                raise ShapeError(f"{key}: checkpoint shape {state[key].shape} != network shape {target.shape}")
            target[...] = state[key]


def save_checkpoint(path, networks, config_text='', algorithm=''):
    """Write named networks to an .npz file.

    Layout: ``format_version``, ``algorithm``, ``config`` (the resolved config
    document) and one array per parameter under ``<network>/<key>``; shapes are
    the arrays' own.
    """
    arrays = {
        'format_version': np.array([CHECKPOINT_FORMAT_VERSION]),
        'algorithm': np.array(algorithm),
        'config': np.array(config_text),
    }
    for name, network in networks.items():
        for key, value in network.state_dict().items():
            arrays[f'{name}/{key}'] = value
    with open(path, 'wb') as handle:
        np.savez(handle, **arrays)
    logger.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path):
    """Return (algorithm, config text, {network name: {key: array}})"""
    with np.load(path, allow_pickle=False) as data:
        version = int(data['format_version'][0])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ShapeError(f"unsupported checkpoint format version {version}")
        networks = {}
        for key in data.files:
            if '/' not in key:
                continue
            name, _, param = key.partition('/')
            networks.setdefault(name, {})[param] = data[key].copy()
        return str(data['algorithm']), str(data['config']), networks
