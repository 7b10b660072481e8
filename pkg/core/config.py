"""Scenario and training constants, config documents and overrides.

A config document is flat ``key = value`` text (comments with ``#``); every
key is a field of ``NetworkConfig`` or ``TrainConfig``. Missing keys keep
their defaults. Values are validated by the serializers in
``core.serializers`` before the frozen dataclasses are built.
"""
import dataclasses
import hashlib
import io
import logging
from dataclasses import dataclass, field

from dotenv.parser import parse_stream

from .exceptions import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetworkConfig:
    n_ues: int = 6
    m_mbs: int = 4
    t_steps: int = 100
    area_x_max: float = 100.0
    area_y_max: float = 100.0
    step_x_max: float = 10.0
    step_y_max: float = 10.0
    bandwidth_hz: float = 1e10
    # -100 dBm/Hz
    noise_psd_dl: float = 1e-13
    noise_psd_ul: float = 1e-13
    p_dl_min: float = 1.5
    p_dl_max: float = 2.0
    p_ul_min: float = 3.0
    p_ul_max: float = 10.0
    dl_data_min: float = 8e8
    dl_data_max: float = 1e9
    ul_data_min: float = 8e7
    ul_data_max: float = 1e8
    battery_init: float = 10.0
    profitability: float = 10.0
    scale_b: float = 1.0
    scale_f: float = 1.0
    weight_q: float = 0.5
    weight_h: float = 0.5
    weight_w1: float = 1.0
    weight_w2: float = 1.0
    kappa1: float = 0.5
    kappa2: float = 0.5
    varkappa: float = 0.3
    penalty: float = -50.0
    rician_k: float = 3.0
    pathloss_alpha: float = 2.0
    # gain at the 1 m reference; sized against the B*sigma^2 = 1e-3 W noise floor
    # so the median UE-MBS link sits near 8 dB (see `calibrate`)
    beta0: float = 10.0
    literal_ul_reward: bool = False
    frozen_world: bool = False

    @property
    def dl_state_dim(self):
        return self.n_ues * self.m_mbs + self.n_ues

    @property
    def ul_state_dim(self):
        return self.n_ues * self.m_mbs + self.n_ues


@dataclass(frozen=True)
class TrainConfig:
    # None of these values come from the scenario description; they are
    # desk-scale PPO defaults.
    total_steps: int = 50_000
    horizon: int = 2048
    epochs: int = 10
    group_size: int = 64
    gamma: float = 0.99
    lambda_gae: float = 0.95
    clip_eps: float = 0.2
    lr_actor: float = 3e-4
    lr_critic: float = 1e-3
    target_sync_interval: int = 4
    gaussian_logstd_init: float = -0.5
    hidden_sizes: tuple = field(default=(64, 64))
    normalize_advantages: bool = True
    seed: int = 0


NETWORK_KEYS = tuple(f.name for f in dataclasses.fields(NetworkConfig))
TRAIN_KEYS = tuple(f.name for f in dataclasses.fields(TrainConfig))


def default_config():
    return NetworkConfig()


def parse_document(source):
    """Parse ``key = value`` text into a dict of raw strings"""
    values = {}
    for binding in parse_stream(io.StringIO(source or '')):
        if binding.error:
            raise ConfigError(
                f"line {binding.original.line}: cannot parse {binding.original.string.strip()!r}"
            )
        if binding.key is None:
            continue
        if binding.value is None:
            raise ConfigError(f"{binding.key} has no value")
        values[binding.key] = binding.value
    return values


def parse_overrides(pairs):
    """Turn ``--set key=value`` strings into a dict"""
    overrides = {}
    for pair in pairs or ():
        key, sep, value = pair.partition('=')
        if not sep or not key.strip():
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        overrides[key.strip()] = value.strip()
    return overrides


def build_configs(values, base_network=None, base_train=None):
    """Validate raw values on top of base configs and return both dataclasses"""
    from .serializers import NetworkConfigSerializer, TrainConfigSerializer

    unknown = sorted(set(values) - set(NETWORK_KEYS) - set(TRAIN_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    base_network = base_network or NetworkConfig()
    base_train = base_train or TrainConfig()
    network_data = dataclasses.asdict(base_network)
    network_data.update({k: v for k, v in values.items() if k in NETWORK_KEYS})
    train_data = dataclasses.asdict(base_train)
    train_data.update({k: v for k, v in values.items() if k in TRAIN_KEYS})

    network = NetworkConfigSerializer(data=network_data)
    train = TrainConfigSerializer(data=train_data)
    errors = []
    if not network.is_valid():
        errors.extend(_flatten_errors(network.errors))
    if not train.is_valid():
        errors.extend(_flatten_errors(train.errors))
    if errors:
        raise ConfigError('; '.join(errors))
    return NetworkConfig(**network.validated_data), TrainConfig(**train.validated_data)


def load_config(source='', overrides=None):
    """Load and validate a config document.

    Args:
        source: flat ``key = value`` text; empty text yields the defaults
        overrides: optional mapping applied on top of the document

    Returns:
        (NetworkConfig, TrainConfig)
    """
    values = parse_document(source)
    values.update(overrides or {})
    return build_configs(values)


def _flatten_errors(errors):
    flat = []
    for key, messages in errors.items():
        for message in messages:
            flat.append(str(message) if key == 'non_field_errors' else f"{key} {message}")
    return flat


def _format_value(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ','.join(str(v) for v in value)
    return str(value)


def dump_config(network, train=None):
    """Serialize configs to a document that ``load_config`` reads back field-equal"""
    lines = ['# network']
    lines += [f"{key} = {_format_value(getattr(network, key))}" for key in NETWORK_KEYS]
    if train is not None:
        lines.append('# training')
        lines += [f"{key} = {_format_value(getattr(train, key))}" for key in TRAIN_KEYS]
    return '\n'.join(lines) + '\n'


def config_hash(network, train=None):
    return hashlib.sha256(dump_config(network, train).encode('utf-8')).hexdigest()
