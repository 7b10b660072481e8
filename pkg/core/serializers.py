import math

from rest_framework import serializers


def _bound(value, default):
    if value is None:
        return default
    return f"{value:g}"


def bounded_float(low=None, high=None, **kwargs):
    """FloatField whose range errors read ``out of [low,high]``"""
    message = f"out of [{_bound(low, '-inf')},{_bound(high, 'inf')}]"
    return serializers.FloatField(
        min_value=low,
        max_value=high,
        error_messages={'min_value': message, 'max_value': message, 'invalid': 'is not a number'},
        **kwargs
    )


def bounded_int(low=None, high=None, **kwargs):
    message = f"out of [{_bound(low, '-inf')},{_bound(high, 'inf')}]"
    return serializers.IntegerField(
        min_value=low,
        max_value=high,
        error_messages={'min_value': message, 'max_value': message, 'invalid': 'is not an integer'},
        **kwargs
    )


class IntListField(serializers.Field):
    """Comma-separated positive integers, e.g. ``64,64``"""

    default_error_messages = {
        'invalid': 'must be a comma-separated list of positive integers',
    }

    def to_internal_value(self, data):
        if isinstance(data, str):
            parts = [part.strip() for part in data.split(',') if part.strip()]
        elif isinstance(data, (list, tuple)):
            parts = list(data)
        else:
            self.fail('invalid')
        try:
            sizes = tuple(int(part) for part in parts)
        except (TypeError, ValueError):
            self.fail('invalid')
        if not sizes or any(size < 1 for size in sizes):
            self.fail('invalid')
        return sizes

    def to_representation(self, value):
        return ','.join(str(v) for v in value)


class NetworkConfigSerializer(serializers.Serializer):
    n_ues = bounded_int(1)
    m_mbs = bounded_int(1)
    t_steps = bounded_int(1)
    area_x_max = bounded_float(0)
    area_y_max = bounded_float(0)
    step_x_max = bounded_float(0)
    step_y_max = bounded_float(0)
    bandwidth_hz = bounded_float(0)
    noise_psd_dl = bounded_float(0)
    noise_psd_ul = bounded_float(0)
    p_dl_min = bounded_float(0)
    p_dl_max = bounded_float(0)
    p_ul_min = bounded_float(0)
    p_ul_max = bounded_float(0)
    dl_data_min = bounded_float(0)
    dl_data_max = bounded_float(0)
    ul_data_min = bounded_float(0)
    ul_data_max = bounded_float(0)
    battery_init = bounded_float(0)
    profitability = bounded_float()
    scale_b = bounded_float()
    scale_f = bounded_float()
    weight_q = bounded_float(0, 1)
    weight_h = bounded_float(0, 1)
    weight_w1 = bounded_float()
    weight_w2 = bounded_float()
    kappa1 = bounded_float(0)
    kappa2 = bounded_float(0)
    varkappa = bounded_float()
    penalty = bounded_float()
    rician_k = bounded_float(0)
    pathloss_alpha = bounded_float(0)
    beta0 = bounded_float(0)
    literal_ul_reward = serializers.BooleanField()
    frozen_world = serializers.BooleanField()

    def validate(self, attrs):
        errors = {}
        for key, value in attrs.items():
            if isinstance(value, float) and not math.isfinite(value):
                errors[key] = 'must be finite'
        strictly_positive = (
            'p_dl_min', 'p_ul_min', 'battery_init', 'bandwidth_hz',
            'noise_psd_dl', 'noise_psd_ul', 'beta0', 'area_x_max', 'area_y_max',
        )
        for key in strictly_positive:
            if attrs[key] <= 0:
                errors[key] = 'must be > 0'
        if attrs['p_dl_min'] > attrs['p_dl_max']:
            errors['p_dl_max'] = 'must be >= p_dl_min'
        if attrs['p_ul_min'] > attrs['p_ul_max']:
            errors['p_ul_max'] = 'must be >= p_ul_min'
        if attrs['dl_data_min'] > attrs['dl_data_max']:
            errors['dl_data_max'] = 'must be >= dl_data_min'
        if attrs['ul_data_min'] > attrs['ul_data_max']:
            errors['ul_data_max'] = 'must be >= ul_data_min'
        if attrs['kappa1'] + attrs['kappa2'] <= 0:
            errors['kappa2'] = 'kappa1 + kappa2 must be > 0'
        if errors:
            raise serializers.ValidationError(errors)
        return attrs


class TrainConfigSerializer(serializers.Serializer):
    total_steps = bounded_int(0)
    horizon = bounded_int(1)
    epochs = bounded_int(1)
    group_size = bounded_int(1)
    gamma = bounded_float(0, 1)
    lambda_gae = bounded_float(0, 1)
    clip_eps = bounded_float(0)
    lr_actor = bounded_float(0)
    lr_critic = bounded_float(0)
    target_sync_interval = bounded_int(1)
    gaussian_logstd_init = bounded_float()
    hidden_sizes = IntListField()
    normalize_advantages = serializers.BooleanField()
    seed = bounded_int(0)

    def validate_gamma(self, value):
        if value <= 0:
            raise serializers.ValidationError('out of (0,1]')
        return value

    def validate_clip_eps(self, value):
        if value <= 0:
            raise serializers.ValidationError('must be > 0')
        return value


class ExperimentSpecSerializer(serializers.Serializer):
    ALGORITHMS = ['mals', 'ida', 'ctde', 'random']
    AXES = ['none', 'q', 'h']

    algorithm = serializers.ChoiceField(choices=ALGORITHMS)
    seeds = serializers.ListField(child=bounded_int(0), min_length=1)
    axis = serializers.ChoiceField(choices=AXES, default='none')
    values = serializers.ListField(child=bounded_float(0, 1), required=False, default=list)
    output_dir = serializers.CharField()
    episodes = bounded_int(1, required=False, default=10)
    tail_fraction = bounded_float(0, 1, required=False, default=0.1)
    workers = bounded_int(1, required=False, default=1)
    trace = serializers.BooleanField(required=False, default=False)

    def validate(self, attrs):
        if attrs['axis'] != 'none' and not attrs['values']:
            raise serializers.ValidationError({'values': f"sweeping {attrs['axis']} needs at least one value"})
        if attrs['axis'] == 'none' and attrs['values']:
            raise serializers.ValidationError({'values': 'sweep values given without a sweep axis'})
        if attrs['tail_fraction'] <= 0:
            raise serializers.ValidationError({'tail_fraction': 'must be > 0'})
        return attrs
