import dataclasses

from django.test import SimpleTestCase

from core.config import (
    NETWORK_KEYS,
    NetworkConfig,
    TrainConfig,
    config_hash,
    default_config,
    dump_config,
    load_config,
    parse_overrides,
)
from core.exceptions import ConfigError


class DefaultConfigTests(SimpleTestCase):
    def test_scenario_defaults(self):
        cfg = default_config()
        self.assertEqual(cfg.bandwidth_hz, 1e10)
        self.assertEqual((cfg.profitability, cfg.scale_b, cfg.scale_f), (10.0, 1.0, 1.0))
        self.assertEqual((cfg.weight_q, cfg.weight_h), (0.5, 0.5))
        self.assertEqual((cfg.kappa1, cfg.kappa2), (0.5, 0.5))
        self.assertEqual(cfg.varkappa, 0.3)
        self.assertEqual(cfg.penalty, -50.0)
        self.assertEqual((cfg.rician_k, cfg.pathloss_alpha), (3.0, 2.0))
        self.assertEqual(cfg.t_steps, 100)
        self.assertEqual((cfg.area_x_max, cfg.area_y_max), (100.0, 100.0))
        self.assertEqual((cfg.step_x_max, cfg.step_y_max), (10.0, 10.0))
        self.assertEqual((cfg.dl_data_min, cfg.dl_data_max), (8e8, 1e9))
        self.assertEqual((cfg.p_dl_min, cfg.p_dl_max), (1.5, 2.0))
        self.assertEqual((cfg.p_ul_min, cfg.p_ul_max), (3.0, 10.0))
        self.assertEqual(cfg.noise_psd_dl, 1e-13)
        self.assertFalse(cfg.literal_ul_reward)
        self.assertFalse(cfg.frozen_world)

    def test_calibrated_defaults(self):
        cfg = default_config()
        self.assertEqual(cfg.beta0, 10.0)
        self.assertEqual(cfg.battery_init, 10.0)
        self.assertEqual((cfg.ul_data_min, cfg.ul_data_max), (8e7, 1e8))

    def test_empty_document_gives_defaults(self):
        network, train = load_config('')
        self.assertEqual(network, NetworkConfig())
        self.assertEqual(train, TrainConfig())
        self.assertEqual(network.bandwidth_hz, 1e10)

    def test_state_dimensions(self):
        network, _ = load_config('n_ues = 8\nm_mbs = 4\n')
        self.assertEqual((network.n_ues, network.m_mbs), (8, 4))
        self.assertEqual(network.dl_state_dim, 8 * 4 + 8)
        self.assertEqual(network.ul_state_dim, 8 * 4 + 8)


class LoadConfigTests(SimpleTestCase):
    def test_weight_out_of_range_names_key_and_bound(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config('weight_q = 1.3')
        self.assertIn('weight_q out of [0,1]', str(ctx.exception))

    def test_unknown_key_is_rejected(self):
        with self.assertRaisesMessage(ConfigError, 'unknown config keys: n_mbs'):
            load_config('n_mbs = 3')

    def test_unparsable_line(self):
        with self.assertRaises(ConfigError):
            load_config('this line has no equals sign')

    def test_comments_and_blank_lines(self):
        network, train = load_config('# scenario\n\nn_ues = 3  # three players\nseed = 7\n')
        self.assertEqual(network.n_ues, 3)
        self.assertEqual(train.seed, 7)

    def test_power_bounds_must_be_ordered(self):
        with self.assertRaisesMessage(ConfigError, 'p_ul_max must be >= p_ul_min'):
            load_config('p_ul_min = 12\np_ul_max = 10')

    def test_kappas_cannot_both_be_zero(self):
        with self.assertRaises(ConfigError):
            load_config('kappa1 = 0\nkappa2 = 0')

    def test_gamma_must_be_positive(self):
        with self.assertRaises(ConfigError):
            load_config('gamma = 0')

    def test_typed_values(self):
        network, train = load_config('literal_ul_reward = true\nhidden_sizes = 32,16\nnormalize_advantages = false')
        self.assertTrue(network.literal_ul_reward)
        self.assertEqual(train.hidden_sizes, (32, 16))
        self.assertFalse(train.normalize_advantages)

    def test_overrides_win_over_document(self):
        overrides = parse_overrides(['weight_q=0.25', 'seed = 3'])
        network, train = load_config('weight_q = 0.75', overrides)
        self.assertEqual(network.weight_q, 0.25)
        self.assertEqual(train.seed, 3)

    def test_malformed_override(self):
        with self.assertRaises(ConfigError):
            parse_overrides(['weight_q'])


class DumpConfigTests(SimpleTestCase):
    def test_round_trip_is_field_equal(self):
        network = dataclasses.replace(NetworkConfig(), n_ues=7, beta0=0.0123456789012345, frozen_world=True)
        train = dataclasses.replace(TrainConfig(), hidden_sizes=(16, 4), lr_actor=1.234e-4)
        reloaded_network, reloaded_train = load_config(dump_config(network, train))
        self.assertEqual(reloaded_network, network)
        self.assertEqual(reloaded_train, train)

    def test_document_lists_every_network_key(self):
        text = dump_config(NetworkConfig())
        for key in NETWORK_KEYS:
            self.assertIn(f'{key} = ', text)

    def test_hash_tracks_content(self):
        base = config_hash(NetworkConfig(), TrainConfig())
        self.assertEqual(base, config_hash(NetworkConfig(), TrainConfig()))
        self.assertNotEqual(base, config_hash(dataclasses.replace(NetworkConfig(), weight_q=0.25), TrainConfig()))
