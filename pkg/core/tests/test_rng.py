import numpy as np
from django.test import SimpleTestCase

from core.rng import RngStream, fork_stream


class ForkStreamTests(SimpleTestCase):
    def test_same_label_reproduces(self):
        a = fork_stream(RngStream(0), 'channel')
        b = fork_stream(RngStream(0), 'channel')
        np.testing.assert_array_equal(a.uniform(size=100), b.uniform(size=100))

    def test_labels_separate_streams(self):
        a = fork_stream(RngStream(0), 'channel').uniform(size=100)
        b = fork_stream(RngStream(0), 'mobility').uniform(size=100)
        self.assertFalse(np.array_equal(a, b))

    def test_seeds_separate_streams(self):
        a = fork_stream(RngStream(0), 'x').uniform(size=100)
        b = fork_stream(RngStream(1), 'x').uniform(size=100)
        self.assertFalse(np.array_equal(a, b))

    def test_child_ignores_parent_position(self):
        parent = RngStream(4)
        first = fork_stream(parent, 'data').normal(size=10)
        parent.uniform(size=1000)
        np.testing.assert_array_equal(first, fork_stream(parent, 'data').normal(size=10))

    def test_nested_paths(self):
        child = fork_stream(fork_stream(RngStream(2), 'env'), 'channel')
        self.assertEqual(child.labels, ('env', 'channel'))
        self.assertIn('env/channel', repr(child))

    def test_empty_label(self):
        with self.assertRaises(ValueError):
            fork_stream(RngStream(0), '')


class RngStreamTests(SimpleTestCase):
    def test_complex_normal_has_unit_power(self):
        samples = RngStream(11).standard_complex_normal(100_000)
        self.assertAlmostEqual(float(np.mean(np.abs(samples) ** 2)), 1.0, delta=0.02)
        self.assertAlmostEqual(float(np.mean(samples.real)), 0.0, delta=0.01)

    def test_integers_exclusive_high(self):
        draws = RngStream(0).integers(1, 5, 10_000)
        self.assertEqual(set(draws.tolist()), {1, 2, 3, 4})

    def test_philox_generator(self):
        self.assertEqual(RngStream(0).state['bit_generator'], 'Philox')
