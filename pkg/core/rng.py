"""Seeded random streams.

Every stochastic draw in the simulator and the learners goes through an
``RngStream``. Streams wrap numpy's Philox counter-based bit generator, whose
output is specified bit-for-bit and therefore identical across platforms.
A child stream is derived from ``(seed, label path)`` only, never from the
parent's position, so forking the same label twice yields the same draws.
"""
import hashlib

import numpy as np


def _label_key(label):
    digest = hashlib.sha256(label.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little')


class RngStream:
    """Single-owner random stream identified by a seed and a label path"""

    def __init__(self, seed, labels=()):
        self.seed = int(seed)
        self.labels = tuple(labels)
        entropy = [self.seed] + [_label_key(label) for label in self.labels]
        self.generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def __repr__(self):
        path = '/'.join(self.labels) or '<root>'
        return f"RngStream(seed={self.seed}, path={path})"

    @property
    def state(self):
        return self.generator.bit_generator.state

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def standard_complex_normal(self, size=None):
        """Circularly-symmetric complex normal with unit variance"""
        real = self.generator.standard_normal(size)
        imag = self.generator.standard_normal(size)
        return (real + 1j * imag) / np.sqrt(2.0)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n):
        return self.generator.permutation(n)


def fork_stream(rng, label):
    """Derive a deterministic child stream named ``label``"""
    if not label:
        raise ValueError("Stream label must be a non-empty string")
    return RngStream(rng.seed, rng.labels + (label,))
