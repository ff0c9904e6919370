"""Counter-based random streams for reproducible slot simulation.

Every consumer of randomness (one sensor's environment, one sensor's
policy-mixing coin, one episode's truncation shuffle, ...) owns its own
stream, keyed by (base_seed, episode, sensor, purpose).  Streams are
counter-based splitmix64 sequences: draw ``i`` of a stream is a pure
function of (key, i), so the Python reference simulator and the jitted
fleet engine produce bit-identical draws without sharing state.

Draw layout (documented contract, relied on by both engines):

* purpose ``ENV``: draw ``2*t`` is the request coin of slot ``t`` and
  draw ``2*t + 1`` is the energy-arrival coin (requests first).  Slots
  are numbered from 0.
* purpose ``INIT``: draw 0 decides the initial battery level.
* purpose ``MIX``: draw ``t`` picks which of the two mixed policies
  applies at slot ``t``.
* purpose ``TRUNC`` (sensor field = 0): the truncation shuffle consumes
  draws sequentially; exactly ``N`` draws per slot whose candidate set
  exceeds the budget, none otherwise.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# purpose tags
ENV = 1
INIT = 2
MIX = 3
TRUNC = 4


def mix64(x: int) -> int:
    """splitmix64 finalizer (Steele et al.), pure-Python reference."""
    z = (x + _GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def stream_key(base_seed: int, episode: int, sensor: int, purpose: int) -> int:
    """Derive a stream key by folding the fields through the finalizer."""
    k = mix64(base_seed & MASK64)
    k = mix64(k ^ ((episode + 1) & MASK64))
    k = mix64(k ^ ((sensor + 1) & MASK64))
    k = mix64(k ^ (purpose & MASK64))
    return k


def draw_u64(key: int, counter: int) -> int:
    """The counter-th raw 64-bit output of the stream."""
    return mix64((key + counter * _GAMMA) & MASK64)


def draw_uniform(key: int, counter: int) -> float:
    """The counter-th uniform in [0, 1) (53-bit mantissa)."""
    return (draw_u64(key, counter) >> 11) * (1.0 / (1 << 53))


class SplitStream:
    """Sequential view of one counter-based stream.

    Thin stateful wrapper used by the reference engine; the jitted
    engine computes the same draws from (key, counter) directly.
    """

    def __init__(self, base_seed: int, episode: int = 0, sensor: int = 0,
                 purpose: int = ENV):
        self.key = stream_key(base_seed, episode, sensor, purpose)
        self.counter = 0

    def uniform(self) -> float:
        u = draw_uniform(self.key, self.counter)
        self.counter += 1
        return u

    def bernoulli(self, prob: float) -> int:
        return 1 if self.uniform() < prob else 0

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return int(self.uniform() * n)


def uniform_array(key: int, start: int, count: int) -> np.ndarray:
    """Vectorized draws [start, start+count) of a stream."""
    ctr = np.arange(start, start + count, dtype=np.uint64)
    z = np.uint64(key) + ctr * np.uint64(_GAMMA) + np.uint64(_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
