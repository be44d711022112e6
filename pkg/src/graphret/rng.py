"""Counter-based random streams (Philox) keyed by ``(seed, stream)``."""
import numpy as np

_MASK = (1 << 64) - 1

# stream ids, fixed so adding a consumer never shifts another one's draws
INIT, DROPOUT, SAMPLE, PRIOR, SPLIT, SYNTH, KDTREE = range(1, 8)


class RngStream:
    def __init__(self, seed, stream=0):
        self.seed = int(seed) & _MASK
        self.stream = int(stream) & _MASK
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, stream):
        return RngStream(self.seed, stream)

    def normal(self, shape):
        return self._gen.standard_normal(shape)

    def uniform(self, shape, low=0.0, high=1.0):
        return self._gen.uniform(low, high, shape)

    def permutation(self, n):
        return self._gen.permutation(n)

    def get_state(self):
        return self._gen.bit_generator.state

    def set_state(self, state):
        self._gen.bit_generator.state = state
