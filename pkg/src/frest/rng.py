"""Counter-based random streams keyed by ``(seed, stream, index)``.

Each stream is a Philox generator whose 128-bit key packs the seed and the
stream/index pair, so sample ``i`` draws the same numbers however many other
samples are generated, in whatever order.
"""

import numpy as np

from .exceptions import InvalidParameterError

_MASK64 = (1 << 64) - 1

# stream ids
SAMPLES = 0
GRAPH = 1
INIT = 2
SHUFFLE = 3
SOURCES = 4


def make_rng(seed, index=0, stream=SAMPLES):
    seed = int(seed)
    if seed < 0 or seed > _MASK64:
        raise InvalidParameterError(f"seed must be a non-negative 64-bit integer, got {seed}")
    if index < 0 or index >= (1 << 48) or stream < 0 or stream >= (1 << 16):
        raise InvalidParameterError("stream index out of range")
    key = np.array([seed, (int(stream) << 48) | int(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
