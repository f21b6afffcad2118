"""Counter-based random streams.

All randomness is drawn from Philox generators keyed by (master seed, tag)
with the remaining identifiers placed in the counter, so any stream is a
pure function of its identifiers: reconstruction yields identical values,
independent of draw order elsewhere in the program.
"""

import numpy as np

# stream tags, one per consumer
TAG_INIT = 1
TAG_EXACT = 2
TAG_GRID = 3
TAG_TAU = 4
TAG_BANK = 5


def make_generator(seed, tag, a=0, b=0):
    """Generator for stream (seed, tag, a, b); identifiers must be < 2**64."""
    bits = np.random.Philox(key=[np.uint64(seed), np.uint64(tag)],
                            counter=[0, 0, np.uint64(a), np.uint64(b)])
    return np.random.Generator(bits)
