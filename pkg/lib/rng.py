"""
Deterministic random streams.

Every draw in a run comes from a generator keyed by (seed, purpose, index),
so adding robots or runs never perturbs the draws of existing ones.
"""

from typing import List

import numpy as np

# Stream purposes
STREAM_INIT = 1
STREAM_DYNAMICS = 2
STREAM_OBSERVATION = 3
STREAM_RUN = 4
STREAM_LAYOUT = 5


def stream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, purpose, index) key."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, purpose, index]))


def robot_streams(seed: int, purpose: int, n: int) -> List[np.random.Generator]:
    """One generator per robot for the given purpose."""
    return [stream(seed, purpose, i) for i in range(n)]


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed of the index-th child of master_seed."""
    state = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, STREAM_RUN, index]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])
