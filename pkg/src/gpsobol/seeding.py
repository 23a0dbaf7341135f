"""Counter-based seed derivation.

Every random task is keyed by ``(master seed, stream, index)`` so results do
not depend on how tasks are scheduled across threads.
"""

import numpy as np

STREAM_FIT = 0
STREAM_REALIZATION = 1
STREAM_BOOTSTRAP = 2
STREAM_PROBE = 3
STREAM_TEST = 4


def task_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), int(index)]))
