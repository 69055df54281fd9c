"""Counter-based random streams keyed by (master seed, task coordinates).

Every Monte-Carlo task draws from its own Philox stream whose key is derived
from the master seed and a tuple of nonnegative integers naming the task, so
results do not depend on scheduling or worker count.
"""

from __future__ import annotations

import numpy as np


def stream(seed, *key) -> np.random.Generator:
    """Independent generator for task ``key`` under master ``seed``."""
    if isinstance(seed, np.random.Generator):
        if key:
            raise TypeError("cannot derive keyed substreams from a Generator")
        return seed
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
