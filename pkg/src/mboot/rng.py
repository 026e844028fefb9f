"""Counter-based random streams keyed by (seed, *indices).

Every stream is a Philox generator whose key is derived from the root seed and
a tuple of integer indices, so the numbers a replication or bootstrap draw sees
depend only on its indices, never on scheduling.
"""

from __future__ import annotations

import numpy as np

# Stream families; used as the first index so streams never collide.
DATA = 0
WEIGHTS = 1
RESAMPLE = 2


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(seed, *key: int) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(seed, *key)
