"""Counter-based random streams (Philox) with a fixed counter-space layout.

Layout of the 256-bit Philox counter for a run keyed by ``seed``:

* step noise:   counter = step << 128          (one block per Euler step)
* side streams: counter = (1 << 255) | (tag << 128)

A normal vector drawn for step ``k`` is a prefix-stable sequence: entry
``p`` depends only on (seed, k, p), never on the number of paths requested
or on any scheduling, which is what the shared-noise coupling contract and
bit-for-bit reproducibility require.
"""

import numpy as np


def normal_matrix(seed: int, step: int, n: int) -> np.ndarray:
    """Standard normal increments for one step; entry p is path p's noise."""
    bg = np.random.Philox(counter=int(step) << 128, key=int(seed))
    return np.random.Generator(bg).standard_normal(n)


def side_generator(seed: int, tag: int) -> np.random.Generator:
    """An auxiliary stream (sampling, shuffling) disjoint from step noise."""
    counter = (1 << 255) | (int(tag) << 128)
    return np.random.Generator(np.random.Philox(counter=counter, key=int(seed)))
