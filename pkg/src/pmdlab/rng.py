"""Seeded random streams.

Every run owns one Philox stream keyed by ``(master_seed, run_id)``.  Philox is
counter based, so streams for different run ids are independent and a run can be
replayed bit-for-bit from its two integers alone.
"""

import numpy as np


def make_rng(seed: int, run_id: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(run_id),))
    return np.random.Generator(np.random.Philox(ss))


def categorical_table(probs: np.ndarray) -> np.ndarray:
    """Cumulative table for inverse-CDF sampling along the last axis.

    The entry of the last positive-probability outcome (and everything after it)
    is pinned to exactly 1.0, so a uniform draw in [0, 1) can never land on a
    zero-probability outcome through rounding.
    """
    probs = np.asarray(probs, dtype=float)
    cum = np.cumsum(probs, axis=-1)
    n = probs.shape[-1]
    last = n - 1 - np.argmax(probs[..., ::-1] > 0, axis=-1)
    cum[np.arange(n) >= last[..., None]] = 1.0
    return cum
