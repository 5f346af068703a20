"""Seeded randomness built on a counter-based bit generator.

Every sampler in this package draws from a Philox stream created here, and
normal variates are produced by the Marsaglia polar method on top of the raw
uniform stream.  The determinism contract is per seed (and per library
version): the byte stream does not depend on numpy's own choice of normal
algorithm.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for (seed, *stream), suitable for parallel cells."""
    ss = np.random.SeedSequence(
        entropy=int(seed), spawn_key=tuple(int(s) for s in stream)
    )
    return np.random.Generator(np.random.Philox(ss))


def polar_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal draws via the Marsaglia polar method.

    Only uniform variates are consumed from ``rng``; rejection keeps pairs
    with 0 < u^2 + v^2 < 1 (acceptance rate pi/4).
    """
    if np.isscalar(shape):
        shape = (int(shape),)
    count = int(np.prod(shape))
    out = np.empty(count)
    filled = 0
    while filled < count:
        need = count - filled
        # each accepted pair yields two variates; oversample slightly
        pairs = (need + 1) // 2
        pairs = int(pairs / 0.75) + 8
        u = rng.random((pairs, 2)) * 2.0 - 1.0
        s = u[:, 0] ** 2 + u[:, 1] ** 2
        keep = (s > 0.0) & (s < 1.0)
        us = u[keep]
        sk = s[keep]
        factor = np.sqrt(-2.0 * np.log(sk) / sk)
        z = (us * factor[:, None]).ravel()
        take = min(z.size, need)
        out[filled : filled + take] = z[:take]
        filled += take
    return out.reshape(shape)
