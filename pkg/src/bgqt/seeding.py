"""Per-member seed derivation for reproducible ensembles.

Ensemble member ``k`` never shares a random stream with member ``j``; its
stream is a pure function of ``(master_seed, k)`` so results do not depend
on ensemble size, chunking or scheduling order.
"""
from __future__ import annotations

import numpy as np


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed for ensemble member ``index``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def member_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, index))


def as_generator(seed) -> np.random.Generator:
    """Accept an int, SeedSequence or Generator and return a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def block_uniforms(master_seed: int, m: int, width: int, start: int = 0) -> np.ndarray:
    """Uniforms for members ``start .. start+m-1``, ``width`` draws each.

    Row ``k`` holds positions ``[(start+k)*width, (start+k+1)*width)`` of the
    PCG64 stream seeded by ``master_seed``; a single member can therefore be
    regenerated alone by advancing the stream.  This is the cheap path used
    for large discrete-chain ensembles, where building one generator per
    member would dominate the run time.
    """
    bitgen = np.random.PCG64(int(master_seed))
    if start:
        bitgen.advance(int(start) * int(width))
    return np.random.Generator(bitgen).random((m, width))
