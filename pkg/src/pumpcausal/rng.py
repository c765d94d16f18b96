"""Deterministic random-stream derivation.

All randomness in the package flows through PCG64 generators derived from a
single 64-bit seed via ``numpy.random.SeedSequence`` spawn keys.  Each
consumer owns a namespaced stream, so results are bit-reproducible across
platforms and independent of thread or process scheduling:

    synth data        stream(seed, KEY_SYNTH)
    sampler chain c   stream(seed, KEY_CHAIN, c)
    ICA init          stream(seed, KEY_ICA)
    bootstrap b       stream(seed, KEY_BOOTSTRAP, b)
"""

from __future__ import annotations

import numpy as np

KEY_SYNTH = 11
KEY_CHAIN = 21
KEY_ICA = 31
KEY_BOOTSTRAP = 41
KEY_SCENARIO = 51


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return a PCG64 generator for the (seed, key) namespace."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=key))
    )
