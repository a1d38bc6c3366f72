"""Seeded random streams built on the Philox4x64-10 counter-based generator.

Every stochastic operation in helios takes an integer seed. Independent
streams are addressed by ``(seed, *path)``: the path components (purpose tags
and indices) are hashed together with the seed by ``numpy.random.SeedSequence``
into a 128-bit Philox key. Because Philox is counter-based, the n-th raw word
of a stream is a pure function of ``(key, n)``, which is what makes per-index
noise independent of evaluation order.
"""
import zlib

import numpy as np

CANONICAL_SEED = 0xDEADBEEF

_U53 = 1.0 / 9007199254740992.0  # 2**-53


def _tag(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part) & 0xFFFFFFFFFFFFFFFF


def philox_key(seed, *path):
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag(p) for p in path]
    words = np.random.SeedSequence(entropy).generate_state(2, np.uint64)
    return int(words[0]) | (int(words[1]) << 64)


def bit_generator(seed, *path):
    return np.random.Philox(key=philox_key(seed, *path))


def generator(seed, *path):
    """A ``numpy.random.Generator`` on the Philox stream ``(seed, *path)``."""
    return np.random.Generator(bit_generator(seed, *path))


def indexed_normals(seed, count, *path):
    """``count`` pairs of independent standard normals, pair m from words 2m, 2m+1.

    Box-Muller on 53-bit uniforms taken directly from the raw counter stream,
    so pair m depends only on the key and m.
    """
    raw = bit_generator(seed, *path).random_raw(2 * count)
    u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _U53  # (0, 1]
    u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _U53          # [0, 1)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    return np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)
