"""Labeled random substreams.

Every random component of a simulation draws from its own generator,
derived from the master seed and a tuple of labels::

    substream(seed, "signals", u)      # activity and channels of source u
    substream(seed, "noise")           # observation noise
    substream(seed, "dict", u)         # dictionary of source u
    substream(seed, "se", "x", u)      # state-evolution prior samples
    substream(seed, "grid", i, "trial", k, ...)  # CLI sweeps

Labels are mapped to 32-bit words (integers as-is, strings by CRC32) and
used as the ``spawn_key`` of a :class:`numpy.random.SeedSequence`, so a
stream depends only on the seed and its labels, never on the order in
which other streams were created.
"""

from __future__ import annotations

import zlib

import numpy as np


def _word(label) -> int:
    if isinstance(label, (bool, np.bool_)):
        return int(label)
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"negative stream label {label}")
        return int(label) & 0xFFFFFFFF
    return zlib.crc32(str(label).encode("utf-8"))


def substream(seed: int, *labels) -> np.random.Generator:
    key = tuple(_word(lab) for lab in labels)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))
