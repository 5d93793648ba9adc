"""Reproducible random-number streams.

All randomness flows from a single 64-bit master seed.  Streams are
counter-based (Philox) so that independent substreams are cheap and the
splitting rule is explicit:

* replica ``i`` of an ensemble uses ``Philox(key=(master_seed, i))``;
* a named verifier stream uses ``Philox(key=(master_seed, tag(name)))``
  where ``tag`` is the first 8 bytes of SHA-256 of the name.

Nothing in the package ever seeds from the wall clock.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = 2**64


def stream_tag(name: str) -> int:
    """Stable 64-bit tag for a named stream."""
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def substream(master_seed: int, index: int) -> np.random.Generator:
    """Independent generator for (master_seed, index)."""
    key = np.array([master_seed % _U64, index % _U64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def named_stream(master_seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named verifier stream."""
    return substream(master_seed, stream_tag(name))
