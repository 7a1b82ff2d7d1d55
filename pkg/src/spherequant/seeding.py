"""Named random sub-streams derived from one integer seed."""
import zlib

import numpy as np

STREAMS = ("data", "solver", "uniform", "test", "outliers")


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for ``name`` (and optional integer tags) under ``seed``.

    The stream key is a CRC of the name, so adding streams never shifts
    existing ones.
    """
    key = zlib.crc32(name.encode())
    return np.random.default_rng([int(seed), key, *map(int, extra)])


def subseed(seed: int, name: str, *extra: int) -> int:
    """Integer seed drawn from :func:`substream`, for APIs that take ints."""
    return int(substream(seed, name, *extra).integers(0, 2**63 - 1))
