"""Multichannel PCG conditioning, feature extraction and evaluation."""

from ._pcgkit import *  # noqa: F401,F403
from ._pcgkit import (
    ConfigError,
    ContractError,
    DataError,
    Error,
    InvariantError,
)

NOR = 0
CAD = 1

__version__ = "0.1.0"


def intervals_to_mask(intervals, n):
    """Boolean per-sample mask from an (k, 2) array of inclusive intervals."""
    import numpy as np

    mask = np.zeros(n, dtype=bool)
    for start, end in intervals:
        mask[start : end + 1] = True
    return mask
