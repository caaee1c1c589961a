"""NumPy fallback for the tuple-coverage kernels.

Mirrors the compiled module's interface exactly; conftuner.kernels picks
one of the two at import time.
"""

import numpy as np


def _tuple_ids(level_indices, combos, offsets, strides):
    picked = level_indices[..., combos].astype(np.int64)
    return (picked * strides).sum(axis=-1) + offsets


def count_new(rows, combos, offsets, strides, covered, out):
    """For each candidate row, count the currently uncovered tuples it hits."""
    ids = _tuple_ids(rows, combos, offsets, strides)
    (covered[ids] == 0).sum(axis=1, dtype=np.int64, out=out)


def mark_row(row, combos, offsets, strides, covered):
    """Mark every tuple of the row as covered; returns the newly covered count."""
    ids = _tuple_ids(row, combos, offsets, strides)
    fresh = int((covered[ids] == 0).sum())
    covered[ids] = 1
    return fresh
