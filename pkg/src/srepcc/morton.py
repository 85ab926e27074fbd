"""Morton (z-order) keys for integer voxel coordinates.

Coordinates are biased by 2**20 so that small negative values (produced by
centred generative kernels near a block border) still pack into 21 bits per
axis. Within each 3-bit group the x bit is the most significant, which is the
same child-index convention used by the octree coder.
"""

import numpy as np

BIAS = 1 << 20
_MASK21 = np.uint64((1 << 21) - 1)


def _spread(v):
    v = v & _MASK21
    v = (v | (v << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v << np.uint64(2))) & np.uint64(0x1249249249249249)
    return v


def _compact(v):
    v = v & np.uint64(0x1249249249249249)
    v = (v | (v >> np.uint64(2))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v >> np.uint64(4))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v >> np.uint64(8))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v >> np.uint64(16))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v >> np.uint64(32))) & _MASK21
    return v


def encode(coords, bias=BIAS):
    """Return uint64 Morton keys for an (n, 3) integer array."""
    c = np.asarray(coords, dtype=np.int64).reshape(-1, 3) + bias
    if c.size and (c.min() < 0 or c.max() >= (1 << 21)):
        raise ValueError("coordinate outside the 21-bit Morton range")
    c = c.astype(np.uint64)
    return (
        (_spread(c[:, 0]) << np.uint64(2))
        | (_spread(c[:, 1]) << np.uint64(1))
        | _spread(c[:, 2])
    )


def decode(keys, bias=BIAS):
    keys = np.asarray(keys, dtype=np.uint64)
    x = _compact(keys >> np.uint64(2))
    y = _compact(keys >> np.uint64(1))
    z = _compact(keys)
    return np.stack([x, y, z], axis=1).astype(np.int64) - bias


def sort_unique(coords):
    """Deduplicate coordinates and return them in Morton order with their keys."""
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    keys = encode(coords)
    keys, first = np.unique(keys, return_index=True)
    return coords[first], keys
