"""Breadth-first octree occupancy coding of voxel coordinates.

Each occupied node emits one byte whose bit ``c`` marks child ``c``, where the
child index is (x_bit << 2) | (y_bit << 1) | z_bit.  Bytes are range coded with
a single adaptive 256-symbol model.  Decoded coordinates come out in Morton
order.  A grid of extent 1 has no occupancy bytes: its only cell is implied.
"""

import numpy as np

from .. import morton
from ..errors import DecodeError, EncodeError
from ..pointcloud import is_pow2
from .rangecoder import AdaptiveModel, RangeDecoder, RangeEncoder


def _depth(extent):
    if not is_pow2(extent):
        raise EncodeError(f"octree extent must be a power of two, got {extent}")
    return int(extent).bit_length() - 1


def occupancy_bytes(coords, extent):
    """Occupancy bytes in breadth-first order, before entropy coding."""
    depth = _depth(extent)
    c = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    if len(c) == 0:
        return []
    if c.min() < 0 or c.max() >= extent:
        raise EncodeError("coordinate outside the octree extent")
    keys = np.unique(morton.encode(c, bias=0))
    out = []
    for level in range(depth):
        shift = np.uint64(3 * (depth - level - 1))
        nodes = np.unique(keys >> shift)
        parents = nodes >> np.uint64(3)
        bits = np.left_shift(1, (nodes & np.uint64(7)).astype(np.int64))
        starts = np.flatnonzero(np.r_[True, parents[1:] != parents[:-1]])
        out.extend(np.bitwise_or.reduceat(bits, starts).tolist())
    return out


def octree_encode(coords, extent):
    occ = occupancy_bytes(coords, extent)
    enc = RangeEncoder()
    model = AdaptiveModel()
    for b in occ:
        model.encode(enc, b)
    return enc.finish()


def octree_decode(data, extent):
    depth = _depth(extent)
    dec = RangeDecoder(data)
    model = AdaptiveModel()
    nodes = [0]
    for _ in range(depth):
        nxt = []
        for node in nodes:
            byte = model.decode(dec)
            if byte == 0:
                raise DecodeError("corrupt octree stream: empty node")
            base = node << 3
            for child in range(8):
                if byte >> child & 1:
                    nxt.append(base | child)
        nodes = nxt
    return morton.decode(np.asarray(nodes, dtype=np.uint64), bias=0)
