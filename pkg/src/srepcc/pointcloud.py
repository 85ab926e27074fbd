"""Voxelized point clouds, block partitioning and sampling-factor scaling."""

from dataclasses import dataclass

import numpy as np

from . import morton
from .errors import ConfigError, IntegrityError

SAMPLING_FACTORS = (1, 2, 4)


def check_sf(sf):
    if sf not in SAMPLING_FACTORS:
        raise ConfigError(f"sampling factor must be one of {SAMPLING_FACTORS}, got {sf!r}")
    return int(sf)


def is_pow2(n):
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


def block_bit_depth(block_size):
    """Bit depth of local coordinates inside a block (PSNR peak block_size - 1)."""
    return int(block_size).bit_length() - 1


def _canonical(points):
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 3)
    if len(pts) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    if pts.min() < 0:
        raise ValueError("voxel coordinates must be non-negative")
    # lexicographic (x, y, z) order; Morton order is imposed later where needed
    return np.unique(pts, axis=0)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Set of occupied voxels; ``points`` is a deduplicated (n, 3) int64 array."""

    points: np.ndarray
    bit_depth: int

    def __post_init__(self):
        pts = _canonical(self.points)
        if len(pts) and pts.max() > (1 << self.bit_depth) - 1:
            raise ValueError(
                f"coordinate {int(pts.max())} exceeds bit depth {self.bit_depth}"
            )
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(
            np.array_equal(self.points, other.points)
        )

    @classmethod
    def from_points(cls, points, bit_depth=None):
        pts = _canonical(points)
        if bit_depth is None:
            bit_depth = min_bit_depth(pts)
        return cls(pts, bit_depth)


def min_bit_depth(points):
    pts = np.asarray(points).reshape(-1, 3)
    if len(pts) == 0:
        return 1
    return max(1, int(pts.max()).bit_length())


@dataclass(frozen=True, eq=False)
class Block:
    origin: tuple
    local_points: np.ndarray
    block_size: int

    def __post_init__(self):
        pts = _canonical(self.local_points)
        if len(pts) and pts.max() >= self.block_size:
            raise IntegrityError("local coordinate outside the block")
        pts.setflags(write=False)
        object.__setattr__(self, "local_points", pts)
        object.__setattr__(self, "origin", tuple(int(v) for v in self.origin))

    def __len__(self):
        return len(self.local_points)

    def __eq__(self, other):
        if not isinstance(other, Block):
            return NotImplemented
        return (
            self.origin == other.origin
            and self.block_size == other.block_size
            and np.array_equal(self.local_points, other.local_points)
        )

    def global_points(self):
        return self.local_points + np.asarray(self.origin, dtype=np.int64) * self.block_size

    def morton_points(self):
        """Local points in Morton order (the canonical order for coding)."""
        return morton.sort_unique(self.local_points)[0]


def partition_blocks(pc, block_size):
    """Split a cloud into non-empty blocks sorted by (z, y, x)-major origin."""
    if not is_pow2(block_size) or block_size < 8:
        raise ConfigError(f"block size must be a power of two >= 8, got {block_size!r}")
    pts = pc.points
    if len(pts) == 0:
        return []
    origins = pts // block_size
    local = pts - origins * block_size
    order = np.lexsort((origins[:, 0], origins[:, 1], origins[:, 2]))
    origins, local = origins[order], local[order]
    uniq, start = np.unique(origins[:, ::-1], axis=0, return_index=True)
    # np.unique on (z, y, x) rows gives the same (z, y, x)-major order as lexsort
    bounds = list(start) + [len(pts)]
    blocks = []
    for j in range(len(uniq)):
        sl = slice(bounds[j], bounds[j + 1])
        blocks.append(Block(tuple(uniq[j][::-1]), local[sl], block_size))
    return blocks


def merge_blocks(blocks, bit_depth=None):
    origins = [b.origin for b in blocks]
    if len(set(origins)) != len(origins):
        raise IntegrityError("duplicate block origins")
    if not blocks:
        return PointCloud(np.zeros((0, 3), dtype=np.int64), bit_depth or 1)
    pts = np.concatenate([b.global_points() for b in blocks], axis=0)
    return PointCloud.from_points(pts, bit_depth)


def downsample_block(b, sf):
    sf = check_sf(sf)
    if sf == 1:
        return b
    if b.block_size % sf:
        raise ConfigError("block size not divisible by the sampling factor")
    return Block(b.origin, b.local_points // sf, b.block_size // sf)


def upsample_coords(b, sf):
    sf = check_sf(sf)
    if sf == 1:
        return b
    return Block(b.origin, b.local_points * sf, b.block_size * sf)
