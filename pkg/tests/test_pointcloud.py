import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from srepcc import morton
from srepcc.errors import ConfigError, IntegrityError
from srepcc.pointcloud import (
    Block, PointCloud, check_sf, downsample_block, merge_blocks, partition_blocks, upsample_coords,
)

coords = hnp.arrays(np.int64, st.tuples(st.integers(1, 300), st.just(3)), elements=st.integers(0, 255))
pow2 = st.sampled_from([8, 16, 32, 64, 128])


def test_partition_example():
    pc = PointCloud.from_points([[70, 3, 130]], 8)
    (b,) = partition_blocks(pc, 64)
    assert b.origin == (1, 0, 2)
    assert b.local_points.tolist() == [[6, 3, 2]]
    assert merge_blocks([b], 8) == pc


def test_single_block():
    pts = np.random.default_rng(0).integers(0, 64, (500, 3))
    blocks = partition_blocks(PointCloud.from_points(pts, 8), 64)
    assert len(blocks) == 1 and blocks[0].origin == (0, 0, 0)


def test_partition_counts():
    pts = np.random.default_rng(1).integers(0, 1024, (10_000, 3))
    pc = PointCloud.from_points(pts, 10)
    for bs in (8, 64, 256):
        assert sum(len(b) for b in partition_blocks(pc, bs)) == len(pc)


def test_partition_order_zyx_major():
    pts = np.random.default_rng(2).integers(0, 256, (3000, 3))
    origins = [b.origin for b in partition_blocks(PointCloud.from_points(pts, 8), 16)]
    assert origins == sorted(origins, key=lambda o: (o[2], o[1], o[0]))


def test_partition_rejects_bad_size():
    pc = PointCloud.from_points([[1, 2, 3]], 8)
    for bs in (0, 4, 12, 48):
        with pytest.raises(ConfigError):
            partition_blocks(pc, bs)


def test_merge_examples():
    assert len(merge_blocks([])) == 0
    a = Block((0, 0, 0), [[1, 1, 1]], 8)
    b = Block((1, 0, 0), [[2, 0, 0]], 8)
    assert merge_blocks([a, b]).points.tolist() == [[1, 1, 1], [10, 0, 0]]
    with pytest.raises(IntegrityError):
        merge_blocks([a, a])


@given(coords, pow2)
def test_partition_merge_bijection(pts, bs):
    pc = PointCloud.from_points(pts, 8)
    blocks = partition_blocks(pc, bs)
    assert all(len(b) > 0 for b in blocks)
    assert merge_blocks(blocks, 8) == pc


def test_downsample_examples():
    b = Block((0, 0, 0), [[0, 0, 0], [1, 1, 1]], 8)
    d = downsample_block(b, 2)
    assert d.local_points.tolist() == [[0, 0, 0]] and d.block_size == 4
    assert downsample_block(b, 1) == b
    rng = np.random.default_rng(3)
    shell = rng.integers(0, 32, (400, 3))
    blk = Block((0, 0, 0), shell, 32)
    assert len(downsample_block(blk, 4)) == len({tuple(p // 4) for p in shell})


def test_upsample_example():
    u = upsample_coords(Block((0, 0, 0), [[1, 2, 3]], 8), 2)
    assert u.local_points.tolist() == [[2, 4, 6]] and u.block_size == 16


@given(coords, st.sampled_from([1, 2, 4]))
def test_sampling_properties(pts, sf):
    b = Block((0, 0, 0), pts, 256)
    up = upsample_coords(b, sf)
    assert len(up) == len(b)
    assert downsample_block(up, sf) == b
    assert len(downsample_block(b, sf)) <= len(b)


def test_sampling_factor_values():
    for sf in (1, 2, 4):
        assert check_sf(sf) == sf
    for sf in (0, 3, 8):
        with pytest.raises(ConfigError):
            check_sf(sf)


def test_dedup_and_bit_depth():
    pc = PointCloud.from_points([[1, 1, 1], [1, 1, 1], [0, 0, 0]])
    assert len(pc) == 2
    with pytest.raises(ValueError):
        PointCloud([[8, 0, 0]], 3)


@given(hnp.arrays(np.int64, st.tuples(st.integers(0, 200), st.just(3)), elements=st.integers(-1000, 1000)))
def test_morton_round_trip(c):
    assert np.array_equal(morton.decode(morton.encode(c)), c)


def test_morton_order_matches_octree_child_index():
    # x bit is the most significant bit of each 3-bit group
    keys = morton.encode(np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1]]), bias=0)
    assert keys.tolist() == [4, 2, 1]
