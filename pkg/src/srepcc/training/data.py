"""Deterministic synthetic surface blocks standing in for a real training set."""

import numpy as np

from ..errors import ConfigError
from ..pointcloud import Block

KINDS = ("sphere_shell", "plane", "noisy_surface")


def _grid(size):
    g = np.arange(size)
    return np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)


def sphere_shell(block_size, rng, radius=None, center=None):
    if radius is None:
        radius = rng.uniform(0.25, 0.42) * block_size
    if center is None:
        center = block_size / 2 + rng.uniform(-1.5, 1.5, 3)
    p = _grid(block_size)
    d = np.linalg.norm(p + 0.0 - center, axis=1)
    return p[np.abs(d - radius) <= 0.5]


def plane(block_size, rng, normal=None, offset=None):
    if normal is None:
        normal = rng.normal(size=3)
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    if offset is None:
        offset = float(n @ (np.full(3, block_size / 2) + rng.uniform(-3, 3, 3)))
    p = _grid(block_size)
    # half-width along the dominant axis keeps the slab one voxel thick but gap free
    half = 0.5 * np.abs(n).max()
    return p[np.abs(p @ n - offset) <= half + 1e-9]


def noisy_surface(block_size, rng):
    """Height field with low-frequency undulation and ±1 voxel noise, random axis order."""
    g = np.arange(block_size)
    u, v = np.meshgrid(g, g, indexing="ij")
    fu, fv = rng.uniform(0.5, 2.0, 2) * 2 * np.pi / block_size
    amp = rng.uniform(1.0, block_size / 6)
    h = block_size / 2 + amp * np.sin(fu * u + rng.uniform(0, 6.3)) * np.cos(fv * v + rng.uniform(0, 6.3))
    h = np.rint(h + rng.integers(-1, 2, h.shape)).astype(np.int64)
    pts = np.stack([u.ravel(), v.ravel(), h.ravel()], axis=1)
    pts = pts[(pts[:, 2] >= 0) & (pts[:, 2] < block_size)]
    return pts[:, rng.permutation(3)]


_GENERATORS = {"sphere_shell": sphere_shell, "plane": plane, "noisy_surface": noisy_surface}


def generate_training_blocks(kind, count, block_size=32, seed=0, **kwargs):
    """``count`` blocks of one kind (or of every kind in turn for ``kind="mixed"``)."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    if kind != "mixed" and kind not in _GENERATORS:
        raise ConfigError(f"unknown block kind {kind!r}")
    rng = np.random.default_rng(seed)
    blocks = []
    for i in range(count):
        k = KINDS[i % len(KINDS)] if kind == "mixed" else kind
        pts = _GENERATORS[k](block_size, rng, **kwargs)
        blocks.append(Block((0, 0, 0), pts, block_size))
    return blocks
