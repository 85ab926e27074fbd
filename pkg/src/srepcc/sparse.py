"""Sparse tensors, kernel maps and sparse / generative-transposed convolutions.

Coordinates of a :class:`CoordSet` are kept distinct and sorted by Morton key;
lookups are binary searches on that key array, so every kernel map has a fixed,
reproducible order (offsets lexicographic, pairs in input order).  Derived
coordinate sets and kernel maps are cached on the source set, so a fixed input
reuses its whole coordinate structure across forward passes.
"""

import itertools

import numpy as np
import scipy.sparse as sp

from . import morton
from .autograd import Var, as_var, record, take_rows
from .errors import ConfigError, ShapeError


def kernel_offsets(kernel):
    """Offsets of a cubic kernel: centred for odd sizes, [0, k) for even ones."""
    if kernel < 1:
        raise ConfigError("kernel size must be >= 1")
    lo = -(kernel // 2) if kernel % 2 else 0
    rng = range(lo, lo + kernel)
    return np.array(list(itertools.product(rng, rng, rng)), dtype=np.int64)


class CoordSet:
    __slots__ = ("coords", "keys", "stride", "_cache", "__weakref__")

    def __init__(self, coords, stride=1, presorted=False):
        if presorted:
            coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
            keys = morton.encode(coords)
        else:
            coords, keys = morton.sort_unique(coords)
        if len(coords) and np.any(coords % stride):
            raise ShapeError("coordinates not divisible by the tensor stride")
        self.coords = coords
        self.keys = keys
        self.stride = int(stride)
        self._cache = {}

    def __len__(self):
        return len(self.coords)

    def lookup(self, query):
        """Row index of each query coordinate, -1 where absent."""
        q = morton.encode(query)
        if len(self.keys) == 0:
            return np.full(len(q), -1, dtype=np.int64)
        pos = np.searchsorted(self.keys, q)
        pos = np.minimum(pos, len(self.keys) - 1)
        hit = self.keys[pos] == q
        return np.where(hit, pos, -1)

    def cached(self, key, build):
        val = self._cache.get(key)
        if val is None:
            val = build()
            self._cache[key] = val
        return val

    def downsampled(self, factor):
        s = self.stride * factor

        def build():
            return CoordSet((self.coords // s) * s, stride=s)

        return self.cached(("down", factor), build)

    def subset(self, rows):
        rows = np.sort(np.asarray(rows, dtype=np.int64))
        return CoordSet(self.coords[rows], self.stride, presorted=True)


class SparseTensor:
    __slots__ = ("cset", "feats")

    def __init__(self, cset, feats):
        if not isinstance(cset, CoordSet):
            raise TypeError("cset must be a CoordSet")
        feats = as_var(feats)
        if feats.value.ndim != 2 or feats.shape[0] != len(cset):
            raise ShapeError("feature rows must match the coordinate count")
        self.cset = cset
        self.feats = feats

    @classmethod
    def from_points(cls, coords, feats=None, stride=1):
        cset = CoordSet(coords, stride)
        if feats is None:
            feats = np.ones((len(cset), 1))
        return cls(cset, feats)

    @property
    def coords(self):
        return self.cset.coords

    @property
    def stride(self):
        return self.cset.stride

    @property
    def channels(self):
        return self.feats.shape[1]

    def __len__(self):
        return len(self.cset)

    def with_feats(self, feats):
        return SparseTensor(self.cset, feats)


class KernelMap:
    """Per-offset (input_index, output_index) pairs; each offset's map is injective.

    ``matrix()`` packs all pairs into one selection matrix of shape
    (n_out, n_in * K) with a 1 at (o, i * K + k), so a convolution becomes a
    dense product X @ W followed by one sparse product.
    """

    __slots__ = ("offsets", "pairs", "n_in", "n_out", "_matrix")

    def __init__(self, offsets, pairs, n_in, n_out):
        self.offsets = offsets
        self.pairs = pairs
        self.n_in = n_in
        self.n_out = n_out
        self._matrix = None

    def num_pairs(self):
        return sum(len(i) for i, _ in self.pairs)

    def is_identity(self):
        if len(self.pairs) != 1 or self.n_in != self.n_out:
            return False
        ii, oo = self.pairs[0]
        return len(ii) == self.n_in and bool(np.all(ii == oo))

    def matrix(self):
        if self._matrix is None:
            K = len(self.pairs)
            rows = np.concatenate([oo for _, oo in self.pairs]).astype(np.int64)
            cols = np.concatenate([ii.astype(np.int64) * K + k for k, (ii, _) in enumerate(self.pairs)])
            m = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n_out, self.n_in * K))
            m.sort_indices()
            self._matrix = m
        return self._matrix


def build_kernel_map(in_set, out_set, kernel, mode="conv", step=None):
    """Kernel map between two coordinate sets.

    ``mode="conv"``: output ``o`` gathers input ``o + d * in_stride`` (stride-1 or
    strided sparse convolution).  ``mode="gen"``: input ``i`` scatters to output
    ``i + d * out_stride`` (generative transposed convolution).
    """
    offs = kernel_offsets(kernel)
    pairs = []
    n_in = len(in_set)
    for d in offs:
        if mode == "conv":
            delta = d * (in_set.stride if step is None else step)
            out_idx = out_set.lookup(in_set.coords - delta)
        elif mode == "gen":
            delta = d * (out_set.stride if step is None else step)
            out_idx = out_set.lookup(in_set.coords + delta)
        else:
            raise ValueError(mode)
        hit = np.nonzero(out_idx >= 0)[0]
        pairs.append((hit.astype(np.int32), out_idx[hit].astype(np.int32)))
    return KernelMap(offs, pairs, n_in, len(out_set))


def _conv_map(in_set, out_set, kernel):
    return in_set.cached(("conv", kernel, id(out_set)), lambda: build_kernel_map(in_set, out_set, kernel, "conv"))


def generated_set(in_set, kernel, up, clip=None):
    """Output coordinates of a generative transposed convolution.

    ``clip=(size, period)`` keeps candidates whose coordinates modulo
    ``period`` are all below ``size``; with blocks placed at multiples of
    ``period`` this confines every block's candidates to its own cube.
    """
    if in_set.stride % up:
        raise ConfigError(f"tensor stride {in_set.stride} not divisible by up-stride {up}")

    def build():
        s_out = in_set.stride // up
        offs = kernel_offsets(kernel) * s_out
        cand = (in_set.coords[:, None, :] + offs[None, :, :]).reshape(-1, 3)
        if clip is not None:
            size, period = clip
            keep = np.all(np.mod(cand, period) < size, axis=1)
            cand = cand[keep]
        return CoordSet(cand, stride=s_out)

    return in_set.cached(("gen", kernel, up, clip), build)


def _gen_map(in_set, out_set, kernel):
    return in_set.cached(("genmap", kernel, id(out_set)), lambda: build_kernel_map(in_set, out_set, kernel, "gen"))


def _mapped_linear(x, weight, bias, kmap, out_set):
    xv = x.feats.value
    W = weight.value
    K, cin, cout = W.shape
    identity = kmap.is_identity()
    if identity:
        out = xv @ W[0]
    else:
        wcat = W.transpose(1, 0, 2).reshape(cin, K * cout)
        out = kmap.matrix() @ (xv @ wcat).reshape(-1, cout)
    inputs = [x.feats, weight]
    if bias is not None:
        out = out + bias.value
        inputs.append(bias)
    need_x = x.feats.requires_grad

    def vjp(g):
        if identity:
            gW = (xv.T @ g)[None]
            gx = g @ W[0].T if need_x else None
        else:
            gy = (kmap.matrix().T @ g).reshape(len(xv), K * cout)
            gW = (xv.T @ gy).reshape(cin, K, cout).transpose(1, 0, 2)
            gx = gy @ wcat.T if need_x else None
        res = [gx, gW]
        if bias is not None:
            res.append(g.sum(axis=0))
        return res

    return SparseTensor(out_set, record(out, inputs, vjp))


def _check(x, weight, kernel):
    k3, cin, _ = weight.shape
    if k3 != kernel ** 3:
        raise ShapeError(f"weight has {k3} taps, kernel {kernel} needs {kernel ** 3}")
    if x.channels != cin:
        raise ShapeError(f"input has {x.channels} channels, layer expects {cin}")


def sparse_conv(x, weight, bias=None, kernel=3, stride=1):
    """Sparse convolution; ``stride > 1`` down-samples to floor(c / s) * s."""
    weight = as_var(weight)
    bias = None if bias is None else as_var(bias)
    _check(x, weight, kernel)
    out_set = x.cset if stride == 1 else x.cset.downsampled(stride)
    kmap = _conv_map(x.cset, out_set, kernel)
    return _mapped_linear(x, weight, bias, kmap, out_set)


def generative_transposed_conv(x, weight, bias=None, kernel=2, up=2, clip=None):
    """Creates outputs at every kernel position (stride x.stride / up) of every input."""
    weight = as_var(weight)
    bias = None if bias is None else as_var(bias)
    _check(x, weight, kernel)
    out_set = generated_set(x.cset, kernel, up, clip)
    kmap = _gen_map(x.cset, out_set, kernel)
    return _mapped_linear(x, weight, bias, kmap, out_set)


def restrict(x, target):
    """Select the rows of ``x`` at the coordinates of ``target`` (a subset)."""
    hit = x.cset._cache.get(("restrict", id(target)))
    if hit is None or hit[0] is not target:
        idx = x.cset.lookup(target.coords)
        if np.any(idx < 0):
            raise ShapeError("target coordinates are not a subset of the tensor")
        hit = (target, idx)
        x.cset._cache[("restrict", id(target))] = hit
    return SparseTensor(target, take_rows(x.feats, hit[1]))


def top_k_indices(probs, k):
    """Indices of the k largest probabilities; ties go to the lower row
    (rows are in Morton order).  Returned indices are ascending."""
    if k <= 0:
        raise ValueError("k must be positive")
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    if k >= len(p):
        return np.arange(len(p))
    order = np.lexsort((np.arange(len(p)), -p))
    return np.sort(order[:k])


def prune_top_k(x, probs, k):
    p = np.asarray(probs.value if isinstance(probs, Var) else probs).reshape(-1)
    if len(p) != len(x):
        raise ShapeError("one probability per coordinate is required")
    keep = top_k_indices(p, k)
    if len(keep) == len(x):
        return x
    return SparseTensor(x.cset.subset(keep), take_rows(x.feats, keep))
