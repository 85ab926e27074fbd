"""Declarative layer graphs, parameter accounting and the ParameterStore format."""

import io
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import autograd as ag
from .errors import ConfigError, ShapeError
from .sparse import generative_transposed_conv, sparse_conv

ACTIVATIONS = ("none", "relu", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "SpConv" | "GTSpConv"
    kernel: int
    in_ch: int
    out_ch: int
    stride: int = 1
    bias: bool = True
    activation: str = "none"
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("SpConv", "GTSpConv"):
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.kernel < 1 or self.in_ch < 1 or self.out_ch < 1:
            raise ConfigError("kernel and channel counts must be >= 1")
        if self.stride not in (1, 2, 4):
            raise ConfigError(f"stride must be 1, 2 or 4, got {self.stride}")
        if self.kind == "GTSpConv" and self.stride == 1:
            raise ConfigError("a generative transposed conv needs an up-stride")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def num_params(self):
        return self.kernel ** 3 * self.in_ch * self.out_ch + (self.out_ch if self.bias else 0)

    def __str__(self):
        arrow = "" if self.stride == 1 else ("↑" if self.kind == "GTSpConv" else "↓")
        return f"{self.kind}({self.kernel}³, {self.in_ch}, {self.out_ch}, {self.stride}{arrow})"


def SpConv(kernel, cin, cout, stride=1, bias=True, activation="none", name=""):
    return LayerSpec("SpConv", kernel, cin, cout, stride, bias, activation, name)


def GTSpConv(kernel, cin, cout, up=2, bias=True, activation="none", name=""):
    return LayerSpec("GTSpConv", kernel, cin, cout, up, bias, activation, name)


@dataclass(frozen=True)
class IRBSpec:
    """Inception-residual block: out = x + concat(A(x), B(x)).

    A: 3³ N→N (bias, ReLU), 3³ N→N/2 (bias, ReLU), 1³ N/2→N/2.
    B: 1³ N→N (bias, ReLU), 1³ N→N/2 (ReLU), 1³ N/2→N/2.
    Parameter count is 42.5·N² + 2.5·N.
    """

    channels: int
    name: str = ""

    def __post_init__(self):
        if self.channels < 4 or self.channels % 2:
            raise ConfigError(f"IRB needs an even channel count >= 4, got {self.channels}")

    def branches(self):
        n, h = self.channels, self.channels // 2
        a = (
            SpConv(3, n, n, bias=True, activation="relu", name="a0"),
            SpConv(3, n, h, bias=True, activation="relu", name="a1"),
            SpConv(1, h, h, bias=False, name="a2"),
        )
        b = (
            SpConv(1, n, n, bias=True, activation="relu", name="b0"),
            SpConv(1, n, h, bias=False, activation="relu", name="b1"),
            SpConv(1, h, h, bias=False, name="b2"),
        )
        return a, b

    @property
    def num_params(self):
        a, b = self.branches()
        return sum(layer.num_params for layer in a + b)

    @property
    def in_ch(self):
        return self.channels

    out_ch = in_ch

    def __str__(self):
        return f"IRB({self.channels})"


@dataclass(frozen=True)
class ModelSpec:
    name: str
    items: tuple

    def __post_init__(self):
        named = []
        for i, item in enumerate(self.items):
            named.append(replace(item, name=item.name or f"l{i}"))
        object.__setattr__(self, "items", tuple(named))
        for prev, nxt in zip(self.items, self.items[1:]):
            if prev.out_ch != nxt.in_ch:
                raise ConfigError(
                    f"{self.name}: {prev} outputs {prev.out_ch} channels but {nxt} expects {nxt.in_ch}"
                )

    def param_layers(self):
        """(qualified name, LayerSpec) for every conv, IRBs expanded."""
        out = []
        for item in self.items:
            if isinstance(item, IRBSpec):
                a, b = item.branches()
                for layer in a + b:
                    out.append((f"{self.name}.{item.name}.{layer.name}", layer))
            else:
                out.append((f"{self.name}.{item.name}", item))
        return out


def count_parameters(spec):
    """Total trainable parameters and a per-item breakdown [(label, count)]."""
    rows = []
    for item in spec.items:
        rows.append((f"{item.name}: {item}", item.num_params))
    return sum(n for _, n in rows), rows


# ---------------------------------------------------------------------------
# parameters


class ParameterStore:
    """Ordered mapping name -> Var; weights are (k³, in, out), biases (out,)."""

    def __init__(self, entries=None):
        self.entries = dict(entries or {})

    def __getitem__(self, key):
        return self.entries[key]

    def __contains__(self, key):
        return key in self.entries

    def __iter__(self):
        return iter(self.entries)

    def items(self):
        return self.entries.items()

    def get(self, key, default=None):
        return self.entries.get(key, default)

    def add(self, key, value, requires_grad=True):
        self.entries[key] = ag.Var(value, requires_grad=requires_grad, name=key)
        return self.entries[key]

    def num_params(self, prefix=""):
        return sum(v.value.size for k, v in self.entries.items() if k.startswith(prefix))

    def subset(self, prefixes):
        return [v for k, v in self.entries.items() if k.startswith(tuple(prefixes))]

    def snapshot(self):
        return {k: v.value.copy() for k, v in self.entries.items()}

    def load_snapshot(self, snap):
        for k, val in snap.items():
            self.entries[k].value = np.array(val, dtype=np.float64)

    def copy(self):
        return ParameterStore({k: ag.Var(v.value.copy(), v.requires_grad, k) for k, v in self.entries.items()})

    def round_to_f32(self):
        for v in self.entries.values():
            v.value = v.value.astype(np.float32).astype(np.float64)


def init_parameters(store, spec, rng):
    """He-uniform weights, zero biases."""
    for qname, layer in spec.param_layers():
        fan_in = layer.kernel ** 3 * layer.in_ch
        bound = np.sqrt(6.0 / fan_in)
        store.add(qname + ".weight", rng.uniform(-bound, bound, (layer.kernel ** 3, layer.in_ch, layer.out_ch)))
        if layer.bias:
            store.add(qname + ".bias", np.zeros(layer.out_ch))
    return store


_MAGIC = b"SRPS"
_VERSION = 1


def save_parameters(store, path_or_file):
    """Layer manifest followed by a flat little-endian f32 stream (see docs/FORMATS.md)."""
    buf = io.BytesIO()
    names = [k for k in store.entries if not k.endswith(".bias")]
    buf.write(_MAGIC + struct.pack("<BI", _VERSION, len(names)))
    for i, name in enumerate(names):
        w = store.entries[name].value
        if w.ndim != 3:
            raise ShapeError(f"{name}: expected a 3-d (taps, in, out) array")
        base = name[: -len(".weight")] if name.endswith(".weight") else name
        has_bias = (base + ".bias") in store.entries
        enc = name.encode("utf-8")
        buf.write(struct.pack("<IIIIBH", i, *w.shape, int(has_bias), len(enc)) + enc)
    for name in names:
        w = store.entries[name].value
        buf.write(w.astype("<f4").tobytes())
        base = name[: -len(".weight")] if name.endswith(".weight") else name
        if (base + ".bias") in store.entries:
            buf.write(store.entries[base + ".bias"].value.astype("<f4").tobytes())
    data = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(data)
    else:
        with open(path_or_file, "wb") as fh:
            fh.write(data)


def load_parameters(path_or_bytes):
    if isinstance(path_or_bytes, (bytes, bytearray)):
        data = bytes(path_or_bytes)
    else:
        with open(path_or_bytes, "rb") as fh:
            data = fh.read()
    if data[:4] != _MAGIC:
        raise ShapeError("not a parameter file")
    version, count = struct.unpack_from("<BI", data, 4)
    if version != _VERSION:
        raise ShapeError(f"unsupported parameter file version {version}")
    pos = 9
    manifest = []
    for _ in range(count):
        idx, k3, cin, cout, has_bias, nlen = struct.unpack_from("<IIIIBH", data, pos)
        pos += struct.calcsize("<IIIIBH")
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        manifest.append((name, (k3, cin, cout), bool(has_bias)))
    store = ParameterStore()
    for name, shape, has_bias in manifest:
        n = shape[0] * shape[1] * shape[2]
        w = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(shape)
        pos += 4 * n
        store.add(name, w.astype(np.float64))
        if has_bias:
            b = np.frombuffer(data, dtype="<f4", count=shape[2], offset=pos)
            pos += 4 * shape[2]
            base = name[: -len(".weight")] if name.endswith(".weight") else name
            store.add(base + ".bias", b.astype(np.float64))
    if pos != len(data):
        raise ShapeError("trailing bytes in parameter file")
    return store


# ---------------------------------------------------------------------------
# execution


def _activate(feats, activation):
    if activation == "relu":
        return ag.relu(feats)
    if activation == "sigmoid":
        return ag.sigmoid(feats)
    return feats


def apply_layer(x, layer, params, qname, clip=None):
    w = params[qname + ".weight"]
    b = params.get(qname + ".bias") if layer.bias else None
    if layer.kind == "SpConv":
        y = sparse_conv(x, w, b, kernel=layer.kernel, stride=layer.stride)
    else:
        y = generative_transposed_conv(x, w, b, kernel=layer.kernel, up=layer.stride, clip=clip)
    return y.with_feats(_activate(y.feats, layer.activation))


def irb_forward(x, block, params, prefix):
    a_layers, b_layers = block.branches()
    a = x
    for layer in a_layers:
        a = apply_layer(a, layer, params, f"{prefix}.{layer.name}")
    b = x
    for layer in b_layers:
        b = apply_layer(b, layer, params, f"{prefix}.{layer.name}")
    joined = ag.concat_columns([a.feats, b.feats])
    return x.with_feats(ag.add(x.feats, joined))


def run_items(spec, params, x, start=0, stop=None, clip=None):
    for item in spec.items[start:stop]:
        qname = f"{spec.name}.{item.name}"
        if isinstance(item, IRBSpec):
            x = irb_forward(x, item, params, qname)
        else:
            x = apply_layer(x, item, params, qname, clip=clip)
    return x
