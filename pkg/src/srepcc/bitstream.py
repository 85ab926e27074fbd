"""Bitstream container: file header followed by per-block headers and payloads.

All integers are little-endian; the byte layout is documented in docs/BITSTREAM.md.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagicError, BitstreamError, TruncatedError, UnsupportedVersionError

MAGIC = b"SREP"
VERSION = 1
SF_CODES = {1: 0, 2: 1, 4: 2}
SF_FROM_CODE = {v: k for k, v in SF_CODES.items()}

_FILE_FIXED = struct.Struct("<4sBBBBfH")
_BLOCK = struct.Struct("<HHHBBIIIIII")


@dataclass
class BlockHeader:
    origin: tuple
    sf_code: int = 0
    sr_flag: int = 0
    k_c: int = 0
    k_s: int = 0
    n_latent: int = 0

    def __post_init__(self):
        self.origin = tuple(int(v) for v in self.origin)
        if self.sf_code not in SF_FROM_CODE:
            raise BitstreamError(f"invalid sf_code {self.sf_code}")
        if self.sr_flag not in (0, 1):
            raise BitstreamError(f"invalid sr_flag {self.sr_flag}")
        if self.sr_flag and self.sf_code == 0:
            raise BitstreamError("super-resolution requires a sampling factor above 1")
        if not self.sr_flag and self.k_s:
            raise BitstreamError("k_S must be 0 when super-resolution is off")
        if any(not 0 <= v < 1 << 16 for v in self.origin):
            raise BitstreamError("block origin does not fit u16")

    @property
    def sf(self):
        return SF_FROM_CODE[self.sf_code]


@dataclass
class BlockRecord:
    header: BlockHeader
    octree: bytes = b""
    hyper: bytes = b""
    latent: bytes = b""


@dataclass
class FileHeader:
    bit_depth: int
    block_size: int
    model_id: int
    qs: float
    hyper_scales: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.float32))

    def __post_init__(self):
        self.hyper_scales = np.asarray(self.hyper_scales, dtype=np.float32).reshape(-1)
        self.qs = float(np.float32(self.qs))
        bs = int(self.block_size)
        if bs < 1 or bs & (bs - 1):
            raise BitstreamError("block size must be a power of two")

    @property
    def block_size_log2(self):
        return int(self.block_size).bit_length() - 1

    def __eq__(self, other):
        return (
            isinstance(other, FileHeader)
            and (self.bit_depth, self.block_size, self.model_id, self.qs)
            == (other.bit_depth, other.block_size, other.model_id, other.qs)
            and np.array_equal(self.hyper_scales, other.hyper_scales)
        )


@dataclass
class Bitstream:
    header: FileHeader
    blocks: list = field(default_factory=list)


def serialize_bitstream(bs):
    h = bs.header
    out = bytearray(_FILE_FIXED.pack(
        MAGIC, VERSION, h.bit_depth, h.block_size_log2, h.model_id, h.qs, len(h.hyper_scales)
    ))
    out += h.hyper_scales.astype("<f4").tobytes()
    out += struct.pack("<I", len(bs.blocks))
    for rec in bs.blocks:
        b = rec.header
        out += _BLOCK.pack(
            *b.origin, b.sf_code, b.sr_flag, b.k_c, b.k_s, b.n_latent,
            len(rec.octree), len(rec.hyper), len(rec.latent),
        )
        out += rec.octree + rec.hyper + rec.latent
    return bytes(out)


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncatedError(f"bitstream truncated in {what}")
        chunk = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return chunk

    def unpack(self, st, what):
        return st.unpack(self.take(st.size, what))


def parse_bitstream(data):
    r = _Reader(data)
    if len(data) < 4 or bytes(data[:4]) != MAGIC:
        raise BadMagicError("not an SREP bitstream")
    magic, version, bit_depth, bs_log2, model_id, qs, n_scales = r.unpack(_FILE_FIXED, "file header")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported bitstream version {version}")
    if bs_log2 > 30:
        raise BitstreamError("block size exponent out of range")
    scales = np.frombuffer(r.take(4 * n_scales, "hyper scales"), dtype="<f4").astype(np.float32)
    (count,) = r.unpack(struct.Struct("<I"), "block count")
    header = FileHeader(bit_depth, 1 << bs_log2, model_id, qs, scales)
    blocks = []
    for i in range(count):
        ox, oy, oz, sf_code, sr_flag, k_c, k_s, n_lat, l_oct, l_hyp, l_lat = r.unpack(_BLOCK, f"block {i} header")
        bh = BlockHeader((ox, oy, oz), sf_code, sr_flag, k_c, k_s, n_lat)
        blocks.append(BlockRecord(
            bh,
            r.take(l_oct, f"block {i} octree payload"),
            r.take(l_hyp, f"block {i} hyper payload"),
            r.take(l_lat, f"block {i} latent payload"),
        ))
    if r.pos != len(data):
        raise BitstreamError(f"{len(data) - r.pos} trailing bytes after the last block")
    return Bitstream(header, blocks)
