"""Minimal PLY reader/writer for voxelized geometry (ASCII and binary LE)."""

import numpy as np

from .errors import PlyError
from .pointcloud import PointCloud, min_bit_depth

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_header(fh):
    line_no = 0
    magic = fh.readline()
    line_no += 1
    if magic.strip() != b"ply":
        raise PlyError("missing 'ply' magic", line_no)
    fmt = None
    declared_depth = None
    elements = []  # [name, count, [(prop, dtype) | (prop, None, list types)]]
    while True:
        raw = fh.readline()
        line_no += 1
        if not raw:
            raise PlyError("unexpected end of header", line_no)
        toks = raw.decode("ascii", errors="replace").split()
        if not toks or toks[0] in ("comment", "obj_info"):
            if len(toks) == 3 and toks[1] == "bit_depth" and toks[2].isdigit():
                declared_depth = int(toks[2])
            continue
        key = toks[0]
        if key == "format":
            if len(toks) != 3 or toks[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(f"unsupported format {' '.join(toks[1:])!r}", line_no)
            fmt = toks[1]
        elif key == "element":
            if len(toks) != 3 or not toks[2].isdigit():
                raise PlyError("malformed element line", line_no)
            elements.append([toks[1], int(toks[2]), []])
        elif key == "property":
            if not elements:
                raise PlyError("property before any element", line_no)
            if len(toks) == 5 and toks[1] == "list":
                if toks[2] not in _PLY_TYPES or toks[3] not in _PLY_TYPES:
                    raise PlyError("unknown list property type", line_no)
                elements[-1][2].append((toks[4], None, (toks[2], toks[3])))
            elif len(toks) == 3 and toks[1] in _PLY_TYPES:
                elements[-1][2].append((toks[2], _PLY_TYPES[toks[1]], None))
            else:
                raise PlyError(f"malformed property line {raw.strip()!r}", line_no)
        elif key == "end_header":
            break
        else:
            raise PlyError(f"unknown header keyword {key!r}", line_no)
    if fmt is None:
        raise PlyError("header has no format line", line_no)
    return fmt, elements, line_no, declared_depth


def _read_vertices(fh, fmt, elements, header_lines):
    xyz = None
    line_no = header_lines
    for name, count, props in elements:
        has_list = any(p[1] is None for p in props)
        if fmt == "ascii":
            rows = []
            for _ in range(count):
                raw = fh.readline()
                line_no += 1
                if not raw:
                    raise PlyError("unexpected end of data", line_no)
                rows.append(raw.split())
            if name == "vertex":
                names = [p[0] for p in props]
                if has_list:
                    raise PlyError("list properties on vertex are not supported", line_no)
                try:
                    cols = [names.index(a) for a in "xyz"]
                except ValueError:
                    raise PlyError("vertex element lacks x/y/z", line_no) from None
                try:
                    data = np.array([[float(r[c]) for c in cols] for r in rows], dtype=np.float64)
                except (IndexError, ValueError) as exc:
                    raise PlyError(f"bad vertex row: {exc}", line_no) from None
                xyz = data.reshape(-1, 3)
        else:
            if has_list:
                if name == "vertex":
                    raise PlyError("list properties on vertex are not supported", line_no)
                # non-vertex list elements (e.g. faces) cannot be skipped without parsing;
                # vertices always come first in practice
                break
            dtype = np.dtype([(p[0], "<" + p[1]) for p in props])
            buf = fh.read(dtype.itemsize * count)
            if len(buf) < dtype.itemsize * count:
                raise PlyError("truncated binary payload", line_no)
            arr = np.frombuffer(buf, dtype=dtype, count=count)
            if name == "vertex":
                if not all(a in dtype.names for a in "xyz"):
                    raise PlyError("vertex element lacks x/y/z", line_no)
                xyz = np.stack([arr[a].astype(np.float64) for a in "xyz"], axis=1)
    if xyz is None:
        raise PlyError("no vertex element", line_no)
    return xyz


def voxelize(xyz, bit_depth):
    """Round half-up to the integer grid and clip to [0, 2**bit_depth - 1]."""
    v = np.floor(np.asarray(xyz, dtype=np.float64) + 0.5).astype(np.int64)
    return np.clip(v, 0, (1 << bit_depth) - 1)


def read_ply(path, bit_depth=None, voxelize_points=False):
    with open(path, "rb") as fh:
        fmt, elements, nlines, declared_depth = _parse_header(fh)
        xyz = _read_vertices(fh, fmt, elements, nlines)
    if voxelize_points:
        if bit_depth is None:
            raise PlyError("voxelization requires an explicit bit depth")
        pts = voxelize(xyz, bit_depth)
    else:
        if xyz.size and not np.all(np.isfinite(xyz) & (xyz == np.round(xyz))):
            raise PlyError("non-integer coordinates (pass voxelize to quantize them)")
        pts = xyz.astype(np.int64)
        if pts.size and pts.min() < 0:
            raise PlyError("negative voxel coordinates")
    if bit_depth is None:
        bit_depth = max(declared_depth or 1, min_bit_depth(pts))
    return PointCloud.from_points(pts, bit_depth)


def write_ply(pc, path, binary=False):
    pts = np.asarray(pc.points, dtype=np.int32)
    header = (
        "ply\n"
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0\n"
        f"comment bit_depth {pc.bit_depth}\n"
        f"element vertex {len(pts)}\n"
        "property int x\nproperty int y\nproperty int z\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(pts.astype("<i4").tobytes())
        else:
            fh.write("".join(f"{x} {y} {z}\n" for x, y, z in pts).encode("ascii"))
