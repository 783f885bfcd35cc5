"""Point-cloud, pose and scan file formats.

Clouds: binary little-endian PLY (float32 x/y/z plus optional float scalar
properties) or whitespace-separated xyz text. Poses: one per line, either
``x y z`` or a row-major 3x4 matrix (12 values, optionally preceded by a frame
number). Scans: raw little-endian float32 ``x y z intensity`` records.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ParseError
from ..geometry import as_cloud

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

FORMATS = ("ply-binary", "xyz-text")


def infer_format(path) -> str:
    ext = Path(path).suffix.lower()
    if ext == ".ply":
        return "ply-binary"
    if ext in (".xyz", ".txt", ".csv"):
        return "xyz-text"
    raise ParseError(f"cannot infer cloud format from extension {ext!r}", path)


def write_cloud(path, cloud, fmt: Optional[str] = None, scalars: Optional[dict] = None) -> None:
    """Write a cloud. ``scalars`` adds per-vertex float properties (PLY only)."""
    pts = as_cloud(cloud)
    fmt = fmt or infer_format(path)
    if fmt == "xyz-text":
        if scalars:
            raise ValueError("xyz-text output cannot carry extra scalars")
        with open(path, "w") as fh:
            np.savetxt(fh, pts, fmt="%.6f")
        return
    if fmt != "ply-binary":
        raise ValueError(f"unknown cloud format {fmt!r}; expected one of {FORMATS}")
    scalars = dict(scalars or {})
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    fields += [(name, "<f4") for name in scalars]
    rec = np.empty(pts.shape[0], dtype=fields)
    rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
    for name, values in scalars.items():
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.shape[0] != pts.shape[0]:
            raise ValueError(f"scalar {name!r} has {values.shape[0]} values for {pts.shape[0]} points")
        rec[name] = values
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {pts.shape[0]}"]
    header += [f"property float {name}" for name, _ in fields]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(rec.tobytes())


def read_cloud(path, fmt: Optional[str] = None, with_scalars: bool = False):
    """Read a cloud as float64 ``(n, 3)``; optionally also return extra scalars."""
    fmt = fmt or infer_format(path)
    if fmt == "xyz-text":
        pts = _read_xyz(path)
        return (pts, {}) if with_scalars else pts
    if fmt != "ply-binary":
        raise ValueError(f"unknown cloud format {fmt!r}")
    pts, extra = _read_ply(path)
    return (pts, extra) if with_scalars else pts


def _read_xyz(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.replace(",", " ").split()
            if len(tokens) < 3:
                raise ParseError(f"expected at least 3 values, found {len(tokens)}", path, lineno)
            try:
                rows.append([float(v) for v in tokens[:3]])
            except ValueError:
                raise ParseError(f"non-numeric value in {line!r}", path, lineno) from None
    pts = np.array(rows, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        raise ParseError("non-finite coordinate", path)
    return pts


def _read_ply(path):
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("not a PLY file (missing 'ply' magic or end_header)", path, 0)
    body_start = data.index(b"\n", end) + 1
    lines = data[:end].decode("ascii", errors="replace").splitlines()

    fmt = None
    elements = []  # (name, count, [(prop, dtype)])
    for lineno, raw in enumerate(lines, start=1):
        tok = raw.split()
        if not tok or tok[0] in ("ply", "comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2:
                raise ParseError("malformed format line", path, lineno)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise ParseError(f"malformed element line {raw!r}", path, lineno)
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise ParseError("property before any element", path, lineno)
            if len(tok) >= 2 and tok[1] == "list":
                name = tok[-1] if len(tok) >= 5 else "?"
                raise ParseError(f"unsupported list property {name!r}", path, lineno)
            if len(tok) != 3 or tok[1] not in PLY_TYPES:
                raise ParseError(f"unsupported property {raw.strip()!r}", path, lineno)
            elements[-1][2].append((tok[2], PLY_TYPES[tok[1]]))
        else:
            raise ParseError(f"unexpected header line {raw!r}", path, lineno)

    if fmt not in ("binary_little_endian", "ascii"):
        raise ParseError(f"unsupported PLY format {fmt!r}", path)
    vertex = [e for e in elements if e[0] == "vertex"]
    if not vertex:
        raise ParseError("no vertex element", path)
    for name, count, _ in elements:
        if name != "vertex" and count > 0:
            raise ParseError(f"unsupported element {name!r}", path)
    _, count, props = vertex[0]
    names = [p for p, _ in props]
    for axis in "xyz":
        if axis not in names:
            raise ParseError(f"vertex element lacks property {axis!r}", path)

    if fmt == "ascii":
        text = data[body_start:].decode("ascii", errors="replace").split()
        if len(text) < count * len(props):
            raise ParseError("truncated ascii vertex data", path, body_start)
        table = np.array(text[: count * len(props)], dtype=np.float64).reshape(count, len(props))
        cols = {p: table[:, i] for i, p in enumerate(names)}
    else:
        dtype = np.dtype([(p, "<" + t) for p, t in props])
        need = dtype.itemsize * count
        if len(data) - body_start < need:
            raise ParseError(
                f"truncated vertex data: need {need} bytes, have {len(data) - body_start}",
                path, body_start,
            )
        rec = np.frombuffer(data, dtype=dtype, count=count, offset=body_start)
        cols = {p: rec[p].astype(np.float64) for p in names}
    pts = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
    extra = {p: v for p, v in cols.items() if p not in ("x", "y", "z")}
    return pts, extra


def read_poses(path) -> np.ndarray:
    """Poses as ``(n, 3, 4)`` [R | t] matrices; xyz lines get an identity rotation."""
    mats = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            if len(tok) == 13:  # leading frame index
                tok = tok[1:]
            if len(tok) not in (3, 12):
                raise ParseError(f"pose line has {len(tok)} values; expected 3 or 12", path, lineno)
            if width is None:
                width = len(tok)
            elif len(tok) != width:
                raise ParseError("pose file mixes xyz and 3x4 rows", path, lineno)
            try:
                vals = np.array([float(v) for v in tok])
            except ValueError:
                raise ParseError(f"non-numeric pose value in {line.strip()!r}", path, lineno) from None
            if not np.all(np.isfinite(vals)):
                raise ParseError("non-finite pose value", path, lineno)
            if len(vals) == 3:
                m = np.hstack([np.eye(3), vals[:, None]])
            else:
                m = vals.reshape(3, 4)
            mats.append(m)
    return np.array(mats, dtype=np.float64).reshape(-1, 3, 4)


def read_path(path) -> np.ndarray:
    """Path positions (translation part of each pose)."""
    return read_poses(path)[:, :, 3].copy()


def read_scan(path) -> np.ndarray:
    """KITTI-style float32 ``x y z intensity`` scan; intensity is dropped."""
    path = os.fspath(path)
    if path.endswith(".bin"):
        raw = Path(path).read_bytes()
        if len(raw) % 16:
            raise ParseError(f"scan size {len(raw)} is not a multiple of 16 bytes", path, len(raw))
        return np.frombuffer(raw, dtype="<f4").reshape(-1, 4)[:, :3].astype(np.float64)
    return read_cloud(path)


def write_scan(path, cloud, intensity: float = 0.0) -> None:
    pts = as_cloud(cloud)
    rec = np.empty((pts.shape[0], 4), dtype="<f4")
    rec[:, :3] = pts
    rec[:, 3] = intensity
    Path(path).write_bytes(rec.tobytes())
