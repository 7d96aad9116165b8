"""File formats: PNG, PFM, JSON reports, trajectories, correspondences.

The PNG writer is deliberately self-contained (zlib plus hand-built chunks)
so output bytes depend only on pixel content; renders and reports must be
byte-identical across runs with the same seed. PFM files use the
little-endian convention (negative scale header) with rows stored bottom to
top.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .calib import Correspondence
from .geometry import Pose

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


# ----------------------------------------------------------------------
# PNG


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def to_uint8(img) -> np.ndarray:
    """Quantize a float image in [0, 1] to 8-bit with round-half-away."""
    img = np.asarray(img)
    if img.dtype == np.uint8:
        return img
    return (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_png(path, img) -> None:
    """Write an (H, W, 3) image as 8-bit sRGB-tagged RGB PNG.

    Float input is quantized; uint8 passes through untouched.
    """
    data = to_uint8(img)
    if data.ndim != 3 or data.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) image")
    h, w = data.shape[:2]
    raw = bytearray()
    for row in range(h):
        raw.append(0)  # filter type: none
        raw.extend(data[row].tobytes())
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    png = b"".join([
        _PNG_MAGIC,
        _chunk(b"IHDR", ihdr),
        _chunk(b"sRGB", b"\x00"),
        _chunk(b"IDAT", zlib.compress(bytes(raw), 9)),
        _chunk(b"IEND", b""),
    ])
    Path(path).write_bytes(png)


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def read_png(path) -> np.ndarray:
    """Read an 8-bit RGB PNG written by this package (filters 0-4 handled)."""
    blob = Path(path).read_bytes()
    if blob[:8] != _PNG_MAGIC:
        raise ValueError("not a PNG file")
    pos = 8
    width = height = None
    idat = bytearray()
    while pos < len(blob):
        (length,) = struct.unpack(">I", blob[pos:pos + 4])
        tag = blob[pos + 4:pos + 8]
        payload = blob[pos + 8:pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            width, height, depth, ctype, _, _, interlace = struct.unpack(
                ">IIBBBBB", payload
            )
            if depth != 8 or ctype != 2 or interlace != 0:
                raise ValueError("only 8-bit non-interlaced RGB PNGs are supported")
        elif tag == b"IDAT":
            idat.extend(payload)
        elif tag == b"IEND":
            break
    if width is None:
        raise ValueError("missing IHDR")
    raw = zlib.decompress(bytes(idat))
    stride = width * 3
    out = np.zeros((height, width, 3), dtype=np.uint8)
    prev = bytearray(stride)
    pos = 0
    for row in range(height):
        ftype = raw[pos]
        line = bytearray(raw[pos + 1:pos + 1 + stride])
        pos += 1 + stride
        if ftype == 1:  # sub
            for i in range(3, stride):
                line[i] = (line[i] + line[i - 3]) & 0xFF
        elif ftype == 2:  # up
            for i in range(stride):
                line[i] = (line[i] + prev[i]) & 0xFF
        elif ftype == 3:  # average
            for i in range(stride):
                left = line[i - 3] if i >= 3 else 0
                line[i] = (line[i] + ((left + prev[i]) >> 1)) & 0xFF
        elif ftype == 4:  # paeth
            for i in range(stride):
                left = line[i - 3] if i >= 3 else 0
                upleft = prev[i - 3] if i >= 3 else 0
                line[i] = (line[i] + _paeth(left, prev[i], upleft)) & 0xFF
        elif ftype != 0:
            raise ValueError(f"unsupported PNG filter {ftype}")
        out[row] = np.frombuffer(bytes(line), dtype=np.uint8).reshape(width, 3)
        prev = line
    return out


# ----------------------------------------------------------------------
# PFM


def write_pfm(path, array) -> None:
    """Write a float32 PFM, little-endian (negative scale), rows bottom-up."""
    data = np.asarray(array, dtype=np.float32)
    if data.ndim == 2:
        header = b"Pf"
        h, w = data.shape
    elif data.ndim == 3 and data.shape[2] == 3:
        header = b"PF"
        h, w = data.shape[:2]
    else:
        raise ValueError("PFM supports (H, W) or (H, W, 3) arrays")
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(data[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise ValueError("not a PFM file")
        w, h = (int(v) for v in f.readline().split())
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(), dtype=dtype)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return data.reshape(shape)[::-1].astype(np.float32)


# ----------------------------------------------------------------------
# JSON reports and domain files


def write_json(path, obj) -> None:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_trajectory(path, poses, ids=None, metadata=None) -> None:
    """Trajectory file: ordered poses with ids plus optional provenance."""
    poses = list(poses)
    if ids is None:
        ids = list(range(len(poses)))
    doc = {
        "poses": [
            {"id": i, "pose": p.to_json_dict()} for i, p in zip(ids, poses)
        ]
    }
    if metadata:
        doc["provenance"] = metadata
    write_json(path, doc)


def read_trajectory(path):
    """Returns (ordered pose list, id -> Pose mapping, metadata dict)."""
    doc = read_json(path)
    poses = []
    by_id = {}
    for entry in doc["poses"]:
        pose = Pose.from_json_dict(entry["pose"])
        poses.append(pose)
        by_id[entry["id"]] = pose
    return poses, by_id, doc.get("provenance", {})


def write_correspondences(path, rows) -> None:
    """JSON-lines correspondence file; rows are (point, pixel, pose_id)."""
    with open(path, "w", encoding="utf-8") as f:
        for point, pixel, pose_id in rows:
            f.write(json.dumps({
                "point": [float(v) for v in point],
                "pixel": [float(v) for v in pixel],
                "pose_id": pose_id,
            }, sort_keys=True) + "\n")


def read_correspondences(path, poses_by_id):
    """Parse a JSON-lines correspondence file against a trajectory."""
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            out.append(Correspondence(
                point=row["point"],
                pixel=row["pixel"],
                pose=poses_by_id[row["pose_id"]],
            ))
    return out
