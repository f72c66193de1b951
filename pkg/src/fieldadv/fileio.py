"""Parameter documents and image files.

Parameter document layout (little-endian)::

    b"FADVPARM"  magic
    u64          header length in bytes
    header       UTF-8 JSON: {"config": {...}, "arrays": [{"name", "shape", "offset"}]}
    payload      concatenated float64 arrays, C order

The header is written with sorted keys so identical inputs give identical
bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FADVPARM"


def save_params(path, config: dict, arrays: dict[str, np.ndarray]) -> None:
    specs, chunks, offset = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        specs.append({"name": name, "shape": list(a.shape), "offset": offset})
        b = a.tobytes()
        chunks.append(b)
        offset += len(b)
    header = json.dumps({"config": config, "arrays": specs}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for b in chunks:
            fh.write(b)


def load_params(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a parameter document")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen])
    base = 16 + hlen
    arrays = {}
    for spec in header["arrays"]:
        n = int(np.prod(spec["shape"], dtype=np.int64))
        start = base + spec["offset"]
        arrays[spec["name"]] = np.frombuffer(data, dtype="<f8", count=n, offset=start).reshape(spec["shape"]).copy()
    return header["config"], arrays


def to_bytes8(img: np.ndarray) -> np.ndarray:
    """[0,1] floats to uint8, rounding half away from zero."""
    v = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


def write_ppm(path, img: np.ndarray) -> None:
    """Binary P6, 8-bit."""
    b = to_bytes8(img)
    h, w = b.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(b[..., :3]).tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise ValueError(f"{path}: not a binary P6 file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit P6 supported")
    pos += 1
    px = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return px.reshape(h, w, 3).astype(np.float64) / 255.0


def write_png(path, img: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(to_bytes8(img)[..., :3], "RGB").save(path)


def read_png(path) -> np.ndarray:
    from PIL import Image

    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0


def read_image(path) -> np.ndarray:
    p = str(path).lower()
    if p.endswith(".png"):
        return read_png(path)
    return read_ppm(path)


def write_image(path, img: np.ndarray) -> None:
    if str(path).lower().endswith(".png"):
        write_png(path, img)
    else:
        write_ppm(path, img)
