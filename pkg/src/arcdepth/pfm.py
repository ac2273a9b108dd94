"""Reader/writer for PFM (portable float map) depth rasters.

Single-channel little-endian PFM, rows stored bottom-to-top per the format
convention. float32 payloads round-trip bit-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def write_pfm(path: str | Path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError(f"expected H x W array, got shape {data.shape}")
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")  # negative scale = little-endian
        f.write(np.flipud(data).astype("<f4").tobytes())


def read_pfm(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise ValueError(f"{path}: not a PFM file (header {header!r})")
        dims = f.readline().split()
        if len(dims) != 2:
            raise ValueError(f"{path}: malformed dimensions line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        count = w * h * channels
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise ValueError(f"{path}: truncated pixel data")
    data = np.frombuffer(raw, dtype=dtype).astype(np.float32)
    if channels == 1:
        data = data.reshape(h, w)
    else:
        data = data.reshape(h, w, 3)
    return np.flipud(data).copy()
