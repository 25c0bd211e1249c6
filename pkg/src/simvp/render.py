"""Binary PGM (P5) frame emission: round(clamp(x,0,1)*255), maxval 255."""

import os

import numpy as np

from .errors import FormatError


def write_pgm(frame, path):
    """frame: (H,W) or (1,H,W) float array in [0,1]."""
    frame = np.asarray(frame)
    if frame.ndim == 3:
        frame = frame[0]
    q = np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(f"P5\n{q.shape[1]} {q.shape[0]}\n255\n".encode("ascii"))
        f.write(q.tobytes())
    os.replace(tmp, path)


def read_pgm(path):
    with open(path, "rb") as f:
        raw = f.read()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h = (int(x) for x in parts[1].split())
    if parts[2] != b"255":
        raise FormatError(f"{path}: unsupported maxval {parts[2]!r}")
    pix = np.frombuffer(parts[3][:w * h], dtype=np.uint8)
    if pix.size != w * h:
        raise FormatError(f"{path}: truncated pixel data")
    return pix.reshape(h, w)
