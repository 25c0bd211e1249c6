"""Synthetic bouncing-shapes video generator, the SVPD on-disk format, and
batch iteration.

Dynamics follow the classic two-digits-on-a-64x64-grid setup: each object
gets a seeded initial position and velocity, moves with constant speed, and
reflects off the frame boundary. Objects are rendered with max-composition
so overlap saturates instead of exceeding 1.

Randomness uses an integer-state xorshift64* generator (constants below) so
datasets are reproducible bit-for-bit across platforms and languages.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FormatError

MAGIC = b"SVPD"
FORMAT_VERSION = 1

_MASK64 = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_XORSHIFT_MULT = 0x2545F4914F6CDD1D


def _mix64(z):
    """splitmix64 finalizer; also used to derive per-sequence substreams."""
    z = (z + _SPLITMIX_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class XorShift64Star:
    """xorshift64* with 53-bit uniform output; state is a single u64."""

    def __init__(self, seed):
        self.state = _mix64(seed & _MASK64) or 0x9E3779B97F4A7C15

    def next_u64(self):
        x = self.state
        x ^= (x >> 12)
        x ^= (x << 25) & _MASK64
        x ^= (x >> 27)
        self.state = x
        return (x * _XORSHIFT_MULT) & _MASK64

    def uniform(self, lo=0.0, hi=1.0):
        return lo + (hi - lo) * (self.next_u64() >> 11) / float(1 << 53)

    def choice(self, items):
        return items[self.next_u64() % len(items)]


@dataclass
class MotionSpec:
    num_sequences: int = 256
    seq_len: int = 20
    frame: tuple = (1, 64, 64)
    num_objects: int = 2
    object_kind: str = "square"   # square | cross | disk
    object_size: int = 12
    speed_range: tuple = (0.5, 2.5)  # pixels/frame per axis
    seed: int = 0

    def __post_init__(self):
        C, H, W = self.frame
        if self.num_sequences < 1 or self.seq_len < 1:
            raise ConfigurationError("num_sequences and seq_len must be >= 1")
        if self.num_objects < 1:
            raise ConfigurationError("at least one object is required")
        if self.object_kind not in ("square", "cross", "disk"):
            raise ConfigurationError(f"unknown object_kind {self.object_kind!r}")
        if self.object_size >= min(H, W):
            raise ConfigurationError(
                f"object_size {self.object_size} must be smaller than the frame {H}x{W}")
        vmin, vmax = self.speed_range
        if not 0 <= vmin <= vmax:
            raise ConfigurationError("speed_range must satisfy 0 <= vmin <= vmax")
        if vmax >= min(H, W) / 2:
            raise ConfigurationError("vmax must be below half the frame size")


class VideoDataset:
    """Sequences shaped (N, t_in + t_out, C, H, W), values in [0,1]."""

    def __init__(self, tensor, t_in, t_out):
        tensor = np.asarray(tensor, dtype=np.float32)
        if tensor.ndim != 5:
            raise ConfigurationError("dataset tensor must have 5 axes")
        if t_in + t_out > tensor.shape[1]:
            raise ConfigurationError(
                f"t_in + t_out = {t_in + t_out} exceeds sequence length {tensor.shape[1]}")
        self.tensor = tensor
        self.t_in = t_in
        self.t_out = t_out

    def __len__(self):
        return self.tensor.shape[0]

    @property
    def frame_shape(self):
        return self.tensor.shape[2:]

    def subset(self, idx):
        return VideoDataset(self.tensor[idx], self.t_in, self.t_out)


def _stamp(kind, size):
    if kind == "square":
        return np.ones((size, size), dtype=np.float32)
    if kind == "cross":
        s = np.zeros((size, size), dtype=np.float32)
        arm = max(1, size // 3)
        lo = (size - arm) // 2
        s[lo:lo + arm, :] = 1.0
        s[:, lo:lo + arm] = 1.0
        return s
    # disk
    r = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    return (((yy - r) ** 2 + (xx - r) ** 2) <= r * r + 0.5).astype(np.float32)


def reflect(p, v, hi):
    """One bounce step on one axis: advance then mirror at [0, hi]."""
    p = p + v
    while p < 0.0 or p > hi:
        if p < 0.0:
            p, v = -p, -v
        else:
            p, v = 2.0 * hi - p, -v
    return p, v


def generate(spec: MotionSpec, t_in=None) -> VideoDataset:
    """Render the full dataset; deterministic per seed, one RNG substream
    per sequence so generation order never matters."""
    C, H, W = spec.frame
    stamp = _stamp(spec.object_kind, spec.object_size)
    hi_y = float(H - spec.object_size)
    hi_x = float(W - spec.object_size)
    vmin, vmax = spec.speed_range
    data = np.zeros((spec.num_sequences, spec.seq_len, C, H, W), dtype=np.float32)
    for n in range(spec.num_sequences):
        rng = XorShift64Star(_mix64(spec.seed ^ (n * _SPLITMIX_GAMMA & _MASK64)))
        objs = []
        for _ in range(spec.num_objects):
            py = rng.uniform(0.0, hi_y)
            px = rng.uniform(0.0, hi_x)
            vy = rng.choice((-1.0, 1.0)) * rng.uniform(vmin, vmax)
            vx = rng.choice((-1.0, 1.0)) * rng.uniform(vmin, vmax)
            objs.append([py, px, vy, vx])
        for t in range(spec.seq_len):
            frame = data[n, t, 0]
            for o in objs:
                ry, rx = int(round(o[0])), int(round(o[1]))
                region = frame[ry:ry + spec.object_size, rx:rx + spec.object_size]
                np.maximum(region, stamp, out=region)
                o[0], o[2] = reflect(o[0], o[2], hi_y)
                o[1], o[3] = reflect(o[1], o[3], hi_x)
            if C > 1:
                data[n, t, 1:] = frame
    t_in = spec.seq_len // 2 if t_in is None else t_in
    return VideoDataset(data, t_in, spec.seq_len - t_in)


# ---------------------------------------------------------------------------
# SVPD file format: magic "SVPD", u32 LE version, u32 LE N, T_total, C, H, W,
# then N*T_total*C*H*W float32 LE values, row-major.

def save(dataset: VideoDataset, path):
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        N, T, C, H, W = dataset.tensor.shape
        f.write(MAGIC)
        f.write(struct.pack("<6I", FORMAT_VERSION, N, T, C, H, W))
        f.write(dataset.tensor.astype("<f4").tobytes())
    os.replace(tmp, path)


def load(path, t_in=None) -> VideoDataset:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r} at byte 0, expected {MAGIC!r}")
        head = f.read(24)
        if len(head) != 24:
            raise FormatError(f"truncated header at byte {4 + len(head)}")
        version, N, T, C, H, W = struct.unpack("<6I", head)
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported version {version} at byte 4")
        count = N * T * C * H * W
        if count > (1 << 34):
            raise FormatError(f"header dimensions overflow at byte 8: {count} elements")
        payload = f.read(count * 4)
        if len(payload) != count * 4:
            raise FormatError(
                f"payload truncated at byte {28 + len(payload)}: "
                f"expected {count * 4} bytes, got {len(payload)}")
        if f.read(1):
            raise FormatError(f"trailing bytes after payload at byte {28 + count * 4}")
    tensor = np.frombuffer(payload, dtype="<f4").reshape(N, T, C, H, W)
    return VideoDataset(tensor.copy(), T // 2 if t_in is None else t_in,
                        T - (T // 2 if t_in is None else t_in))


def batches(dataset: VideoDataset, batch_size, shuffle_seed=None):
    """Yield (X, Y) numpy pairs split at t_in; last partial batch kept.

    shuffle_seed=None iterates in stored order; a seed gives a reproducible
    permutation.
    """
    if batch_size < 1:
        raise ConfigurationError("batch_size must be >= 1")
    n = len(dataset)
    order = np.arange(n)
    if shuffle_seed is not None:
        order = np.random.default_rng(np.random.PCG64(shuffle_seed)).permutation(n)
    t = dataset.t_in
    te = t + dataset.t_out
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        seqs = dataset.tensor[idx]
        yield seqs[:, :t], seqs[:, t:te]


def min_max_normalize(raw, lo, hi):
    """(x - lo) / (hi - lo), clamped to [0,1]."""
    if hi <= lo:
        raise ConfigurationError(f"need hi > lo, got lo={lo}, hi={hi}")
    return np.clip((np.asarray(raw, dtype=np.float32) - lo) / (hi - lo), 0.0, 1.0)


def min_max_denormalize(norm, lo, hi):
    return np.asarray(norm, dtype=np.float32) * (hi - lo) + lo
