"""Canonical video/flow tensors and bit-exact file I/O (PPM P6, .flo)."""
from __future__ import annotations

import os
import re
import struct
from dataclasses import dataclass

import numpy as np

FLO_MAGIC = b"PIEH"  # little-endian float32 202021.25


class FormatError(ValueError):
    """Raised for malformed PPM / .flo containers."""


@dataclass(frozen=True)
class Video:
    """Frame stack of shape (T, H, W, 3), uint8 samples."""

    frames: np.ndarray
    frame_rate: float = 25.0

    def __post_init__(self):
        f = np.asarray(self.frames)
        if f.ndim != 4 or f.shape[3] != 3:
            raise ValueError(f"expected (T, H, W, 3) frames, got shape {f.shape}")
        if f.shape[0] < 2:
            raise ValueError("insufficient frames: a video needs at least 2")
        if f.dtype != np.uint8:
            raise ValueError(f"frames must be uint8, got {f.dtype}")
        object.__setattr__(self, "frames", f)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement field: u = horizontal (px), v = vertical (px)."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape:
            raise ValueError(f"u/v must be matching 2-D arrays, got {u.shape} vs {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("flow values must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class PatchGrid:
    """Non-overlapping patch layout; boundary patches are zero-padded to full size."""

    patch_h: int
    patch_w: int
    rows: int
    cols: int

    @classmethod
    def for_shape(cls, height: int, width: int, patch_h: int, patch_w: int) -> "PatchGrid":
        if patch_h > height or patch_w > width:
            raise ValueError(
                f"patch {patch_h}x{patch_w} exceeds field {height}x{width}"
            )
        if patch_h < 1 or patch_w < 1:
            raise ValueError("patch dimensions must be >= 1")
        return cls(patch_h, patch_w, -(-height // patch_h), -(-width // patch_w))

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols


def load_ppm(path: str | os.PathLike) -> np.ndarray:
    """Read one binary PPM (P6, maxval 255) into an (H, W, 3) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise FormatError(f"{path}: not a P6 PPM")
    # header = magic, width, height, maxval; '#' comments allowed between tokens
    pos, tokens = 2, []
    while len(tokens) < 3:
        m = re.match(rb"(\s+|#[^\n]*\n)", data[pos:])
        if m:
            pos += m.end()
            continue
        m = re.match(rb"\d+", data[pos:])
        if not m:
            raise FormatError(f"{path}: malformed PPM header")
        tokens.append(int(m.group()))
        pos += m.end()
    width, height, maxval = tokens
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte terminating the header
    raster = data[pos : pos + width * height * 3]
    if len(raster) != width * height * 3:
        raise FormatError(f"{path}: truncated raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)


def save_ppm(frame: np.ndarray, path: str | os.PathLike) -> None:
    """Write an (H, W, 3) uint8 array as binary PPM P6."""
    frame = np.ascontiguousarray(frame, dtype=np.uint8)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) frame, got {frame.shape}")
    h, w = frame.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(frame.tobytes())


def load_ppm_sequence(directory: str | os.PathLike, frame_rate: float = 25.0) -> Video:
    """Load all *.ppm files in a directory (lexicographic order) as one video."""
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"no such directory: {directory}")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".ppm"))
    if len(names) < 2:
        raise ValueError(f"insufficient frames: found {len(names)} PPM files in {directory}")
    frames = [load_ppm(os.path.join(directory, n)) for n in names]
    shape = frames[0].shape
    for name, fr in zip(names, frames):
        if fr.shape != shape:
            raise ValueError(f"dimension mismatch: {name} is {fr.shape}, expected {shape}")
    return Video(np.stack(frames), frame_rate)


def save_ppm_sequence(video: Video, directory: str | os.PathLike) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for t in range(video.n_frames):
        p = os.path.join(directory, f"frame_{t:04d}.ppm")
        save_ppm(video.frames[t], p)
        paths.append(p)
    return paths


def read_flo(path: str | os.PathLike) -> FlowField:
    """Read a .flo file (magic 'PIEH', LE int32 width/height, interleaved float32 u,v)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FLO_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise FormatError(f"{path}: truncated header")
        width, height = struct.unpack("<ii", header)
        raw = fh.read(8 * width * height)
    if len(raw) != 8 * width * height:
        raise FormatError(f"{path}: truncated payload")
    uv = np.frombuffer(raw, dtype="<f4").reshape(height, width, 2)
    return FlowField(uv[:, :, 0].astype(np.float64), uv[:, :, 1].astype(np.float64))


def write_flo(flow: FlowField, path: str | os.PathLike) -> None:
    uv = np.stack([flow.u, flow.v], axis=-1).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(FLO_MAGIC)
        fh.write(struct.pack("<ii", flow.width, flow.height))
        fh.write(np.ascontiguousarray(uv).tobytes())


def partition_patches(flow: FlowField, grid: PatchGrid) -> list[tuple[int, int, np.ndarray]]:
    """Split a flow field into grid patches.

    Returns (row, col, patch) triples in row-major order; each patch is a
    (2, patch_h, patch_w) float array with zero padding beyond the field border.
    """
    if grid.patch_h > flow.height or grid.patch_w > flow.width:
        raise ValueError("patch larger than field")
    stacked = np.stack([flow.u, flow.v], axis=0)
    out = []
    for i in range(grid.rows):
        for j in range(grid.cols):
            patch = np.zeros((2, grid.patch_h, grid.patch_w))
            block = stacked[
                :, i * grid.patch_h : (i + 1) * grid.patch_h, j * grid.patch_w : (j + 1) * grid.patch_w
            ]
            patch[:, : block.shape[1], : block.shape[2]] = block
            out.append((i, j, patch))
    return out


def assemble_patches(
    patches: list[tuple[int, int, np.ndarray]], grid: PatchGrid, height: int, width: int
) -> FlowField:
    """Inverse of partition_patches: place patches back and crop the padding."""
    full = np.zeros((2, grid.rows * grid.patch_h, grid.cols * grid.patch_w))
    for i, j, patch in patches:
        full[:, i * grid.patch_h : (i + 1) * grid.patch_h, j * grid.patch_w : (j + 1) * grid.patch_w] = patch
    return FlowField(full[0, :height, :width], full[1, :height, :width])
