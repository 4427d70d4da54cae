"""Result export: PGM projections, matrix CSV and the NLTM binary matrix file."""
from __future__ import annotations

import csv
import os
import struct

import numpy as np

from .engine import MATRIX_KINDS, TransportMatrix, VoxelGrid
from .nlir import BadMagicError, FormatError, NonFiniteError, PayloadSizeError, UnsupportedVersionError


def project_volume(values, grid: VoxelGrid, axis: int = 1) -> np.ndarray:
    """Maximum-intensity projection as an image array.

    Rows follow grid axis 2 (z, top row = largest z); when projecting along
    axis 2 they follow axis 1 instead. Columns follow the remaining axis.
    """
    if axis not in (0, 1, 2):
        raise ValueError(f"projection axis must be 0, 1 or 2, got {axis}")
    vol = np.asarray(values, dtype=float).reshape(grid.counts)
    # the remaining axes keep ascending order, so the last one becomes the rows
    return vol.max(axis=axis).T[::-1]


def to_gray8(image: np.ndarray):
    """Linear map to 0..255 by the image max; returns ``(pixels, max)``."""
    peak = float(image.max(initial=0.0))
    if peak <= 0:
        return np.zeros(image.shape, dtype=np.uint8), peak
    return np.rint(image / peak * 255.0).astype(np.uint8), peak


def write_pgm(pixels: np.ndarray, path) -> None:
    """Binary 8-bit PGM (P5)."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    rows, cols = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(maxsplit=4)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM file")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM is supported")
    pixels = blob[len(blob) - rows * cols:]
    return np.frombuffer(pixels, dtype=np.uint8).reshape(rows, cols)


def sidecar_path(path) -> str:
    return os.fspath(path) + ".norm.txt"


def export_image(values, grid: VoxelGrid, path, axis: int = 1) -> float:
    """Write the projection of ``values`` as PGM plus a normalization sidecar.

    The sidecar records the value mapped to 255. Returns that value.
    """
    pixels, peak = to_gray8(project_volume(values, grid, axis))
    write_pgm(pixels, path)
    with open(sidecar_path(path), "w") as fh:
        fh.write(f"projection_axis {axis}\n")
        fh.write(f"max_value {peak!r}\n")
        fh.write(f"scale {255.0 / peak if peak > 0 else 0.0!r}\n")
    return peak


# --- matrices -------------------------------------------------------------

MATRIX_MAGIC = b"NLTM"
MATRIX_VERSION = 1
_MATRIX_HEADER = struct.Struct("<4sIIIIIId3d")


def export_matrix_csv(t: TransportMatrix, path) -> int:
    """CSV of nonzero entries ``a,b,value`` in ascending ``(a, b)``; returns the row count."""
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["a", "b", "value"])
        for a, b, v in t.entries():
            writer.writerow([a, b, repr(v)])
            n += 1
    return n


def read_matrix_csv(path, grid: VoxelGrid, kind: str = "gated_2bounce") -> TransportMatrix:
    cols = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["a", "b", "value"]:
            raise FormatError(f"{path}: missing 'a,b,value' header")
        for a, b, v in reader:
            col = cols.setdefault(int(a), np.zeros(grid.size))
            col[int(b)] = float(v)
    return TransportMatrix(grid, cols, kind)


def encode_matrix(t: TransportMatrix) -> bytes:
    """NLTM layout: header, u32 source indices, then one f64 column per source."""
    g = t.grid
    sources = t.sources
    header = _MATRIX_HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, MATRIX_KINDS.index(t.kind),
                                 *g.counts, len(sources), g.pitch, *g.origin)
    body = np.asarray(sources, dtype="<u4").tobytes()
    if sources:
        body += np.stack([t.columns[a] for a in sources]).astype("<f8").tobytes()
    return header + body


def decode_matrix(blob: bytes, source: str = "<bytes>") -> TransportMatrix:
    if blob[:4] != MATRIX_MAGIC:
        raise BadMagicError(f"{source}: bad magic {bytes(blob[:4])!r}, expected {MATRIX_MAGIC!r}")
    if len(blob) < _MATRIX_HEADER.size:
        raise PayloadSizeError(f"{source}: truncated matrix header")
    _, version, kind, nx, ny, nz, n_src, pitch, *origin = _MATRIX_HEADER.unpack_from(blob)
    if version != MATRIX_VERSION:
        raise UnsupportedVersionError(f"{source}: unsupported NLTM version {version}")
    if kind >= len(MATRIX_KINDS):
        raise FormatError(f"{source}: unknown matrix kind code {kind}")
    grid = VoxelGrid(tuple(origin), (nx, ny, nz), pitch)
    expected = _MATRIX_HEADER.size + 4 * n_src + 8 * n_src * grid.size
    if len(blob) != expected:
        raise PayloadSizeError(f"{source}: payload size mismatch, file has {len(blob)} bytes, "
                               f"header implies {expected}")
    off = _MATRIX_HEADER.size
    sources = np.frombuffer(blob, "<u4", n_src, off)
    values = np.frombuffer(blob, "<f8", n_src * grid.size, off + 4 * n_src).reshape(n_src, grid.size)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{source}: matrix contains non-finite values")
    return TransportMatrix(grid, {int(a): values[i].copy() for i, a in enumerate(sources)},
                           MATRIX_KINDS[kind])


def write_matrix(t: TransportMatrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_matrix(t))


def read_matrix(path) -> TransportMatrix:
    with open(path, "rb") as fh:
        return decode_matrix(fh.read(), os.fspath(path))


def export_matrix(t: TransportMatrix, path) -> None:
    """Write ``<path>`` as CSV and ``<path minus .csv>.nltm`` as the binary companion."""
    path = os.fspath(path)
    export_matrix_csv(t, path)
    write_matrix(t, matrix_companion_path(path))


def matrix_companion_path(csv_path) -> str:
    root, ext = os.path.splitext(os.fspath(csv_path))
    return (root if ext == ".csv" else os.fspath(csv_path)) + ".nltm"
