"""NLIR binary container for impulse responses.

Layout (all little-endian)::

    0   4s   magic b"NLIR"
    4   u32  version (1)
    8   u32  K_p, K_i, bin_count
    20  f64  bin width, time origin
    36  3f64 wall normal
    60  K_p x 3 f64 laser positions, then K_i x 3 f64 SPAD positions
    ... K_p * K_i * bin_count f32 histogram, laser-major, then SPAD, then time
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .scene import ImpulseResponse, RelayTopology, SceneError, TimeAxis

MAGIC = b"NLIR"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIdd3d")
HEADER_SIZE = _HEADER.size  # 60


class FormatError(ValueError):
    """Base class for malformed binary files."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class PayloadSizeError(FormatError):
    pass


class NonFiniteError(FormatError):
    pass


def nlir_size(n_lasers: int, n_spads: int, bin_count: int) -> int:
    return HEADER_SIZE + 24 * (n_lasers + n_spads) + 4 * n_lasers * n_spads * bin_count


def encode_nlir(h: ImpulseResponse) -> bytes:
    topo, axis = h.topology, h.time_axis
    header = _HEADER.pack(MAGIC, VERSION, topo.n_lasers, topo.n_spads, axis.bin_count,
                          axis.bin_width, axis.origin, *topo.wall_normal)
    return b"".join([
        header,
        np.ascontiguousarray(topo.laser_points, dtype="<f8").tobytes(),
        np.ascontiguousarray(topo.spad_points, dtype="<f8").tobytes(),
        np.ascontiguousarray(h.data, dtype="<f4").tobytes(),
    ])


def write_nlir(h: ImpulseResponse, path) -> None:
    """Write ``h`` to ``path``; the histogram is stored as binary32."""
    blob = encode_nlir(h)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise OSError(f"cannot write NLIR file {os.fspath(path)!r}: {exc.strerror}") from exc


def decode_nlir(blob: bytes, source: str = "<bytes>") -> ImpulseResponse:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"{source}: bad magic {bytes(blob[:4])!r}, expected {MAGIC!r}")
    if len(blob) < HEADER_SIZE:
        raise PayloadSizeError(f"{source}: truncated header ({len(blob)} of {HEADER_SIZE} bytes)")
    _, version, kp, ki, nb, dt, origin, *normal = _HEADER.unpack_from(blob)
    if version != VERSION:
        raise UnsupportedVersionError(f"{source}: unsupported NLIR version {version}")
    expected = nlir_size(kp, ki, nb)
    if len(blob) != expected:
        raise PayloadSizeError(f"{source}: payload size mismatch, file has {len(blob)} bytes, "
                               f"header implies {expected}")
    offset = HEADER_SIZE
    lasers = np.frombuffer(blob, "<f8", kp * 3, offset).reshape(kp, 3)
    offset += 24 * kp
    spads = np.frombuffer(blob, "<f8", ki * 3, offset).reshape(ki, 3)
    offset += 24 * ki
    data = np.frombuffer(blob, "<f4", kp * ki * nb, offset).reshape(kp, ki, nb)
    floats = np.concatenate([[dt, origin], normal, lasers.ravel(), spads.ravel()])
    if not (np.all(np.isfinite(floats)) and np.all(np.isfinite(data))):
        raise NonFiniteError(f"{source}: file contains non-finite values")
    try:
        topo = RelayTopology(lasers.copy(), spads.copy(), normal)
        axis = TimeAxis(dt, nb, origin)
        return ImpulseResponse(topo, axis, data.astype(np.float64))
    except SceneError as exc:
        raise FormatError(f"{source}: {exc}") from exc


def read_nlir(path) -> ImpulseResponse:
    """Read an NLIR file. Raises a :class:`FormatError` subclass on bad content."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read NLIR file {os.fspath(path)!r}: {exc.strerror}") from exc
    return decode_nlir(blob, os.fspath(path))
