"""Binary field checkpoints.

Layout (all little-endian)::

    magic   4s   b"LRAY"
    version u32
    dim     u32
    n       u32
    length  f64
    ncomp   u32
    t       f64
    coeffs  complex128[ncomp, *spectral_shape]   C order
    digest  32 bytes, SHA-256 of everything above

The coefficient array uses the real-to-complex layout of :class:`Grid`.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fields import VelocityField
from .grid import Grid

MAGIC = b"LRAY"
VERSION = 1
_HEADER = struct.Struct("<4sIIIdId")
_DIGEST_BYTES = 32


class CheckpointError(ValueError):
    """A checkpoint could not be decoded; ``reason`` names the defect."""

    def __init__(self, reason: str, detail: str = "") -> None:
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass(frozen=True, eq=False)
class Checkpoint:
    field: VelocityField
    t: float


def encode(u: VelocityField, t: float) -> bytes:
    g = u.grid
    header = _HEADER.pack(MAGIC, VERSION, g.dim, g.n, g.length, u.coeffs.shape[0], float(t))
    payload = np.ascontiguousarray(u.coeffs, dtype="<c16").tobytes()
    digest = hashlib.sha256(header + payload).digest()
    return header + payload + digest


def decode(blob: bytes, certify: bool = False) -> Checkpoint:
    if len(blob) < _HEADER.size + _DIGEST_BYTES:
        raise CheckpointError("truncated", f"{len(blob)} bytes is shorter than the header")
    magic, version, dim, n, length, ncomp, t = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError("bad magic", repr(magic))
    if version != VERSION:
        raise CheckpointError("unsupported version", str(version))
    try:
        grid = Grid(dim, n, length)
    except ValueError as exc:
        raise CheckpointError("bad header", str(exc)) from None
    if ncomp != dim:
        raise CheckpointError("bad header", f"component count {ncomp} != dim {dim}")
    count = ncomp * int(np.prod(grid.spectral_shape))
    expected = _HEADER.size + 16 * count + _DIGEST_BYTES
    if len(blob) != expected:
        raise CheckpointError("truncated", f"expected {expected} bytes, found {len(blob)}")
    body = blob[: expected - _DIGEST_BYTES]
    if hashlib.sha256(body).digest() != blob[expected - _DIGEST_BYTES :]:
        raise CheckpointError("digest mismatch", "stored SHA-256 does not match contents")
    coeffs = np.frombuffer(body, dtype="<c16", offset=_HEADER.size, count=count)
    coeffs = coeffs.reshape((ncomp,) + grid.spectral_shape).astype(np.complex128)
    return Checkpoint(VelocityField(grid, coeffs, divergence_free=certify), t)


def write_checkpoint(path: str | os.PathLike, u: VelocityField, t: float) -> str:
    """Write ``u`` at time ``t``; returns the SHA-256 hex digest of the file."""
    blob = encode(u, t)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
    return hashlib.sha256(blob).hexdigest()


def read_checkpoint(path: str | os.PathLike, certify: bool = False) -> Checkpoint:
    return decode(Path(path).read_bytes(), certify=certify)
