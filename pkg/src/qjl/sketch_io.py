"""Binary sketch files and point ingestion.

File layout: a packed little-endian header
{magic "BJLS", version u16, m u32, dim u32, delta f64, seed u64, row_model u8,
count u64} followed by count x m little-endian int64 codes.  All sketches in
one file share a single projector, which is reconstructible from the header.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .embedding import ROW_MODELS, Projector

MAGIC = b"BJLS"
VERSION = 1
_HEADER = struct.Struct("<4sHIIdQBQ")


@dataclass(frozen=True)
class SketchFileHeader:
    m: int
    dim: int
    delta: float
    seed: int
    row_model: str
    count: int


def write_sketches(path, proj: Projector, codes: np.ndarray):
    """Write a codes matrix (count x m) produced by ``proj`` to ``path``."""
    codes = np.asarray(codes)
    if codes.ndim != 2 or codes.shape[1] != proj.m:
        raise ValueError(f"codes have shape {codes.shape}, expected (*, {proj.m})")
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        proj.m,
        proj.dim,
        proj.delta,
        proj.seed,
        ROW_MODELS.index(proj.row_model),
        codes.shape[0],
    )
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(codes, dtype="<i8").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write sketch file {path}: {exc}") from exc


def read_sketches(path):
    """Read a sketch file; returns (SketchFileHeader, codes matrix)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read sketch file {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise ValueError(f"sketch file {path} is truncated")
    magic, version, m, dim, delta, seed, row_model, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"sketch file {path} has bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported sketch file version {version}")
    if row_model >= len(ROW_MODELS):
        raise ValueError(f"unknown row model code {row_model}")
    expected = _HEADER.size + count * m * 8
    if len(raw) != expected:
        raise ValueError(
            f"sketch file {path} has {len(raw)} bytes, expected {expected}"
        )
    codes = np.frombuffer(raw, dtype="<i8", offset=_HEADER.size).reshape(count, m)
    header = SketchFileHeader(
        m=m, dim=dim, delta=delta, seed=seed,
        row_model=ROW_MODELS[row_model], count=count,
    )
    return header, codes.astype(np.int64)


def projector_from_header(header: SketchFileHeader) -> Projector:
    """Rebuild the projector a sketch file was produced with."""
    return Projector.create(
        m=header.m, dim=header.dim, delta=header.delta,
        seed=header.seed, row_model=header.row_model,
    )


def load_points_csv(path) -> np.ndarray:
    """Headerless CSV, one point per row, dim columns."""
    try:
        pts = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except OSError as exc:
        raise OSError(f"cannot read points file {path}: {exc}") from exc
    return pts
