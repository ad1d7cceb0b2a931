"""Dense embedding matrices and their little-endian binary container.

Layout::

    magic   4 bytes   b"SEMB" (embeddings) or b"SHED" (projection head)
    version u32       1
    dim     u32
    count   u64
    ids     count NUL-terminated UTF-8 strings
    rows    count*dim float32, row-major
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BadMagicError, DuplicateIdError, MatrixFormatError, TruncatedFileError

MAGIC_EMBEDDINGS = b"SEMB"
MAGIC_HEAD = b"SHED"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
NORM_TOLERANCE = 1e-4


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    dim: int
    ids: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.float32)
        ids = tuple(self.ids)
        if self.dim < 1:
            raise MatrixFormatError(f"dim must be positive, got {self.dim}")
        if rows.ndim != 2 or rows.shape != (len(ids), self.dim):
            raise MatrixFormatError(f"rows shape {rows.shape} does not match {len(ids)} ids x dim {self.dim}")
        if len(set(ids)) != len(ids):
            raise DuplicateIdError(f"duplicate ids: {_first_duplicate(ids)!r}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return len(self.ids)

    def check_unit_norm(self, tol: float = NORM_TOLERANCE) -> None:
        norms = np.linalg.norm(self.rows.astype(np.float64), axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > tol)
        if bad.size:
            i = int(bad[0])
            raise MatrixFormatError(f"row {self.ids[i]!r} has norm {norms[i]:.6g}, expected 1 +- {tol}")

    def index(self) -> dict[str, int]:
        return {doc_id: i for i, doc_id in enumerate(self.ids)}

    def subset(self, ids: Sequence[str]) -> "EmbeddingMatrix":
        pos = self.index()
        return EmbeddingMatrix(self.dim, tuple(ids), self.rows[[pos[i] for i in ids]])


def _first_duplicate(ids):
    seen = set()
    for i in ids:
        if i in seen:
            return i
        seen.add(i)
    return None


def write_container(path, magic: bytes, ids: Sequence[str], rows: np.ndarray) -> None:
    rows = np.ascontiguousarray(rows, dtype="<f4")
    count, dim = rows.shape
    if len(ids) != count:
        raise MatrixFormatError(f"{len(ids)} ids for {count} rows")
    blobs = []
    for i in ids:
        b = i.encode("utf-8")
        if b"\0" in b:
            raise MatrixFormatError(f"id {i!r} contains a NUL byte")
        blobs.append(b + b"\0")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(magic, VERSION, dim, count))
        fh.write(b"".join(blobs))
        fh.write(rows.tobytes(order="C"))
    os.replace(tmp, path)


def read_container(path, magic: bytes) -> tuple[int, tuple[str, ...], np.ndarray]:
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise TruncatedFileError(f"{path}: file shorter than header ({len(head)} bytes)")
        got_magic, version, dim, count = _HEADER.unpack(head)
        if got_magic != magic:
            raise BadMagicError(f"{path}: magic {got_magic!r}, expected {magic!r}")
        if version != VERSION:
            raise BadMagicError(f"{path}: unsupported version {version}, expected {VERSION}")
        if dim < 1:
            raise MatrixFormatError(f"{path}: dim must be positive")
        # rows occupy the last count*dim*4 bytes; the ids fill the gap before them
        row_bytes = count * dim * 4
        id_bytes = size - _HEADER.size - row_bytes
        if id_bytes < count:
            raise TruncatedFileError(
                f"{path}: declared {count} rows of dim {dim} need at least "
                f"{_HEADER.size + count + row_bytes} bytes, file has {size}"
            )
        blob = fh.read(id_bytes)
        parts = blob.split(b"\0")
        if len(parts) - 1 < count:
            raise TruncatedFileError(f"{path}: declared {count} ids, found {len(parts) - 1} before the row data")
        if len(parts) - 1 > count or parts[-1]:
            raise MatrixFormatError(f"{path}: id block does not match declared count {count}")
        try:
            ids = [x.decode("utf-8") for x in parts[:-1]]
        except UnicodeDecodeError:
            raise MatrixFormatError(f"{path}: an id is not valid UTF-8") from None
        rows = np.fromfile(fh, dtype="<f4", count=count * dim).reshape(count, dim)
    if len(set(ids)) != len(ids):
        raise DuplicateIdError(f"{path}: duplicate id {_first_duplicate(ids)!r}")
    return dim, tuple(ids), rows.astype(np.float32, copy=False)


def save_matrix(m: EmbeddingMatrix, path) -> None:
    write_container(path, MAGIC_EMBEDDINGS, m.ids, m.rows)


def load_matrix(path, check_norms: bool = True) -> EmbeddingMatrix:
    dim, ids, rows = read_container(path, MAGIC_EMBEDDINGS)
    m = EmbeddingMatrix(dim, ids, rows)
    if check_norms:
        m.check_unit_norm()
    return m
