"""CMX1: a flat binary container for compressed matrices.

Layout, all integers 64-bit little-endian unsigned, scalars little-endian
IEEE floats:

========  =====================================================
bytes     content
========  =====================================================
0..3      magic ``b"CMX1"``
4         representation tag: 0 dense, 1 lmf, 2 hmf, 3 csr
5         scalar width in bytes: 4 (float32) or 8 (float64)
6..       dims: ``m n`` plus ``j k`` (hmf), ``r`` (lmf), ``nnz`` (csr)
..        payload blocks, row-major, in declared order
========  =====================================================

Payload order: dense ``data``; lmf ``left, right``; hmf ``top, low_left,
low_right``; csr ``row_offsets, col_indices`` (as u64) then ``values``.
Round-trips are byte-exact: ``write_bytes(read_bytes(b)) == b``.
"""

from __future__ import annotations

import struct

import numpy as np

from .matrix import CompressedMatrix, CsrMatrix, DenseMatrix, HmfMatrix, LmfMatrix, ShapeError, StructureError

MAGIC = b"CMX1"

_TAG_DENSE, _TAG_LMF, _TAG_HMF, _TAG_CSR = 0, 1, 2, 3
_FLOAT_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}
_INDEX_DTYPE = np.dtype("<u8")


class FormatError(ValueError):
    """The byte stream is not a well-formed CMX1 container."""


def _scalar_width(arrays) -> int:
    widths = {a.dtype.itemsize for a in arrays if a.size}
    if len(widths) > 1:
        raise FormatError(f"mixed scalar widths {sorted(widths)} cannot be serialized")
    width = widths.pop() if widths else 8
    if width not in _FLOAT_DTYPES:
        raise FormatError(f"unsupported scalar width {width}")
    return width


def write_bytes(mat: CompressedMatrix) -> bytes:
    """Serialize a matrix to CMX1 bytes."""
    if isinstance(mat, DenseMatrix):
        tag, dims, floats = _TAG_DENSE, (mat.rows, mat.cols), [mat.data]
        ints: list[np.ndarray] = []
    elif isinstance(mat, LmfMatrix):
        tag, dims, floats = _TAG_LMF, (mat.rows, mat.cols, mat.rank), [mat.left, mat.right]
        ints = []
    elif isinstance(mat, HmfMatrix):
        tag = _TAG_HMF
        dims = (mat.rows, mat.cols, mat.dense_rows, mat.rank)
        floats = [mat.top, mat.low_left, mat.low_right]
        ints = []
    elif isinstance(mat, CsrMatrix):
        tag, dims, floats = _TAG_CSR, (mat.rows, mat.cols, mat.nnz), [mat.values]
        ints = [mat.row_offsets, mat.col_indices]
    else:
        raise FormatError(f"cannot serialize {type(mat).__name__}")

    width = _scalar_width(floats)
    dtype = _FLOAT_DTYPES[width]
    out = bytearray()
    out += MAGIC
    out += struct.pack("<BB", tag, width)
    out += struct.pack(f"<{len(dims)}Q", *dims)
    for a in ints:
        out += np.ascontiguousarray(a, dtype=_INDEX_DTYPE).tobytes()
    for a in floats:
        out += np.ascontiguousarray(a, dtype=dtype).tobytes()
    return bytes(out)


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, nbytes: int, what: str) -> bytes:
        if self.pos + nbytes > len(self.buf):
            raise FormatError(f"truncated container: ran out of bytes reading {what}")
        chunk = self.buf[self.pos : self.pos + nbytes]
        self.pos += nbytes
        return chunk

    def u64(self, count: int, what: str) -> tuple[int, ...]:
        return struct.unpack(f"<{count}Q", self.take(8 * count, what))

    def array(self, count: int, dtype: np.dtype, shape, what: str) -> np.ndarray:
        raw = self.take(count * dtype.itemsize, what)
        return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def read_bytes(buf: bytes) -> CompressedMatrix:
    """Parse CMX1 bytes back into a matrix; raises FormatError on any defect."""
    cur = _Cursor(bytes(buf))
    if cur.take(4, "magic") != MAGIC:
        raise FormatError("bad magic: not a CMX1 container")
    tag, width = struct.unpack("<BB", cur.take(2, "header"))
    if width not in _FLOAT_DTYPES:
        raise FormatError(f"unsupported scalar width {width}")
    fdt = _FLOAT_DTYPES[width]

    try:
        if tag == _TAG_DENSE:
            m, n = cur.u64(2, "dims")
            mat: CompressedMatrix = DenseMatrix(cur.array(m * n, fdt, (m, n), "data"))
        elif tag == _TAG_LMF:
            m, n, r = cur.u64(3, "dims")
            left = cur.array(m * r, fdt, (m, r), "left factor")
            right = cur.array(r * n, fdt, (r, n), "right factor")
            mat = LmfMatrix(left, right)
        elif tag == _TAG_HMF:
            m, n, j, k = cur.u64(4, "dims")
            if j > m:
                raise FormatError(f"dense row count {j} exceeds row count {m}")
            top = cur.array(j * n, fdt, (j, n), "top block")
            low_left = cur.array((m - j) * k, fdt, (m - j, k), "tall factor")
            low_right = cur.array(k * n, fdt, (k, n), "flat factor")
            mat = HmfMatrix(top, low_left, low_right)
        elif tag == _TAG_CSR:
            m, n, nnz = cur.u64(3, "dims")
            offsets = cur.array(m + 1, _INDEX_DTYPE, (m + 1,), "row offsets").astype(np.int64)
            indices = cur.array(nnz, _INDEX_DTYPE, (nnz,), "column indices").astype(np.int64)
            values = cur.array(nnz, fdt, (nnz,), "values")
            mat = CsrMatrix(n, offsets, indices, values)
        else:
            raise FormatError(f"unknown representation tag {tag}")
    except (ShapeError, StructureError) as exc:
        raise FormatError(f"payload violates representation invariants: {exc}") from exc

    if cur.pos != len(cur.buf):
        raise FormatError(f"{len(cur.buf) - cur.pos} trailing bytes after payload")
    return mat


def write_file(mat: CompressedMatrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_bytes(mat))


def read_file(path) -> CompressedMatrix:
    with open(path, "rb") as fh:
        return read_bytes(fh.read())
