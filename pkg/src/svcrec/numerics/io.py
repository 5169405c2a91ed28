"""Binary/CSV embedding files and the named-tensor checkpoint format.

Embedding binary layout (little endian)::

    b"DYSR"  version:u32  count:u32  dim:u32  count*dim float64 (row major)

optionally followed by an id table ``b"IDS\\0"`` then ``count`` entries of
``len:u32`` + utf-8 bytes. Without the table, rows are keyed "0".."count-1".

Named-tensor checkpoint::

    b"DYSRTENS" version:u32 n:u32  then per tensor
    name_len:u32 name ndim:u32 shape(u32 * ndim) float64 data (row major)
"""
import csv
import struct
from pathlib import Path

import numpy as np

from ..errors import IngestionError

EMB_MAGIC = b"DYSR"
EMB_VERSION = 1
IDS_MAGIC = b"IDS\0"
TENSOR_MAGIC = b"DYSRTENS"
TENSOR_VERSION = 1


def write_embeddings_bin(path, ids, matrix):
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ValueError(f"{len(ids)} ids for a matrix of shape {matrix.shape}")
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<III", EMB_VERSION, matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.tobytes())
        fh.write(IDS_MAGIC)
        for i in ids:
            raw = str(i).encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def read_embeddings_bin(path):
    """Return (ids, matrix)."""
    data = Path(path).read_bytes()
    if data[:4] != EMB_MAGIC:
        raise IngestionError(f"{path}: bad magic {data[:4]!r}")
    version, count, dim = struct.unpack_from("<III", data, 4)
    if version != EMB_VERSION:
        raise IngestionError(f"{path}: unsupported version {version}")
    off = 16
    end = off + 8 * count * dim
    if len(data) < end:
        raise IngestionError(f"{path}: truncated, expected {count}x{dim} floats")
    matrix = np.frombuffer(data, dtype="<f8", count=count * dim, offset=off)
    matrix = matrix.reshape(count, dim).astype(np.float64)
    ids = [str(i) for i in range(count)]
    if len(data) > end:
        if data[end:end + 4] != IDS_MAGIC:
            raise IngestionError(f"{path}: trailing bytes are not an id table")
        off = end + 4
        ids = []
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            ids.append(data[off:off + n].decode("utf-8"))
            off += n
    return ids, matrix


def write_embeddings_csv(path, ids, matrix):
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + [f"v_{j}" for j in range(matrix.shape[1])])
        for i, row in zip(ids, matrix):
            w.writerow([i] + [repr(float(x)) for x in row])


def read_embeddings_csv(path):
    ids, rows = [], []
    with open(path, newline="") as fh:
        for k, rec in enumerate(csv.reader(fh)):
            if not rec:
                continue
            if k == 0 and rec[0] == "id":
                continue
            ids.append(rec[0])
            rows.append([float(x) for x in rec[1:]])
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise IngestionError(f"{path}: rows have differing widths {sorted(widths)}")
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), widths.pop() if widths else 0)
    return ids, matrix


def read_embeddings(path):
    """Dispatch on content: binary if it starts with the magic, else CSV."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == EMB_MAGIC:
        return read_embeddings_bin(path)
    return read_embeddings_csv(path)


def write_tensors(path, tensors):
    """Write an ordered mapping name -> array."""
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<II", TENSOR_VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_tensors(path):
    data = Path(path).read_bytes()
    if data[:8] != TENSOR_MAGIC:
        raise IngestionError(f"{path}: not a tensor checkpoint")
    version, n = struct.unpack_from("<II", data, 8)
    if version != TENSOR_VERSION:
        raise IngestionError(f"{path}: unsupported version {version}")
    off = 16
    out = {}
    for _ in range(n):
        (ln,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off:off + ln].decode("utf-8")
        off += ln
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape)
        out[name] = arr.astype(np.float64)
        off += 8 * size
    return out
