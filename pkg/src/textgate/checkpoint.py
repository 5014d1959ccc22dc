"""Versioned binary checkpoints.

Layout (all integers little-endian):

    magic 'AEGC' (4 bytes)
    format version       u32
    metadata length      u32
    metadata JSON        (UTF-8: config snapshot, step count, extras)
    tensor count         u32
    per tensor:
        name length      u16
        name             UTF-8
        dtype code       u8   (1 = float32, 2 = float64)
        rank             u8
        dims             u64 each
        values           raw little-endian

Model parameters are stored under their bank names, optimizer state
under 'opt.acc_grad/...' and 'opt.acc_update/...'. Loading validates
the header and every table entry and reports the byte offset of any
corruption instead of returning a partial model.
"""

import io
import json
import struct

import numpy as np

MAGIC = b"AEGC"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


class CheckpointError(ValueError):
    pass


class Checkpoint:
    def __init__(self, version, metadata, arrays):
        self.version = version
        self.metadata = metadata
        self.arrays = arrays  # name -> ndarray, file order

    @property
    def step(self):
        return self.metadata.get("step", 0)

    @property
    def config_dict(self):
        return self.metadata.get("config", {})

    def model_arrays(self):
        return {n: a for n, a in self.arrays.items() if not n.startswith("opt.")}

    def optimizer_arrays(self):
        return {n: a for n, a in self.arrays.items() if n.startswith("opt.")}


def save_checkpoint(path, arrays, metadata):
    """Write arrays (name -> float ndarray, insertion order kept) plus
    JSON-serializable metadata."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype not in _CODES:
            raise CheckpointError(f"tensor '{name}' has unsupported dtype {arr.dtype}")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise CheckpointError(f"tensor name too long: {name[:40]}...")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        for d in arr.shape:
            buf.write(struct.pack("<Q", d))
        buf.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.off = 0

    def take(self, n, what):
        if self.off + n > len(self.blob):
            raise CheckpointError(f"truncated checkpoint: wanted {n} bytes for {what} "
                                  f"at offset {self.off}, file has {len(self.blob)}")
        out = self.blob[self.off:self.off + n]
        self.off += n
        return out

    def u(self, fmt, what):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size, what))[0]


def load_checkpoint(path):
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r} at offset 0 (expected {MAGIC!r})")
    version = r.u("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported format version {version} at offset 4")
    meta_len = r.u("<I", "metadata length")
    meta_off = r.off
    try:
        metadata = json.loads(r.take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt metadata JSON at offset {meta_off}: {e}") from None
    count = r.u("<I", "tensor count")
    arrays = {}
    for i in range(count):
        entry_off = r.off
        name_len = r.u("<H", f"tensor {i} name length")
        try:
            name = r.take(name_len, f"tensor {i} name").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"tensor {i} name is not UTF-8 "
                                  f"(offset {entry_off})") from None
        code = r.u("<B", f"tensor '{name}' dtype")
        if code not in _DTYPES:
            raise CheckpointError(f"tensor '{name}': unknown dtype code {code} "
                                  f"at offset {r.off - 1}")
        rank = r.u("<B", f"tensor '{name}' rank")
        dims = tuple(r.u("<Q", f"tensor '{name}' dim {d}") for d in range(rank))
        n_items = 1
        for d in dims:
            n_items *= d
        dtype = _DTYPES[code]
        raw = r.take(n_items * dtype.itemsize, f"tensor '{name}' values")
        if name in arrays:
            raise CheckpointError(f"duplicate tensor name '{name}' at offset {entry_off}")
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
    if r.off != len(blob):
        raise CheckpointError(f"{len(blob) - r.off} trailing bytes after tensor table "
                              f"(offset {r.off})")
    return Checkpoint(version, metadata, arrays)


def expected_file_size(arrays, metadata):
    """Exact byte size save_checkpoint will produce (layout arithmetic)."""
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    size = 4 + 4 + 4 + len(meta) + 4
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        size += 2 + len(name.encode("utf-8")) + 1 + 1 + 8 * arr.ndim + arr.nbytes
    return size
