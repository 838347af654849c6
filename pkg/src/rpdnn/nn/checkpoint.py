"""Binary parameter checkpoints.

Layout: 6-byte magic ``RPDNN1``, then for each tensor in sorted name
order: uint32 LE name byte-length, UTF-8 name, uint32 LE rank, uint32 LE
dims, raw float64 LE values in C order.  Sorted order plus fixed-width
fields make equal parameter sets byte-identical on disk.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import CorpusError

MAGIC = b"RPDNN1"


def save_checkpoint(path, params: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name in sorted(params):
            # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d,
            # and tobytes() copies in C order regardless of memory layout
            arr = np.asarray(params[name], dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    def take(fh, n, what):
        buf = fh.read(n)
        if len(buf) != n:
            raise CorpusError(f"{path}: truncated checkpoint while reading {what}")
        return buf

    params: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CorpusError(f"{path}: bad checkpoint magic")
        while True:
            head = fh.read(4)
            if not head:
                break
            if len(head) != 4:
                raise CorpusError(f"{path}: truncated checkpoint header")
            (name_len,) = struct.unpack("<I", head)
            name = take(fh, name_len, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<I", take(fh, 4, f"{name} rank"))
            shape = struct.unpack(f"<{rank}I", take(fh, 4 * rank, f"{name} dims"))
            count = int(np.prod(shape)) if rank else 1
            raw = take(fh, 8 * count, f"{name} values")
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
            if name in params:
                raise CorpusError(f"{path}: duplicate tensor {name}")
            params[name] = arr
    return params
