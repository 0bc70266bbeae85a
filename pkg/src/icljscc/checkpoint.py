"""Binary checkpoint files.

Layout: the 8-byte magic ``ICLCKPT1``, a u32 format version, then one record
per tensor in name order::

    u32 name_length | name (UTF-8) | u32 rank | u64 dim * rank | f64 payload (little-endian, C order)

All integers are little-endian. Writing sorts names, so a save-load-save
cycle reproduces the file byte for byte.
"""
import os
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError, CheckpointShapeError, CheckpointTruncatedError, CheckpointVersionError

MAGIC = b"ICLCKPT1"
VERSION = 1


def dumps(params):
    out = [MAGIC, struct.pack("<I", VERSION)]
    for name in sorted(params):
        arr = np.asarray(params[name], dtype="<f8", order="C")  # keeps rank 0
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def save_checkpoint(path, params):
    """Write ``params`` atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(params))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(f"file ends inside {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def loads(data):
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise CheckpointVersionError("not a checkpoint: bad magic")
    r = _Reader(data)
    r.take(len(MAGIC), "magic")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}")
    params = {}
    while r.pos < len(data):
        name = r.take(r.u32("name length"), "name").decode("utf-8")
        rank = r.u32(f"rank of {name}")
        dims = struct.unpack(f"<{rank}Q", r.take(8 * rank, f"dims of {name}"))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = r.take(8 * count, f"payload of {name}")
        if name in params:
            raise CheckpointError(f"duplicate tensor {name}")
        params[name] = np.frombuffer(payload, dtype="<f8").astype(float).reshape(dims)
    return params


def load_checkpoint(path, template=None):
    """Read a checkpoint; with ``template``, names and shapes must match it exactly."""
    params = loads(Path(path).read_bytes())
    if template is not None:
        missing = sorted(set(template) - set(params))
        extra = sorted(set(params) - set(template))
        if missing or extra:
            raise CheckpointShapeError(f"tensor names differ: missing {missing}, unexpected {extra}")
        for name, ref in template.items():
            if params[name].shape != np.shape(ref):
                raise CheckpointShapeError(
                    f"tensor {name}: checkpoint shape {params[name].shape} != expected {np.shape(ref)}")
    return params
