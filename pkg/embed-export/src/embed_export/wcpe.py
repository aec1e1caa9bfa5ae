"""Writer/reader for the pipeline's .wcpe embedding store format.

Layout: 8-byte magic ``WCPEMB01``, little-endian u32 dim, u64 count,
``count`` x (u16 id-length, UTF-8 id bytes), then ``count*dim``
little-endian float32 row-major payload.  This is an independent
implementation of the wire format; compatibility is checked in the tests
against ``webcp embed-check``.
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"WCPEMB01"


def write_store(path, ids: list[str], vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors, dtype="<f4")
    if vectors.ndim != 2:
        raise ValueError(f"vectors must be 2-D, got shape {vectors.shape}")
    if len(ids) != vectors.shape[0]:
        raise ValueError(f"{len(ids)} ids for {vectors.shape[0]} rows")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids")
    if vectors.size and not np.isfinite(vectors).all():
        raise ValueError("non-finite vector values")
    parts = [MAGIC, struct.pack("<I", vectors.shape[1]), struct.pack("<Q", len(ids))]
    for id_ in ids:
        raw = id_.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"id too long: {len(raw)} bytes")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    parts.append(np.ascontiguousarray(vectors).tobytes())
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def read_store(path) -> tuple[list[str], np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ValueError(f"bad magic {blob[:8]!r}")
    dim = struct.unpack_from("<I", blob, 8)[0]
    count = struct.unpack_from("<Q", blob, 12)[0]
    offset = 20
    ids = []
    for _ in range(count):
        (id_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        ids.append(blob[offset:offset + id_len].decode("utf-8"))
        offset += id_len
    data = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=offset)
    return ids, data.reshape(count, dim).copy()
