"""Dense vector stores and the similarity kernels built on them.

File format (``.wcpe``): 8-byte magic ``WCPEMB01``, little-endian u32
dim, u64 count, ``count`` × (u16 id-length, UTF-8 id bytes), then
``count*dim`` little-endian float32 row-major payload.  Values are
float32 on disk and accumulated in float64 inside every dot product.
"""

import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from webcp.errors import EmbeddingFormatError, MissingEmbeddingError, TransportError

MAGIC = b"WCPEMB01"


@dataclass
class EmbeddingMatrix:
    """ID-indexed dense vectors. Immutable after construction."""

    dim: int
    ids: list[str]
    data: np.ndarray
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        data = np.asarray(self.data, dtype=np.float32)
        if data.size == 0:
            data = data.reshape(0, self.dim)
        if data.ndim != 2 or data.shape[1] != self.dim:
            raise ValueError(f"data shape {data.shape} does not match dim {self.dim}")
        if len(self.ids) != data.shape[0]:
            raise ValueError(f"{len(self.ids)} ids for {data.shape[0]} rows")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate ids in embedding matrix")
        if data.size and not np.isfinite(data).all():
            raise ValueError("non-finite values in embedding matrix")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "_index", {i: n for n, i in enumerate(self.ids)})

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, id_: str) -> bool:
        return id_ in self._index

    def row(self, id_: str) -> np.ndarray:
        try:
            return self.data[self._index[id_]]
        except KeyError:
            raise MissingEmbeddingError(f"no embedding for id {id_!r}") from None

    def rows(self, ids) -> np.ndarray:
        return np.stack([self.row(i) for i in ids]) if ids else np.empty((0, self.dim), np.float32)


@dataclass
class SimilarityRow:
    """Cosine similarities of one subject against a set of targets."""

    subject_id: str
    scores: dict

    def __post_init__(self):
        for target, value in self.scores.items():
            if not -1.0 - 1e-6 <= value <= 1.0 + 1e-6:
                raise ValueError(f"similarity ({self.subject_id!r}, {target!r}) = {value!r} "
                                 "outside [-1, 1]")


def similarity_row(subject_id: str, subject: np.ndarray,
                   targets: "EmbeddingMatrix", target_ids=None) -> SimilarityRow:
    """Cosine of ``subject`` against each target row, as a :class:`SimilarityRow`."""
    ids = list(target_ids) if target_ids is not None else list(targets.ids)
    sims = cosine_rows(np.asarray(subject).reshape(1, -1), targets.rows(ids))[0]
    return SimilarityRow(subject_id=subject_id, scores=dict(zip(ids, sims.tolist())))


def cosine(u, v) -> float:
    """Cosine similarity of two vectors, accumulated in float64."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine is undefined for zero-norm vectors")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine matrix between the rows of ``a`` and ``b`` (float64)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    if (na == 0).any() or (nb == 0).any():
        raise ValueError("cosine is undefined for zero-norm vectors")
    return np.clip((a / na) @ (b / nb).T, -1.0, 1.0)


def softmax(logits, temperature: float) -> np.ndarray:
    """Temperature softmax with max-subtraction for stability."""
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64)
    if z.size and not np.isfinite(z).all():
        raise ValueError("softmax requires finite logits")
    z = z / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def store_embeddings(matrix: EmbeddingMatrix, path) -> None:
    """Write ``matrix`` to ``path`` atomically in the .wcpe format."""
    path = Path(path)
    parts = [MAGIC, struct.pack("<I", matrix.dim), struct.pack("<Q", len(matrix))]
    for id_ in matrix.ids:
        raw = id_.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"id too long for format ({len(raw)} bytes)")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    parts.append(np.ascontiguousarray(matrix.data, dtype="<f4").tobytes())
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def load_embeddings(path) -> EmbeddingMatrix:
    """Read a .wcpe file; raises :class:`EmbeddingFormatError` with the byte
    offset of the first problem."""
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise EmbeddingFormatError(f"bad magic {blob[:8]!r}, expected {MAGIC!r}", 0)
    if len(blob) < 20:
        raise EmbeddingFormatError("truncated header", len(blob))
    dim = struct.unpack_from("<I", blob, 8)[0]
    count = struct.unpack_from("<Q", blob, 12)[0]
    offset = 20
    ids: list[str] = []
    seen: set[str] = set()
    for _ in range(count):
        if offset + 2 > len(blob):
            raise EmbeddingFormatError("truncated id table", offset)
        (id_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        if offset + id_len > len(blob):
            raise EmbeddingFormatError("truncated id bytes", offset)
        try:
            id_ = blob[offset:offset + id_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EmbeddingFormatError(f"invalid UTF-8 id: {exc}", offset) from exc
        if id_ in seen:
            raise EmbeddingFormatError(f"duplicate id {id_!r}", offset)
        seen.add(id_)
        ids.append(id_)
        offset += id_len
    expected = count * dim * 4
    if len(blob) - offset != expected:
        raise EmbeddingFormatError(
            f"payload is {len(blob) - offset} bytes, expected {expected}", offset
        )
    data = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=offset)
    data = data.reshape(count, dim) if count else data.reshape(0, dim)
    if data.size and not np.isfinite(data).all():
        bad = int(np.argwhere(~np.isfinite(data))[0][0])
        raise EmbeddingFormatError(f"non-finite value in row {bad}", offset + bad * dim * 4)
    return EmbeddingMatrix(dim=dim, ids=ids, data=data.copy())


# ---------------------------------------------------------------------------
# HTTP embedding service client
# ---------------------------------------------------------------------------

def fetch_embeddings(
    endpoint: str,
    kind: str,
    items: list[tuple[str, str]],
    expected_dim: int | None = None,
    timeout: float = 60.0,
    retries: int = 2,
    session=None,
) -> EmbeddingMatrix:
    """POST ``items`` (id, payload pairs) to an embedding service.

    The service contract is ``{"kind", "items": [{"id", "payload"}]}`` in,
    ``{"dim": D, "vectors": {id: [f32...]}}`` out.  A dimension that
    disagrees with ``expected_dim`` is a terminal error.
    """
    if kind not in ("text", "image"):
        raise ValueError(f"kind must be 'text' or 'image', got {kind!r}")
    sess = session or requests.Session()
    body = {"kind": kind, "items": [{"id": i, "payload": p} for i, p in items]}
    attempt = 0
    while True:
        try:
            resp = sess.post(endpoint, json=body, timeout=timeout)
            resp.raise_for_status()
            payload = resp.json()
            break
        except (requests.RequestException, ValueError) as exc:
            if attempt < retries:
                time.sleep(0.5 * 2 ** attempt)
                attempt += 1
                continue
            raise TransportError(f"embedding service failed: {exc}") from exc
    dim = int(payload["dim"])
    if expected_dim is not None and dim != expected_dim:
        raise ValueError(f"service returned dim {dim}, store expects {expected_dim}")
    vectors = payload["vectors"]
    missing = [i for i, _ in items if i not in vectors]
    if missing:
        raise MissingEmbeddingError(f"service response missing ids: {missing[:5]}")
    ids = [i for i, _ in items]
    data = np.array([vectors[i] for i in ids], dtype=np.float32).reshape(len(ids), dim)
    return EmbeddingMatrix(dim=dim, ids=ids, data=data)


def import_dump(dump: dict) -> EmbeddingMatrix:
    """Build a matrix from a service-shaped JSON dump ``{"dim", "vectors"}``."""
    dim = int(dump["dim"])
    vectors = dump["vectors"]
    ids = sorted(vectors)
    data = np.array([vectors[i] for i in ids], dtype=np.float32).reshape(len(ids), dim)
    return EmbeddingMatrix(dim=dim, ids=ids, data=data)
