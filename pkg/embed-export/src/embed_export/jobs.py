"""Export jobs: run an encoder over an input manifest and write a store."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from embed_export.encoders import ItemError, make_encoder
from embed_export.wcpe import write_store


@dataclass
class ExportJob:
    kind: str                 # text | image
    items: list               # (id, payload) pairs; payload is text or an image path
    role: str                 # classifier | context | content
    out_path: str
    model_spec: str = "feature"
    dim: int | None = None

    def __post_init__(self):
        ids = [i for i, _ in self.items]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate ids in job: {dupes[:5]}")


@dataclass
class ExportResult:
    written: int
    dim: int
    model_id: str
    failures: list = field(default_factory=list)  # (id, reason)

    @property
    def ok(self) -> bool:
        return not self.failures


def load_manifest(path) -> list:
    """Read an inputs manifest: one ``{"id", "payload"|"path"}`` object per line."""
    items = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            payload = row.get("payload", row.get("path"))
            if "id" not in row or payload is None:
                raise ValueError(f"{path}:{lineno}: need 'id' and 'payload' (or 'path')")
            items.append((row["id"], payload))
    return items


def run_export(job: ExportJob) -> ExportResult:
    """Encode every item; write the survivors; report per-item failures.

    The store and its ``<out>.meta.json`` sidecar are written even when
    some items fail, so a partial export is inspectable; callers decide
    whether a non-empty failure list is fatal (the CLI exits nonzero).
    """
    encoder = make_encoder(job.model_spec, job.kind, job.role, job.dim)
    ids, rows, failures = [], [], []
    for item_id, payload in job.items:
        try:
            rows.append(encoder.encode(payload))
        except ItemError as exc:
            failures.append((item_id, str(exc)))
            continue
        ids.append(item_id)

    vectors = np.stack(rows) if rows else np.empty((0, encoder.dim), np.float32)
    write_store(job.out_path, ids, vectors)
    meta = {
        "model_id": encoder.model_id,
        "dim": encoder.dim,
        "kind": job.kind,
        "role": job.role,
        "preprocessing": encoder.preprocessing,
        "count": len(ids),
        "failures": len(failures),
    }
    meta_path = Path(str(job.out_path) + ".meta.json")
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return ExportResult(written=len(ids), dim=encoder.dim,
                        model_id=encoder.model_id, failures=failures)
