"""Domain types for mined web corpora."""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class ClassLabel:
    """One user-specified category.

    ``id`` is the short stable key used throughout the pipeline;
    ``display_name`` is the human-readable text substituted into query
    and prompt templates.
    """

    id: str
    display_name: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("class id must be non-empty")
        if not self.display_name:
            raise ValueError(f"class {self.id!r}: display_name must be non-empty")


@dataclass
class MinedExample:
    """One scraped image together with its textual meta-data and provenance."""

    example_id: str
    class_query: str
    image_bytes_path: str
    alt_text: str
    pre_text: str
    post_text: str
    source_url: str
    image_url: str
    fetched_at: str

    def __post_init__(self):
        if not (self.alt_text or self.pre_text or self.post_text):
            raise ValueError(
                f"example {self.example_id!r}: all textual contexts empty "
                "(such examples must be dropped, not stored)"
            )

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "class_query": self.class_query,
            "image_bytes_path": self.image_bytes_path,
            "alt_text": self.alt_text,
            "pre_text": self.pre_text,
            "post_text": self.post_text,
            "source_url": self.source_url,
            "image_url": self.image_url,
            "fetched_at": self.fetched_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MinedExample":
        return cls(**{k: d[k] for k in (
            "example_id", "class_query", "image_bytes_path", "alt_text",
            "pre_text", "post_text", "source_url", "image_url", "fetched_at",
        )})


@dataclass
class CorpusManifest:
    """Everything needed to reproduce and consume a mined corpus."""

    task_name: str
    classes: list[ClassLabel]
    per_class_target: int
    examples: list[MinedExample]
    query_template: str
    stats: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        ids = [c.id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate class ids in manifest")
        known = set(ids)
        seen = set()
        per_class: dict[str, int] = {}
        for ex in self.examples:
            if ex.class_query not in known:
                raise ValueError(f"example {ex.example_id!r} references unknown class {ex.class_query!r}")
            if ex.example_id in seen:
                raise ValueError(f"duplicate example id {ex.example_id!r}")
            seen.add(ex.example_id)
            per_class[ex.class_query] = per_class.get(ex.class_query, 0) + 1
        for cid, n in per_class.items():
            if n > self.per_class_target:
                raise ValueError(f"class {cid!r} has {n} examples, exceeding target {self.per_class_target}")

    def class_ids(self) -> list[str]:
        return [c.id for c in self.classes]

    def to_dict(self) -> dict:
        return {
            "task_name": self.task_name,
            "classes": [{"id": c.id, "display_name": c.display_name} for c in self.classes],
            "per_class_target": self.per_class_target,
            "examples": [ex.to_dict() for ex in self.examples],
            "query_template": self.query_template,
            "stats": self.stats,
            "warnings": self.warnings,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusManifest":
        return cls(
            task_name=d["task_name"],
            classes=[ClassLabel(c["id"], c["display_name"]) for c in d["classes"]],
            per_class_target=d["per_class_target"],
            examples=[MinedExample.from_dict(e) for e in d["examples"]],
            query_template=d["query_template"],
            stats=d.get("stats", {}),
            warnings=d.get("warnings", []),
        )

    def save(self, path) -> None:
        Path(path).write_text(canonical_json(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "CorpusManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def content_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode("utf-8")).hexdigest()


def canonical_json(obj) -> str:
    """Deterministic JSON encoding used for hashing and on-disk manifests."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def load_classes(path) -> list[ClassLabel]:
    """Read a classes.json file: a list of {"id", "display_name"} objects."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ClassLabel(c["id"], c["display_name"]) for c in raw]


def fill_template(template: str, display_name: str) -> str:
    """Substitute the ``<category>`` placeholder of a query/prompt template."""
    return template.replace("<category>", display_name)
