"""Plausibility vectors: per-class likelihoods plus a junk probability.

For a mined example the pipeline combines three signals:

* context alignment ``c``: softmax over classes of the example's best
  sentence-to-query cosine per class;
* a content filter ``s_neg``: probability mass of the generic negative
  label against the invalid-form prompts, given the image;
* content alignment ``h``: per class, the image's softmax preference for
  the class's simplified pseudo-label over the negative label.

These combine as ``lambda(y) = h(y) * c(y) * s_neg`` with
``lambda_junk = 1 - sum(lambda)``.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from webcp import logs
from webcp.corpus.html_context import split_sentences
from webcp.corpus.types import CorpusManifest, MinedExample
from webcp.embeddings import EmbeddingMatrix, cosine_rows, softmax
from webcp.errors import ConfigError, MissingEmbeddingError

logger = logs.get_logger("plausibility")

# Seeded from the invalid-form prompts reported to work in practice;
# fully user-overridable.
DEFAULT_INVALID_PROMPTS = [
    "an image with a lot of text",
    "an image of a graph",
    "an image of a diagram",
    "a chart",
]
DEFAULT_NEGATIVE_LABEL = "an image"


@dataclass(frozen=True)
class PromptSet:
    invalid_form_prompts: tuple = tuple(DEFAULT_INVALID_PROMPTS)
    negative_label: str = DEFAULT_NEGATIVE_LABEL

    def __post_init__(self):
        if not self.negative_label:
            raise ValueError("negative_label must be non-empty")
        prompts = tuple(self.invalid_form_prompts)
        if any(not p for p in prompts):
            raise ValueError("invalid-form prompts must be non-empty strings")
        if len(set(prompts)) != len(prompts):
            raise ValueError("invalid-form prompts must be distinct")
        if self.negative_label in prompts:
            raise ValueError("negative_label must not repeat an invalid-form prompt")
        object.__setattr__(self, "invalid_form_prompts", prompts)

    def all_texts(self) -> list[str]:
        return list(self.invalid_form_prompts) + [self.negative_label]


@dataclass
class PlausibilityConfig:
    t_context: float = 0.07
    t_filter: float = 0.07
    t_content: float = 0.07
    aggregation: str = "max"  # or "mean"
    prompt_set: PromptSet = field(default_factory=PromptSet)

    def __post_init__(self):
        for name in ("t_context", "t_filter", "t_content"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.aggregation not in ("max", "mean"):
            raise ValueError(f"aggregation must be 'max' or 'mean', got {self.aggregation!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "PlausibilityConfig":
        prompts = d.get("prompts", {})
        return cls(
            t_context=d.get("t_context", 0.07),
            t_filter=d.get("t_filter", 0.07),
            t_content=d.get("t_content", 0.07),
            aggregation=d.get("aggregation", "max"),
            prompt_set=PromptSet(
                tuple(prompts.get("invalid_form_prompts", DEFAULT_INVALID_PROMPTS)),
                prompts.get("negative_label", DEFAULT_NEGATIVE_LABEL),
            ),
        )


@dataclass
class PlausibilityVector:
    """Per-example class plausibilities, junk probability, and audit trail."""

    example_id: str
    lam: dict
    lam_junk: float
    components: dict | None = None

    def __post_init__(self):
        total = sum(self.lam.values()) + self.lam_junk
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"example {self.example_id!r}: mass sums to {total!r}, not 1")
        for y, v in self.lam.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"example {self.example_id!r}: lambda[{y!r}] = {v!r} outside [0,1]")
        if not 0.0 <= self.lam_junk <= 1.0:
            raise ValueError(f"example {self.example_id!r}: lambda_junk = {self.lam_junk!r} outside [0,1]")

    def to_dict(self) -> dict:
        d = {"example_id": self.example_id, "lambda": self.lam, "lambda_junk": self.lam_junk}
        if self.components is not None:
            d["components"] = self.components
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlausibilityVector":
        return cls(d["example_id"], d["lambda"], d["lambda_junk"], d.get("components"))


@dataclass
class AmbiguousCalibrationSet:
    """Calibration examples with plausibility vectors, in canonical id order."""

    entries: list[PlausibilityVector]
    class_ids: list[str]

    def __post_init__(self):
        self.entries = sorted(self.entries, key=lambda v: v.example_id)
        expected = set(self.class_ids)
        for v in self.entries:
            if set(v.lam) != expected:
                raise ValueError(f"example {v.example_id!r} covers classes {sorted(v.lam)}, "
                                 f"expected {sorted(expected)}")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class PlausibilityStores:
    """Embedding stores consumed by plausibility generation."""

    sentences: EmbeddingMatrix      # context role, keyed by sentence text
    queries: EmbeddingMatrix        # context role, keyed by class id
    prompts: EmbeddingMatrix        # content role, keyed by prompt/pseudo text
    images: EmbeddingMatrix         # content role, keyed by example id


def example_sentences(example: MinedExample) -> list[str]:
    """All sentences of an example's alt/pre/post text, in document order."""
    sentences: list[str] = []
    for block in (example.alt_text, example.pre_text, example.post_text):
        sentences.extend(split_sentences(block))
    return sentences


def context_scores(
    example: MinedExample,
    class_ids: list[str],
    sentence_store: EmbeddingMatrix,
    query_store: EmbeddingMatrix,
    t_context: float,
    aggregation: str = "max",
) -> dict:
    """Per-class context alignment ``c``; sums to 1 over classes."""
    sentences = example_sentences(example)
    if not sentences:
        raise ValueError(f"example {example.example_id!r} has no sentences; "
                         "it should have been filtered during mining")
    sent_vecs = sentence_store.rows(sentences)
    query_vecs = query_store.rows(class_ids)
    sims = cosine_rows(sent_vecs, query_vecs)  # (n_sentences, n_classes)
    if aggregation == "max":
        raw = sims.max(axis=0)
    elif aggregation == "mean":
        raw = sims.mean(axis=0)
    else:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    c = softmax(raw, t_context)
    return dict(zip(class_ids, c.tolist()))


def content_filter(
    image_embedding: np.ndarray,
    prompt_set: PromptSet,
    prompt_store: EmbeddingMatrix,
    t_filter: float,
) -> float:
    """Probability ``s_neg`` that the image is of a valid form.

    Softmax over the image's cosines against every invalid-form prompt
    and the negative label; returns the negative label's share.  Class
    independent by construction.
    """
    texts = prompt_set.all_texts()
    prompt_vecs = prompt_store.rows(texts)
    sims = cosine_rows(image_embedding.reshape(1, -1), prompt_vecs)[0]
    probs = softmax(sims, t_filter)
    return float(probs[-1])


def content_scores(
    image_embedding: np.ndarray,
    class_ids: list[str],
    pseudo_map: dict,
    prompt_store: EmbeddingMatrix,
    negative_label: str,
    t_content: float,
) -> dict:
    """Per-class content alignment ``h``: pseudo-label vs negative label."""
    missing = [y for y in class_ids if y not in pseudo_map]
    if missing:
        raise ConfigError([f"pseudo-label map is missing class {y!r}" for y in missing])
    neg_vec = prompt_store.row(negative_label)
    img = image_embedding.reshape(1, -1)
    h: dict = {}
    for y in class_ids:
        pseudo_vec = prompt_store.row(pseudo_map[y])
        sims = cosine_rows(img, np.stack([pseudo_vec, neg_vec]))[0]
        h[y] = float(softmax(sims, t_content)[0])
    return h


def combine(c: dict, h: dict, s_neg: float, example_id: str = "") -> PlausibilityVector:
    """Combine the three signals into a plausibility vector.

    ``lambda_junk`` is analytically non-negative (``c`` sums to 1 and
    ``h``, ``s_neg`` are at most 1); the clamp below only absorbs float
    drift and warns if it ever exceeds 1e-6.
    """
    if set(c) != set(h):
        raise ValueError(f"context and content scores cover different classes: "
                         f"{sorted(c)} vs {sorted(h)}")
    for name, mapping in (("c", c), ("h", h)):
        for y, v in mapping.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}[{y!r}] = {v!r} outside [0,1]")
    if not 0.0 <= s_neg <= 1.0:
        raise ValueError(f"s_neg = {s_neg!r} outside [0,1]")

    lam = {y: h[y] * c[y] * s_neg for y in c}
    raw_junk = 1.0 - sum(lam.values())
    junk = min(1.0, max(0.0, raw_junk))
    if abs(junk - raw_junk) > 1e-6:
        logger.warning("example %r: lambda_junk clamped by %.3g", example_id, abs(junk - raw_junk))
    components = {
        "context": dict(c),
        "content": dict(h),
        "s_neg": s_neg,
    }
    return PlausibilityVector(example_id=example_id, lam=lam, lam_junk=junk, components=components)


def build_ambiguous_set(
    corpus: CorpusManifest,
    stores: PlausibilityStores,
    pseudo_map: dict,
    config: PlausibilityConfig,
) -> tuple[AmbiguousCalibrationSet, list[tuple[str, str]]]:
    """One plausibility vector per retained example.

    Examples whose sentences or image lack embeddings are dropped with a
    logged reason; the drop list is returned alongside the set.  Raises
    :class:`MissingEmbeddingError` only if nothing survives.
    """
    class_ids = corpus.class_ids()
    entries: list[PlausibilityVector] = []
    dropped: list[tuple[str, str]] = []
    for example in sorted(corpus.examples, key=lambda e: e.example_id):
        try:
            c = context_scores(example, class_ids, stores.sentences, stores.queries,
                               config.t_context, config.aggregation)
            image_vec = stores.images.row(example.example_id)
            s_neg = content_filter(image_vec, config.prompt_set, stores.prompts, config.t_filter)
            h = content_scores(image_vec, class_ids, pseudo_map, stores.prompts,
                               config.prompt_set.negative_label, config.t_content)
        except (MissingEmbeddingError, ValueError) as exc:
            dropped.append((example.example_id, str(exc)))
            logs.emit_event(logger, "plausibility", "drop",
                            example_id=example.example_id, reason=str(exc))
            continue
        entries.append(combine(c, h, s_neg, example.example_id))
    if not entries:
        raise MissingEmbeddingError(
            f"no examples could be scored ({len(dropped)} dropped); "
            "check that the embedding stores cover the corpus"
        )
    return AmbiguousCalibrationSet(entries=entries, class_ids=class_ids), dropped


def save_plausibilities(amb: AmbiguousCalibrationSet, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for vec in amb.entries:
            fh.write(json.dumps(vec.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")


def load_plausibilities(path, class_ids: list[str] | None = None) -> AmbiguousCalibrationSet:
    entries = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                entries.append(PlausibilityVector.from_dict(json.loads(line)))
    if not entries:
        raise ValueError(f"{path}: empty plausibility file")
    if class_ids is None:
        class_ids = sorted(entries[0].lam)
    return AmbiguousCalibrationSet(entries=entries, class_ids=class_ids)


def load_pseudo_map(path) -> dict:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict) or not all(isinstance(v, str) and v for v in raw.values()):
        raise ConfigError("pseudo-label map must be a JSON object of non-empty strings")
    return raw
