"""Corpus mining: drive search -> fetch -> match -> extract per class.

Per-entry failures are logged and skipped, never fatal; a class that
yields no examples leaves a warning in the manifest.  With a
deterministic fixture provider/fetcher and a fixed clock the resulting
manifest is byte-identical across runs.
"""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from webcp import logs
from webcp.corpus import html_context
from webcp.corpus.fuzzy import url_filename
from webcp.corpus.search import search_images
from webcp.corpus.types import ClassLabel, CorpusManifest, MinedExample
from webcp.errors import FetchError, ProviderError

logger = logs.get_logger("miner")

_IMAGE_EXTS = {".jpg", ".jpeg", ".png", ".gif", ".webp", ".bmp", ".svg"}

SKIP_REASONS = (
    "page_fetch_error",
    "no_match",
    "lazy_load",
    "image_fetch_error",
    "empty_image",
    "empty_context",
)


@dataclass
class MineOptions:
    search_oversample: int = 3
    workers: int = 1
    fixed_clock: str | None = None
    match_threshold: float = html_context.MATCH_THRESHOLD
    max_tokens: int = html_context.MAX_CONTEXT_TOKENS
    max_sentences: int = html_context.MAX_CONTEXT_SENTENCES


@dataclass
class _ClassStats:
    considered: int = 0
    accepted: int = 0
    skipped: dict = field(default_factory=lambda: {r: 0 for r in SKIP_REASONS})


def example_id_for(image_url: str, context_url: str) -> str:
    return hashlib.sha256(f"{image_url}|{context_url}".encode("utf-8")).hexdigest()[:16]


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def mine_corpus(
    classes: list[ClassLabel],
    template: str,
    per_class: int,
    provider,
    fetcher,
    out_dir,
    task_name: str = "webcp",
    options: MineOptions | None = None,
) -> CorpusManifest:
    """Mine up to ``per_class`` examples for every class into ``out_dir``.

    Writes ``manifest.json``, ``metadata.jsonl`` and ``images/`` under
    ``out_dir`` and returns the manifest.
    """
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    opts = options or MineOptions()
    clock = (lambda: opts.fixed_clock) if opts.fixed_clock else _utc_now

    out = Path(out_dir)
    images_dir = out / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    examples: list[MinedExample] = []
    stats: dict[str, dict] = {}
    warnings: list[str] = []

    for cls in classes:
        cstats = _ClassStats()
        try:
            entries = search_images(cls, template, per_class * opts.search_oversample, provider)
        except ProviderError as exc:
            warnings.append(f"class {cls.id!r}: search failed: {exc}")
            logs.emit_event(logger, "mine", "search_failed", class_id=cls.id, error=str(exc))
            stats[cls.id] = _stats_dict(cstats)
            continue

        accepted = _mine_class(cls, entries, per_class, fetcher, images_dir, clock, opts, cstats)
        examples.extend(accepted)
        if not accepted:
            warnings.append(f"class {cls.id!r}: no examples mined")
        stats[cls.id] = _stats_dict(cstats)
        logs.emit_event(
            logger, "mine", "class_done", class_id=cls.id,
            accepted=cstats.accepted, considered=cstats.considered,
        )

    manifest = CorpusManifest(
        task_name=task_name,
        classes=list(classes),
        per_class_target=per_class,
        examples=examples,
        query_template=template,
        stats=stats,
        warnings=warnings,
    )
    manifest.save(out / "manifest.json")
    with (out / "metadata.jsonl").open("w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
    return manifest


def _mine_class(cls, entries, per_class, fetcher, images_dir, clock, opts, cstats):
    accepted: list[MinedExample] = []
    pages = _page_iter(entries, fetcher, opts.workers)
    for entry, page in pages:
        if len(accepted) >= per_class:
            break
        cstats.considered += 1
        if isinstance(page, Exception):
            cstats.skipped["page_fetch_error"] += 1
            logs.emit_event(logger, "mine", "skip", class_id=cls.id, url=entry.context_url,
                            reason="page_fetch_error", error=str(page))
            continue
        example = _process_entry(cls, entry, page, fetcher, images_dir, clock, opts, cstats)
        if example is not None:
            accepted.append(example)
            cstats.accepted += 1
    return accepted


def _page_iter(entries, fetcher, workers):
    """Yield (entry, html-or-exception) in rank order, optionally prefetching."""
    def fetch_one(entry):
        try:
            return fetcher.fetch(entry.context_url)
        except FetchError as exc:
            return exc

    if workers <= 1:
        for entry in entries:
            yield entry, fetch_one(entry)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for entry, page in zip(entries, pool.map(fetch_one, entries)):
            yield entry, page


def _process_entry(cls, entry, page_bytes, fetcher, images_dir, clock, opts, cstats):
    html = page_bytes.decode("utf-8", errors="replace")
    parsed = html_context.parse_page(html)
    match = html_context.match_image_in_page(parsed, entry.image_url, opts.match_threshold)
    if match is None:
        lazy = html_context.match_image_in_page(
            parsed, entry.image_url, opts.match_threshold,
            source_attrs=("data-src", "data-lazy-src"),
        )
        reason = "lazy_load" if lazy is not None else "no_match"
        cstats.skipped[reason] += 1
        logs.emit_event(logger, "mine", "skip", class_id=cls.id, url=entry.context_url, reason=reason)
        return None

    alt, pre, post = html_context.extract_context(match, opts.max_tokens, opts.max_sentences)
    if not (alt or pre or post):
        cstats.skipped["empty_context"] += 1
        logs.emit_event(logger, "mine", "skip", class_id=cls.id, url=entry.context_url,
                        reason="empty_context")
        return None

    try:
        image_bytes = fetcher.fetch(entry.image_url)
    except FetchError as exc:
        cstats.skipped["image_fetch_error"] += 1
        logs.emit_event(logger, "mine", "skip", class_id=cls.id, url=entry.image_url,
                        reason="image_fetch_error", error=str(exc))
        return None
    if not image_bytes:
        cstats.skipped["empty_image"] += 1
        return None

    suffix = Path(url_filename(entry.image_url)).suffix
    if suffix not in _IMAGE_EXTS:
        suffix = ".img"
    digest = hashlib.sha256(image_bytes).hexdigest()
    rel_path = f"images/{digest}{suffix}"
    target = images_dir / f"{digest}{suffix}"
    if not target.exists():
        target.write_bytes(image_bytes)

    return MinedExample(
        example_id=example_id_for(entry.image_url, entry.context_url),
        class_query=cls.id,
        image_bytes_path=rel_path,
        alt_text=alt,
        pre_text=pre,
        post_text=post,
        source_url=entry.context_url,
        image_url=entry.image_url,
        fetched_at=clock(),
    )


def _stats_dict(cstats: _ClassStats) -> dict:
    return {
        "considered": cstats.considered,
        "accepted": cstats.accepted,
        "skipped": dict(cstats.skipped),
    }
