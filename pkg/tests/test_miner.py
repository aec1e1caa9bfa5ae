import json
from pathlib import Path

import pytest

from webcp.corpus import (
    CorpusManifest,
    FixtureFetcher,
    FixtureSearchProvider,
    MineOptions,
    load_classes,
    mine_corpus,
)
from webcp.corpus.html_context import split_sentences
from webcp.errors import FetchError

CLOCK = "2024-01-01T00:00:00Z"


def demo_parts(demo_fixture):
    base = demo_fixture.parent
    classes = load_classes(base / "classes.json")
    provider = FixtureSearchProvider(base / "provider.json")
    fetcher = FixtureFetcher(base / "web")
    return classes, provider, fetcher


def test_mining_is_deterministic_and_bounded(demo_fixture, tmp_path):
    classes, provider, fetcher = demo_parts(demo_fixture)
    opts = MineOptions(fixed_clock=CLOCK)

    m1 = mine_corpus(classes, "An image of <category>", 12, provider, fetcher,
                     tmp_path / "run1", options=opts)
    m2 = mine_corpus(classes, "An image of <category>", 12, provider, fetcher,
                     tmp_path / "run2", options=opts)
    assert m1.content_hash() == m2.content_hash()
    assert (tmp_path / "run1" / "manifest.json").read_bytes() == \
           (tmp_path / "run2" / "manifest.json").read_bytes()

    assert len(m1.examples) == 36  # 12 per class
    for ex in m1.examples:
        for side in (ex.pre_text, ex.post_text):
            assert len(side.split()) <= 256
            assert len(split_sentences(side)) <= 10
        assert ex.alt_text or ex.pre_text or ex.post_text
        image = tmp_path / "run1" / ex.image_bytes_path
        assert image.exists() and image.stat().st_size > 0


def test_skip_accounting(demo_fixture, tmp_path):
    classes, provider, fetcher = demo_parts(demo_fixture)
    manifest = mine_corpus(classes, "An image of <category>", 12, provider, fetcher,
                           tmp_path / "c", options=MineOptions(fixed_clock=CLOCK))
    # fixture layout: within the first 18 ranks per class there are 2 timeouts,
    # 2 lazy-load pages, 1 non-matching page, and 1 bare page with no context
    for cls in classes:
        stats = manifest.stats[cls.id]
        assert stats["accepted"] == 12
        assert stats["considered"] == 18
        assert stats["skipped"]["page_fetch_error"] == 2
        assert stats["skipped"]["lazy_load"] == 2
        assert stats["skipped"]["no_match"] == 1
        assert stats["skipped"]["empty_context"] == 1


def test_workers_do_not_change_output(demo_fixture, tmp_path):
    classes, provider, fetcher = demo_parts(demo_fixture)
    serial = mine_corpus(classes, "An image of <category>", 12, provider, fetcher,
                         tmp_path / "s", options=MineOptions(fixed_clock=CLOCK, workers=1))
    parallel = mine_corpus(classes, "An image of <category>", 12, provider, fetcher,
                           tmp_path / "p", options=MineOptions(fixed_clock=CLOCK, workers=4))
    assert serial.content_hash() == parallel.content_hash()


def test_exhausted_class_warns(tmp_path):
    (tmp_path / "provider.json").write_text(json.dumps({"An image of Nothing": []}))
    (tmp_path / "web").mkdir()
    (tmp_path / "web" / "index.json").write_text("{}")
    from webcp.corpus.types import ClassLabel
    manifest = mine_corpus([ClassLabel("nothing", "Nothing")], "An image of <category>",
                           5, FixtureSearchProvider(tmp_path / "provider.json"),
                           FixtureFetcher(tmp_path / "web"), tmp_path / "out",
                           options=MineOptions(fixed_clock=CLOCK))
    assert manifest.examples == []
    assert any("nothing" in w for w in manifest.warnings)


def test_metadata_jsonl_matches_manifest(demo_fixture, tmp_path):
    classes, provider, fetcher = demo_parts(demo_fixture)
    manifest = mine_corpus(classes, "An image of <category>", 12, provider, fetcher,
                           tmp_path / "c", options=MineOptions(fixed_clock=CLOCK))
    lines = (tmp_path / "c" / "metadata.jsonl").read_text().splitlines()
    assert len(lines) == len(manifest.examples)
    first = json.loads(lines[0])
    assert set(first) == {"example_id", "class_query", "image_bytes_path", "alt_text",
                          "pre_text", "post_text", "source_url", "image_url", "fetched_at"}
    assert first["fetched_at"] == CLOCK
    reloaded = CorpusManifest.load(tmp_path / "c" / "manifest.json")
    assert reloaded.content_hash() == manifest.content_hash()


def test_accepted_examples_satisfy_match_invariant(demo_fixture, tmp_path):
    # every accepted example's page really contains a fuzzy filename match
    from webcp.corpus.fuzzy import fuzzy_ratio, url_filename
    from webcp.corpus.html_context import match_image_in_page

    classes, provider, fetcher = demo_parts(demo_fixture)
    manifest = mine_corpus(classes, "An image of <category>", 12, provider, fetcher,
                           tmp_path / "c", options=MineOptions(fixed_clock=CLOCK))
    for ex in manifest.examples:
        html = fetcher.fetch(ex.source_url).decode("utf-8")
        match = match_image_in_page(html, ex.image_url)
        assert match is not None
        assert fuzzy_ratio(url_filename(ex.image_url), url_filename(match.matched_src)) > 0.85


def test_fixture_fetcher_errors(tmp_path):
    (tmp_path / "index.json").write_text(json.dumps({
        "https://x/timeout.html": {"error": "timeout"},
        "https://x/ok.html": {"text": "<html></html>"},
    }))
    fetcher = FixtureFetcher(tmp_path)
    assert fetcher.fetch("https://x/ok.html") == b"<html></html>"
    with pytest.raises(FetchError, match="timeout"):
        fetcher.fetch("https://x/timeout.html")
    with pytest.raises(FetchError, match="no entry"):
        fetcher.fetch("https://x/unknown.html")
