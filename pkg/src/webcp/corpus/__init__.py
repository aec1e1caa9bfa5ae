"""Web corpus mining: search, fetch, match, and context extraction."""

from webcp.corpus.fetch import FixtureFetcher, HttpFetcher
from webcp.corpus.fuzzy import fuzzy_ratio, url_filename
from webcp.corpus.html_context import (
    ContextText,
    ImgMatch,
    extract_context,
    match_image_in_page,
    parse_page,
    split_sentences,
)
from webcp.corpus.miner import MineOptions, example_id_for, mine_corpus
from webcp.corpus.search import (
    FixtureSearchProvider,
    HttpSearchProvider,
    SearchEntry,
    make_provider,
    search_images,
)
from webcp.corpus.types import (
    ClassLabel,
    CorpusManifest,
    MinedExample,
    canonical_json,
    fill_template,
    load_classes,
)

__all__ = [
    "ClassLabel",
    "ContextText",
    "CorpusManifest",
    "FixtureFetcher",
    "FixtureSearchProvider",
    "HttpFetcher",
    "HttpSearchProvider",
    "ImgMatch",
    "MineOptions",
    "MinedExample",
    "SearchEntry",
    "canonical_json",
    "example_id_for",
    "extract_context",
    "fill_template",
    "fuzzy_ratio",
    "load_classes",
    "make_provider",
    "match_image_in_page",
    "mine_corpus",
    "parse_page",
    "search_images",
    "split_sentences",
    "url_filename",
]
