"""Search providers: ranked (image_url, context_url) entries per query.

Two interchangeable implementations: an HTTP provider speaking the JSON
contract below, and a file-backed fixture provider reading the same JSON
from disk.

Contract: GET ``endpoint?query=...&count=N`` returns a JSON array of
``{"image_url": str, "context_url": str, "rank": int}`` objects.
"""

import json
import time
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urlsplit

import requests

from webcp.corpus.types import ClassLabel, fill_template
from webcp.errors import ProviderDeniedError, ProviderError, TransportError


@dataclass(frozen=True)
class SearchEntry:
    """One ranked search result."""

    image_url: str
    context_url: str
    rank: int

    def __post_init__(self):
        for name, url in (("image_url", self.image_url), ("context_url", self.context_url)):
            if not url or not urlsplit(url).scheme:
                raise ValueError(f"{name} is not a valid URL: {url!r}")
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")


def _entries_from_json(raw, source: str) -> list[SearchEntry]:
    if not isinstance(raw, list):
        raise ProviderError(f"{source}: expected a JSON array of entries")
    entries = []
    for i, item in enumerate(raw):
        try:
            entries.append(SearchEntry(item["image_url"], item["context_url"], int(item["rank"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderError(f"{source}: bad entry at index {i}: {exc}") from exc
    return entries


class FixtureSearchProvider:
    """Serves entries from disk.

    ``path`` may be a JSON file holding either a bare entry array (served
    for every query) or an object mapping query string -> entry array; or
    a directory containing ``index.json`` in the mapping form.
    """

    def __init__(self, path):
        path = Path(path)
        if path.is_dir():
            path = path / "index.json"
        self._source = str(path)
        self._data = json.loads(path.read_text(encoding="utf-8"))

    def search(self, query: str, want: int) -> list[SearchEntry]:
        raw = self._data if isinstance(self._data, list) else self._data.get(query, [])
        return _entries_from_json(raw, self._source)


class HttpSearchProvider:
    """Queries a search endpoint over HTTP with bounded retries."""

    def __init__(self, endpoint: str, timeout: float = 15.0, retries: int = 2, session=None):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self._session = session or requests.Session()

    def search(self, query: str, want: int) -> list[SearchEntry]:
        attempt = 0
        while True:
            try:
                resp = self._session.get(
                    self.endpoint, params={"query": query, "count": want}, timeout=self.timeout
                )
            except requests.RequestException as exc:
                if attempt < self.retries:
                    time.sleep(0.5 * 2 ** attempt)
                    attempt += 1
                    continue
                raise TransportError(f"search provider unreachable: {exc}") from exc
            if resp.status_code in (401, 403, 429):
                raise ProviderDeniedError(
                    f"search provider denied the request (HTTP {resp.status_code})"
                )
            if resp.status_code >= 500:
                if attempt < self.retries:
                    time.sleep(0.5 * 2 ** attempt)
                    attempt += 1
                    continue
                raise TransportError(f"search provider error (HTTP {resp.status_code})")
            if resp.status_code != 200:
                raise ProviderError(f"unexpected provider response: HTTP {resp.status_code}")
            try:
                raw = resp.json()
            except ValueError as exc:
                raise ProviderError(f"provider returned invalid JSON: {exc}") from exc
            return _entries_from_json(raw, self.endpoint)


def make_provider(spec: str):
    """Build a provider from a CLI argument: an http(s) URL or a fixture path."""
    if spec.startswith(("http://", "https://")):
        return HttpSearchProvider(spec)
    return FixtureSearchProvider(spec)


def search_images(cls: ClassLabel, template: str, want: int, provider) -> list[SearchEntry]:
    """Ranked, deduplicated search entries for one class.

    Duplicate image URLs keep their lowest rank; at most ``want`` entries
    are returned, in rank order.
    """
    if want < 1:
        raise ValueError(f"want must be >= 1, got {want}")
    query = fill_template(template, cls.display_name)
    try:
        entries = provider.search(query, want)
    except ProviderDeniedError as exc:
        raise ProviderDeniedError(f"class {cls.id!r}: {exc}") from exc
    entries = sorted(entries, key=lambda e: e.rank)
    seen = set()
    unique = []
    for entry in entries:
        if entry.image_url in seen:
            continue
        seen.add(entry.image_url)
        unique.append(entry)
    return unique[:want]
