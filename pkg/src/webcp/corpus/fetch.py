"""Page and image fetchers.

``HttpFetcher`` applies polite defaults: 15 s per-host timeout, two
retries with exponential backoff, a configurable user agent, and
robots.txt honored unless disabled.  ``FixtureFetcher`` serves bytes from
a directory index for reproducible tests and demos.
"""

import base64
import json
import threading
import time
import urllib.robotparser
from collections import defaultdict
from pathlib import Path
from urllib.parse import urlsplit

import requests

from webcp.errors import FetchError

DEFAULT_USER_AGENT = "webcp/0.1 (+calibration corpus miner)"


class HttpFetcher:
    def __init__(
        self,
        timeout: float = 15.0,
        retries: int = 2,
        user_agent: str = DEFAULT_USER_AGENT,
        respect_robots: bool = True,
        per_host_connections: int = 4,
        session=None,
    ):
        self.timeout = timeout
        self.retries = retries
        self.user_agent = user_agent
        self.respect_robots = respect_robots
        self._session = session or requests.Session()
        self._robots: dict[str, urllib.robotparser.RobotFileParser] = {}
        self._lock = threading.Lock()
        self._host_slots: dict[str, threading.Semaphore] = defaultdict(
            lambda: threading.Semaphore(per_host_connections))

    def _robots_allow(self, url: str) -> bool:
        parts = urlsplit(url)
        origin = f"{parts.scheme}://{parts.netloc}"
        parser = self._robots.get(origin)
        if parser is None:
            parser = urllib.robotparser.RobotFileParser(origin + "/robots.txt")
            try:
                parser.read()
            except OSError:
                parser.allow_all = True
            self._robots[origin] = parser
        return parser.can_fetch(self.user_agent, url)

    def fetch(self, url: str) -> bytes:
        if self.respect_robots and not self._robots_allow(url):
            raise FetchError(f"blocked by robots.txt: {url}")
        with self._lock:
            slot = self._host_slots[urlsplit(url).netloc]
        with slot:
            return self._fetch_with_retries(url)

    def _fetch_with_retries(self, url: str) -> bytes:
        attempt = 0
        while True:
            try:
                resp = self._session.get(
                    url, timeout=self.timeout, headers={"User-Agent": self.user_agent}
                )
            except requests.RequestException as exc:
                if attempt < self.retries:
                    time.sleep(0.5 * 2 ** attempt)
                    attempt += 1
                    continue
                raise FetchError(f"fetch failed for {url}: {exc}") from exc
            if resp.status_code >= 500 and attempt < self.retries:
                time.sleep(0.5 * 2 ** attempt)
                attempt += 1
                continue
            if resp.status_code != 200:
                raise FetchError(f"fetch failed for {url}: HTTP {resp.status_code}")
            return resp.content


class FixtureFetcher:
    """Serves URL -> bytes from ``<root>/index.json``.

    Index values are objects with one of:
      ``{"file": relpath}``      -- bytes of a file under root
      ``{"text": str}``          -- inline UTF-8 content
      ``{"base64": str}``        -- inline binary content
      ``{"error": reason}``      -- simulated failure (timeout, blocked, ...)
    """

    def __init__(self, root):
        self.root = Path(root)
        index_path = self.root / "index.json"
        self._index = json.loads(index_path.read_text(encoding="utf-8"))

    def fetch(self, url: str) -> bytes:
        entry = self._index.get(url)
        if entry is None:
            raise FetchError(f"fixture has no entry for {url}")
        if "error" in entry:
            raise FetchError(f"simulated {entry['error']} for {url}")
        if "file" in entry:
            return (self.root / entry["file"]).read_bytes()
        if "text" in entry:
            return entry["text"].encode("utf-8")
        if "base64" in entry:
            return base64.b64decode(entry["base64"])
        raise FetchError(f"malformed fixture entry for {url}")
