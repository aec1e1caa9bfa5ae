"""Lenient HTML parsing: locate an image and extract its textual context.

Built on the stdlib ``html.parser`` (tolerant of real-world malformed
markup).  A page is flattened into a stream of text runs, block
boundaries, and <img> elements; context extraction walks that stream
outward from the matched image.
"""

import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import NamedTuple, Optional

from webcp.corpus.fuzzy import fuzzy_ratio, url_filename

MATCH_THRESHOLD = 0.85
MAX_CONTEXT_TOKENS = 256
MAX_CONTEXT_SENTENCES = 10

# Elements whose content never contributes plaintext.
_SKIP_TAGS = {"script", "style", "noscript", "template", "title"}

# Tags that terminate a sentence ("each divider ends a sentence").
_BLOCK_TAGS = {
    "address", "article", "aside", "blockquote", "br", "caption", "dd", "div",
    "dl", "dt", "fieldset", "figcaption", "figure", "footer", "form", "h1",
    "h2", "h3", "h4", "h5", "h6", "header", "hr", "li", "main", "nav", "ol",
    "p", "pre", "section", "table", "tbody", "td", "tfoot", "th", "thead",
    "tr", "ul",
}

_TEXT, _BREAK, _IMG = "text", "break", "img"

# Split after ., ! or ? when followed by whitespace or an uppercase letter.
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])(?=\s|[A-Z])")


@dataclass
class ParsedPage:
    """Flattened document stream plus the positions of all <img> elements."""

    events: list = field(default_factory=list)
    img_indices: list = field(default_factory=list)


class _StreamParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.page = ParsedPage()
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
            return
        if self._skip_depth:
            return
        if tag == "img":
            self.page.img_indices.append(len(self.page.events))
            self.page.events.append((_IMG, {k.lower(): (v or "") for k, v in attrs}))
        elif tag in _BLOCK_TAGS:
            self.page.events.append((_BREAK, None))

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)
        if tag in _SKIP_TAGS:
            self._skip_depth = max(0, self._skip_depth - 1)

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            self._skip_depth = max(0, self._skip_depth - 1)
            return
        if self._skip_depth:
            return
        if tag in _BLOCK_TAGS:
            self.page.events.append((_BREAK, None))

    def handle_data(self, data):
        if self._skip_depth or not data or data.isspace():
            return
        self.page.events.append((_TEXT, data))


def parse_page(html: str) -> ParsedPage:
    parser = _StreamParser()
    parser.feed(html)
    parser.close()
    return parser.page


class ImgMatch(NamedTuple):
    """An <img> element whose source filename matched the searched image."""

    page: ParsedPage
    event_index: int
    attrs: dict
    matched_attr: str
    matched_src: str
    ratio: float


def match_image_in_page(
    html: str,
    image_url: str,
    threshold: float = MATCH_THRESHOLD,
    source_attrs: tuple = ("src", "url-src"),
) -> Optional[ImgMatch]:
    """First <img> whose src/url-src filename is fuzzy-similar to ``image_url``.

    Returns ``None`` when no element qualifies; absence is a normal
    outcome, not an error.
    """
    target = url_filename(image_url)
    if not target:
        return None
    page = html if isinstance(html, ParsedPage) else parse_page(html)
    for idx in page.img_indices:
        attrs = page.events[idx][1]
        for attr in source_attrs:
            src = attrs.get(attr, "")
            name = url_filename(src)
            if not name:
                continue
            ratio = fuzzy_ratio(target, name)
            if ratio > threshold:
                return ImgMatch(page, idx, attrs, attr, src, ratio)
    return None


class ContextText(NamedTuple):
    alt_text: str
    pre_text: str
    post_text: str


def extract_context(
    match: ImgMatch,
    max_tokens: int = MAX_CONTEXT_TOKENS,
    max_sentences: int = MAX_CONTEXT_SENTENCES,
) -> ContextText:
    """Alt text plus the bounded plaintext immediately before/after the image.

    Each side keeps whichever is shorter: the nearest ``max_tokens``
    whitespace tokens or the nearest ``max_sentences`` sentences.
    """
    events = match.page.events
    alt = _normalize(match.attrs.get("alt", ""))
    pre_sentences = _stream_sentences(events[: match.event_index])
    post_sentences = _stream_sentences(events[match.event_index + 1:])
    pre = _truncate(pre_sentences, max_tokens, max_sentences, from_end=True)
    post = _truncate(post_sentences, max_tokens, max_sentences, from_end=False)
    return ContextText(alt, pre, post)


def split_sentences(text: str) -> list[str]:
    """Rule-based sentence split of a plain-text block."""
    normalized = _normalize(text)
    if not normalized:
        return []
    return [s.strip() for s in _SENTENCE_SPLIT.split(normalized) if s.strip()]


def _normalize(text: str) -> str:
    return " ".join(text.split())


def _stream_sentences(events: list) -> list[str]:
    """Sentences of a document slice; block boundaries end sentences."""
    sentences: list[str] = []
    chunk: list[str] = []

    def flush():
        if chunk:
            sentences.extend(split_sentences(" ".join(chunk)))
            chunk.clear()

    for kind, payload in events:
        if kind == _TEXT:
            chunk.append(payload)
        elif kind == _BREAK:
            flush()
    flush()
    return sentences


def _truncate(sentences: list[str], max_tokens: int, max_sentences: int, from_end: bool) -> str:
    """Keep the shorter of the sentence-bounded and token-bounded cuts.

    ``from_end`` selects the tail of the stream (text before the image)
    instead of the head (text after it).
    """
    token_lists = [s.split() for s in sentences]
    total_tokens = sum(len(t) for t in token_lists)

    kept = token_lists[-max_sentences:] if from_end else token_lists[:max_sentences]
    sentence_bound_tokens = sum(len(t) for t in kept)
    token_bound_tokens = min(max_tokens, total_tokens)

    if sentence_bound_tokens <= token_bound_tokens:
        return " ".join(" ".join(t) for t in kept)

    flat = [tok for t in token_lists for tok in t]
    cut = flat[-max_tokens:] if from_end else flat[:max_tokens]
    return " ".join(cut)
