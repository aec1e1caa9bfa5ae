"""Filename similarity for locating a search result's <img> in its page.

The ratio is the Ratcliff/Obershelp measure: twice the total length of
the recursively longest matching blocks divided by the summed lengths.
``difflib.SequenceMatcher`` implements exactly that; autojunk is disabled
so the popular-element heuristic never perturbs long inputs.
"""

from difflib import SequenceMatcher
from urllib.parse import unquote, urlsplit


def fuzzy_ratio(a: str, b: str) -> float:
    """Similarity of two strings in [0, 1]; 1.0 iff equal (for non-empty inputs)."""
    return SequenceMatcher(None, a, b, autojunk=False).ratio()


def url_filename(url: str) -> str:
    """Normalized final path segment of a URL.

    Query string and fragment are stripped, the segment is
    percent-decoded and lowercased, so the 0.85 match threshold is stable
    across CDN size arguments and case differences.
    """
    if not url:
        return ""
    try:
        path = urlsplit(url.strip()).path
    except ValueError:
        return ""
    segment = path.rsplit("/", 1)[-1]
    return unquote(segment).lower()
