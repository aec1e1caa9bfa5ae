"""Self-contained demo fixture: a small web corpus plus stand-in encoders.

Real deployments export embeddings with neural encoders through the
``.wcpe`` interface; this module supplies deterministic substitutes so
the whole pipeline can run offline and reproducibly:

* :class:`HashedTextEncoder` -- character n-gram feature hashing;
* :class:`DemoImageEncoder`  -- reads a descriptor string from a PNG
  text chunk and embeds it with the paired text encoder (plus a small
  content-derived perturbation), giving the fixture a genuinely aligned
  image/text space.

``build_demo_fixture`` writes ~60 fixture pages across 3 classes with
timeout, lazy-load, missing-alt, no-match, duplicate and junk cases, a
file-backed search provider and fetcher index, a synthetic labeled test
split, and a ready-to-run pipeline config.
"""

import hashlib
import io
import json
from pathlib import Path

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from webcp.corpus.types import ClassLabel, canonical_json
from webcp.rng import substream

DESC_KEY = "webcp-desc"

_DEMO_CLASSES = [
    ClassLabel("acne_vulgaris", "Acne Vulgaris"),
    ClassLabel("psoriasis", "Psoriasis"),
    ClassLabel("rosacea", "Rosacea"),
]

_CLASS_COLORS = {
    "acne_vulgaris": (200, 120, 110),
    "psoriasis": (190, 170, 140),
    "rosacea": (220, 140, 150),
}

_FILLER = [
    "Dermatologists reviewed the clinical presentation during the annual meeting.",
    "Patients often ask how long a flare can last before treatment helps.",
    "The registry collected outcomes from several participating clinics.",
    "Moisturizers and gentle cleansing remain part of supportive care.",
    "A biopsy is rarely required when the presentation is typical.",
    "Follow-up visits were scheduled at four and twelve weeks.",
    "Topical therapy is usually the first line for mild disease.",
    "Severity scoring used the standard photographic atlas.",
]


def _seed_int(*parts) -> int:
    digest = hashlib.blake2b("|".join(str(p) for p in parts).encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


class HashedTextEncoder:
    """Deterministic text vectors from hashed character n-grams (3..5)."""

    def __init__(self, dim: int, seed: int, role: str = "text"):
        self.dim = dim
        self._salt = f"{seed}:{role}".encode("utf-8")

    def encode(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        lowered = " ".join(text.lower().split())
        for n in (3, 4, 5):
            for i in range(max(0, len(lowered) - n + 1)):
                gram = lowered[i:i + n].encode("utf-8")
                h = hashlib.blake2b(gram, digest_size=8, key=self._salt).digest()
                idx = int.from_bytes(h[:4], "little") % self.dim
                sign = 1.0 if h[4] & 1 else -1.0
                vec[idx] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[_seed_int(text) % self.dim] = 1.0
            norm = 1.0
        return (vec / norm).astype(np.float32)

    def encode_all(self, texts: list[str]) -> np.ndarray:
        return np.stack([self.encode(t) for t in texts]) if texts else np.empty((0, self.dim), np.float32)


class DemoImageEncoder:
    """Embeds demo images via their descriptor text chunk.

    Images without a descriptor get a content-hash noise vector, which
    downstream scoring treats as junk-like.
    """

    def __init__(self, dim: int, seed: int, role: str = "image", descriptor_weight: float = 0.95):
        self.dim = dim
        self.descriptor_weight = descriptor_weight
        self._text = HashedTextEncoder(dim, seed, role=role)

    def encode_bytes(self, data: bytes) -> np.ndarray:
        desc = ""
        try:
            with Image.open(io.BytesIO(data)) as img:
                desc = (getattr(img, "text", {}) or {}).get(DESC_KEY, "")
        except OSError:
            pass
        rng = substream(_seed_int("img-noise", hashlib.sha256(data).hexdigest()), 0)
        noise = rng.normal(size=self.dim)
        noise /= np.linalg.norm(noise)
        if not desc:
            return noise.astype(np.float32)
        base = self._text.encode(desc).astype(np.float64)
        w = self.descriptor_weight
        vec = w * base + (1.0 - w) * noise
        return (vec / np.linalg.norm(vec)).astype(np.float32)

    def encode_path(self, path) -> np.ndarray:
        return self.encode_bytes(Path(path).read_bytes())


def make_demo_png(class_id: str, descriptor: str, seed: int, size: int = 24) -> bytes:
    """A small deterministic PNG carrying its descriptor as a text chunk."""
    rng = substream(_seed_int("png", class_id, descriptor, seed), 0)
    base = np.array(_CLASS_COLORS.get(class_id, (128, 128, 128)), dtype=np.float64)
    pixels = base[None, None, :] + rng.normal(scale=18.0, size=(size, size, 3))
    arr = np.clip(pixels, 0, 255).astype(np.uint8)
    img = Image.fromarray(arr, "RGB")
    info = PngInfo()
    if descriptor:
        info.add_text(DESC_KEY, descriptor)
    buf = io.BytesIO()
    img.save(buf, format="PNG", pnginfo=info)
    return buf.getvalue()


def _page_html(display: str, alt: str | None, img_src: str, pre_sentences: list[str],
               post_sentences: list[str], lazy: bool = False, bare: bool = False) -> str:
    alt_attr = f' alt="{alt}"' if alt is not None else ""
    src_attr = f' data-src="{img_src}"' if lazy else f' src="{img_src}"'
    img = f"<img{src_attr}{alt_attr}>"
    if bare:
        return f"<html><body>{img}</body></html>"
    pre = "".join(f"<p>{s}</p>" for s in pre_sentences)
    post = "".join(f"<p>{s}</p>" for s in post_sentences)
    return (
        "<html><head>"
        f"<title>{display} reference</title>"
        "<script>var tracking = 'should never appear in plaintext';</script>"
        "<style>bodyfont { color: red }</style>"
        "</head><body>"
        f"<h1>{display}</h1>"
        f"{pre}{img}{post}"
        "<div>Published by the demo skin atlas project.</div>"
        "</body></html>"
    )


def _sentences_for(cls: ClassLabel, page_idx: int, count: int, mention: bool) -> list[str]:
    rng = substream(_seed_int("sent", cls.id, page_idx), 0)
    picks = [_FILLER[int(rng.integers(0, len(_FILLER)))] for _ in range(count)]
    if mention and picks:
        picks[0] = f"This photograph documents {cls.display_name} in a routine consultation."
    return picks


def build_demo_fixture(out_dir, seed: int = 7, per_class: int = 12, dim: int = 64) -> Path:
    """Write the full demo tree; returns the pipeline config path."""
    out = Path(out_dir)
    files = out / "web" / "files"
    files.mkdir(parents=True, exist_ok=True)
    (out / "test").mkdir(exist_ok=True)

    classes = list(_DEMO_CLASSES)
    (out / "classes.json").write_text(
        json.dumps([{"id": c.id, "display_name": c.display_name} for c in classes], indent=2),
        encoding="utf-8")
    (out / "pseudo_map.json").write_text(
        json.dumps({c.id: "an image of human skin" for c in classes}, indent=2),
        encoding="utf-8")

    fetch_index: dict[str, dict] = {}
    provider: dict[str, list] = {}
    template = "An image of <category>"

    for cls in classes:
        entries = []
        rank = 1
        dup_target_url = None

        def add_page(kind: str, idx: int):
            nonlocal rank, dup_target_url
            page_name = f"{cls.id}_page_{idx:02d}.html"
            img_name = f"{cls.id}_img_{idx:02d}.png"
            page_url = f"https://pages.demo.webcp/{cls.id}/{page_name}"
            img_url = f"https://img.demo.webcp/{cls.id}/{img_name}"
            descriptor = f"an image showing {cls.display_name.lower()} on human skin"
            alt = f"{cls.display_name} on the cheek of an adult patient"
            pre = _sentences_for(cls, idx, 3, mention=True)
            post = _sentences_for(cls, idx + 100, 3, mention=False)
            lazy = bare = False
            img_in_page = img_url

            if kind == "timeout":
                fetch_index[page_url] = {"error": "timeout"}
            else:
                if kind == "lazy":
                    lazy = True
                elif kind == "no_match":
                    img_in_page = f"https://img.demo.webcp/{cls.id}/unrelated_banner.gif"
                elif kind == "missing_alt":
                    alt = None
                elif kind == "empty_context":
                    alt = None
                    bare = True
                elif kind == "junk":
                    descriptor = "a bar chart with numbers and axis labels"
                    alt = f"chart of {cls.display_name} incidence by year"
                elif kind == "long_pre":
                    # one 300-token sentence: exercises the 256-token cut
                    words = [f"term{w}" for w in range(300)]
                    pre = [" ".join(words) + "."]
                html = _page_html(cls.display_name, alt, img_in_page, pre, post,
                                  lazy=lazy, bare=bare)
                fetch_index[page_url] = {"file": f"files/{page_name}"}
                (files / page_name).write_text(html, encoding="utf-8")

            png = make_demo_png(cls.id, descriptor, seed=_seed_int(seed, cls.id, idx))
            (files / img_name).write_bytes(png)
            fetch_index[img_url] = {"file": f"files/{img_name}"}
            entries.append({"image_url": img_url, "context_url": page_url, "rank": rank})
            if kind == "normal" and dup_target_url is None:
                dup_target_url = img_url
            rank += 1

        kinds = (
            ["normal", "normal", "junk", "missing_alt", "long_pre", "normal",
             "timeout", "lazy", "no_match", "empty_context", "normal", "junk",
             "normal", "normal", "timeout", "lazy", "normal", "normal", "normal", "normal"]
        )
        for idx, kind in enumerate(kinds):
            add_page(kind, idx)
        # duplicate image_url at a later rank: must be dropped by dedup
        entries.append({"image_url": dup_target_url,
                        "context_url": f"https://pages.demo.webcp/{cls.id}/dup.html",
                        "rank": rank})
        provider[f"An image of {cls.display_name}"] = entries

    (out / "web" / "index.json").write_text(canonical_json(fetch_index), encoding="utf-8")
    (out / "provider.json").write_text(canonical_json(provider), encoding="utf-8")

    # labeled synthetic test split: 10 images per class
    test_items = []
    images_listing = []
    for cls in classes:
        for i in range(10):
            test_id = f"test_{cls.id}_{i:02d}"
            descriptor = f"an image showing {cls.display_name.lower()} on human skin"
            png = make_demo_png(cls.id, descriptor, seed=_seed_int(seed, "test", cls.id, i))
            rel = f"test/{test_id}.png"
            (out / rel).write_bytes(png)
            images_listing.append({"id": test_id, "path": rel})
            test_items.append({"example_id": test_id, "true_class": cls.id})
    with (out / "test" / "images.jsonl").open("w", encoding="utf-8") as fh:
        for row in images_listing:
            fh.write(json.dumps(row) + "\n")
    with (out / "test" / "truth.jsonl").open("w", encoding="utf-8") as fh:
        for row in test_items:
            fh.write(json.dumps(row) + "\n")

    config = {
        "task_name": "webcp-demo",
        "seed": seed,
        "classes": "classes.json",
        "query_template": template,
        "prompt_template": "An image of <category>",
        "context_query_template": "<category>",
        "per_class": per_class,
        "temperatures": {"context": 0.07, "filter": 0.07, "content": 0.07, "classifier": 0.07},
        "alpha": 0.2,
        "mc_samples": 50,
        "method": "webcp",
        "search_provider": "provider.json",
        "page_fetcher": {"kind": "fixture", "root": "web"},
        "fixed_clock": "2024-01-01T00:00:00Z",
        "pseudo_map": "pseudo_map.json",
        "plausibility": {"aggregation": "max"},
        "prompts": {
            "invalid_form_prompts": [
                "an image with a lot of text",
                "an image of a graph",
                "an image of a diagram",
                "a chart",
            ],
            "negative_label": "an image",
        },
        "embeddings": {"encoder": {"kind": "hash", "dim": dim, "seed": seed},
                       "test_images": "test/images.jsonl"},
        "test_truth": "test/truth.jsonl",
        "eval": {"methods": ["webcp", "standard"], "alphas": [0.1, 0.2, 0.3, 0.4, 0.5]},
        "out_dir": "out",
    }
    config_path = out / "pipeline.json"
    config_path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return config_path
