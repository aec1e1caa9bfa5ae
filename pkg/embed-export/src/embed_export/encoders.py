"""Encoder backends, one per (model spec, kind).

The role tags mirror the deployment layout: ``classifier`` for the
domain vision-language model scoring images against class captions,
``context`` for the sentence encoder scoring page text, and ``content``
for the general vision-language model behind the content filter.

Model checkpoints are configuration, not code.  The default
``feature/*`` backend is a deterministic featurizer (hashed character
n-grams for text, a seeded pixel projection for images) that needs no
weights and keeps the export path runnable offline; any encoder with a
fixed dimension per role is acceptable to the pipeline.  Checkpoint
backends load lazily:

* ``st/<model-id>``   -- sentence-transformers text encoder
* ``clip/<model-id>`` -- transformers CLIP (text or image)
"""

import hashlib
from pathlib import Path

import numpy as np
from PIL import Image

ROLE_DIMS = {"classifier": 512, "context": 384, "content": 512}


class EncoderError(Exception):
    """Model-level failure (load, download, unsupported combination)."""


class ItemError(Exception):
    """A single input could not be encoded (unreadable image, bad payload)."""


class FeatureTextEncoder:
    """Hashed character n-gram features, L2-normalized. No weights needed."""

    preprocessing = "lowercase; whitespace-collapse; char-ngrams(3,4,5)"

    def __init__(self, role: str, dim: int):
        self.dim = dim
        self.model_id = f"feature/text-{role}-{dim}"
        self._salt = self.model_id.encode("utf-8")

    def encode(self, payload: str) -> np.ndarray:
        if not isinstance(payload, str) or not payload.strip():
            raise ItemError("text payload is empty")
        text = " ".join(payload.lower().split())
        vec = np.zeros(self.dim, dtype=np.float64)
        for n in (3, 4, 5):
            for i in range(max(0, len(text) - n + 1)):
                h = hashlib.blake2b(text[i:i + n].encode("utf-8"),
                                    digest_size=8, key=self._salt).digest()
                idx = int.from_bytes(h[:4], "little") % self.dim
                vec[idx] += 1.0 if h[4] & 1 else -1.0
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[int.from_bytes(hashlib.blake2b(text.encode(), digest_size=4).digest(),
                               "little") % self.dim] = 1.0
            norm = 1.0
        return (vec / norm).astype(np.float32)


class FeatureImageEncoder:
    """Seeded Gaussian projection of a 16x16 RGB downsample."""

    preprocessing = "RGB; bilinear-resize(16,16); scale[0,1]; gaussian-projection"

    def __init__(self, role: str, dim: int):
        self.dim = dim
        self.model_id = f"feature/image-{role}-{dim}"
        seed = int.from_bytes(hashlib.blake2b(self.model_id.encode(),
                                              digest_size=8).digest(), "little")
        rng = np.random.default_rng(seed)
        self._projection = rng.standard_normal((16 * 16 * 3, dim)) / np.sqrt(dim)

    def encode(self, payload: str) -> np.ndarray:
        path = Path(payload)
        try:
            with Image.open(path) as img:
                pixels = np.asarray(img.convert("RGB").resize((16, 16), Image.BILINEAR))
        except (OSError, ValueError) as exc:
            raise ItemError(f"unreadable image {path}: {exc}") from exc
        flat = pixels.astype(np.float64).ravel() / 255.0
        vec = flat @ self._projection
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise ItemError(f"degenerate image {path}")
        return (vec / norm).astype(np.float32)


class SentenceTransformerEncoder:
    preprocessing = "model tokenizer defaults"

    def __init__(self, model_id: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderError("sentence-transformers is not installed") from exc
        try:
            self._model = SentenceTransformer(model_id)
        except Exception as exc:
            raise EncoderError(f"could not load {model_id}: {exc}") from exc
        self.model_id = model_id
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, payload: str) -> np.ndarray:
        if not payload.strip():
            raise ItemError("text payload is empty")
        return np.asarray(self._model.encode([payload])[0], dtype=np.float32)


class ClipEncoder:
    preprocessing = "model processor defaults"

    def __init__(self, model_id: str, kind: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderError("transformers/torch are not installed") from exc
        try:
            self._model = CLIPModel.from_pretrained(model_id)
            self._processor = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderError(f"could not load {model_id}: {exc}") from exc
        self._torch = torch
        self.kind = kind
        self.model_id = model_id
        self.dim = int(self._model.config.projection_dim)

    def encode(self, payload: str) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            if self.kind == "text":
                inputs = self._processor(text=[payload], return_tensors="pt", padding=True)
                out = self._model.get_text_features(**inputs)
            else:
                try:
                    image = Image.open(payload).convert("RGB")
                except (OSError, ValueError) as exc:
                    raise ItemError(f"unreadable image {payload}: {exc}") from exc
                inputs = self._processor(images=image, return_tensors="pt")
                out = self._model.get_image_features(**inputs)
        return out[0].cpu().numpy().astype(np.float32)


def make_encoder(model_spec: str, kind: str, role: str, dim: int | None = None):
    """Build the encoder for a model spec.

    ``feature`` (default) selects the deterministic featurizer;
    ``st/<id>`` a sentence-transformers checkpoint (text only);
    ``clip/<id>`` a CLIP checkpoint.
    """
    if kind not in ("text", "image"):
        raise EncoderError(f"kind must be text or image, got {kind!r}")
    if role not in ROLE_DIMS:
        raise EncoderError(f"role must be one of {sorted(ROLE_DIMS)}, got {role!r}")
    if model_spec == "feature":
        d = dim or ROLE_DIMS[role]
        return FeatureTextEncoder(role, d) if kind == "text" else FeatureImageEncoder(role, d)
    if model_spec.startswith("st/"):
        if kind != "text":
            raise EncoderError("sentence-transformers backends encode text only")
        return SentenceTransformerEncoder(model_spec[3:])
    if model_spec.startswith("clip/"):
        return ClipEncoder(model_spec[5:], kind)
    raise EncoderError(f"unknown model spec {model_spec!r}")
