"""Single-config pipeline: mine -> embed -> plausibility -> calibrate ->
predict -> evaluate.

Every stage is a pure function of its declared inputs, the config, and
the seed; the run manifest records one content hash per stage artifact so
reruns can be compared byte-for-byte.  Config problems are reported all
at once (exit 2); a failing stage halts the run with a stage-scoped error
(exit 3).
"""

import base64
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from webcp import logs
from webcp.conformal import (
    ConformalThreshold,
    MonteCarloConfig,
    mc_threshold,
    nonconformity_scores,
    predict_sets,
    save_prediction_sets,
    standard_threshold,
)
from webcp.corpus import (
    CorpusManifest,
    FixtureFetcher,
    HttpFetcher,
    MineOptions,
    fill_template,
    load_classes,
    make_provider,
    mine_corpus,
)
from webcp.corpus.types import canonical_json
from webcp.demo import DemoImageEncoder, HashedTextEncoder
from webcp.embeddings import (
    EmbeddingMatrix,
    fetch_embeddings,
    import_dump,
    load_embeddings,
    store_embeddings,
)
from webcp.errors import ConfigError, StageError, WebcpError
from webcp.evaluation import BenchmarkInputs, LabeledEvalSet, run_benchmark
from webcp.plausibility import (
    PlausibilityConfig,
    PlausibilityStores,
    build_ambiguous_set,
    example_sentences,
    load_plausibilities,
    load_pseudo_map,
    save_plausibilities,
)

logger = logs.get_logger("pipeline")

STAGES = ("mine", "embed", "plausibility", "calibrate", "predict", "evaluate")


@dataclass
class PipelineConfig:
    raw: dict
    base_dir: Path

    task_name: str = "webcp"
    seed: int = 0
    per_class: int = 50
    alpha: float = 0.1
    mc_samples: int = 100
    method: str = "webcp"
    temperatures: dict = field(default_factory=dict)

    def __post_init__(self):
        self.task_name = self.raw.get("task_name", "webcp")
        self.seed = int(self.raw.get("seed", 0))
        self.per_class = int(self.raw.get("per_class", 50))
        self.alpha = float(self.raw.get("alpha", 0.1))
        self.mc_samples = int(self.raw.get("mc_samples", 100))
        self.method = self.raw.get("method", "webcp")
        defaults = {"context": 0.07, "filter": 0.07, "content": 0.07, "classifier": 0.07}
        defaults.update(self.raw.get("temperatures", {}))
        self.temperatures = defaults

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        raw = json.loads(path.read_text(encoding="utf-8"))
        return cls(raw=raw, base_dir=path.parent)

    def path(self, key: str, default=None):
        """Resolve a config key holding a path, relative to the config file."""
        value = self.raw.get(key, default)
        return None if value is None else self.base_dir / value

    def resolve(self, value) -> Path:
        """Resolve a literal relative path against the config file's directory."""
        return self.base_dir / value

    @property
    def out_dir(self) -> Path:
        return self.base_dir / self.raw.get("out_dir", "out")

    def validate(self, stages) -> None:
        problems = []
        if not 0.0 < self.alpha < 1.0:
            problems.append(f"alpha must be in (0,1), got {self.alpha}")
        if self.mc_samples < 1:
            problems.append(f"mc_samples must be >= 1, got {self.mc_samples}")
        if self.per_class < 1:
            problems.append(f"per_class must be >= 1, got {self.per_class}")
        if self.method not in ("webcp", "standard"):
            problems.append(f"method must be 'webcp' or 'standard', got {self.method!r}")
        for name, value in self.temperatures.items():
            if value <= 0:
                problems.append(f"temperature {name!r} must be > 0, got {value}")
        if "classes" not in self.raw:
            problems.append("missing 'classes' path")
        elif not self.path("classes").exists():
            problems.append(f"classes file not found: {self.path('classes')}")
        if "mine" in stages:
            if "search_provider" not in self.raw:
                problems.append("stage mine: missing 'search_provider'")
            fetcher = self.raw.get("page_fetcher", {})
            if fetcher.get("kind") == "fixture" and not (self.resolve(fetcher.get("root", "")) / "index.json").exists():
                problems.append("stage mine: fixture fetcher root has no index.json")
        if "plausibility" in stages or "embed" in stages:
            pseudo = self.path("pseudo_map")
            if pseudo is None or not pseudo.exists():
                problems.append("missing 'pseudo_map' file")
        if "embed" in stages:
            enc = self.raw.get("embeddings", {}).get("encoder", {})
            if enc.get("kind") not in ("hash", "dumps", "service"):
                problems.append(f"embeddings.encoder.kind must be hash|dumps|service, got {enc.get('kind')!r}")
        if "evaluate" in stages:
            truth = self.path("test_truth")
            if truth is None or not truth.exists():
                problems.append("stage evaluate: missing 'test_truth' file")
        if problems:
            raise ConfigError(problems)


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _sha256_tree(paths: list[Path], root: Path) -> str:
    digest = hashlib.sha256()
    for p in sorted(paths):
        digest.update(str(p.relative_to(root)).encode("utf-8"))
        digest.update(_sha256_file(p).encode("ascii"))
    return digest.hexdigest()


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise StageError(stage, f"required input not found: {path}")
    return path


class _Runner:
    def __init__(self, config: PipelineConfig):
        self.cfg = config
        self.out = config.out_dir

    # -- inputs shared by stages ------------------------------------------

    def _classes(self):
        return load_classes(self.cfg.path("classes"))

    def _corpus(self, stage: str) -> CorpusManifest:
        return CorpusManifest.load(_require(self.out / "corpus" / "manifest.json", stage))

    def _store(self, name: str, stage: str) -> EmbeddingMatrix:
        return load_embeddings(_require(self.out / "embeddings" / f"{name}.wcpe", stage))

    def _plausibility_config(self) -> PlausibilityConfig:
        raw = dict(self.cfg.raw.get("plausibility", {}))
        raw.setdefault("t_context", self.cfg.temperatures["context"])
        raw.setdefault("t_filter", self.cfg.temperatures["filter"])
        raw.setdefault("t_content", self.cfg.temperatures["content"])
        if "prompts" in self.cfg.raw:
            raw["prompts"] = self.cfg.raw["prompts"]
        return PlausibilityConfig.from_dict(raw)

    # -- stages -------------------------------------------------------------

    def stage_mine(self):
        cfg = self.cfg
        provider_spec = cfg.raw["search_provider"]
        if not provider_spec.startswith(("http://", "https://")):
            provider_spec = str(cfg.resolve(provider_spec))
        provider = make_provider(provider_spec)
        fetcher_cfg = cfg.raw.get("page_fetcher", {"kind": "http"})
        if fetcher_cfg.get("kind") == "fixture":
            fetcher = FixtureFetcher(cfg.resolve(fetcher_cfg["root"]))
        else:
            fetcher = HttpFetcher(
                timeout=fetcher_cfg.get("timeout", 15.0),
                retries=fetcher_cfg.get("retries", 2),
                respect_robots=fetcher_cfg.get("respect_robots", True),
            )
        corpus_dir = self.out / "corpus"
        manifest = mine_corpus(
            self._classes(), cfg.raw.get("query_template", "An image of <category>"),
            cfg.per_class, provider, fetcher, corpus_dir,
            task_name=cfg.task_name,
            options=MineOptions(
                workers=cfg.raw.get("workers", 1),
                fixed_clock=cfg.raw.get("fixed_clock"),
            ),
        )
        return corpus_dir / "manifest.json", {"examples": len(manifest.examples),
                                              "warnings": manifest.warnings}

    def stage_embed(self):
        cfg = self.cfg
        stage = "embed"
        corpus = self._corpus(stage)
        classes = self._classes()
        pseudo_map = load_pseudo_map(_require(cfg.path("pseudo_map"), stage))
        pconfig = self._plausibility_config()
        emb_cfg = cfg.raw.get("embeddings", {})
        enc = emb_cfg.get("encoder", {"kind": "hash", "dim": 64, "seed": cfg.seed})

        sentences = sorted({s for ex in corpus.examples for s in example_sentences(ex)})
        queries = {c.id: fill_template(cfg.raw.get("context_query_template", "<category>"),
                                       c.display_name) for c in classes}
        labels = {c.id: fill_template(cfg.raw.get("prompt_template", "An image of <category>"),
                                      c.display_name) for c in classes}
        prompt_texts = sorted(set(pconfig.prompt_set.all_texts()) | set(pseudo_map.values()))
        corpus_dir = self.out / "corpus"
        calib_images = {ex.example_id: corpus_dir / ex.image_bytes_path for ex in corpus.examples}
        test_images = {}
        listing = cfg.resolve(emb_cfg["test_images"]) if emb_cfg.get("test_images") else None
        if listing is not None:
            with _require(listing, stage).open("r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        row = json.loads(line)
                        test_images[row["id"]] = cfg.base_dir / row["path"]

        jobs = {
            "sentences": ("text", "context", [(s, s) for s in sentences]),
            "queries": ("text", "context", sorted(queries.items())),
            "prompts": ("text", "content", [(t, t) for t in prompt_texts]),
            "labels": ("text", "classifier", sorted(labels.items())),
            "images_content": ("image", "content", sorted(calib_images.items())),
            "images_clf": ("image", "classifier", sorted(calib_images.items())),
            "test_images_clf": ("image", "classifier", sorted(test_images.items())),
        }

        emb_dir = self.out / "embeddings"
        emb_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, (kind, role, items) in jobs.items():
            if not items and name == "test_images_clf":
                continue
            matrix = self._encode(name, enc, kind, role, items, stage)
            path = emb_dir / f"{name}.wcpe"
            store_embeddings(matrix, path)
            written.append(path)
        return emb_dir, {"stores": [p.name for p in written],
                         "tree_sha256": _sha256_tree(written, self.out)}

    def _encode(self, name: str, enc: dict, kind: str, role: str, items, stage: str) -> EmbeddingMatrix:
        ids = [i for i, _ in items]
        if enc["kind"] == "hash":
            dim, seed = int(enc.get("dim", 64)), int(enc.get("seed", self.cfg.seed))
            if kind == "text":
                data = HashedTextEncoder(dim, seed, role=role).encode_all(
                    [payload for _, payload in items])
            else:
                encoder = DemoImageEncoder(dim, seed, role=role)
                rows = [encoder.encode_path(_require(Path(p), stage)) for _, p in items]
                data = np.stack(rows) if rows else np.empty((0, dim), np.float32)
            return EmbeddingMatrix(dim=dim, ids=ids, data=data)
        if enc["kind"] == "dumps":
            files = enc.get("files", {})
            if name not in files:
                raise StageError(stage, f"embeddings.encoder.files has no dump for store {name!r}")
            dump_path = _require(self.cfg.resolve(files[name]), stage)
            return import_dump(json.loads(dump_path.read_text(encoding="utf-8")))
        if enc["kind"] == "service":
            payloads = []
            for id_, p in items:
                if kind == "image":
                    payloads.append((id_, base64.b64encode(Path(p).read_bytes()).decode("ascii")))
                else:
                    payloads.append((id_, p))
            return fetch_embeddings(enc["endpoint"], kind, payloads,
                                    expected_dim=enc.get("dim"))
        raise StageError(stage, f"unknown encoder kind {enc['kind']!r}")

    def stage_plausibility(self):
        stage = "plausibility"
        corpus = self._corpus(stage)
        stores = PlausibilityStores(
            sentences=self._store("sentences", stage),
            queries=self._store("queries", stage),
            prompts=self._store("prompts", stage),
            images=self._store("images_content", stage),
        )
        pseudo_map = load_pseudo_map(_require(self.cfg.path("pseudo_map"), stage))
        amb, dropped = build_ambiguous_set(corpus, stores, pseudo_map, self._plausibility_config())
        out_path = self.out / "plausibilities.jsonl"
        save_plausibilities(amb, out_path)
        return out_path, {"examples": len(amb), "dropped": len(dropped)}

    def stage_calibrate(self):
        stage = "calibrate"
        cfg = self.cfg
        corpus = self._corpus(stage)
        table = nonconformity_scores(self._store("images_clf", stage),
                                     self._store("labels", stage),
                                     cfg.temperatures["classifier"],
                                     class_ids=corpus.class_ids())
        if cfg.method == "webcp":
            amb = load_plausibilities(_require(self.out / "plausibilities.jsonl", stage),
                                      corpus.class_ids())
            threshold = mc_threshold(amb, table,
                                     MonteCarloConfig(cfg.mc_samples, cfg.alpha, cfg.seed),
                                     conservative=bool(cfg.raw.get("conservative", False)))
        else:
            labeled = [table.score(ex.example_id, ex.class_query) for ex in corpus.examples]
            gamma = standard_threshold(labeled, cfg.alpha)
            threshold = ConformalThreshold(gamma=gamma, alpha=cfg.alpha, method="standard")
        out_path = self.out / "threshold.json"
        threshold.save(out_path)
        return out_path, {"gamma": threshold.to_dict()["gamma"], "method": threshold.method}

    def stage_predict(self):
        stage = "predict"
        corpus = self._corpus(stage)
        threshold = ConformalThreshold.load(_require(self.out / "threshold.json", stage))
        table = nonconformity_scores(self._store("test_images_clf", stage),
                                     self._store("labels", stage),
                                     self.cfg.temperatures["classifier"],
                                     class_ids=corpus.class_ids())
        sets = predict_sets(table, threshold)
        out_path = self.out / "sets.jsonl"
        save_prediction_sets(sets, out_path)
        sizes = [len(s.members) for s in sets]
        return out_path, {"sets": len(sets), "mean_size": sum(sizes) / max(1, len(sizes))}

    def stage_evaluate(self):
        stage = "evaluate"
        cfg = self.cfg
        corpus = self._corpus(stage)
        class_ids = corpus.class_ids()
        t_clf = cfg.temperatures["classifier"]
        calib_table = nonconformity_scores(self._store("images_clf", stage),
                                           self._store("labels", stage), t_clf,
                                           class_ids=class_ids)
        test_table = nonconformity_scores(self._store("test_images_clf", stage),
                                          self._store("labels", stage), t_clf,
                                          class_ids=class_ids)
        calib_labels = LabeledEvalSet(
            [(ex.example_id, ex.class_query) for ex in sorted(corpus.examples,
                                                              key=lambda e: e.example_id)],
            "calibration")
        truth = LabeledEvalSet.load(_require(cfg.path("test_truth"), stage), "test")
        eval_cfg = cfg.raw.get("eval", {})
        methods = eval_cfg.get("methods", ["webcp", "standard"])
        inputs = BenchmarkInputs(
            calib_scores=calib_table,
            test_scores=test_table,
            calib_labels=calib_labels,
            test_truth=truth,
            plausibilities=(load_plausibilities(_require(self.out / "plausibilities.jsonl", stage),
                                                class_ids)
                            if "webcp" in methods else None),
        )
        report = run_benchmark(inputs, methods=methods,
                               alphas=eval_cfg.get("alphas", [0.1, 0.2, 0.3, 0.4, 0.5]),
                               m_samples=cfg.mc_samples, seed=cfg.seed)
        out_path = self.out / "report.csv"
        report.to_csv(out_path)
        report.to_json(self.out / "report.json")
        return out_path, {"rows": len(report.rows)}


def run_pipeline(config: PipelineConfig, stages=None) -> dict:
    """Execute the requested stages in order; returns the run manifest."""
    stages = list(stages) if stages else list(STAGES)
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise ConfigError([f"unknown stage {s!r}" for s in unknown])
    stages = [s for s in STAGES if s in stages]
    config.validate(stages)
    config.out_dir.mkdir(parents=True, exist_ok=True)

    runner = _Runner(config)
    manifest = {
        "task_name": config.task_name,
        "config_sha256": hashlib.sha256(canonical_json(config.raw).encode()).hexdigest(),
        "stages": [],
    }
    for stage in stages:
        fn = getattr(runner, f"stage_{stage}")
        start = time.time()
        logs.emit_event(logger, stage, "start")
        try:
            artifact, details = fn()
        except WebcpError:
            raise
        except Exception as exc:  # wrap unexpected errors with the stage name
            raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
        if artifact.is_dir():
            tree = [p for p in artifact.rglob("*") if p.is_file()]
            digest = _sha256_tree(tree, config.out_dir)
        else:
            digest = _sha256_file(artifact)
        entry = {
            "stage": stage,
            "artifact": str(artifact.relative_to(config.out_dir)),
            "sha256": digest,
            "elapsed_s": round(time.time() - start, 3),
            "details": details,
        }
        manifest["stages"].append(entry)
        logs.emit_event(logger, stage, "done", artifact=entry["artifact"],
                        sha256=digest, elapsed_s=entry["elapsed_s"])

    (config.out_dir / "pipeline_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
