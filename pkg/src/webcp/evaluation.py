"""Coverage/efficiency evaluation and synthetic benchmark tasks.

The synthetic generator is a desk-scale stand-in for the web-vs-target
distribution gap: class-conditional Gaussian image embeddings around
unit-norm class centers, with three web-realistic corruptions on the
calibration split:

* label noise  -- the claimed (queried) class differs from the class
  that generated the image;
* junk         -- the image depicts none of the classes, but is drawn
  partially aligned with the claimed class's center (a diagram *about*
  the class), which is what makes plain calibration misleadingly easy;
* easiness     -- the web split may use a smaller noise scale than the
  test split (canonical web imagery vs. hard field data).

Plausibility vectors mirror the corruption process: junk examples carry
``lambda_junk = 1`` (the content filter flags them), other examples
spread ``1 - junk_rate`` of mass around the claimed label at the label
noise rate.  With both rates zero the vectors are one-hot.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from webcp.conformal import (
    ConformalThreshold,
    MonteCarloConfig,
    PredictionSet,
    ScoreTable,
    mc_threshold,
    nonconformity_scores,
    predict_sets,
    standard_threshold,
)
from webcp.corpus.types import ClassLabel
from webcp.embeddings import EmbeddingMatrix
from webcp.plausibility import AmbiguousCalibrationSet, PlausibilityVector
from webcp.rng import substream

DEFAULT_ALPHAS = (0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_METHODS = ("webcp", "standard", "oracle")


@dataclass
class LabeledEvalSet:
    """Example ids with their reference class, for one split."""

    items: list[tuple[str, str]]
    split: str

    def save(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for ex_id, y in self.items:
                fh.write(json.dumps({"example_id": ex_id, "true_class": y}) + "\n")

    @classmethod
    def load(cls, path, split: str) -> "LabeledEvalSet":
        items = []
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    items.append((d["example_id"], d["true_class"]))
        return cls(items=items, split=split)


def coverage(sets: list[PredictionSet], truth: LabeledEvalSet) -> float:
    """Fraction of items whose reference class is inside the prediction set."""
    by_id = {s.example_id: s for s in sets}
    truth_ids = {ex_id for ex_id, _ in truth.items}
    if truth_ids != set(by_id):
        extra = sorted(set(by_id) - truth_ids)[:3]
        missing = sorted(truth_ids - set(by_id))[:3]
        raise ValueError(f"prediction sets and truth do not align "
                         f"(extra={extra}, missing={missing})")
    hits = sum(1 for ex_id, y in truth.items if y in by_id[ex_id].members)
    return hits / len(truth.items)


def efficiency(sets: list[PredictionSet]) -> float:
    """Mean prediction-set size."""
    if not sets:
        raise ValueError("efficiency requires at least one prediction set")
    return sum(len(s.members) for s in sets) / len(sets)


@dataclass(frozen=True)
class SyntheticTask:
    class_count: int = 10
    dim: int = 64
    noise_scale: float = 0.35          # test-split cluster noise
    web_noise_scale: float | None = None  # calibration split; defaults to noise_scale
    center_correlation: float = 0.0    # pairwise class-center similarity
    label_noise: float = 0.0
    junk_rate: float = 0.0
    junk_alignment: float = 0.6        # junk images' pull toward the claimed center
    n_calib: int = 500
    n_test: int = 2000
    seed: int = 0
    t_classifier: float = 0.07

    def __post_init__(self):
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if self.n_calib < 1 or self.n_test < 1:
            raise ValueError("split sizes must be >= 1")
        for name in ("label_noise", "junk_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if not 0.0 <= self.center_correlation < 1.0:
            raise ValueError("center_correlation must be in [0,1)")

    @property
    def web_scale(self) -> float:
        return self.noise_scale if self.web_noise_scale is None else self.web_noise_scale

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticTask":
        return cls(**d)


@dataclass
class SyntheticData:
    """Everything a benchmark run needs, generated from one seed."""

    task: SyntheticTask
    classes: list[ClassLabel]
    label_matrix: EmbeddingMatrix
    calib_matrix: EmbeddingMatrix
    test_matrix: EmbeddingMatrix
    oracle_matrix: EmbeddingMatrix
    plausibilities: AmbiguousCalibrationSet
    calib_claimed: LabeledEvalSet
    test_truth: LabeledEvalSet
    oracle_truth: LabeledEvalSet


def _class_ids(k: int) -> list[str]:
    return [f"class_{i:02d}" for i in range(k)]


def generate_synthetic_task(task: SyntheticTask) -> SyntheticData:
    """Fully seed-deterministic synthetic dataset.

    Substreams: 0 centers, 1 calibration, 2 test, 3 oracle, 4 corruption.
    """
    k, dim = task.class_count, task.dim
    ids = _class_ids(k)
    classes = [ClassLabel(i, f"synthetic category {i[-2:]}") for i in ids]

    rng_centers = substream(task.seed, 0)
    shared = rng_centers.normal(size=dim)
    shared /= np.linalg.norm(shared)
    centers = rng_centers.normal(size=(k, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    r = task.center_correlation
    centers = r * shared[None, :] + np.sqrt(1.0 - r * r) * centers
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    label_matrix = EmbeddingMatrix(dim=dim, ids=ids, data=centers.astype(np.float32))

    def draw_split(rng, n, scale, prefix):
        y = rng.integers(0, k, size=n)
        x = centers[y] + scale * rng.normal(size=(n, dim))
        ex_ids = [f"{prefix}_{i:06d}" for i in range(n)]
        return ex_ids, x, y

    calib_ids, calib_x, calib_y = draw_split(substream(task.seed, 1), task.n_calib,
                                             task.web_scale, "cal")
    test_ids, test_x, test_y = draw_split(substream(task.seed, 2), task.n_test,
                                          task.noise_scale, "tst")
    oracle_ids, oracle_x, oracle_y = draw_split(substream(task.seed, 3), task.n_calib,
                                                task.noise_scale, "orc")

    rng_corrupt = substream(task.seed, 4)
    claimed = calib_y.copy()
    flip = rng_corrupt.random(task.n_calib) < task.label_noise
    if flip.any():
        shift = 1 + rng_corrupt.integers(0, k - 1, size=int(flip.sum()))
        claimed[flip] = (calib_y[flip] + shift) % k
    junk = rng_corrupt.random(task.n_calib) < task.junk_rate
    if junk.any():
        calib_x[junk] = (task.junk_alignment * centers[claimed[junk]]
                         + task.web_scale * rng_corrupt.normal(size=(int(junk.sum()), dim)))

    entries = []
    rho, j = task.label_noise, task.junk_rate
    for i, ex_id in enumerate(calib_ids):
        if junk[i]:
            lam = {y: 0.0 for y in ids}
            lam_junk = 1.0
        elif rho == 0.0 and j == 0.0:
            lam = {y: 0.0 for y in ids}
            lam[ids[claimed[i]]] = 1.0
            lam_junk = 0.0
        else:
            off = (1.0 - j) * rho / (k - 1)
            lam = {y: off for y in ids}
            lam[ids[claimed[i]]] = (1.0 - j) * (1.0 - rho)
            lam_junk = 1.0 - sum(lam.values())
        entries.append(PlausibilityVector(example_id=ex_id, lam=lam, lam_junk=lam_junk))

    return SyntheticData(
        task=task,
        classes=classes,
        label_matrix=label_matrix,
        calib_matrix=EmbeddingMatrix(dim=dim, ids=calib_ids, data=calib_x.astype(np.float32)),
        test_matrix=EmbeddingMatrix(dim=dim, ids=test_ids, data=test_x.astype(np.float32)),
        oracle_matrix=EmbeddingMatrix(dim=dim, ids=oracle_ids, data=oracle_x.astype(np.float32)),
        plausibilities=AmbiguousCalibrationSet(entries=entries, class_ids=ids),
        calib_claimed=LabeledEvalSet([(e, ids[c]) for e, c in zip(calib_ids, claimed)], "calibration"),
        test_truth=LabeledEvalSet([(e, ids[c]) for e, c in zip(test_ids, test_y)], "test"),
        oracle_truth=LabeledEvalSet([(e, ids[c]) for e, c in zip(oracle_ids, oracle_y)], "calibration"),
    )


@dataclass
class EvalRow:
    method: str
    alpha: float
    calib_coverage: float
    calib_efficiency: float
    test_coverage: float
    test_efficiency: float
    delta_cov: float


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "alpha", "calib_coverage", "calib_efficiency",
                             "test_coverage", "test_efficiency", "delta_cov"])
            for r in self.rows:
                writer.writerow([r.method, r.alpha,
                                 f"{r.calib_coverage:.6f}", f"{r.calib_efficiency:.6f}",
                                 f"{r.test_coverage:.6f}", f"{r.test_efficiency:.6f}",
                                 f"{r.delta_cov:+.6f}"])

    def to_json(self, path) -> None:
        payload = [r.__dict__ for r in self.rows]
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    def row(self, method: str, alpha: float) -> EvalRow:
        for r in self.rows:
            if r.method == method and abs(r.alpha - alpha) < 1e-12:
                return r
        raise KeyError(f"no report row for ({method}, {alpha})")


@dataclass
class BenchmarkInputs:
    """File- or memory-backed inputs for one benchmark evaluation."""

    calib_scores: ScoreTable
    test_scores: ScoreTable
    calib_labels: LabeledEvalSet
    test_truth: LabeledEvalSet
    plausibilities: AmbiguousCalibrationSet | None = None
    oracle_scores: ScoreTable | None = None
    oracle_truth: LabeledEvalSet | None = None


def _labeled_score_list(table: ScoreTable, labels: LabeledEvalSet) -> list[float]:
    return [table.score(ex_id, y) for ex_id, y in labels.items]


def run_benchmark(
    inputs: BenchmarkInputs,
    methods=DEFAULT_METHODS,
    alphas=DEFAULT_ALPHAS,
    m_samples: int = 30,
    seed: int = 0,
) -> EvalReport:
    """One report row per (method, alpha) with coverage, efficiency, delta_cov.

    The oracle baseline calibrates on target-distribution scores
    subsampled to the web-corpus size, matching the size-parity protocol.
    """
    report = EvalReport()
    n_web = len(inputs.calib_labels.items)
    for method in methods:
        for alpha in alphas:
            if method == "webcp":
                if inputs.plausibilities is None:
                    raise ValueError("webcp method requires plausibilities")
                cfg = MonteCarloConfig(m_samples=m_samples, alpha=alpha, seed=seed)
                threshold = mc_threshold(inputs.plausibilities, inputs.calib_scores, cfg)
            elif method == "standard":
                gamma = standard_threshold(
                    _labeled_score_list(inputs.calib_scores, inputs.calib_labels), alpha)
                threshold = ConformalThreshold(gamma=gamma, alpha=alpha, method="standard")
            elif method == "oracle":
                if inputs.oracle_scores is None or inputs.oracle_truth is None:
                    raise ValueError("oracle method requires target-distribution scores and truth")
                items = inputs.oracle_truth.items
                if len(items) > n_web:
                    idx = substream(seed, 900_000).choice(len(items), size=n_web, replace=False)
                    items = [items[i] for i in sorted(idx)]
                subsampled = LabeledEvalSet(items=items, split="calibration")
                gamma = standard_threshold(
                    _labeled_score_list(inputs.oracle_scores, subsampled), alpha)
                threshold = ConformalThreshold(gamma=gamma, alpha=alpha, method="oracle")
            else:
                raise ValueError(f"unknown method {method!r}")

            calib_sets = predict_sets(inputs.calib_scores, threshold)
            test_sets = predict_sets(inputs.test_scores, threshold)
            test_cov = coverage(test_sets, inputs.test_truth)
            report.rows.append(EvalRow(
                method=method,
                alpha=alpha,
                calib_coverage=coverage(calib_sets, inputs.calib_labels),
                calib_efficiency=efficiency(calib_sets),
                test_coverage=test_cov,
                test_efficiency=efficiency(test_sets),
                delta_cov=test_cov - (1.0 - alpha),
            ))
    return report


def benchmark_inputs_from_synthetic(data: SyntheticData) -> BenchmarkInputs:
    """Score the synthetic splits with the task's classifier temperature."""
    t = data.task.t_classifier
    return BenchmarkInputs(
        calib_scores=nonconformity_scores(data.calib_matrix, data.label_matrix, t),
        test_scores=nonconformity_scores(data.test_matrix, data.label_matrix, t),
        calib_labels=data.calib_claimed,
        test_truth=data.test_truth,
        plausibilities=data.plausibilities,
        oracle_scores=nonconformity_scores(data.oracle_matrix, data.label_matrix, t),
        oracle_truth=data.oracle_truth,
    )


def write_synthetic_task(task: SyntheticTask, out_dir) -> Path:
    """Emit a complete synthetic task directory consumable by `webcp evaluate`.

    Writes embeddings (.wcpe), score tables, plausibilities, labeled
    splits, and a prefilled eval.json; returns the eval.json path.
    """
    from webcp.embeddings import store_embeddings
    from webcp.plausibility import save_plausibilities

    out = Path(out_dir)
    (out / "embeddings").mkdir(parents=True, exist_ok=True)
    data = generate_synthetic_task(task)
    inputs = benchmark_inputs_from_synthetic(data)

    Path(out / "task.json").write_text(
        json.dumps(task.__dict__, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    store_embeddings(data.label_matrix, out / "embeddings" / "labels.wcpe")
    store_embeddings(data.calib_matrix, out / "embeddings" / "calib_images.wcpe")
    store_embeddings(data.test_matrix, out / "embeddings" / "test_images.wcpe")
    store_embeddings(data.oracle_matrix, out / "embeddings" / "oracle_images.wcpe")
    inputs.calib_scores.save(out / "calib_scores.jsonl")
    inputs.test_scores.save(out / "test_scores.jsonl")
    inputs.oracle_scores.save(out / "oracle_scores.jsonl")
    save_plausibilities(data.plausibilities, out / "plausibilities.jsonl")
    data.calib_claimed.save(out / "calib_labels.jsonl")
    data.test_truth.save(out / "test_truth.jsonl")
    data.oracle_truth.save(out / "oracle_truth.jsonl")

    eval_cfg = {
        "calib_scores": "calib_scores.jsonl",
        "test_scores": "test_scores.jsonl",
        "calib_labels": "calib_labels.jsonl",
        "test_truth": "test_truth.jsonl",
        "plausibilities": "plausibilities.jsonl",
        "oracle_scores": "oracle_scores.jsonl",
        "oracle_truth": "oracle_truth.jsonl",
        "methods": list(DEFAULT_METHODS),
        "alphas": list(DEFAULT_ALPHAS),
        "m_samples": 30,
        "seed": task.seed,
    }
    eval_path = out / "eval.json"
    eval_path.write_text(json.dumps(eval_cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return eval_path


def load_benchmark_inputs(eval_config_path) -> tuple[BenchmarkInputs, dict]:
    """Load file-backed benchmark inputs for `webcp evaluate`."""
    from webcp.plausibility import load_plausibilities

    path = Path(eval_config_path)
    cfg = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent

    def resolve(key):
        return base / cfg[key] if cfg.get(key) else None

    calib_scores = ScoreTable.load(resolve("calib_scores"))
    plaus = None
    if cfg.get("plausibilities"):
        plaus = load_plausibilities(resolve("plausibilities"), calib_scores.class_ids)
    oracle_scores = ScoreTable.load(resolve("oracle_scores")) if cfg.get("oracle_scores") else None
    oracle_truth = (LabeledEvalSet.load(resolve("oracle_truth"), "calibration")
                    if cfg.get("oracle_truth") else None)
    inputs = BenchmarkInputs(
        calib_scores=calib_scores,
        test_scores=ScoreTable.load(resolve("test_scores")),
        calib_labels=LabeledEvalSet.load(resolve("calib_labels"), "calibration"),
        test_truth=LabeledEvalSet.load(resolve("test_truth"), "test"),
        plausibilities=plaus,
        oracle_scores=oracle_scores,
        oracle_truth=oracle_truth,
    )
    return inputs, cfg
