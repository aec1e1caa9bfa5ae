"""Nonconformity scoring, Monte Carlo conformal calibration, and prediction sets.

The score of a (image, class) pair is one minus the class's temperature
softmax probability over image-caption cosines, so smaller means better
conformity and the calibration inequality reads "score <= gamma"
throughout.  The raw probabilities are retained next to the scores for
score-distribution plots.

Monte Carlo calibration repeats label sampling ``M`` times: each example
is rejected with its junk probability, otherwise assigned a class drawn
from its plausibilities, and the returned threshold is the smallest
observed score ``gamma`` with

    (1/M) * sum_m [ (#{sampled scores <= gamma} + 1) / (|C_m| + 1) ] > 1 - alpha.

The standard split-CP baseline instead takes the ceil((n+1)(1-alpha))-th
smallest labeled score.  The two rules differ by one order statistic in
the degenerate one-hot case; both are kept, and ``conservative=True``
switches the Monte Carlo rule to ">=" for parity with the classical one.
"""

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from webcp.embeddings import EmbeddingMatrix, cosine_rows, softmax
from webcp.errors import CalibrationError, MissingEmbeddingError
from webcp.plausibility import AmbiguousCalibrationSet
from webcp.rng import substream

#: Threshold meaning "include every label".
ALL_LABELS = math.inf


@dataclass
class ScoreTable:
    """Nonconformity scores per example and class, with retained probabilities."""

    class_ids: list[str]
    rows: dict
    probabilities: dict | None = None

    def __post_init__(self):
        expected = set(self.class_ids)
        for ex_id, row in self.rows.items():
            if set(row) != expected:
                raise ValueError(f"score row {ex_id!r} covers {sorted(row)}, expected {sorted(expected)}")
            for y, v in row.items():
                if not math.isfinite(v):
                    raise ValueError(f"non-finite score for ({ex_id!r}, {y!r})")

    def __len__(self) -> int:
        return len(self.rows)

    def vector(self, example_id: str) -> np.ndarray:
        row = self.rows[example_id]
        return np.array([row[y] for y in self.class_ids], dtype=np.float64)

    def score(self, example_id: str, class_id: str) -> float:
        try:
            return self.rows[example_id][class_id]
        except KeyError:
            raise CalibrationError(f"no score for example {example_id!r}, class {class_id!r}") from None

    def save(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for ex_id in sorted(self.rows):
                record = {"example_id": ex_id, "scores": self.rows[ex_id]}
                if self.probabilities is not None:
                    record["probabilities"] = self.probabilities[ex_id]
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ScoreTable":
        rows, probs = {}, {}
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                rows[record["example_id"]] = record["scores"]
                if "probabilities" in record:
                    probs[record["example_id"]] = record["probabilities"]
        if not rows:
            raise ValueError(f"{path}: empty score table")
        class_ids = sorted(next(iter(rows.values())))
        return cls(class_ids=class_ids, rows=rows, probabilities=probs or None)


def nonconformity_scores(
    image_store: EmbeddingMatrix,
    label_store: EmbeddingMatrix,
    t_classifier: float,
    class_ids: list[str] | None = None,
    example_ids: list[str] | None = None,
) -> ScoreTable:
    """Score every image against every class caption embedding."""
    class_ids = list(class_ids) if class_ids is not None else list(label_store.ids)
    example_ids = list(example_ids) if example_ids is not None else list(image_store.ids)
    missing = [y for y in class_ids if y not in label_store]
    if missing:
        raise MissingEmbeddingError(f"label store is missing classes: {missing}")
    images = image_store.rows(example_ids)
    labels = label_store.rows(class_ids)
    sims = cosine_rows(images, labels)
    probs = softmax(sims, t_classifier)
    scores = 1.0 - probs
    rows = {ex: dict(zip(class_ids, scores[i].tolist())) for i, ex in enumerate(example_ids)}
    prob_rows = {ex: dict(zip(class_ids, probs[i].tolist())) for i, ex in enumerate(example_ids)}
    return ScoreTable(class_ids=class_ids, rows=rows, probabilities=prob_rows)


@dataclass(frozen=True)
class MonteCarloConfig:
    m_samples: int
    alpha: float
    seed: int

    def __post_init__(self):
        if self.m_samples < 1:
            raise ValueError(f"m_samples must be >= 1, got {self.m_samples}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")


@dataclass
class ConformalThreshold:
    gamma: float
    alpha: float
    m_samples: int | None = None
    seed: int | None = None
    iteration_sizes: list[int] = field(default_factory=list)
    method: str = "webcp"

    @property
    def covers_all(self) -> bool:
        return math.isinf(self.gamma)

    def to_dict(self) -> dict:
        return {
            "gamma": None if self.covers_all else self.gamma,
            "alpha": self.alpha,
            "m_samples": self.m_samples,
            "seed": self.seed,
            "iteration_sizes": self.iteration_sizes,
            "method": self.method,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ConformalThreshold":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        gamma = ALL_LABELS if d["gamma"] is None else float(d["gamma"])
        return cls(gamma=gamma, alpha=d["alpha"], m_samples=d.get("m_samples"),
                   seed=d.get("seed"), iteration_sizes=d.get("iteration_sizes", []),
                   method=d.get("method", "webcp"))


@dataclass(frozen=True)
class SampledExample:
    example_id: str
    class_id: str
    score: float


def sample_calibration_iteration(
    ambiguous_set: AmbiguousCalibrationSet,
    scores: ScoreTable,
    rng: np.random.Generator,
) -> list[SampledExample]:
    """One Monte Carlo draw of a concrete labeled calibration set.

    Each entry is kept with probability ``1 - lambda_junk``; a kept entry
    receives class ``y`` with probability ``lambda(y)``.  A single
    uniform per entry realizes both events, so draws are reproducible
    from the stream alone.
    """
    class_ids = ambiguous_set.class_ids
    sampled: list[SampledExample] = []
    for vec in ambiguous_set.entries:
        u = rng.random()
        acc = 0.0
        chosen = None
        for y in class_ids:
            acc += vec.lam[y]
            if u < acc:
                chosen = y
                break
        if chosen is None:
            continue  # rejected as junk
        sampled.append(SampledExample(vec.example_id, chosen, scores.score(vec.example_id, chosen)))
    return sampled


def mc_threshold(
    ambiguous_set: AmbiguousCalibrationSet,
    scores: ScoreTable,
    cfg: MonteCarloConfig,
    conservative: bool = False,
) -> ConformalThreshold:
    """Monte Carlo conformal threshold over ambiguous labels.

    Iteration ``m`` draws from the counter-based substream ``(seed, m)``,
    so results are independent of evaluation order.  The coverage
    condition compares exact rationals: counts and set sizes are
    integers, and ``alpha`` is taken at decimal precision, so ties at the
    boundary (where float summation order would otherwise decide) resolve
    deterministically.
    """
    iterations = [
        sample_calibration_iteration(ambiguous_set, scores, substream(cfg.seed, m))
        for m in range(1, cfg.m_samples + 1)
    ]
    sizes = [len(it) for it in iterations]
    if all(s == 0 for s in sizes):
        raise CalibrationError(
            "every Monte Carlo iteration rejected all examples; "
            "mine a larger corpus or reduce junk probabilities"
        )
    per_iter = [np.sort(np.array([s.score for s in it], dtype=np.float64)) for it in iterations]
    candidates = np.unique(np.concatenate([a for a in per_iter if a.size]))

    target = cfg.m_samples * (1 - Fraction(str(cfg.alpha)))

    def satisfied(idx: int) -> bool:
        total = Fraction(0)
        for arr in per_iter:
            count = int(np.searchsorted(arr, candidates[idx], side="right"))
            total += Fraction(count + 1, arr.size + 1)
        return total >= target if conservative else total > target

    # the summed term is non-decreasing in the candidate, so the first
    # satisfying candidate is found by binary search
    lo, hi = 0, len(candidates) - 1
    if not satisfied(hi):
        gamma = ALL_LABELS
    else:
        while lo < hi:
            mid = (lo + hi) // 2
            if satisfied(mid):
                hi = mid
            else:
                lo = mid + 1
        gamma = float(candidates[lo])
    return ConformalThreshold(gamma=gamma, alpha=cfg.alpha, m_samples=cfg.m_samples,
                              seed=cfg.seed, iteration_sizes=sizes, method="webcp")


def standard_threshold(labeled_scores, alpha: float) -> float:
    """Classical split-CP threshold: the ceil((n+1)(1-alpha))-th smallest score.

    Returns :data:`ALL_LABELS` when the index exceeds ``n`` (too little
    data for the requested coverage).
    """
    scores = np.asarray(list(labeled_scores), dtype=np.float64)
    if scores.size == 0:
        raise ValueError("standard_threshold requires at least one score")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    n = scores.size
    # tiny epsilon so an analytically-integer (n+1)(1-alpha) never rounds up
    k = math.ceil((n + 1) * (1.0 - alpha) - 1e-9)
    if k > n:
        return ALL_LABELS
    return float(np.sort(scores)[k - 1])


@dataclass
class PredictionSet:
    example_id: str
    members: list[str]
    gamma: float

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "members": self.members,
            "gamma": None if math.isinf(self.gamma) else self.gamma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionSet":
        gamma = ALL_LABELS if d["gamma"] is None else float(d["gamma"])
        return cls(d["example_id"], list(d["members"]), gamma)


def predict_set(example_id: str, scores_row: dict, gamma: float, class_ids: list[str]) -> PredictionSet:
    """Exactly the classes whose score is <= gamma (possibly empty)."""
    members = [y for y in class_ids if scores_row[y] <= gamma]
    return PredictionSet(example_id=example_id, members=members, gamma=gamma)


def predict_sets(table: ScoreTable, threshold: ConformalThreshold) -> list[PredictionSet]:
    return [
        predict_set(ex_id, table.rows[ex_id], threshold.gamma, table.class_ids)
        for ex_id in sorted(table.rows)
    ]


def save_prediction_sets(sets: list[PredictionSet], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in sets:
            fh.write(json.dumps(s.to_dict(), sort_keys=True) + "\n")


def load_prediction_sets(path) -> list[PredictionSet]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(PredictionSet.from_dict(json.loads(line)))
    return out
