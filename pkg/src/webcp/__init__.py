"""webcp: coverage-calibrated prediction sets for zero-shot classifiers,
calibrated on web-mined image/meta-data corpora.

The pipeline has four stages, each usable on its own:

* corpus mining  (:mod:`webcp.corpus`)      -- search, fetch, and extract
  image + surrounding-text examples per user class.
* embedding store (:mod:`webcp.embeddings`) -- a bit-exact binary vector
  format plus the cosine/softmax kernels used by every score.
* plausibility    (:mod:`webcp.plausibility`) -- turn each mined example
  into per-class plausibilities and a junk probability.
* conformal       (:mod:`webcp.conformal`)  -- Monte Carlo conformal
  calibration over ambiguous labels, plus the standard split-CP baseline.

:mod:`webcp.evaluation` adds coverage/efficiency reporting and synthetic
tasks, and :mod:`webcp.pipeline` wires everything behind one config.
"""

__version__ = "0.1.0"

from webcp.corpus import ClassLabel, CorpusManifest, MinedExample, mine_corpus
from webcp.embeddings import EmbeddingMatrix, cosine, load_embeddings, softmax, store_embeddings
from webcp.plausibility import AmbiguousCalibrationSet, PlausibilityVector, build_ambiguous_set
from webcp.conformal import (
    ALL_LABELS,
    ConformalThreshold,
    MonteCarloConfig,
    PredictionSet,
    ScoreTable,
    mc_threshold,
    nonconformity_scores,
    predict_set,
    standard_threshold,
)
from webcp.evaluation import SyntheticTask, coverage, efficiency, generate_synthetic_task, run_benchmark

__all__ = [
    "ALL_LABELS",
    "AmbiguousCalibrationSet",
    "ClassLabel",
    "ConformalThreshold",
    "CorpusManifest",
    "EmbeddingMatrix",
    "MinedExample",
    "MonteCarloConfig",
    "PlausibilityVector",
    "PredictionSet",
    "ScoreTable",
    "SyntheticTask",
    "build_ambiguous_set",
    "cosine",
    "coverage",
    "efficiency",
    "generate_synthetic_task",
    "load_embeddings",
    "mc_threshold",
    "mine_corpus",
    "nonconformity_scores",
    "predict_set",
    "run_benchmark",
    "softmax",
    "standard_threshold",
    "store_embeddings",
]
