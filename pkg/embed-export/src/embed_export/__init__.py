"""Encoder export for the webcp pipeline.

Runs a text or image encoder over a manifest of inputs and writes the
vectors as a ``.wcpe`` store (the pipeline's embedding wire format),
plus a sidecar ``<out>.meta.json`` recording the model identity, vector
dimension, and preprocessing tag.  The calibration pipeline itself never
loads model weights; this package is the only place encoders run.
"""

__version__ = "0.1.0"

from embed_export.jobs import ExportJob, ExportResult, run_export
from embed_export.wcpe import read_store, write_store

__all__ = ["ExportJob", "ExportResult", "run_export", "read_store", "write_store"]
