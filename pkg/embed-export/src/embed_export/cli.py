import json
import sys
from pathlib import Path

import click

from embed_export.encoders import ROLE_DIMS, EncoderError
from embed_export.jobs import ExportJob, load_manifest, run_export


@click.command()
@click.option("--kind", type=click.Choice(["text", "image"]), required=True)
@click.option("--inputs", "inputs_path", required=True, type=click.Path(exists=True),
              help="JSONL manifest: one {'id', 'payload'|'path'} object per line.")
@click.option("--role", type=click.Choice(sorted(ROLE_DIMS)), required=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--model", "model_spec", default="feature", show_default=True,
              help="feature | st/<model-id> | clip/<model-id>")
@click.option("--dim", type=int, default=None,
              help="Vector dimension for the feature backend (role default otherwise).")
def export_embeddings(kind, inputs_path, role, out_path, model_spec, dim):
    """Encode a manifest of texts or images into a .wcpe store."""
    try:
        items = load_manifest(inputs_path)
        job = ExportJob(kind=kind, items=items, role=role, out_path=out_path,
                        model_spec=model_spec, dim=dim)
        result = run_export(job)
    except (EncoderError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    for item_id, reason in result.failures:
        click.echo(json.dumps({"id": item_id, "error": reason}), err=True)
    click.echo(f"wrote {result.written} vectors (dim {result.dim}, "
               f"model {result.model_id}) -> {out_path}")
    if not result.ok:
        click.echo(f"{len(result.failures)} item(s) failed", err=True)
        sys.exit(1)


@click.command()
@click.option("--classes", "classes_path", required=True, type=click.Path(exists=True),
              help="classes.json: a list of {'id', 'display_name'} objects.")
@click.option("--archetype", default="an image of <category>", show_default=True,
              help="Template for the simplified label; <category> is replaced "
                   "by the head noun of the display name.")
@click.option("--out", "out_path", required=True, type=click.Path())
def suggest_pseudo_map(classes_path, archetype, out_path):
    """Best-effort pseudo-label map: a generic visual archetype per class.

    This is a heuristic stand-in for ontology-based simplification;
    review and edit the output before using it in production runs.
    """
    classes = json.loads(Path(classes_path).read_text(encoding="utf-8"))
    mapping = {}
    for cls in classes:
        head = cls["display_name"].strip().split()[-1].lower()
        mapping[cls["id"]] = archetype.replace("<category>", head)
    Path(out_path).write_text(json.dumps(mapping, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
    click.echo(f"wrote pseudo-label suggestions for {len(mapping)} classes -> {out_path}")
