"""webcp command line.

Exit codes: 0 success, 2 configuration error, 3 stage/runtime error.
"""

import json
import logging
import sys
from pathlib import Path

import click

from webcp import demo as demo_mod
from webcp.conformal import (
    ConformalThreshold,
    MonteCarloConfig,
    ScoreTable,
    mc_threshold,
    nonconformity_scores,
    predict_sets,
    save_prediction_sets,
    standard_threshold,
)
from webcp.corpus import (
    FixtureFetcher,
    HttpFetcher,
    MineOptions,
    load_classes,
    make_provider,
    mine_corpus,
)
from webcp.embeddings import cosine, import_dump, load_embeddings, store_embeddings
from webcp.errors import ConfigError, StageError, WebcpError
from webcp.evaluation import (
    LabeledEvalSet,
    SyntheticTask,
    load_benchmark_inputs,
    run_benchmark,
    write_synthetic_task,
)
from webcp.pipeline import PipelineConfig, run_pipeline
from webcp.plausibility import (
    PlausibilityConfig,
    PlausibilityStores,
    build_ambiguous_set,
    load_plausibilities,
    load_pseudo_map,
    save_plausibilities,
)
from webcp.corpus.types import CorpusManifest


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(2 if isinstance(exc, ConfigError) else 3)


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(message)s")


@main.command()
@click.option("--classes", "classes_path", required=True, type=click.Path(exists=True))
@click.option("--template", default="An image of <category>", show_default=True)
@click.option("--per-class", default=50, show_default=True)
@click.option("--provider", "provider_spec", required=True,
              help="Search provider URL or fixture JSON path.")
@click.option("--fetcher-root", type=click.Path(exists=True),
              help="Fixture fetcher directory (index.json inside); HTTP fetch otherwise.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--task-name", default="webcp")
@click.option("--fixed-clock", default=None, help="ISO timestamp to stamp every example with.")
@click.option("--workers", default=1, show_default=True)
@click.option("--no-robots", is_flag=True, help="Do not consult robots.txt.")
def mine(classes_path, template, per_class, provider_spec, fetcher_root, out_dir,
         task_name, fixed_clock, workers, no_robots):
    """Mine a calibration corpus for the given classes."""
    try:
        classes = load_classes(classes_path)
        provider = make_provider(provider_spec)
        fetcher = (FixtureFetcher(fetcher_root) if fetcher_root
                   else HttpFetcher(respect_robots=not no_robots))
        manifest = mine_corpus(classes, template, per_class, provider, fetcher, out_dir,
                               task_name=task_name,
                               options=MineOptions(fixed_clock=fixed_clock, workers=workers))
    except WebcpError as exc:
        _fail(exc)
    click.echo(f"mined {len(manifest.examples)} examples "
               f"({len(manifest.warnings)} warnings) -> {out_dir}")
    for w in manifest.warnings:
        click.echo(f"warning: {w}", err=True)


@main.command("embed-import")
@click.argument("dump", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def embed_import(dump, out_path):
    """Convert a JSON embedding dump ({"dim", "vectors"}) to a .wcpe store."""
    try:
        matrix = import_dump(json.loads(Path(dump).read_text(encoding="utf-8")))
        store_embeddings(matrix, out_path)
    except (WebcpError, ValueError, KeyError) as exc:
        _fail(exc)
    click.echo(f"wrote {len(matrix)} vectors (dim {matrix.dim}) -> {out_path}")


@main.command("embed-check")
@click.argument("store", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True,
              help="Emit a machine-readable report with consecutive-pair cosines.")
@click.option("--pairs", default=100, show_default=True,
              help="Number of consecutive-row cosines in the JSON report.")
def embed_check(store, as_json, pairs):
    """Validate a .wcpe store; optionally emit a verification report."""
    try:
        matrix = load_embeddings(store)
    except WebcpError as exc:
        _fail(exc)
    if as_json:
        cosines = []
        n = len(matrix)
        for i in range(min(pairs, n - 1 if n > 1 else 0)):
            cosines.append(cosine(matrix.data[i], matrix.data[i + 1]))
        click.echo(json.dumps({
            "dim": matrix.dim,
            "count": len(matrix),
            "ids_head": matrix.ids[:5],
            "consecutive_cosines": cosines,
        }))
    else:
        click.echo(f"ok: {len(matrix)} vectors, dim {matrix.dim}")


@main.command()
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--embeddings", "emb_dir", required=True, type=click.Path(exists=True),
              help="Directory holding sentences/queries/prompts/images_content .wcpe stores.")
@click.option("--pseudo-map", "pseudo_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="Optional JSON with temperatures/aggregation/prompts.")
@click.option("--out", "out_path", required=True, type=click.Path())
def plausibility(corpus_dir, emb_dir, pseudo_path, config_path, out_path):
    """Compute plausibility vectors for a mined corpus."""
    try:
        corpus = CorpusManifest.load(Path(corpus_dir) / "manifest.json")
        emb = Path(emb_dir)
        stores = PlausibilityStores(
            sentences=load_embeddings(emb / "sentences.wcpe"),
            queries=load_embeddings(emb / "queries.wcpe"),
            prompts=load_embeddings(emb / "prompts.wcpe"),
            images=load_embeddings(emb / "images_content.wcpe"),
        )
        cfg = PlausibilityConfig.from_dict(
            json.loads(Path(config_path).read_text(encoding="utf-8")) if config_path else {})
        amb, dropped = build_ambiguous_set(corpus, stores, load_pseudo_map(pseudo_path), cfg)
        save_plausibilities(amb, out_path)
    except WebcpError as exc:
        _fail(exc)
    click.echo(f"wrote {len(amb)} plausibility vectors ({len(dropped)} dropped) -> {out_path}")


@main.command()
@click.option("--images", "images_path", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--t-clf", default=0.07, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def score(images_path, labels_path, t_clf, out_path):
    """Nonconformity score table from classifier image and label stores."""
    try:
        table = nonconformity_scores(load_embeddings(images_path),
                                     load_embeddings(labels_path), t_clf)
        table.save(out_path)
    except (WebcpError, ValueError) as exc:
        _fail(exc)
    click.echo(f"scored {len(table)} examples x {len(table.class_ids)} classes -> {out_path}")


@main.command()
@click.option("--plausibilities", "plaus_path", type=click.Path(exists=True))
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", type=click.Path(exists=True),
              help="Labeled calibration examples (required for --method standard).")
@click.option("--alpha", default=0.1, show_default=True)
@click.option("--mc-samples", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--method", type=click.Choice(["webcp", "standard"]), default="webcp",
              show_default=True)
@click.option("--conservative", is_flag=True,
              help="Use the weak inequality (>=) in the Monte Carlo threshold search.")
@click.option("--out", "out_path", required=True, type=click.Path())
def calibrate(plaus_path, scores_path, labels_path, alpha, mc_samples, seed, method,
              conservative, out_path):
    """Compute a conformal threshold from calibration scores."""
    try:
        table = ScoreTable.load(scores_path)
        if method == "webcp":
            if not plaus_path:
                raise ConfigError("--plausibilities is required for method webcp")
            amb = load_plausibilities(plaus_path, table.class_ids)
            threshold = mc_threshold(amb, table, MonteCarloConfig(mc_samples, alpha, seed),
                                     conservative=conservative)
        else:
            if not labels_path:
                raise ConfigError("--labels is required for method standard")
            labeled = LabeledEvalSet.load(labels_path, "calibration")
            gamma = standard_threshold(
                [table.score(ex, y) for ex, y in labeled.items], alpha)
            threshold = ConformalThreshold(gamma=gamma, alpha=alpha, method="standard")
        threshold.save(out_path)
    except (WebcpError, ValueError) as exc:
        _fail(exc)
    shown = threshold.to_dict()["gamma"]
    click.echo(f"gamma = {'ALL' if shown is None else f'{shown:.6f}'} -> {out_path}")


@main.command()
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True))
@click.option("--threshold", "threshold_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def predict(scores_path, threshold_path, out_path):
    """Build prediction sets for a test score table."""
    try:
        table = ScoreTable.load(scores_path)
        threshold = ConformalThreshold.load(threshold_path)
        sets = predict_sets(table, threshold)
        save_prediction_sets(sets, out_path)
    except (WebcpError, ValueError) as exc:
        _fail(exc)
    mean_size = sum(len(s.members) for s in sets) / max(1, len(sets))
    click.echo(f"wrote {len(sets)} sets (mean size {mean_size:.2f}) -> {out_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def evaluate(config_path, out_path):
    """Coverage/efficiency report over methods and alpha grid."""
    try:
        inputs, cfg = load_benchmark_inputs(config_path)
        report = run_benchmark(inputs,
                               methods=cfg.get("methods", ["webcp", "standard"]),
                               alphas=cfg.get("alphas", [0.1, 0.2, 0.3, 0.4, 0.5]),
                               m_samples=cfg.get("m_samples", 30),
                               seed=cfg.get("seed", 0))
        out = Path(out_path)
        report.to_csv(out)
        report.to_json(out.with_suffix(".json"))
    except (WebcpError, ValueError, KeyError) as exc:
        _fail(exc)
    click.echo(f"wrote {len(report.rows)} report rows -> {out_path}")


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def synth(spec_path, out_dir):
    """Generate a synthetic task directory consumable by the pipeline."""
    try:
        task = SyntheticTask.from_dict(json.loads(Path(spec_path).read_text(encoding="utf-8")))
        eval_path = write_synthetic_task(task, out_dir)
    except (WebcpError, ValueError, TypeError) as exc:
        _fail(exc)
    click.echo(f"synthetic task written; evaluate with: webcp evaluate --config {eval_path}")


@main.command("demo")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=7, show_default=True)
def demo(out_dir, seed):
    """Write the bundled demo fixture (corpus pages, provider, test split)."""
    config_path = demo_mod.build_demo_fixture(out_dir, seed=seed)
    click.echo(f"demo fixture ready; run with: webcp run --config {config_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--stages", default=None,
              help="Comma-separated subset of mine,embed,plausibility,calibrate,predict,evaluate.")
def run(config_path, stages):
    """Run the full pipeline from one config file."""
    try:
        config = PipelineConfig.load(config_path)
        manifest = run_pipeline(config, stages.split(",") if stages else None)
    except ConfigError as exc:
        click.echo("configuration errors:", err=True)
        for p in exc.problems:
            click.echo(f"  - {p}", err=True)
        sys.exit(2)
    except StageError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    except WebcpError as exc:
        _fail(exc)
    for entry in manifest["stages"]:
        click.echo(f"{entry['stage']:12s} {entry['sha256'][:12]}  {entry['artifact']}")
    click.echo(f"pipeline complete: {len(manifest['stages'])} artifacts")


if __name__ == "__main__":
    main()
