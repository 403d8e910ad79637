"""Command line entry point: ``kgbridge <group> <command>``."""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import __version__
from .alignment import MappingCache, build_er2, coverage_stats, er2_document, load_manual_mappings, source_terms
from .benchset import (
    FORMATS,
    DatasetManifest,
    attach_categories,
    build_benchmark,
    category_distribution,
    format_distribution,
    ingest_source,
    split_counts,
)
from .evaluation import SparqlClient
from .exemplars import assert_no_leakage, embed_texts, exemplars_from_items, select_exemplars
from .pipeline import RECORDS_FILE, Pipeline, RunConfig, embedding_provider, read_records
from .profiles import ConfigError, direction, load_profiles
from .prompts import PromptSpec, PromptSpecError, Strategy, render_prompt
from .report import accuracy_table, emit_outputs, error_report, format_accuracy, format_error_table
from .taxonomy import LABELS, Annotation, merge_annotations, read_annotations, write_annotations


def _profiles(path, endpoints=()):
    profiles = load_profiles(path)
    for spec in endpoints:
        name, _, url = spec.partition("=")
        if name not in profiles or not url:
            raise click.BadParameter(f"expected KG=URL with a known KG, got {spec!r}", param_hint="--endpoint")
        profiles[name] = replace(profiles[name], endpoint_url=url)
    return profiles


def _embeddings(spec: str) -> dict:
    kind, _, arg = spec.partition(":")
    if kind == "hashing":
        return {"provider": "hashing", "dim": int(arg or 64)}
    if kind == "file":
        return {"provider": "file", "path": arg}
    if kind == "sbert":
        return {"provider": "sbert", "model": arg or "all-MiniLM-L6-v2"}
    raise click.BadParameter(f"unknown embedding provider {spec!r}", param_hint="--embeddings")


_profiles_opt = click.option("--profiles", type=click.Path(exists=True, dir_okay=False), help="Extra KG profile file.")
_endpoint_opt = click.option("--endpoint", multiple=True, metavar="KG=URL", help="Override an endpoint URL.")


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True)
def main(verbose):
    """Translate SPARQL queries between knowledge graphs with LLMs and evaluate the results."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")


# -- bench -------------------------------------------------------------------------


@main.group()
def bench():
    """Build and inspect benchmark manifests."""


@bench.command("stats")
@click.argument("sources", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="qald", show_default=True)
def bench_stats(sources, fmt):
    """Count English questions and queries per KG in a source split."""
    items = ingest_source(sources[0] if fmt != "qald" else list(sources), fmt)
    for key, n in split_counts(items).items():
        click.echo(f"{key}\t{n}")


@bench.command("build")
@click.argument("sources", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="qald", show_default=True)
@click.option("--kgs", required=True, help="Comma separated KG names, e.g. DBpedia,Wikidata.")
@click.option("-n", "--target-n", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--include", multiple=True, help="Item id that must be kept.")
@click.option("--categories", type=click.Path(exists=True, dir_okay=False), help="Tab separated id/category file.")
@click.option("--name", default="benchmark", show_default=True)
@click.option("--note", default="", help="Snapshot note stored in the manifest.")
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
@_profiles_opt
@_endpoint_opt
def bench_build(sources, fmt, kgs, target_n, seed, include, categories, name, note, out, profiles, endpoint):
    """Filter a source split to executable items and sample a manifest."""
    profs = _profiles(profiles, endpoint)
    raw = ingest_source(sources[0] if fmt != "qald" else list(sources), fmt)
    manifest = build_benchmark(
        raw, profs, [k.strip() for k in kgs.split(",")], target_n=target_n, seed=seed,
        include=include, name=name, source_split=",".join(Path(s).name for s in sources), snapshot_note=note,
    )
    if categories:
        manifest = attach_categories(manifest, categories)
    manifest.save(out)
    click.echo(f"wrote {manifest.count} items to {out}")


@bench.command("categories")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
def bench_categories(manifest):
    """Print the question category distribution of a manifest."""
    click.echo(format_distribution(category_distribution(DatasetManifest.load(manifest))), nl=False)


# -- align -------------------------------------------------------------------------


@main.group()
def align():
    """Cross-KG term alignment."""


@align.command("extract")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--direction", "dir_spec", required=True, help="SOURCE->TARGET")
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False), help="Mapping cache (JSON lines).")
@click.option("--manual", type=click.Path(exists=True, dir_okay=False), help="Manual mapping file.")
@click.option("--offline", is_flag=True, help="Use the cache only; a miss is an error.")
@click.option("--update", is_flag=True, help="Store the er2 documents in the manifest items.")
@click.option("--query-target", is_flag=True, help="Also look up inverse links on the target endpoint.")
@_profiles_opt
@_endpoint_opt
def align_extract(manifest, dir_spec, cache_path, manual, offline, update, query_target, profiles, endpoint):
    """Build the er2 mapping document for every item of a manifest."""
    profs = _profiles(profiles, endpoint)
    d = direction(profs, dir_spec)
    m = DatasetManifest.load(manifest)
    cache = MappingCache(cache_path)
    if manual:
        load_manual_mappings(manual, cache, target_profile=d.target)
    client = None if offline else SparqlClient()
    docs = {}
    items = []
    for it in m.items:
        if d.source.name not in it.queries:
            items.append(it)
            continue
        mappings = build_er2(source_terms(it.queries[d.source.name], d.source), d, client, cache, query_target=query_target)
        docs[it.id] = er2_document(mappings, d)
        er2 = dict(it.er2)
        er2[d.key] = tuple((mp.source_id, tuple(mp.target_ids)) for mp in mappings)
        items.append(replace(it, er2=er2))
    if update:
        replace(m, items=tuple(items)).save(manifest)
    else:
        click.echo(json.dumps(docs, indent=1, ensure_ascii=False))
    stats = coverage_stats([it.queries[d.source.name] for it in m.items if d.source.name in it.queries], d, cache)
    click.echo(f"coverage: {stats.mapped}/{stats.total_terms} terms mapped", err=True)


# -- exemplars ---------------------------------------------------------------------


@main.group()
def exemplars():
    """Few-shot exemplar selection."""


@exemplars.command("select")
@click.argument("pool", type=click.Path(exists=True, dir_okay=False))
@click.option("--direction", "dir_spec", required=True, help="SOURCE->TARGET")
@click.option("--test", "test_manifest", type=click.Path(exists=True, dir_okay=False), help="Test manifest; its ids are excluded.")
@click.option("-k", type=int, default=4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--metric", type=click.Choice(["euclidean", "cosine"]), default="euclidean", show_default=True)
@click.option("--embeddings", default="hashing", show_default=True, help="hashing[:dim], file:PATH or sbert[:model].")
@click.option("--strict", is_flag=True, help="Fail instead of dropping pool items that are test items.")
@_profiles_opt
def exemplars_select(pool, dir_spec, test_manifest, k, seed, metric, embeddings, strict, profiles):
    """Cluster the pool and print one exemplar per cluster as JSON."""
    d = direction(load_profiles(profiles), dir_spec)
    items = exemplars_from_items(DatasetManifest.load(pool).items, d.source.name, d.target.name, d.key)
    test_ids = [it.id for it in DatasetManifest.load(test_manifest).items] if test_manifest else []
    if strict:
        assert_no_leakage(items, test_ids)
    else:
        items = [e for e in items if e.id not in set(test_ids)]
    vectors = embed_texts([e.nlq for e in items], embedding_provider(_embeddings(embeddings)), [e.id for e in items])
    chosen = select_exemplars(items, vectors, k, test_ids, seed, metric=metric)
    click.echo(json.dumps([e.to_json() for e in chosen], indent=1, ensure_ascii=False))


# -- prompt ------------------------------------------------------------------------


@main.group()
def prompt():
    """Prompt rendering."""


@prompt.command("render")
@click.argument("spec_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--strategy", type=click.Choice([s.value for s in Strategy]), help="Override the strategy in the file.")
@click.option("--template-dir", type=click.Path(exists=True, file_okay=False))
@click.option("--digest", is_flag=True, help="Print the prompt digest after the text.")
def prompt_render(spec_file, strategy, template_dir, digest):
    """Render a prompt from a JSON file holding PromptSpec fields."""
    raw = json.loads(Path(spec_file).read_text(encoding="utf-8"))
    if strategy:
        raw["strategy"] = strategy
    try:
        spec = PromptSpec(
            nlq=raw["nlq"],
            sparql_query_kg1=raw["sparql_query_kg1"],
            kg1_name=raw["kg1_name"],
            kg2_name=raw["kg2_name"],
            strategy=Strategy.parse(raw["strategy"]),
            er2=raw.get("er2"),
            exemplars=raw.get("exemplars"),
            instruction=raw.get("instruction"),
        )
        rendered = render_prompt(spec, template_dir=template_dir)
    except KeyError as exc:
        raise click.ClickException(f"spec file lacks {exc}") from None
    except PromptSpecError as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(rendered.text)
    if digest:
        click.echo(f"\n# digest {rendered.spec_digest}")


# -- run / classify / report -------------------------------------------------------


@main.command("run")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
def run_cmd(config):
    """Run every configured cell; exit 0 only when every cell has a record."""
    try:
        pipe = Pipeline(RunConfig.load(config))
        records = pipe.run()
    except ConfigError as exc:
        raise click.ClickException(f"config error: {exc}") from None
    missing = pipe.stats["cells"] - len(records)
    no_output = sum(r.failure == "completion_error" for r in records)
    correct = sum(r.outcome == "correct" for r in records)
    click.echo(
        f"{len(records)} records ({pipe.stats['skipped']} reused, {pipe.stats['completions']} new completions); "
        f"{correct} correct, {len(records) - correct} incorrect"
    )
    if missing or no_output:
        click.echo(f"{missing + no_output} cells without a model output", err=True)
        sys.exit(1)


def _merged_annotations(records, manual) -> list[Annotation]:
    out = []
    for r in records:
        if r.outcome != "incorrect":
            continue
        heur = Annotation(r.run_id, frozenset(r.labels) or frozenset({LABELS[-1]}))
        out.append(merge_annotations(heur, manual.get(r.run_id)))
    return out


@main.command("classify")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--annotations", type=click.Path(exists=True, dir_okay=False), help="Manual annotation file.")
@click.option("-o", "--out", type=click.Path(dir_okay=False), help="Default: RUN_DIR/annotations.jsonl")
def classify_cmd(run_dir, annotations, out):
    """Merge heuristic labels with manual annotations for every incorrect run."""
    records = read_records(Path(run_dir) / RECORDS_FILE)
    manual = read_annotations(annotations) if annotations else {}
    merged = _merged_annotations(records, manual)
    target = Path(out) if out else Path(run_dir) / "annotations.jsonl"
    write_annotations(target, merged)
    n_manual = sum(a.source == "merged" for a in merged)
    click.echo(f"{len(merged)} incorrect runs labelled ({n_manual} with manual labels) -> {target}")


@main.command("report")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--annotations", type=click.Path(exists=True, dir_okay=False), help="Manual or merged annotation file.")
@click.option("-o", "--out", type=click.Path(file_okay=False), help="Default: RUN_DIR/report")
@click.option("--format", "formats", default="text,csv,svg", show_default=True)
def report_cmd(run_dir, annotations, out, formats):
    """Write accuracy, error distribution, co-occurrence and category reports."""
    records = read_records(Path(run_dir) / RECORDS_FILE)
    manual = read_annotations(annotations) if annotations else {}
    acc = accuracy_table(records)
    err = error_report(manual, records)
    try:
        written = emit_outputs(out or Path(run_dir) / "report", acc, err, [f.strip() for f in formats.split(",") if f.strip()])
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(format_accuracy(acc))
    click.echo(format_error_table(err))
    for p in written:
        click.echo(f"wrote {p}")


# -- stubs -------------------------------------------------------------------------


@main.group()
def stub():
    """Local stand-in servers for offline runs."""


@stub.command("sparql")
@click.argument("graphs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--port", type=int, default=0, show_default=True)
def stub_sparql(graphs, port):
    """Serve Turtle files as a SPARQL endpoint until interrupted."""
    from .stubs import StubSparqlServer

    server = StubSparqlServer(graphs, port=port)
    server.start()
    click.echo(server.url)
    try:
        server.wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()


if __name__ == "__main__":
    main()
