import json
import logging

import pytest

from conftest import FIXTURES
from kgbridge.benchset import (
    CATEGORIES,
    DatasetManifest,
    FormatError,
    InsufficientItems,
    UnknownCategory,
    UnknownId,
    attach_categories,
    build_benchmark,
    category_distribution,
    format_distribution,
    ingest_source,
    split_counts,
)
from kgbridge.evaluation import SparqlClient

QALD = FIXTURES / "qald"
PAIRS = FIXTURES / "bench" / "pairs.jsonl"
KGS = ["DBpedia", "Wikidata"]


def qald_files():
    return sorted(QALD.glob("qald_9_plus_train_*.json"))


def test_qald_fixture_counts(caplog):
    with caplog.at_level(logging.WARNING):
        items = ingest_source(qald_files(), "qald")
    assert split_counts(items) == {"english_questions": 3, "DBpedia": 3, "Wikidata": 2}
    assert "without an English text" in caplog.text


def test_qald_explicit_mapping_matches_name_detection():
    by_name = ingest_source(qald_files(), "qald")
    mapping = {"DBpedia": QALD / "qald_9_plus_train_dbpedia.json", "Wikidata": QALD / "qald_9_plus_train_wikidata.json"}
    assert ingest_source(mapping, "qald") == by_name


def test_qald_format_errors(tmp_path):
    bad = tmp_path / "qald_wikidata.json"
    bad.write_text("{}")
    with pytest.raises(FormatError):
        ingest_source([bad])
    bad.write_text("{nope")
    with pytest.raises(FormatError):
        ingest_source([bad])
    with pytest.raises(FormatError):
        ingest_source([tmp_path / "unnamed.json"])
    with pytest.raises(ValueError):
        ingest_source(bad, "csv")


def test_dblp_quad_exclusion(tmp_path):
    path = tmp_path / "dblp.json"
    path.write_text(json.dumps({"questions": [
        {"id": "d1", "question": {"string": "Who wrote X?"}, "query": {"sparql": "SELECT ?a WHERE { ?p <https://dblp.org/rdf/schema#authoredBy> ?a }"}},
        {"id": "d2", "question": {"string": "What type is X?"}, "query": {"sparql": "SELECT ?t WHERE { ?p dblp:bibtexType ?t }"}},
    ]}))
    items = ingest_source(path, "dblp_quad")
    assert [i.id for i in items] == ["d1"] and list(items[0].queries) == ["DBLP"]


def build(stub_profiles, seed=0, n=10, **kw):
    raw = ingest_source(PAIRS, "pairs")
    return build_benchmark(raw, stub_profiles, KGS, target_n=n, seed=seed, client=SparqlClient(timeout=10), **kw)


def test_build_drops_empty_and_mismatched(stub_profiles):
    manifest = build(stub_profiles)
    ids = [it.id for it in manifest.items]
    assert ids == [f"q{i}" for i in range(1, 11)]
    assert all(set(it.gold) == set(KGS) for it in manifest.items)


def test_build_is_byte_deterministic(stub_profiles):
    a = build(stub_profiles, seed=3, n=6).dumps()
    b = build(stub_profiles, seed=3, n=6).dumps()
    assert a == b


def test_sampling_and_include(stub_profiles):
    m = build(stub_profiles, seed=1, n=3, include=["q7"])
    assert m.count == 3 and "q7" in [it.id for it in m.items]
    with pytest.raises(InsufficientItems):
        build(stub_profiles, n=11)


def test_snapshots_skip_the_endpoint(stub_profiles, kg_stubs):
    first = build(stub_profiles, n=10)
    snaps = {it.id: dict(it.gold) for it in first.items}
    raw = [r for r in ingest_source(PAIRS, "pairs") if r.id in snaps]
    before = len(kg_stubs["DBpedia"].log)
    again = build_benchmark(raw, stub_profiles, KGS, target_n=10, snapshots=snaps, client=SparqlClient(timeout=1))
    assert len(kg_stubs["DBpedia"].log) == before
    assert again.dumps() == first.dumps()


def test_manifest_round_trip(tmp_path, stub_profiles):
    m = attach_categories(build(stub_profiles), FIXTURES / "bench" / "categories.tsv")
    path = tmp_path / "m.json"
    m.save(path)
    loaded = DatasetManifest.load(path)
    assert loaded.dumps() == m.dumps()
    assert loaded.item("q5").category == "Rank or Ordered Info."


def test_categories(tmp_path, stub_profiles):
    m = attach_categories(build(stub_profiles), FIXTURES / "bench" / "categories.tsv")
    dist = category_distribution(m)
    assert list(dist) == list(CATEGORIES)
    assert dist["Single Fact"] == 3 and dist["Filtered Multi-Entity"] == 2 and sum(dist.values()) == 10
    table = format_distribution(dist)
    assert table.splitlines()[-1].split() == ["Total", "10"]

    bad = tmp_path / "c.tsv"
    bad.write_text("q1\tTrivia\n")
    with pytest.raises(UnknownCategory):
        attach_categories(m, bad)
    bad.write_text("q99\tSingle Fact\n")
    with pytest.raises(UnknownId):
        attach_categories(m, bad)
    bad.write_text("q1 Single Fact\n")
    with pytest.raises(FormatError):
        attach_categories(m, bad)
