import random

import pytest

from conftest import FIXTURES, read_jsonl
from kgbridge.evaluation import EndpointError
from kgbridge.profiles import direction
from kgbridge.taxonomy import (
    BAD_FORMED,
    LABELS,
    MISSING_TYPE,
    REPORT_ORDER,
    STRUCTURAL,
    UNADAPTED,
    Annotation,
    IdMismatch,
    cooccurrence_matrix,
    display_label,
    merge_annotations,
    prescreen,
    read_annotations,
    write_annotations,
)
from oracles import cooccurrence_tally

CASES = read_jsonl(FIXTURES / "taxonomy" / "cases.jsonl")


def run_case(case, profiles):
    return prescreen(case["gold"], case["candidate"], direction(profiles, case["direction"]), case["er2"])


@pytest.mark.parametrize("case", CASES, ids=[c["id"] for c in CASES])
def test_labelled_case(case, profiles):
    assert run_case(case, profiles) == frozenset(case["labels"]), case["note"]


def test_fixture_shape():
    assert len(CASES) == 24
    assert {lbl for c in CASES for lbl in c["labels"]} == set(LABELS)
    assert sum(len(c["labels"]) > 1 for c in CASES) >= 6


def test_missing_candidate_is_bad_formed(dbp_to_wd):
    assert prescreen("ASK { ?s ?p ?o }", None, dbp_to_wd) == {BAD_FORMED}
    assert prescreen("ASK { ?s ?p ?o }", "   ", dbp_to_wd) == {BAD_FORMED}


def test_endpoint_400_adds_bad_formed(dbp_to_wd):
    gold = "SELECT ?x WHERE { ?x wdt:P57 wd:Q2001 }"
    labels = prescreen(gold, gold, dbp_to_wd, execution_error=EndpointError(400, body="bad"))
    assert BAD_FORMED in labels and STRUCTURAL in labels


def test_unparseable_source_text(dbp_to_wd):
    labels = prescreen("ASK { ?s ?p ?o }", "SELECT ?x WHERE { ?x <http://dbpedia.org/ontology/director> ", dbp_to_wd)
    assert labels == {BAD_FORMED, UNADAPTED}


_snippets = [
    "SELECT ?x WHERE { ?x wdt:P57 wd:Q2001 }",
    "SELECT ?x WHERE { ?x wdt:P31 wd:Q5 ; wdt:P27 wd:Q183 }",
    "SELECT ?x WHERE { wd:Q64 wdt:P6 ?x } ORDER BY ?x LIMIT 1",
    "SELECT ?x WHERE { ?x wd:P57 wdt:Q2001 }",
    "SELECT ?x WHERE { ?x <http://dbpedia.org/ontology/director> dbr:Stanley_Kubrick }",
    "SELECT ?x WHERE { ?x wdt:P57 ",
    "ASK { wd:Q64 wdt:P31 wdt:P6 }",
    "",
]


_dbp_gold = [
    "SELECT ?x WHERE { ?x dbo:director dbr:Stanley_Kubrick }",
    "SELECT ?x WHERE { ?x a dbo:Person ; dbo:birthPlace dbr:Berlin }",
]


def test_never_empty(profiles):
    rng = random.Random(5)
    for name, golds in (("DBpedia->Wikidata", _snippets[:3]), ("Wikidata->DBpedia", _dbp_gold)):
        d = direction(profiles, name)
        for _ in range(200):
            gold, cand = rng.choice(golds), rng.choice(_snippets + _dbp_gold)
            labels = prescreen(gold, cand or None, d)
            assert labels and labels <= set(LABELS)


def test_matrix_matches_brute_force():
    rng = random.Random(11)
    sets = [frozenset(rng.sample(LABELS, rng.randint(1, 4))) for _ in range(300)]
    m = cooccurrence_matrix(sets)
    ref = cooccurrence_tally(sets, LABELS)
    for a in LABELS:
        for b in LABELS:
            assert m.count(a, b) == ref[a][b]
    assert m.conditional(STRUCTURAL, STRUCTURAL) in (0.0, 100.0)


def test_matrix_on_fixture_labels():
    sets = [frozenset(c["labels"]) for c in CASES]
    ref = cooccurrence_tally(sets, LABELS)
    m = cooccurrence_matrix([Annotation(c["id"], frozenset(c["labels"])) for c in CASES])
    assert all(m.count(a, b) == ref[a][b] for a in LABELS for b in LABELS)


def test_merge_prefers_manual_and_keeps_trace():
    h = Annotation("r1", frozenset({STRUCTURAL}))
    m = Annotation("r1", frozenset({MISSING_TYPE}), "manual", "checked", "ann")
    merged = merge_annotations(h, m)
    assert merged.labels == {MISSING_TYPE} and merged.source == "merged"
    assert "heuristic: StructuralError" in merged.notes
    assert merge_annotations(h, None) is h
    with pytest.raises(IdMismatch):
        merge_annotations(h, Annotation("r2", frozenset({STRUCTURAL})))


def test_annotation_validation_and_io(tmp_path):
    with pytest.raises(ValueError):
        Annotation("r", frozenset())
    with pytest.raises(ValueError):
        Annotation("r", frozenset({"Typo"}))
    anns = [Annotation("b", frozenset({STRUCTURAL, UNADAPTED})), Annotation("a", frozenset({BAD_FORMED}))]
    path = tmp_path / "ann.jsonl"
    write_annotations(path, anns)
    assert path.read_text().splitlines()[0].startswith('{"annotator": "", "labels": ["QueryBadFormed"]')
    back = read_annotations(path)
    assert {k: v.labels for k, v in back.items()} == {"a": {BAD_FORMED}, "b": {STRUCTURAL, UNADAPTED}}
    assert read_annotations(tmp_path / "none.jsonl") == {}


def test_display_labels(profiles):
    assert display_label(MISSING_TYPE, profiles["Wikidata"]) == "Missing P31"
    assert display_label(MISSING_TYPE, profiles["DBpedia"]) == "Missing rdf:type"
    assert display_label(MISSING_TYPE) == "Missing P31 / Missing rdf:type"
    assert display_label(STRUCTURAL) == "Structural Error"
    assert set(REPORT_ORDER) == set(LABELS) and len(REPORT_ORDER) == 8
