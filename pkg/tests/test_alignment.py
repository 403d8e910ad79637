import json
from dataclasses import replace

import pytest

from kgbridge.alignment import (
    CacheMiss,
    MappingCache,
    SchemaError,
    TermMapping,
    build_er2,
    coverage_stats,
    dump_er2,
    join_by_orcid,
    load_manual_mappings,
    parse_er2_entry,
    source_terms,
)
from kgbridge.evaluation import SparqlClient
from kgbridge.profiles import direction

DBO = "http://dbpedia.org/ontology/"
DBR = "http://dbpedia.org/resource/"
WD = "http://www.wikidata.org/entity/"
WDT = "http://www.wikidata.org/prop/direct/"
CLOCK = "2025-01-01T00:00:00Z"

KUBRICK = (
    "PREFIX dbo: <http://dbpedia.org/ontology/> PREFIX dbr: <http://dbpedia.org/resource/> "
    "SELECT DISTINCT ?uri WHERE { ?uri dbo:director dbr:Stanley_Kubrick }"
)
MOUNTAIN = (
    "PREFIX dbo: <http://dbpedia.org/ontology/> PREFIX dbr: <http://dbpedia.org/resource/> "
    "SELECT ?m WHERE { ?m a dbo:Mountain ; dbo:locatedInArea dbr:Germany }"
)


@pytest.fixture
def stub_dir(stub_profiles):
    return direction(stub_profiles, "DBpedia->Wikidata")


def er2(terms, d, client, cache=None, **kw):
    return {m.source_id: m.target_ids for m in build_er2(terms, d, client, cache, clock=lambda: CLOCK, **kw)}


def test_kubrick_lookups(stub_dir):
    got = er2(source_terms(KUBRICK, stub_dir.source), stub_dir, SparqlClient(timeout=10))
    assert got == {DBO + "director": (WD + "P57",), DBR + "Stanley_Kubrick": (WD + "Q2001",)}


def test_decoys_outside_target_namespace_are_dropped(stub_dir):
    got = er2(source_terms(MOUNTAIN, stub_dir.source), stub_dir, SparqlClient(timeout=10))
    assert got[DBO + "Mountain"] == (WD + "Q8502",)
    assert got[DBR + "Germany"] == (WD + "Q183",)
    # no equivalence link: kept as an empty entry
    assert got[DBO + "locatedInArea"] == ()


def test_inverse_lookup_on_target(stub_profiles):
    d = direction(stub_profiles, "Wikidata->DBpedia")
    terms = source_terms("SELECT ?f WHERE { ?f wdt:P57 wd:Q2001 }", d.source)
    got = er2(terms, d, SparqlClient(timeout=10), query_target=True)
    assert got[WD + "Q2001"] == (DBR + "Stanley_Kubrick",)


def test_er2_document_keys(stub_dir):
    ms = build_er2(source_terms(KUBRICK, stub_dir.source), stub_dir, SparqlClient(timeout=10), clock=lambda: CLOCK)
    doc = json.loads(dump_er2(ms, stub_dir))
    assert doc[0] == {"dbpedia_id": DBO + "director", "wikidata_ids": [WD + "P57"]}
    assert [parse_er2_entry(e, "DBpedia", "Wikidata") for e in doc] == [(m.source_id, m.target_ids) for m in ms]


def test_parse_er2_accepts_singular_key():
    entry = {"dbpedia_id": DBR + "Berlin", "wikidata_id": [WD + "Q64"]}
    assert parse_er2_entry(entry, "DBpedia", "Wikidata") == (DBR + "Berlin", (WD + "Q64",))
    with pytest.raises(ValueError):
        parse_er2_entry({"dbpedia_id": DBR + "Berlin"}, "DBpedia", "Wikidata")


def test_cache_warm_run_needs_no_endpoint(tmp_path, stub_dir, kg_stubs):
    path = tmp_path / "cache.jsonl"
    terms = source_terms(KUBRICK, stub_dir.source) + source_terms(MOUNTAIN, stub_dir.source)
    cold = er2(terms, stub_dir, SparqlClient(timeout=10), MappingCache(path))
    before = path.read_bytes()
    calls = len(kg_stubs["DBpedia"].log)
    warm = er2(terms, stub_dir, None, MappingCache(path))
    assert warm == cold
    assert path.read_bytes() == before
    assert len(kg_stubs["DBpedia"].log) == calls


def test_cold_cache_without_client_is_a_miss(stub_dir):
    with pytest.raises(CacheMiss):
        build_er2(source_terms(KUBRICK, stub_dir.source), stub_dir, None, MappingCache())


def test_eviction_persists(tmp_path):
    path = tmp_path / "cache.jsonl"
    cache = MappingCache(path)
    cache.put(TermMapping(DBR + "Berlin", (WD + "Q64",), "sameAs", "endpoint_lookup", "Wikidata", CLOCK))
    cache.evict(DBR + "Berlin", "Wikidata")
    assert MappingCache(path).get(DBR + "Berlin", "wikidata") is None


def test_manual_entries_override_lookups(tmp_path, profiles):
    cache = MappingCache()
    cache.put(TermMapping(DBO + "locatedInArea", (), "equivalentProperty", "endpoint_lookup", "Wikidata", CLOCK))
    manual = tmp_path / "manual.jsonl"
    manual.write_text(
        json.dumps({"dbpedia_id": DBO + "locatedInArea", "wikidata_ids": [WDT + "P131"], "kind": "equivalentProperty"}) + "\n"
    )
    load_manual_mappings(manual, cache, target_profile=profiles["Wikidata"], clock=lambda: CLOCK)
    hit = cache.get(DBO + "locatedInArea", "Wikidata")
    assert hit.target_ids == (WDT + "P131",) and hit.provenance == "manual_file"


@pytest.mark.parametrize("line,col_hint", [
    ('{"dbpedia_id": "x", ', None),
    ('["not", "an", "object"]', None),
    ('{"dbpedia_id": "x"}', None),
    ('{"dbpedia_id": "x", "wikidata_ids": ["http://www.wikidata.org/entity/Q1"], "kind": "fuzzy"}', '"kind"'),
    ('{"dbpedia_id": "x", "wikidata_ids": ["http://elsewhere.org/Q1"]}', "http://elsewhere.org/Q1"),
])
def test_manual_schema_errors(tmp_path, profiles, line, col_hint):
    path = tmp_path / "manual.jsonl"
    path.write_text("\n" + line + "\n")
    with pytest.raises(SchemaError) as err:
        load_manual_mappings(path, target_profile=profiles["Wikidata"])
    assert err.value.line == 2
    if col_hint:
        assert err.value.offset == line.find(col_hint)


def test_coverage_stats(stub_dir):
    cache = MappingCache()
    queries = [KUBRICK, MOUNTAIN, "not sparql {"]
    for q in queries[:2]:
        build_er2(source_terms(q, stub_dir.source), stub_dir, SparqlClient(timeout=10), cache, clock=lambda: CLOCK)
    stats = coverage_stats(queries, stub_dir, cache)
    assert (stats.total_terms, stats.mapped, stats.unmapped) == (5, 4, 1)
    assert stats.unmapped_list == (DBO + "locatedInArea",)


def test_orcid_join():
    src = {"https://dblp.org/pid/1": "https://orcid.org/0000-0002-1825-0097", "https://dblp.org/pid/2": "0000-0001-0000-000X"}
    tgt = {"https://semopenalex.org/author/A9": "0000-0002-1825-0097/"}
    got = join_by_orcid(src, tgt, "OpenAlex", clock=lambda: CLOCK)
    assert [(m.source_id, m.target_ids, m.kind) for m in got] == [
        ("https://dblp.org/pid/1", ("https://semopenalex.org/author/A9",), "orcid")
    ]


def test_mapping_validation():
    with pytest.raises(ValueError):
        TermMapping("a", (), "guess", "endpoint_lookup", "x")
    m = TermMapping("a", ("z", "y", "z"), "sameAs", "endpoint_lookup", "Wiki Data")
    assert m.target_ids == ("y", "z") and m.target_kg == "wiki_data"
    assert TermMapping.from_json(m.to_json()) == m
    assert replace(m, target_ids=()).mapped is False
