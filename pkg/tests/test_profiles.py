import json

import pytest

from kgbridge.profiles import ConfigError, direction, dump_profiles, load_profiles, parse_profiles

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"


def test_builtin_type_properties(profiles):
    assert profiles["Wikidata"].type_property == "http://www.wikidata.org/prop/direct/P31"
    assert profiles["DBpedia"].type_property == RDF_TYPE
    assert set(profiles) >= {"DBpedia", "Wikidata", "DBLP", "OpenAlex"}


def test_missing_endpoint_is_config_error(tmp_path, profiles):
    raw = profiles["DBpedia"].to_dict()
    raw["name"] = "Other"
    del raw["endpoint_url"]
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"profiles": [raw]}))
    with pytest.raises(ConfigError) as err:
        load_profiles(path)
    assert err.value.path.endswith("endpoint_url")


def test_nested_namespaces_rejected(profiles):
    raw = profiles["DBpedia"].to_dict()
    raw["entity_namespaces"] = ["http://dbpedia.org/ontology/x/"]
    with pytest.raises(ConfigError):
        parse_profiles({"profiles": [raw]})


def test_dump_round_trip(profiles):
    again = parse_profiles(json.loads(dump_profiles(profiles.values())))
    assert {p.name: p for p in again} == profiles


def test_file_overlays_builtin(tmp_path, profiles):
    raw = profiles["Wikidata"].to_dict()
    raw["endpoint_url"] = "http://localhost:9/sparql"
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"profiles": [raw]}))
    loaded = load_profiles(path, environ={})
    assert loaded["Wikidata"].endpoint_url == "http://localhost:9/sparql"
    assert loaded["DBpedia"] == profiles["DBpedia"]


def test_env_override():
    loaded = load_profiles(environ={"SPARQL_ENDPOINT_DBPEDIA": "http://127.0.0.1:1/q"})
    assert loaded["DBpedia"].endpoint_url == "http://127.0.0.1:1/q"


def test_roles_and_ownership(profiles):
    dbp, wd = profiles["DBpedia"], profiles["Wikidata"]
    assert dbp.candidate_roles("http://dbpedia.org/ontology/director") == ("property", "class")
    assert dbp.candidate_roles("http://dbpedia.org/resource/Berlin") == ("entity",)
    assert wd.candidate_roles("http://www.wikidata.org/prop/direct/P57") == ("property",)
    assert wd.local_name("http://www.wikidata.org/prop/direct/P57") == "P57"
    assert not wd.owns("http://www.wikidata.org/wiki/Q2001")


def test_direction_parsing(profiles):
    d = direction(profiles, "DBpedia->Wikidata")
    assert (d.source.name, d.target.name, d.key) == ("DBpedia", "Wikidata", "DBpedia->Wikidata")
    assert direction(profiles, "DBLP:OpenAlex").key == "DBLP->OpenAlex"
    with pytest.raises(ConfigError):
        direction(profiles, "DBpedia->Nowhere")
    with pytest.raises(ConfigError):
        direction(profiles, "DBpedia->DBpedia")
