import json
from dataclasses import replace
from pathlib import Path

import pytest

from kgbridge.profiles import direction, load_profiles
from kgbridge.stubs import StubSparqlServer

FIXTURES = Path(__file__).parent / "fixtures"


def read_jsonl(path):
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def profiles():
    return load_profiles()


@pytest.fixture(scope="session")
def dbp_to_wd(profiles):
    return direction(profiles, "DBpedia->Wikidata")


@pytest.fixture(scope="session")
def wd_to_dbp(profiles):
    return direction(profiles, "Wikidata->DBpedia")


@pytest.fixture(scope="session")
def kg_stubs(profiles):
    dbp = StubSparqlServer([FIXTURES / "kg" / "dbpedia.ttl"], prefixes=profiles["DBpedia"].prefixes)
    wd = StubSparqlServer([FIXTURES / "kg" / "wikidata.ttl"], prefixes=profiles["Wikidata"].prefixes)
    with dbp, wd:
        yield {"DBpedia": dbp, "Wikidata": wd}


@pytest.fixture
def stub_profiles(profiles, kg_stubs):
    out = dict(profiles)
    for name, server in kg_stubs.items():
        out[name] = replace(out[name], endpoint_url=server.url)
    return out


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::" in nodeid and rep.when in ("call", "setup"):
                if outcome == "passed" and rep.when != "call":
                    continue
                lines.append((nodeid.split("::")[-1], outcome.upper()))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, outcome in sorted(lines):
            terminalreporter.write_line(f"{name}: {'PASS' if outcome == 'PASSED' else 'FAIL' if outcome == 'FAILED' else outcome}")
