"""Regenerate the end-to-end fixture: manifest, mapping cache and recorded cassette.

Everything runs against the local stub servers; nothing leaves the machine.

    python scripts/build_fixtures.py
"""

from __future__ import annotations

import json
import re
import shutil
import tempfile
from dataclasses import replace
from pathlib import Path

from kgbridge.alignment import MappingCache, build_er2, source_terms
from kgbridge.benchset import attach_categories, build_benchmark, ingest_source
from kgbridge.evaluation import SparqlClient
from kgbridge.llm import ChatClient
from kgbridge.pipeline import Pipeline, RunConfig
from kgbridge.profiles import direction, load_profiles
from kgbridge.stubs import StubChatServer, StubSparqlServer

ROOT = Path(__file__).resolve().parents[1]
FIX = ROOT / "tests" / "fixtures"
E2E = FIX / "e2e"
CLOCK = "2025-01-01T00:00:00Z"
DIRECTION = "DBpedia->Wikidata"

RUN_CONFIG = {
    "manifest": "manifest.json",
    "directions": [DIRECTION],
    "models": ["fixture-model"],
    "strategies": ["few_shot_er", "zero_shot"],
    "output_dir": "runs",
    "seed": 0,
    "cassette": {"path": "cassette.jsonl", "mode": "replay"},
    "llm": {"temperature": 0.0, "max_tokens": 2048, "parallelism": 4},
    "sparql": {"timeout": 10, "max_in_flight": 4},
    "mapping_cache": "mappings.jsonl",
    "offline_mappings": True,
    "exemplar_pool": "pool.json",
    "k": 4,
    "embeddings": {"provider": "hashing", "dim": 64},
}


def stub_servers():
    profiles = load_profiles()
    dbp = StubSparqlServer([FIX / "kg" / "dbpedia.ttl"], prefixes=profiles["DBpedia"].prefixes)
    wd = StubSparqlServer([FIX / "kg" / "wikidata.ttl"], prefixes=profiles["Wikidata"].prefixes)
    return dbp, wd


def build_manifest(dbp_url: str, wd_url: str) -> None:
    profiles = load_profiles()
    profiles["DBpedia"] = replace(profiles["DBpedia"], endpoint_url=dbp_url)
    profiles["Wikidata"] = replace(profiles["Wikidata"], endpoint_url=wd_url)
    client = SparqlClient(timeout=10)
    raw = ingest_source(FIX / "bench" / "pairs.jsonl", "pairs")
    manifest = build_benchmark(
        raw, profiles, ["DBpedia", "Wikidata"], target_n=10, seed=0, client=client,
        name="fixture-e2e", source_split="pairs.jsonl", snapshot_note="stub graphs under tests/fixtures/kg",
    )
    manifest = attach_categories(manifest, FIX / "bench" / "categories.tsv")

    cache_path = E2E / "mappings.jsonl"
    cache_path.unlink(missing_ok=True)
    cache = MappingCache(cache_path)
    d = direction(profiles, DIRECTION)
    items = []
    for it in manifest.items:
        terms = source_terms(it.queries["DBpedia"], d.source)
        mappings = build_er2(terms, d, client, cache, parallelism=1, clock=lambda: CLOCK)
        items.append(replace(it, er2={d.key: [(m.source_id, m.target_ids) for m in mappings]}))
    replace(manifest, items=tuple(items)).save(E2E / "manifest.json")


def responder():
    completions = json.loads((E2E / "completions.json").read_text(encoding="utf-8"))
    by_nlq = {}
    for line in (FIX / "bench" / "pairs.jsonl").read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        by_nlq[rec["nlq"]] = rec["id"]

    def answer(payload):
        prompt = payload["messages"][-1]["content"]
        nlq = json.loads(re.search(r'^\{"natural_language_question": ("(?:[^"\\]|\\.)*")', prompt).group(1))
        strategy = "few_shot_er" if "Here are 4 examples:" in prompt else "zero_shot"
        return completions[strategy][by_nlq[nlq]]

    return answer


def record_cassette(wd_url: str) -> None:
    (E2E / "cassette.jsonl").unlink(missing_ok=True)
    with StubChatServer(responder()) as chat, tempfile.TemporaryDirectory() as tmp:
        cfg = RunConfig.load(E2E / "run.json")
        cfg = replace(cfg, cassette_mode="record", output_dir=Path(tmp), endpoints={"Wikidata": wd_url})
        records = Pipeline(cfg, chat_client=ChatClient(chat.url, "fixture")).run()
        for r in records:
            print(f"{r.strategy:12} {r.item_id:4} {r.outcome:9} {r.failure or '':14} {','.join(r.labels)}")
    # recording appends in completion order with wall-clock latency; sort and
    # zero the latency so regeneration is byte-stable
    path = E2E / "cassette.jsonl"
    entries = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]
    for e in entries:
        e["response"]["latency_ms"] = 0.0
    lines = sorted(json.dumps(e, sort_keys=True, ensure_ascii=False) for e in entries)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def main():
    E2E.mkdir(parents=True, exist_ok=True)
    (E2E / "run.json").write_text(json.dumps(RUN_CONFIG, indent=1) + "\n", encoding="utf-8")
    dbp, wd = stub_servers()
    with dbp, wd:
        build_manifest(dbp.url, wd.url)
        record_cassette(wd.url)
    shutil.rmtree(E2E / "runs", ignore_errors=True)


if __name__ == "__main__":
    main()
