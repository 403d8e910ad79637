"""Run the translation matrix: align, prompt, complete, extract, execute, compare, classify.

Run config (JSON; relative paths resolve against the config file)::

    {"manifest": "bench.json",
     "directions": ["DBpedia->Wikidata"],
     "models": ["mistral-large-instruct-2407"],
     "strategies": ["zero_shot", "few_shot_er"],
     "output_dir": "runs/fixture",
     "seed": 0,
     "profiles": null,
     "endpoints": {"Wikidata": "http://..."},
     "cassette": {"path": "cassette.jsonl", "mode": "replay"},
     "llm": {"api_base": null, "temperature": 0.0, "max_tokens": 2048, "parallelism": 4},
     "sparql": {"timeout": 60, "max_in_flight": 4, "distinct": false},
     "mapping_cache": "mappings.jsonl", "offline_mappings": false,
     "exemplar_pool": "pool.json", "k": 4, "metric": "euclidean",
     "embeddings": {"provider": "hashing", "dim": 64},
     "template_dir": null, "annotations": null, "review_overrides": null}

``profiles`` names an extra profile file, ``endpoints`` overrides endpoint
URLs for this run.  Embedding providers are ``hashing`` (``dim``), ``file``
(``path``) and ``sbert`` (``model``).

Records land in ``<output_dir>/records.jsonl`` sorted by cell key; a rerun
skips every cell whose key and prompt digest already have a record.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .alignment import MappingCache, build_er2, source_terms
from .benchset import BenchmarkItem, DatasetManifest
from .evaluation import EndpointError, EndpointTimeout, MalformedResponse, ResultSet, SparqlClient, compare_results
from .exemplars import (
    Exemplar,
    FileEmbeddingProvider,
    HashingEmbeddingProvider,
    SentenceTransformerProvider,
    embed_texts,
    exemplars_from_items,
    select_exemplars,
)
from .extraction import FailureLog, load_review_overrides, process_output, sanitize, validate_candidate
from .llm import Cassette, ChatClient, ChatRequest, ChatResponse, batch_complete
from .profiles import ConfigError, KgProfile, TranslationDirection, direction, load_profiles
from .prompts import PromptSpec, Strategy, render_prompt
from .sparql import LexFailure, parse_query
from .taxonomy import LABELS, Annotation, merge_annotations, prescreen, read_annotations

log = logging.getLogger(__name__)

RECORDS_FILE = "records.jsonl"
FAILURES_FILE = "failures.jsonl"


@dataclass(frozen=True)
class RunRecord:
    item_id: str
    model_id: str
    strategy: str
    direction: str
    prompt_digest: str
    request_digest: str
    raw_output: str | None
    extraction: Mapping[str, Any]
    candidate_query: str | None
    execution: Mapping[str, Any]
    comparison: Mapping[str, Any] | None
    outcome: str  # correct | incorrect
    failure: str | None = None  # why an incorrect run produced no comparable answer
    labels: tuple[str, ...] = ()
    label_source: str | None = None
    category: str | None = None
    order_sensitive: bool = False
    timings: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.outcome not in ("correct", "incorrect"):
            raise ValueError(f"bad outcome {self.outcome!r}")
        if self.outcome == "correct" and self.labels:
            raise ValueError("correct runs carry no error labels")

    @property
    def run_id(self) -> str:
        return f"{self.direction}|{self.model_id}|{self.strategy}|{self.item_id}"

    @property
    def cell_key(self) -> tuple:
        return cell_key(self.direction, self.model_id, self.strategy, self.item_id)

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "item_id": self.item_id,
            "model_id": self.model_id,
            "strategy": self.strategy,
            "direction": self.direction,
            "prompt_digest": self.prompt_digest,
            "request_digest": self.request_digest,
            "raw_output": self.raw_output,
            "extraction": dict(self.extraction),
            "candidate_query": self.candidate_query,
            "execution": dict(self.execution),
            "comparison": None if self.comparison is None else dict(self.comparison),
            "outcome": self.outcome,
            "failure": self.failure,
            "labels": list(self.labels),
            "label_source": self.label_source,
            "category": self.category,
            "order_sensitive": self.order_sensitive,
            "timings": dict(self.timings),
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "RunRecord":
        return cls(
            item_id=d["item_id"],
            model_id=d["model_id"],
            strategy=d["strategy"],
            direction=d["direction"],
            prompt_digest=d["prompt_digest"],
            request_digest=d["request_digest"],
            raw_output=d.get("raw_output"),
            extraction=d.get("extraction") or {},
            candidate_query=d.get("candidate_query"),
            execution=d.get("execution") or {},
            comparison=d.get("comparison"),
            outcome=d["outcome"],
            failure=d.get("failure"),
            labels=tuple(d.get("labels") or ()),
            label_source=d.get("label_source"),
            category=d.get("category"),
            order_sensitive=bool(d.get("order_sensitive")),
            timings=d.get("timings") or {},
        )


def _natural(s: str):
    return tuple(int(p) if p.isdigit() else p for p in re.split(r"(\d+)", s))


def cell_key(direction_key: str, model_id: str, strategy: str, item_id: str) -> tuple:
    return (direction_key, model_id, strategy, _natural(item_id), item_id)


def records_digest(records: Sequence[RunRecord]) -> str:
    """SHA-256 over the canonical records, wall-clock timings left out."""
    h = hashlib.sha256()
    for r in sorted(records, key=lambda r: r.cell_key):
        d = r.to_json()
        d.pop("timings")
        h.update(json.dumps(d, sort_keys=True, ensure_ascii=False).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def write_records(path: str | Path, records: Sequence[RunRecord]) -> None:
    lines = [json.dumps(r.to_json(), sort_keys=True, ensure_ascii=False) for r in sorted(records, key=lambda r: r.cell_key)]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_records(path: str | Path) -> list[RunRecord]:
    p = Path(path)
    if not p.exists():
        return []
    return [RunRecord.from_json(json.loads(line)) for line in p.read_text(encoding="utf-8").splitlines() if line.strip()]


@dataclass
class RunConfig:
    manifest: Path
    directions: list[str]
    models: list[str]
    strategies: list[str]
    output_dir: Path
    seed: int = 0
    profiles: Path | None = None
    endpoints: dict[str, str] = field(default_factory=dict)
    cassette_path: Path | None = None
    cassette_mode: str = "passthrough"
    api_base: str | None = None
    temperature: float = 0.0
    max_tokens: int = 2048
    parallelism: int = 4
    sparql_timeout: float = 60.0
    sparql_in_flight: int = 4
    distinct: bool = False
    mapping_cache: Path | None = None
    offline_mappings: bool = False
    exemplar_pool: Path | None = None
    k: int = 4
    metric: str = "euclidean"
    embeddings: dict = field(default_factory=lambda: {"provider": "hashing", "dim": 64})
    template_dir: Path | None = None
    annotations: Path | None = None
    review_overrides: Path | None = None

    @classmethod
    def from_dict(cls, d: Mapping, base: Path | None = None) -> "RunConfig":
        base = base or Path.cwd()

        def path(key, value=None):
            v = d.get(key) if value is None else value
            if v is None:
                return None
            p = Path(v)
            return p if p.is_absolute() else base / p

        for key in ("manifest", "directions", "models", "strategies", "output_dir"):
            if not d.get(key):
                raise ConfigError(key, "missing")
        for i, s in enumerate(d["strategies"]):
            try:
                Strategy.parse(s)
            except ValueError as exc:
                raise ConfigError(f"strategies[{i}]", str(exc)) from None
        cas = d.get("cassette") or {}
        llm = d.get("llm") or {}
        sp = d.get("sparql") or {}
        mode = cas.get("mode", "passthrough" if not cas.get("path") else "replay")
        if mode not in ("record", "replay", "passthrough"):
            raise ConfigError("cassette.mode", f"unknown mode {mode!r}")
        emb = dict(d.get("embeddings") or {"provider": "hashing", "dim": 64})
        if emb.get("path"):
            emb["path"] = str(path("embeddings", emb["path"]))
        return cls(
            manifest=path("manifest"),
            directions=list(d["directions"]),
            models=list(d["models"]),
            strategies=[Strategy.parse(s).value for s in d["strategies"]],
            output_dir=path("output_dir"),
            seed=int(d.get("seed", 0)),
            profiles=path("profiles"),
            endpoints=dict(d.get("endpoints") or {}),
            cassette_path=path("cassette", cas.get("path")) if cas.get("path") else None,
            cassette_mode=mode,
            api_base=llm.get("api_base"),
            temperature=float(llm.get("temperature", 0.0)),
            max_tokens=int(llm.get("max_tokens", 2048)),
            parallelism=int(llm.get("parallelism", 4)),
            sparql_timeout=float(sp.get("timeout", 60.0)),
            sparql_in_flight=int(sp.get("max_in_flight", 4)),
            distinct=bool(sp.get("distinct", False)),
            mapping_cache=path("mapping_cache"),
            offline_mappings=bool(d.get("offline_mappings", False)),
            exemplar_pool=path("exemplar_pool"),
            k=int(d.get("k", 4)),
            metric=d.get("metric", "euclidean"),
            embeddings=emb,
            template_dir=path("template_dir"),
            annotations=path("annotations"),
            review_overrides=path("review_overrides"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        p = Path(path)
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {p}: {exc}") from exc
        return cls.from_dict(data, p.parent)


def embedding_provider(cfg: Mapping):
    kind = cfg.get("provider", "hashing")
    if kind == "hashing":
        return HashingEmbeddingProvider(int(cfg.get("dim", 64)))
    if kind == "file":
        return FileEmbeddingProvider(cfg["path"])
    if kind == "sbert":
        return SentenceTransformerProvider(cfg.get("model", "all-MiniLM-L6-v2"))
    raise ConfigError("embeddings.provider", f"unknown provider {kind!r}")


class Pipeline:
    def __init__(
        self,
        config: RunConfig,
        *,
        chat_client: ChatClient | None = None,
        sparql_client: SparqlClient | None = None,
        profiles: Mapping[str, KgProfile] | None = None,
    ):
        self.config = config
        profiles = dict(profiles or load_profiles(config.profiles))
        for name, url in config.endpoints.items():
            if name not in profiles:
                raise ConfigError(f"endpoints.{name}", "unknown knowledge graph")
            profiles[name] = replace(profiles[name], endpoint_url=url)
        self.profiles = profiles
        self.directions = [direction(profiles, d) for d in config.directions]
        self.manifest = DatasetManifest.load(config.manifest)
        self.chat = chat_client or ChatClient(config.api_base, max_in_flight=config.parallelism)
        self.sparql = sparql_client or SparqlClient(timeout=config.sparql_timeout, max_in_flight=config.sparql_in_flight)
        self.cache = MappingCache(config.mapping_cache)
        self.stats = {"cells": 0, "skipped": 0, "completions": 0}

    # -- per-direction inputs ---------------------------------------------------------

    def er2_for(self, item: BenchmarkItem, d: TranslationDirection) -> list:
        if d.key in item.er2:
            return list(item.er2[d.key])
        terms = source_terms(item.queries[d.source.name], d.source)
        client = None if self.config.offline_mappings else self.sparql
        return [(m.source_id, m.target_ids) for m in build_er2(terms, d, client, self.cache)]

    def exemplars_for(self, d: TranslationDirection) -> list[Exemplar]:
        if self.config.exemplar_pool is None:
            raise ConfigError("exemplar_pool", "few_shot_er needs an exemplar pool")
        pool_manifest = DatasetManifest.load(self.config.exemplar_pool)
        pool = exemplars_from_items(pool_manifest.items, d.source.name, d.target.name, d.key)
        test_ids = {it.id for it in self.manifest.items}
        pool = [e for e in pool if e.id not in test_ids]
        vectors = embed_texts([e.nlq for e in pool], embedding_provider(self.config.embeddings), [e.id for e in pool])
        return select_exemplars(pool, vectors, self.config.k, test_ids, self.config.seed, metric=self.config.metric)

    # -- the run -----------------------------------------------------------------------

    def run(self) -> list[RunRecord]:
        cfg = self.config
        out = cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        existing = {r.cell_key: r for r in read_records(out / RECORDS_FILE)}
        cassette = Cassette(cfg.cassette_path, cfg.cassette_mode) if cfg.cassette_path else None
        failure_log = FailureLog(out / FAILURES_FILE)
        overrides = load_review_overrides(cfg.review_overrides)
        manual = read_annotations(cfg.annotations) if cfg.annotations else {}

        pending = []  # (item, direction, model, strategy, prompt, er2)
        records: dict[tuple, RunRecord] = {}
        for d in self.directions:
            items = [it for it in self.manifest.items if d.source.name in it.queries and d.target.name in it.queries]
            exemplars = self.exemplars_for(d) if Strategy.FEW_SHOT_ER.value in cfg.strategies else None
            for item in items:
                er2 = self.er2_for(item, d)
                for strategy in cfg.strategies:
                    s = Strategy.parse(strategy)
                    spec = PromptSpec(
                        nlq=item.nlq,
                        sparql_query_kg1=item.queries[d.source.name],
                        kg1_name=d.source.name,
                        kg2_name=d.target.name,
                        strategy=s,
                        er2=er2 if s.uses_er2 else None,
                        exemplars=exemplars if s is Strategy.FEW_SHOT_ER else None,
                    )
                    prompt = render_prompt(spec, template_dir=cfg.template_dir)
                    for model in cfg.models:
                        self.stats["cells"] += 1
                        key = cell_key(d.key, model, s.value, item.id)
                        prev = existing.get(key)
                        if prev is not None and prev.prompt_digest == prompt.spec_digest:
                            records[key] = prev
                            self.stats["skipped"] += 1
                            continue
                        pending.append((item, d, model, s.value, prompt, er2))

        reqs = [
            ChatRequest(model, prompt, cfg.temperature, cfg.max_tokens)
            for (_, _, model, _, prompt, _) in pending
        ]
        t0 = time.monotonic()
        responses = batch_complete(self.chat, reqs, cassette, cfg.parallelism) if reqs else []
        complete_ms = (time.monotonic() - t0) * 1000.0
        self.stats["completions"] = sum(isinstance(r, ChatResponse) for r in responses)

        def finish(args):
            (item, d, model, strategy, prompt, er2), req, resp = args
            return self._evaluate(item, d, model, strategy, prompt, er2, req, resp, failure_log, overrides, manual, complete_ms)

        with ThreadPoolExecutor(max_workers=max(1, cfg.sparql_in_flight)) as pool:
            for rec in pool.map(finish, zip(pending, reqs, responses)):
                records[rec.cell_key] = rec

        ordered = [records[k] for k in sorted(records)]
        write_records(out / RECORDS_FILE, ordered)
        return ordered

    def _gold(self, item: BenchmarkItem, d: TranslationDirection) -> ResultSet:
        snap = item.gold.get(d.target.name)
        if snap is not None:
            return snap
        return self.sparql.execute(item.queries[d.target.name], d.target.endpoint_url)

    def _evaluate(self, item, d, model, strategy, prompt, er2, req, resp, failure_log, overrides, manual, complete_ms):
        run_id = f"{d.key}|{model}|{strategy}|{item.id}"
        gold_query = item.queries[d.target.name]
        try:
            order_sensitive = parse_query(gold_query, d.target).order_sensitive
        except LexFailure:
            order_sensitive = False
        base = dict(
            item_id=item.id,
            model_id=model,
            strategy=strategy,
            direction=d.key,
            prompt_digest=prompt.spec_digest,
            request_digest=req.request_digest,
            category=item.category,
            order_sensitive=order_sensitive,
        )
        timings = {"complete_ms": round(complete_ms, 3)}

        if not isinstance(resp, ChatResponse):
            return self._incorrect(base, run_id, None, {"status": "not_run"}, None, None,
                                   {"status": "skipped", "error": f"{type(resp).__name__}: {resp}"},
                                   None, "completion_error", gold_query, d, er2, manual, timings)

        raw = resp.text
        processed = process_output(run_id, raw, failure_log)
        ext = processed.extraction
        extraction = {
            "status": ext.status,
            "method": ext.method,
            "failure_reason": ext.failure_reason,
            "note": ext.note,
            "validation_error": processed.validation_error,
        }
        candidate = processed.query
        raw_candidate = sanitize(ext.query_text) if ext.ok else None
        override = overrides.get(run_id)
        if override is not None:
            extraction["review_note"] = override.get("note")
            candidate = override.get("query")
            if candidate is not None:
                candidate = sanitize(candidate)
                if validate_candidate(candidate) is not None:
                    candidate = None
            raw_candidate = candidate
        if candidate is None:
            reason = "rejected_at_review" if override is not None else ("no_query" if not ext.ok else "invalid_query")
            return self._incorrect(base, run_id, raw, extraction, raw_candidate, None,
                                   {"status": "skipped"}, None, reason, gold_query, d, er2, manual, timings)

        t1 = time.monotonic()
        try:
            got = self.sparql.execute(candidate, d.target.endpoint_url)
            execution = {"status": "ok", "rows": len(got.rows), "kind": got.kind}
            exec_error = None
        except EndpointTimeout as exc:
            got, exec_error = None, exc
            execution = {"status": "timeout", "error": str(exc)}
        except MalformedResponse as exc:
            got, exec_error = None, exc
            execution = {"status": "malformed_response", "error": str(exc)}
        except EndpointError as exc:
            got, exec_error = None, exc
            execution = {"status": f"http_{exc.status}" if exc.status else "unreachable", "error": str(exc)[:500]}
        timings["execute_ms"] = round((time.monotonic() - t1) * 1000.0, 3)
        if got is None:
            return self._incorrect(base, run_id, raw, extraction, candidate, None, execution, exec_error,
                                   "execution_error", gold_query, d, er2, manual, timings)

        try:
            gold = self._gold(item, d)
        except EndpointError as exc:
            raise ConfigError(f"gold[{item.id}]", f"gold query for {d.target.name} failed: {exc}") from exc
        outcome = compare_results(gold, got, order_sensitive, distinct=self.config.distinct)
        comparison = {
            "equal": outcome.equal,
            "mode": outcome.mode,
            "missing": outcome.missing,
            "extra": outcome.extra,
            "permutation_used": list(outcome.permutation_used) if outcome.permutation_used else None,
        }
        if outcome.equal:
            return RunRecord(raw_output=raw, extraction=extraction, candidate_query=candidate,
                             execution=execution, comparison=comparison, outcome="correct",
                             timings=timings, **base)
        failure = "empty_result" if got.is_empty else None
        return self._incorrect(base, run_id, raw, extraction, candidate, comparison, execution, None,
                               failure, gold_query, d, er2, manual, timings, outcome)

    def _incorrect(self, base, run_id, raw, extraction, candidate, comparison, execution, exec_error,
                   failure, gold_query, d, er2, manual, timings, outcome=None):
        labels = prescreen(gold_query, candidate, d, er2, comparison=outcome, execution_error=exec_error)
        ann = merge_annotations(Annotation(run_id, labels), manual.get(run_id))
        return RunRecord(
            raw_output=raw,
            extraction=extraction,
            candidate_query=candidate,
            execution=execution,
            comparison=comparison,
            outcome="incorrect",
            failure=failure,
            labels=tuple(lbl for lbl in LABELS if lbl in ann.labels),
            label_source=ann.source,
            timings=timings,
            **base,
        )


def run_pipeline(config: RunConfig | str | Path, **kw) -> list[RunRecord]:
    if not isinstance(config, RunConfig):
        config = RunConfig.load(config)
    return Pipeline(config, **kw).run()
