"""Benchmark ingestion, filtering, gold snapshots and question categories.

Manifest file (JSON, ``schema_version`` 1)::

    {"schema_version": 1, "name": ..., "source_split": ..., "snapshot_note": ...,
     "count": N,
     "items": [{"id": ..., "nlq": ..., "queries": {"<KG>": "<SPARQL>", ...},
                "gold": {"<KG>": <SPARQL JSON results>, ...},
                "category": "Single Fact" | ... | null,
                "er2": {"<SRC>-><TGT>": [[source_iri, [target_iri, ...]], ...]}}]}

Category file: one ``<id><TAB><category>`` per line; ``#`` starts a comment.
"""

from __future__ import annotations

import json
import logging
import random
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .evaluation import EndpointError, ResultSet, SparqlClient
from .profiles import KgProfile
from .sparql import validate_syntax

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CATEGORIES = (
    "Single Fact",
    "Comprehensive List",
    "Aggregated List",
    "Single Person",
    "Rank or Ordered Info.",
    "Numerical Count",
    "Filtered Multi-Entity",
)
FORMATS = ("qald", "dblp_quad", "pairs")


class FormatError(ValueError):
    def __init__(self, index: int | None, message: str):
        self.index = index
        super().__init__(f"item {index}: {message}" if index is not None else message)


class InsufficientItems(ValueError):
    pass


class UnknownCategory(ValueError):
    pass


class UnknownId(KeyError):
    pass


@dataclass(frozen=True)
class RawItem:
    id: str
    nlq: str
    queries: Mapping[str, str]
    meta: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class BenchmarkItem:
    id: str
    nlq: str
    queries: Mapping[str, str]
    gold: Mapping[str, ResultSet] = field(default_factory=dict)
    category: str | None = None
    er2: Mapping[str, list] = field(default_factory=dict)

    def __post_init__(self):
        if self.category is not None and self.category not in CATEGORIES:
            raise UnknownCategory(self.category)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "nlq": self.nlq,
            "queries": dict(sorted(self.queries.items())),
            "gold": {k: self.gold[k].to_json() for k in sorted(self.gold)},
            "category": self.category,
            "er2": {k: [[s, list(t)] for s, t in v] for k, v in sorted(self.er2.items())},
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "BenchmarkItem":
        return cls(
            id=str(d["id"]),
            nlq=d["nlq"],
            queries=dict(d["queries"]),
            gold={k: ResultSet.from_json(v) for k, v in (d.get("gold") or {}).items()},
            category=d.get("category"),
            er2={k: [(s, tuple(t)) for s, t in v] for k, v in (d.get("er2") or {}).items()},
        )


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    items: tuple[BenchmarkItem, ...]
    source_split: str = ""
    snapshot_note: str = ""

    def __post_init__(self):
        ids = [i.id for i in self.items]
        dup = [k for k, n in Counter(ids).items() if n > 1]
        if dup:
            raise ValueError(f"duplicate item ids: {dup}")

    @property
    def count(self) -> int:
        return len(self.items)

    def item(self, item_id: str) -> BenchmarkItem:
        for it in self.items:
            if it.id == item_id:
                return it
        raise UnknownId(item_id)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "source_split": self.source_split,
            "snapshot_note": self.snapshot_note,
            "count": self.count,
            "items": [i.to_json() for i in self.items],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True, ensure_ascii=False) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_json(cls, d: Mapping) -> "DatasetManifest":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise FormatError(None, f"unsupported manifest schema_version {d.get('schema_version')!r}")
        items = tuple(BenchmarkItem.from_json(x) for x in d.get("items", []))
        if "count" in d and d["count"] != len(items):
            raise FormatError(None, f"count {d['count']} but {len(items)} items")
        return cls(d.get("name", ""), items, d.get("source_split", ""), d.get("snapshot_note", ""))

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _english(question: object) -> str | None:
    if isinstance(question, list):
        for q in question:
            if isinstance(q, dict) and str(q.get("language", "")).lower() == "en" and q.get("string"):
                return q["string"].strip()
        return None
    if isinstance(question, dict):
        return (question.get("string") or "").strip() or None
    if isinstance(question, str):
        return question.strip() or None
    return None


def _kg_from_name(path: Path) -> str | None:
    name = path.name.lower()
    for key, kg in (("wikidata", "Wikidata"), ("dbpedia", "DBpedia")):
        if key in name:
            return kg
    return None


def _load_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(None, f"{path}: not valid JSON ({exc})") from None


def _qald_file(path: Path, kg: str) -> list[tuple[str, str | None, str | None]]:
    data = _load_json(path)
    questions = data.get("questions") if isinstance(data, dict) else None
    if not isinstance(questions, list):
        raise FormatError(None, f"{path}: expected a 'questions' list")
    out = []
    for i, q in enumerate(questions):
        if not isinstance(q, dict) or "id" not in q:
            raise FormatError(i, f"{path}: question without id")
        query = q.get("query")
        sparql = query.get("sparql") if isinstance(query, dict) else query
        out.append((str(q["id"]), _english(q.get("question")), sparql or None))
    return out


def ingest_source(
    files: str | Path | Mapping[str, str | Path] | Sequence[str | Path],
    fmt: str = "qald",
) -> list[RawItem]:
    """Read a source dataset into raw items (English questions only).

    ``qald`` takes the per-KG files of a split (a ``{kg: path}`` mapping, or
    paths whose names contain ``dbpedia``/``wikidata``) joined by question id.
    ``dblp_quad`` reads one DBLP-QuAD file; ``pairs`` reads JSON lines of
    ``{"id", "nlq", "queries": {kg: sparql}}``.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if fmt == "dblp_quad":
        return _ingest_dblp_quad(Path(files))  # type: ignore[arg-type]
    if fmt == "pairs":
        return _ingest_pairs(Path(files))  # type: ignore[arg-type]
    if isinstance(files, (str, Path)):
        files = [files]
    if not isinstance(files, Mapping):
        mapped = {}
        for f in files:
            kg = _kg_from_name(Path(f))
            if kg is None:
                raise FormatError(None, f"cannot tell the KG of {f}; pass a {{kg: path}} mapping")
            mapped[kg] = f
        files = mapped
    nlq: dict[str, str] = {}
    queries: dict[str, dict[str, str]] = {}
    order: list[str] = []
    skipped = set()
    for kg, path in files.items():
        for qid, text, sparql in _qald_file(Path(path), kg):
            if qid not in queries:
                order.append(qid)
                queries[qid] = {}
            if text and qid not in nlq:
                nlq[qid] = text
            if sparql:
                queries[qid][kg] = sparql
    items = []
    for qid in order:
        if qid not in nlq:
            skipped.add(qid)
            continue
        items.append(RawItem(qid, nlq[qid], dict(sorted(queries[qid].items()))))
    if skipped:
        log.warning("skipped %d questions without an English text: %s", len(skipped), ", ".join(sorted(skipped)))
    return items


def split_counts(items: Iterable[RawItem]) -> dict[str, int]:
    """Number of English questions and of queries per KG."""
    items = list(items)
    counts: Counter = Counter()
    for it in items:
        for kg in it.queries:
            counts[kg] += 1
    return {"english_questions": len(items), **dict(sorted(counts.items()))}


def dblp_quad_exclusions(path: str | Path | None = None) -> dict:
    if path is None:
        text = resources.files("kgbridge").joinpath("data").joinpath("dblp_quad_exclusions.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text)
    return {"predicates": list(data.get("predicates", [])), "template_ids": list(data.get("template_ids", []))}


def _uses_predicate(query: str, iri: str) -> bool:
    if f"<{iri}>" in query:
        return True
    local = re.split(r"[#/]", iri)[-1]
    return re.search(r"\b[\w\-]*:" + re.escape(local) + r"\b", query) is not None


def _ingest_dblp_quad(path: Path, exclusions: dict | None = None) -> list[RawItem]:
    data = _load_json(path)
    questions = data.get("questions") if isinstance(data, dict) else data
    if not isinstance(questions, list):
        raise FormatError(None, f"{path}: expected a 'questions' list")
    excl = exclusions or dblp_quad_exclusions()
    out = []
    for i, q in enumerate(questions):
        if not isinstance(q, dict) or "id" not in q:
            raise FormatError(i, "question without id")
        text = _english(q.get("question"))
        query = q.get("query")
        sparql = query.get("sparql") if isinstance(query, dict) else query
        if not text or not sparql:
            raise FormatError(i, "question text and query are both required")
        template = q.get("template_id")
        if template in excl["template_ids"] or any(_uses_predicate(sparql, p) for p in excl["predicates"]):
            continue
        out.append(RawItem(str(q["id"]), text, {"DBLP": sparql}, {"template_id": template}))
    return out


def _ingest_pairs(path: Path) -> list[RawItem]:
    out = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append(RawItem(str(d["id"]), d["nlq"], dict(d["queries"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(n, f"bad pair record ({exc})") from None
    return out


def _comparable(a: ResultSet, b: ResultSet) -> bool:
    if a.kind != b.kind:
        return False
    return a.kind == "boolean" or len(a.variables) == len(b.variables)


def _usable(rs: ResultSet) -> bool:
    return rs.kind == "boolean" or bool(rs.rows)


def build_benchmark(
    raw_items: Sequence[RawItem],
    profiles: Mapping[str, KgProfile],
    kgs: Sequence[str],
    *,
    target_n: int,
    seed: int = 0,
    client: SparqlClient | None = None,
    snapshots: Mapping[str, Mapping[str, ResultSet]] | None = None,
    include: Sequence[str] = (),
    name: str = "benchmark",
    source_split: str = "",
    snapshot_note: str = "",
    parallelism: int = 4,
) -> DatasetManifest:
    """Keep items that run on every KG in ``kgs`` with non-empty, comparable results; sample ``target_n``."""
    if target_n < 0:
        raise ValueError("target_n must be >= 0")
    if len(kgs) < 2:
        raise ValueError("a benchmark needs at least two knowledge graphs")
    for kg in kgs:
        if kg not in profiles:
            raise ValueError(f"unknown knowledge graph {kg!r}")
    client = client or SparqlClient()

    def gold_for(item: RawItem) -> dict[str, ResultSet] | None:
        out = {}
        for kg in kgs:
            q = item.queries.get(kg)
            if not q or validate_syntax(q):
                return None
            snap = (snapshots or {}).get(item.id, {}).get(kg)
            if snap is None:
                try:
                    snap = client.execute(q, profiles[kg].endpoint_url)
                except EndpointError as exc:
                    log.info("item %s dropped: %s query failed (%s)", item.id, kg, exc)
                    return None
            if not _usable(snap):
                return None
            out[kg] = snap
        first = out[kgs[0]]
        if not all(_comparable(first, out[kg]) for kg in kgs[1:]):
            return None
        return out

    candidates = [it for it in raw_items if all(kg in it.queries for kg in kgs)]
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        golds = list(pool.map(gold_for, candidates))
    passing = {it.id: (it, g) for it, g in zip(candidates, golds) if g is not None}
    if len(passing) < target_n:
        raise InsufficientItems(f"{len(passing)} usable items, {target_n} requested")

    forced = [i for i in include if i in passing][:target_n]
    rest = sorted(i for i in passing if i not in forced)
    rng = random.Random(seed)
    picked = forced + rng.sample(rest, target_n - len(forced))
    items = []
    for item_id in sorted(picked, key=_id_key):
        raw, gold = passing[item_id]
        items.append(BenchmarkItem(raw.id, raw.nlq, {kg: raw.queries[kg] for kg in kgs}, gold))
    return DatasetManifest(name, tuple(items), source_split, snapshot_note)


def _id_key(item_id: str):
    return [int(p) if p.isdigit() else p for p in re.split(r"(\d+)", item_id)]


def read_categories(path: str | Path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if "\t" not in line:
            raise FormatError(n, "expected '<id><TAB><category>'")
        item_id, cat = (p.strip() for p in line.split("\t", 1))
        if cat not in CATEGORIES:
            raise UnknownCategory(f"line {n}: {cat!r}")
        out[item_id] = cat
    return out


def attach_categories(manifest: DatasetManifest, path: str | Path) -> DatasetManifest:
    cats = read_categories(path)
    known = {it.id for it in manifest.items}
    unknown = sorted(set(cats) - known)
    if unknown:
        raise UnknownId(", ".join(unknown))
    items = tuple(replace(it, category=cats.get(it.id, it.category)) for it in manifest.items)
    return replace(manifest, items=items)


def category_distribution(manifest: DatasetManifest) -> dict[str, int]:
    counts = Counter(it.category for it in manifest.items if it.category)
    return {c: counts.get(c, 0) for c in CATEGORIES}


def format_distribution(dist: Mapping[str, int]) -> str:
    width = max(len(c) for c in CATEGORIES)
    lines = [f"{c:<{width}}  {dist.get(c, 0):>4}" for c in CATEGORIES]
    lines.append(f"{'Total':<{width}}  {sum(dist.values()):>4}")
    return "\n".join(lines) + "\n"
