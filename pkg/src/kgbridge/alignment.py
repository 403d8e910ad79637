"""Map source-KG terms to target-KG equivalents.

Lookups follow owl:sameAs (entities), owl:equivalentProperty (properties)
and owl:equivalentClass (classes) on the source endpoint, or the inverse
link on the target endpoint when ``query_target`` is set.  Only target IRIs
inside the target profile's namespaces are kept.

Cache file (JSON lines, append-only)::

    {"source_id": ..., "target_kg": "wikidata", "target_ids": [...],
     "kind": "sameAs", "provenance": "endpoint_lookup", "retrieved_at": ...}
    {"evict": true, "source_id": ..., "target_kg": ...}

Manual mapping file (JSON lines, one er2 entry plus ``kind`` per line)::

    {"dblp_id": "https://dblp.org/pid/...", "openalex_ids": ["https://semopenalex.org/author/..."], "kind": "orcid"}
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .evaluation import EndpointError, SparqlClient
from .profiles import KgProfile, TranslationDirection
from .sparql import LexFailure, TermOccurrence, expand_prefixes, extract_terms, parse_query

OWL = "http://www.w3.org/2002/07/owl#"
KIND_BY_ROLE = {
    "entity": "sameAs",
    "property": "equivalentProperty",
    "class": "equivalentClass",
}
KINDS = ("sameAs", "equivalentProperty", "equivalentClass", "orcid", "manual")
PROVENANCES = ("endpoint_lookup", "manual_file")


class SchemaError(ValueError):
    def __init__(self, line: int, offset: int, message: str):
        self.line = line
        self.offset = offset
        super().__init__(f"line {line}, offset {offset}: {message}")


class CacheMiss(EndpointError):
    def __init__(self, source_id: str, target_kg: str):
        super().__init__(None, f"no cached mapping for {source_id} -> {target_kg} and no endpoint client")


def kg_key(name: str) -> str:
    """Lower-case key used in er2 field names and the cache."""
    return name.strip().lower().replace(" ", "_")


@dataclass(frozen=True)
class TermMapping:
    source_id: str
    target_ids: tuple[str, ...]
    kind: str
    provenance: str
    target_kg: str
    retrieved_at: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown mapping kind {self.kind!r}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "target_ids", tuple(sorted(set(self.target_ids))))
        object.__setattr__(self, "target_kg", kg_key(self.target_kg))

    @property
    def mapped(self) -> bool:
        return bool(self.target_ids)

    def to_json(self) -> dict:
        d = asdict(self)
        d["target_ids"] = list(self.target_ids)
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "TermMapping":
        return cls(
            source_id=d["source_id"],
            target_ids=tuple(d.get("target_ids") or ()),
            kind=d["kind"],
            provenance=d["provenance"],
            target_kg=d["target_kg"],
            retrieved_at=d.get("retrieved_at", ""),
        )


@dataclass(frozen=True)
class CoverageStats:
    total_terms: int
    mapped: int
    unmapped: int
    unmapped_list: tuple[str, ...]

    def __post_init__(self):
        if self.mapped + self.unmapped != self.total_terms:
            raise ValueError("mapped + unmapped must equal total_terms")


class MappingCache:
    """Mappings keyed by (source IRI, target KG); manual entries shadow looked-up ones."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._lookup: dict[tuple[str, str], TermMapping] = {}
        self._manual: dict[tuple[str, str], TermMapping] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            for n, line in enumerate(self.path.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    if rec.get("evict"):
                        self._drop((rec["source_id"], kg_key(rec["target_kg"])))
                    else:
                        self._put(TermMapping.from_json(rec))
                except (ValueError, KeyError) as exc:
                    raise ValueError(f"{self.path}:{n}: bad cache record ({exc})") from exc

    def _drop(self, key):
        self._lookup.pop(key, None)
        self._manual.pop(key, None)

    def _put(self, m: TermMapping) -> None:
        store = self._manual if m.provenance == "manual_file" else self._lookup
        store[(m.source_id, m.target_kg)] = m

    def _append(self, rec: dict) -> None:
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")

    def get(self, source_id: str, target_kg: str) -> TermMapping | None:
        key = (source_id, kg_key(target_kg))
        with self._lock:
            return self._manual.get(key) or self._lookup.get(key)

    def put(self, m: TermMapping) -> None:
        with self._lock:
            self._put(m)
            self._append(m.to_json())

    def evict(self, source_id: str, target_kg: str) -> None:
        with self._lock:
            self._drop((source_id, kg_key(target_kg)))
            self._append({"evict": True, "source_id": source_id, "target_kg": kg_key(target_kg)})

    def __len__(self):
        return len(set(self._lookup) | set(self._manual))

    def mappings(self) -> list[TermMapping]:
        keys = sorted(set(self._lookup) | set(self._manual))
        return [self._manual.get(k) or self._lookup[k] for k in keys]


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def equivalence_query(iri: str, role: str, inverse: bool = False) -> str:
    kinds = [KIND_BY_ROLE[role]] if role in KIND_BY_ROLE else list(KIND_BY_ROLE.values())
    values = " ".join(f"<{OWL}{k}>" for k in kinds)
    pattern = f"?link ?p <{iri}>" if inverse else f"<{iri}> ?p ?link"
    return f"SELECT DISTINCT ?p ?link WHERE {{ VALUES ?p {{ {values} }} {pattern} . FILTER(isIRI(?link)) }}"


def fetch_equivalents(
    term: TermOccurrence,
    direction: TranslationDirection,
    client: SparqlClient | None,
    *,
    cache: MappingCache | None = None,
    query_target: bool = False,
    clock: Callable[[], str] = _now,
) -> TermMapping:
    """Look ``term`` up, filter to target namespaces, cache the outcome (also when empty)."""
    target = direction.target
    if cache is not None:
        hit = cache.get(term.iri, target.name)
        if hit is not None:
            return hit
    if client is None:
        raise CacheMiss(term.iri, target.name)
    endpoint = target.endpoint_url if query_target else direction.source.endpoint_url
    rs = client.execute(equivalence_query(term.iri, term.role, inverse=query_target), endpoint)
    links, preds = set(), []
    for row in rs.rows:
        p, link = row.get("p"), row.get("link")
        if link is None or link.kind != "iri" or not target.owns(link.value):
            continue
        links.add(link.value)
        if p is not None:
            preds.append(p.value)
    kind = KIND_BY_ROLE.get(term.role)
    if kind is None:
        found = sorted({p[len(OWL):] for p in preds if p.startswith(OWL)})
        kind = found[0] if found else "sameAs"
    mapping = TermMapping(term.iri, tuple(links), kind, "endpoint_lookup", target.name, clock())
    if cache is not None:
        cache.put(mapping)
    return mapping


def source_terms(query: str, profile: KgProfile) -> list[TermOccurrence]:
    """Unique IRIs of ``query`` that fall inside ``profile``'s namespaces, roles assigned."""
    doc = expand_prefixes(parse_query(query, profile))
    return [t for t in extract_terms(doc, profile) if profile.owns(t.iri)]


def build_er2(
    terms: Sequence[TermOccurrence],
    direction: TranslationDirection,
    client: SparqlClient | None = None,
    cache: MappingCache | None = None,
    *,
    parallelism: int = 4,
    query_target: bool = False,
    clock: Callable[[], str] = _now,
) -> list[TermMapping]:
    """One mapping per unique source term, first-occurrence order, empty ones included."""
    unique: dict[str, TermOccurrence] = {}
    for t in terms:
        if direction.source.owns(t.iri):
            unique.setdefault(t.iri, t)
    todo = list(unique.values())
    if not todo:
        return []

    def one(t):
        return fetch_equivalents(t, direction, client, cache=cache, query_target=query_target, clock=clock)

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        return list(pool.map(one, todo))


def er2_document(mappings: Iterable[TermMapping], direction: TranslationDirection) -> list[dict]:
    src, tgt = kg_key(direction.source.name), kg_key(direction.target.name)
    return [{f"{src}_id": m.source_id, f"{tgt}_ids": list(m.target_ids)} for m in mappings]


def dump_er2(mappings: Iterable[TermMapping], direction: TranslationDirection) -> str:
    return json.dumps(er2_document(mappings, direction), ensure_ascii=False)


def parse_er2_entry(entry: Mapping, source_name: str, target_name: str) -> tuple[str, tuple[str, ...]]:
    """Read one er2 object; the target key may be ``<kg>_id`` or ``<kg>_ids``."""
    src_key = f"{kg_key(source_name)}_id"
    if src_key not in entry or not isinstance(entry[src_key], str):
        raise ValueError(f"missing string field {src_key!r}")
    tgt = kg_key(target_name)
    for key in (f"{tgt}_ids", f"{tgt}_id"):
        if key in entry:
            value = entry[key]
            if isinstance(value, str):
                value = [value]
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise ValueError(f"{key!r} must be a list of IRIs")
            return entry[src_key], tuple(value)
    raise ValueError(f"missing field {tgt}_ids")


def _split_keys(entry: Mapping) -> tuple[str, str]:
    src = [k[:-3] for k, v in entry.items() if k.endswith("_id") and isinstance(v, str)]
    tgt = [k[:-4] for k in entry if k.endswith("_ids")]
    tgt += [k[:-3] for k, v in entry.items() if k.endswith("_id") and isinstance(v, list)]
    if len(src) != 1 or len(tgt) != 1:
        raise ValueError("expected exactly one '<source>_id' and one '<target>_ids' field")
    return src[0], tgt[0]


def load_manual_mappings(
    path: str | Path,
    cache: MappingCache | None = None,
    *,
    target_profile: KgProfile | None = None,
    clock: Callable[[], str] = _now,
) -> list[TermMapping]:
    """Read a manual mapping file; entries go into ``cache`` with manual precedence."""
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(n, exc.colno - 1, exc.msg) from None
        col = len(line) - len(line.lstrip())
        if not isinstance(entry, dict):
            raise SchemaError(n, col, "expected an object")
        try:
            src_name, tgt_name = _split_keys(entry)
            source_id, targets = parse_er2_entry(entry, src_name, tgt_name)
        except ValueError as exc:
            raise SchemaError(n, col, str(exc)) from None
        kind = entry.get("kind", "manual")
        if kind not in KINDS:
            raise SchemaError(n, max(line.find('"kind"'), col), f"unknown kind {kind!r}")
        if target_profile is not None and kg_key(target_profile.name) == tgt_name:
            bad = [t for t in targets if not target_profile.owns(t)]
            if bad:
                raise SchemaError(n, max(line.find(bad[0]), col), f"{bad[0]} is outside {target_profile.name}")
        m = TermMapping(source_id, targets, kind, "manual_file", tgt_name, entry.get("retrieved_at") or clock())
        out.append(m)
        if cache is not None:
            cache.put(m)
    return out


def join_by_orcid(
    source_orcids: Mapping[str, str],
    target_orcids: Mapping[str, str],
    target_kg: str,
    *,
    clock: Callable[[], str] = _now,
) -> list[TermMapping]:
    """Author mappings from shared ORCID iDs (``{author IRI: orcid}`` on each side)."""
    by_orcid: dict[str, list[str]] = {}
    for iri, orcid in target_orcids.items():
        by_orcid.setdefault(normalize_orcid(orcid), []).append(iri)
    out = []
    for iri in sorted(source_orcids):
        hits = by_orcid.get(normalize_orcid(source_orcids[iri]))
        if hits:
            out.append(TermMapping(iri, tuple(hits), "orcid", "manual_file", target_kg, clock()))
    return out


def normalize_orcid(value: str) -> str:
    v = value.strip().rstrip("/")
    return v.rsplit("/", 1)[-1].upper()


def coverage_stats(
    queries: Iterable[object],
    direction: TranslationDirection,
    cache: MappingCache,
) -> CoverageStats:
    """Unique source terms across ``queries``; a term counts as mapped when its cached targets are non-empty.

    Items may be query strings, term lists, or objects with a ``queries``
    mapping keyed by KG name.
    """
    seen: dict[str, None] = {}
    for q in queries:
        if hasattr(q, "queries"):
            q = q.queries.get(direction.source.name)
            if q is None:
                continue
        if isinstance(q, str):
            try:
                terms = source_terms(q, direction.source)
            except LexFailure:
                continue
        else:
            terms = [t for t in q if direction.source.owns(t.iri)]
        for t in terms:
            seen.setdefault(t.iri, None)
    unmapped = []
    for iri in seen:
        m = cache.get(iri, direction.target.name)
        if m is None or not m.mapped:
            unmapped.append(iri)
    total = len(seen)
    return CoverageStats(total, total - len(unmapped), len(unmapped), tuple(sorted(unmapped)))
