"""Heuristic error labels for incorrect translations, annotation merge, co-occurrence.

Every incorrect run gets at least one label; ``StructuralError`` is the
fallback.  Checks are independent and all matching labels attach:

* ``UnadaptedDatasetPatterns``: the candidate uses a source-KG IRI, declares a
  source-KG namespace, or uses a source prefix label the target does not know.
* ``QueryBadFormed``: nothing extractable, a parse or validation failure, an
  undeclared prefix, or the endpoint rejecting the query with HTTP 400.
* ``PropertyAsEntity_OntologyAsResource``: a target property (or, for
  human-readable KGs, a class) sits where an entity belongs: subject, or
  object of a non-typing triple; or a property is used as a type.
* ``EntityAsProperty_ResourceAsOntology``: a target entity is used as a
  predicate, or (human-readable KGs) as the class of a typing triple.
* ``MissingTypeAssertion``: the gold query types something and the candidate
  never does.
* ``WrongOrMissingProperty`` / ``WrongOrMissingEntity``: the set of target
  terms in predicate (subject/object) slots differs from the gold's.  Terms that er2 offers
  as alternatives for the same source term count as one; typing predicates and
  typing classes are left to ``MissingTypeAssertion``.
* ``StructuralError``: the candidate parses and passes both set checks yet is
  wrong, or its shape differs from the gold (form, projection width, or
  FILTER/OPTIONAL/UNION/MINUS/aggregates/ORDER BY/GROUP BY/HAVING/LIMIT/OFFSET).

Annotation sidecar (JSON lines)::

    {"run_id": ..., "labels": [...], "notes": "...", "annotator": "...", "timestamp": "..."}
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .evaluation import ComparisonOutcome, EndpointError
from .extraction import validate_candidate
from .profiles import RDF_TYPE, KgProfile, TranslationDirection
from .sparql import QueryDoc, QuerySyntaxError, expand_prefixes, parse_query, tokenize, type_object_triples

UNADAPTED = "UnadaptedDatasetPatterns"
BAD_FORMED = "QueryBadFormed"
PROPERTY_AS_ENTITY = "PropertyAsEntity_OntologyAsResource"
ENTITY_AS_PROPERTY = "EntityAsProperty_ResourceAsOntology"
MISSING_TYPE = "MissingTypeAssertion"
WRONG_PROPERTY = "WrongOrMissingProperty"
WRONG_ENTITY = "WrongOrMissingEntity"
STRUCTURAL = "StructuralError"

LABELS = (
    UNADAPTED,
    BAD_FORMED,
    PROPERTY_AS_ENTITY,
    ENTITY_AS_PROPERTY,
    MISSING_TYPE,
    WRONG_PROPERTY,
    WRONG_ENTITY,
    STRUCTURAL,
)

# row order of the error distribution table
REPORT_ORDER = (
    STRUCTURAL,
    WRONG_ENTITY,
    WRONG_PROPERTY,
    BAD_FORMED,
    MISSING_TYPE,
    UNADAPTED,
    PROPERTY_AS_ENTITY,
    ENTITY_AS_PROPERTY,
)

SHAPE_FEATURES = frozenset({
    "FILTER", "OPTIONAL", "UNION", "MINUS", "HAVING", "LIMIT", "OFFSET",
    "COUNT", "SUM", "AVG", "MIN", "MAX", "EXISTS", "ORDER BY", "GROUP BY",
})

SOURCES = ("heuristic", "manual", "merged")

_NUMERIC_ID = re.compile(r"^([PQ])\d+$")
_PREFIX_DECL = re.compile(r"PREFIX\s+[\w\-.]*:\s*<([^>]*)>", re.IGNORECASE)


class IdMismatch(ValueError):
    pass


def display_label(label: str, target: KgProfile | str | None = None) -> str:
    """Human-facing name; the typing label names the target's type property."""
    name = target.name if isinstance(target, KgProfile) else (target or "")
    numeric = name.lower() == "wikidata"
    if label == MISSING_TYPE:
        if isinstance(target, KgProfile) and target.type_property != RDF_TYPE:
            return f"Missing {target.type_property.rsplit('/', 1)[-1]}"
        if numeric:
            return "Missing P31"
        return "Missing rdf:type" if name else "Missing P31 / Missing rdf:type"
    names = {
        UNADAPTED: "Unadapted Dataset Patterns",
        BAD_FORMED: "Query Bad Formed Error",
        PROPERTY_AS_ENTITY: "Property Treated as Entity / Ontology Treated as Resource",
        ENTITY_AS_PROPERTY: "Entity Treated as Property / Resource Treated as Ontology",
        WRONG_PROPERTY: "Wrong Property / Ontology",
        WRONG_ENTITY: "Wrong Entity / Resource",
        STRUCTURAL: "Structural Error",
    }
    return names[label]


def target_kind(iri: str, profile: KgProfile) -> str | None:
    """entity | property | class for an IRI inside ``profile``, else None."""
    local = profile.local_name(iri)
    if local is None:
        return None
    if profile.identifier_style == "numeric":
        m = _NUMERIC_ID.match(local)
        if m:
            return "property" if m.group(1) == "P" else "entity"
    roles = profile.candidate_roles(iri)
    if "property" in roles and "class" in roles:
        return "class" if local[:1].isupper() else "property"
    return roles[0] if roles else None


def _type_keys(profile: KgProfile) -> set[str]:
    return {_key(RDF_TYPE, profile), _key(profile.type_property, profile)}


def _key(iri: str, profile: KgProfile) -> str:
    # numeric ids name the same thing under every namespace form (wd:, wdt:, p:, ...)
    local = profile.local_name(iri)
    if profile.identifier_style == "numeric" and local and _NUMERIC_ID.match(local):
        return local
    return iri


def _alias_map(er2: Iterable[Any], profile: KgProfile) -> dict[str, str]:
    from .prompts import er2_pairs

    parent: dict[str, str] = {}

    def find(k):
        while parent.get(k, k) != k:
            k = parent[k]
        return k

    for _src, tgts in er2_pairs(er2 or ()):
        keys = sorted({_key(t, profile) for t in tgts})
        for k in keys[1:]:
            a, b = find(keys[0]), find(k)
            if a != b:
                parent[max(a, b)] = min(a, b)
    return {k: find(k) for k in parent}


def _term_sets(doc: QueryDoc, profile: KgProfile, aliases: Mapping[str, str]) -> dict[str, set[str]]:
    typing = type_object_triples(doc, profile)
    type_keys = _type_keys(profile)
    out = {"property": set(), "entity": set()}
    for t in doc.terms:
        kind = target_kind(t.iri, profile)
        if kind is None:
            continue
        in_triples = [(i, s) for i, s in t.positions if i >= 0]
        if not in_triples:
            continue
        key = _key(t.iri, profile)
        if key in type_keys:
            continue
        key = aliases.get(key, key)
        # bucket by slot: misplaced terms are reported by _slot_misuse, not twice here
        for i, s in in_triples:
            if s == "predicate":
                out["property"].add(key)
            elif not (s == "object" and i in typing):
                out["entity"].add(key)
    return out


def _types_something(doc: QueryDoc, profile: KgProfile) -> bool:
    return bool(type_object_triples(doc, profile))


def _slot_misuse(doc: QueryDoc, profile: KgProfile) -> set[str]:
    typing = type_object_triples(doc, profile)
    found = set()
    numeric = profile.identifier_style == "numeric"
    for t in doc.terms:
        kind = target_kind(t.iri, profile)
        if kind is None or _key(t.iri, profile) in _type_keys(profile):
            continue
        for idx, slot in t.positions:
            if idx < 0:
                continue
            if slot == "predicate":
                if kind == "entity":
                    found.add(ENTITY_AS_PROPERTY)
            elif slot == "object" and idx in typing:
                if kind == "property":
                    found.add(PROPERTY_AS_ENTITY)
                elif kind == "entity" and not numeric:
                    found.add(ENTITY_AS_PROPERTY)
            else:
                if kind == "property" or (kind == "class" and not numeric):
                    found.add(PROPERTY_AS_ENTITY)
    return found


def _undeclared_labels(text: str, doc_prefixes: Mapping[str, str]) -> set[str]:
    labels = set()
    for tok in tokenize(text):
        if tok.kind == "pname":
            label = tok.text.split(":", 1)[0]
            if label not in doc_prefixes:
                labels.add(label)
    return labels


def _unadapted(text: str, doc: QueryDoc | None, direction: TranslationDirection, undeclared: set[str]) -> bool:
    src, tgt = direction.source, direction.target
    if doc is not None and any(src.owns(t.iri) and not tgt.owns(t.iri) for t in doc.terms):
        return True
    for ns in _PREFIX_DECL.findall(text):
        if ns and any(s.startswith(ns) or ns.startswith(s) for s in src.namespaces()) and not tgt.owns(ns):
            return True
    src_only = set(src.prefixes) - set(tgt.prefixes)
    return bool(undeclared & src_only)


def _shape_mismatch(gold: QueryDoc, cand: QueryDoc) -> bool:
    if gold.form != cand.form:
        return True
    if gold.form == "SELECT" and not (gold.select_all or cand.select_all):
        if len(gold.projected_vars) != len(cand.projected_vars):
            return True
    return bool((gold.features & SHAPE_FEATURES) ^ (cand.features & SHAPE_FEATURES))


def _parse(text: str, profile: KgProfile) -> QueryDoc:
    return expand_prefixes(parse_query(text, profile))


def prescreen(
    gold: str | QueryDoc,
    candidate: str | None,
    direction: TranslationDirection,
    er2: Iterable[Any] = (),
    *,
    comparison: ComparisonOutcome | None = None,
    execution_error: EndpointError | str | None = None,
) -> frozenset[str]:
    """Labels for one incorrect run; never empty.

    ``gold`` is the target-KG gold query, ``candidate`` the extracted
    candidate (None when extraction found nothing).
    """
    target = direction.target
    labels: set[str] = set()
    if candidate is None or not candidate.strip():
        return frozenset({BAD_FORMED})

    doc: QueryDoc | None = None
    undeclared: set[str] = set()
    try:
        doc = parse_query(candidate, target)
        undeclared = _undeclared_labels(candidate, doc.prefixes)
        if not undeclared:
            doc = expand_prefixes(doc)
    except QuerySyntaxError:
        labels.add(BAD_FORMED)
    if undeclared or validate_candidate(candidate) is not None:
        labels.add(BAD_FORMED)
    status = getattr(execution_error, "status", None)
    if status == 400 or (isinstance(execution_error, str) and execution_error.startswith("http_400")):
        labels.add(BAD_FORMED)

    if doc is None:
        # not parseable at all: look for source namespaces in the raw text only
        if any(ns in candidate for ns in direction.source.namespaces()):
            labels.add(UNADAPTED)
        return frozenset(labels)
    if _unadapted(candidate, doc, direction, undeclared):
        labels.add(UNADAPTED)

    gold_doc = gold if isinstance(gold, QueryDoc) else _parse(gold, target)
    labels |= _slot_misuse(doc, target)
    if _types_something(gold_doc, target) and not _types_something(doc, target):
        labels.add(MISSING_TYPE)

    aliases = _alias_map(er2, target)
    g_sets = _term_sets(gold_doc, target, aliases)
    c_sets = _term_sets(doc, target, aliases)
    terms_ok = True
    if g_sets["property"] != c_sets["property"]:
        labels.add(WRONG_PROPERTY)
        terms_ok = False
    if g_sets["entity"] != c_sets["entity"]:
        labels.add(WRONG_ENTITY)
        terms_ok = False
    if terms_ok or _shape_mismatch(gold_doc, doc):
        labels.add(STRUCTURAL)
    if not labels:
        labels.add(STRUCTURAL)
    return frozenset(labels)


@dataclass(frozen=True)
class Annotation:
    run_id: str
    labels: frozenset[str]
    source: str = "heuristic"
    notes: str = ""
    annotator: str = ""
    timestamp: str = ""

    def __post_init__(self):
        labels = frozenset(self.labels)
        if not labels:
            raise ValueError(f"annotation for {self.run_id} has no labels")
        unknown = labels - set(LABELS)
        if unknown:
            raise ValueError(f"unknown labels {sorted(unknown)}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown annotation source {self.source!r}")
        object.__setattr__(self, "labels", labels)

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "labels": [lbl for lbl in LABELS if lbl in self.labels],
            "source": self.source,
            "notes": self.notes,
            "annotator": self.annotator,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "Annotation":
        return cls(
            run_id=d["run_id"],
            labels=frozenset(d["labels"]),
            source=d.get("source", "manual"),
            notes=d.get("notes", ""),
            annotator=d.get("annotator", ""),
            timestamp=d.get("timestamp", ""),
        )


def merge_annotations(heuristic: Annotation, manual: Annotation | None) -> Annotation:
    if manual is None:
        return heuristic
    if manual.run_id != heuristic.run_id:
        raise IdMismatch(f"{heuristic.run_id} != {manual.run_id}")
    kept = ", ".join(lbl for lbl in LABELS if lbl in heuristic.labels)
    notes = f"heuristic: {kept}" + (f"; {manual.notes}" if manual.notes else "")
    return Annotation(heuristic.run_id, manual.labels, "merged", notes, manual.annotator, manual.timestamp)


def read_annotations(path: str | Path) -> dict[str, Annotation]:
    p = Path(path)
    if not p.exists():
        return {}
    out = {}
    for n, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out[rec["run_id"]] = Annotation.from_json({"source": "manual", **rec})
        except (ValueError, KeyError) as exc:
            raise ValueError(f"{p}:{n}: bad annotation ({exc})") from exc
    return out


def write_annotations(path: str | Path, annotations: Iterable[Annotation]) -> None:
    lines = [json.dumps(a.to_json(), sort_keys=True, ensure_ascii=False) for a in sorted(annotations, key=lambda a: a.run_id)]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


@dataclass(frozen=True)
class CooccurrenceMatrix:
    labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    def count(self, a: str, b: str) -> int:
        return self.counts[self.labels.index(a)][self.labels.index(b)]

    def conditional(self, given: str, other: str) -> float:
        """P(other | given) in percent; 0 when ``given`` never occurs."""
        base = self.count(given, given)
        return 100.0 * self.count(given, other) / base if base else 0.0

    def percentages(self) -> tuple[tuple[float, ...], ...]:
        return tuple(tuple(self.conditional(a, b) for b in self.labels) for a in self.labels)


def cooccurrence_matrix(annotations: Iterable[Annotation | Iterable[str]], labels: Sequence[str] = LABELS) -> CooccurrenceMatrix:
    index = {lbl: i for i, lbl in enumerate(labels)}
    pairs: Counter = Counter()
    for a in annotations:
        present = sorted({index[lbl] for lbl in (a.labels if isinstance(a, Annotation) else a)})
        for i in present:
            for j in present:
                pairs[i, j] += 1
    n = len(labels)
    return CooccurrenceMatrix(tuple(labels), tuple(tuple(pairs[i, j] for j in range(n)) for i in range(n)))
