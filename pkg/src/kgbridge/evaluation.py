"""Query execution against SPARQL endpoints and exact-match comparison."""

from __future__ import annotations

import itertools
import logging
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from decimal import Decimal, InvalidOperation
from typing import Iterable, Mapping

import requests

from .sparql import is_order_sensitive  # noqa: F401  re-exported

log = logging.getLogger(__name__)

XSD = "http://www.w3.org/2001/XMLSchema#"
XSD_STRING = XSD + "string"
XSD_INTEGER = XSD + "integer"
XSD_DECIMAL = XSD + "decimal"
XSD_DOUBLE = XSD + "double"
XSD_DATE = XSD + "date"
XSD_DATETIME = XSD + "dateTime"

_INTEGER_TYPES = {
    XSD + t for t in (
        "integer", "int", "long", "short", "byte", "nonNegativeInteger",
        "positiveInteger", "negativeInteger", "nonPositiveInteger",
        "unsignedLong", "unsignedInt", "unsignedShort", "unsignedByte",
    )
}
_NUMERIC_TYPES = _INTEGER_TYPES | {XSD_DECIMAL, XSD_DOUBLE, XSD + "float"}

RESULTS_JSON = "application/sparql-results+json"

# columns beyond this count are matched by name/value profile, not by permutation
MAX_PERMUTATION_ARITY = 5


class EndpointError(RuntimeError):
    def __init__(self, status: int | None, message: str = "", body: str = ""):
        self.status = status
        self.body = body
        super().__init__(message or f"endpoint returned HTTP {status}")


class EndpointTimeout(EndpointError):
    def __init__(self, message: str = "endpoint timed out"):
        super().__init__(None, message)


class MalformedResponse(EndpointError):
    def __init__(self, message: str):
        super().__init__(None, message)


@dataclass(frozen=True, order=True)
class RdfTerm:
    kind: str  # iri | literal | bnode
    value: str
    datatype: str | None = None
    lang: str | None = None

    def __post_init__(self):
        if self.kind != "literal" and (self.datatype or self.lang):
            raise ValueError("only literals carry datatype or language")
        if self.datatype and self.lang:
            raise ValueError("a literal has either a datatype or a language tag")

    def to_json(self) -> dict:
        out = {"type": "uri" if self.kind == "iri" else self.kind, "value": self.value}
        if self.datatype:
            out["datatype"] = self.datatype
        if self.lang:
            out["xml:lang"] = self.lang
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "RdfTerm":
        kind = obj.get("type")
        if kind == "uri":
            return cls("iri", obj["value"])
        if kind == "bnode":
            return cls("bnode", obj["value"])
        if kind in ("literal", "typed-literal"):
            return cls("literal", obj["value"], obj.get("datatype"), obj.get("xml:lang"))
        raise MalformedResponse(f"unknown RDF term type {kind!r}")


Row = Mapping[str, RdfTerm]


@dataclass(frozen=True)
class ResultSet:
    kind: str  # bindings | boolean
    variables: tuple[str, ...] = ()
    rows: tuple[Row, ...] = ()
    boolean_value: bool | None = None

    def __post_init__(self):
        if self.kind == "boolean" and self.rows:
            raise ValueError("boolean results carry no rows")
        for row in self.rows:
            extra = set(row) - set(self.variables)
            if extra:
                raise ValueError(f"row binds undeclared variables {sorted(extra)}")

    @property
    def is_empty(self) -> bool:
        return self.kind == "bindings" and not self.rows

    def to_json(self) -> dict:
        if self.kind == "boolean":
            return {"head": {}, "boolean": bool(self.boolean_value)}
        return {
            "head": {"vars": list(self.variables)},
            "results": {"bindings": [
                {v: row[v].to_json() for v in self.variables if v in row} for row in self.rows
            ]},
        }

    @classmethod
    def from_json(cls, data: object) -> "ResultSet":
        if not isinstance(data, Mapping):
            raise MalformedResponse("results document is not an object")
        if "boolean" in data:
            return cls("boolean", boolean_value=bool(data["boolean"]))
        try:
            variables = tuple(data["head"].get("vars", []))
            bindings = data["results"]["bindings"]
            rows = tuple(
                {k: RdfTerm.from_json(v) for k, v in b.items() if k in variables} for b in bindings
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise MalformedResponse(f"missing results field: {exc}") from exc
        return cls("bindings", variables, rows)

    @classmethod
    def boolean(cls, value: bool) -> "ResultSet":
        return cls("boolean", boolean_value=value)


@dataclass(frozen=True)
class ComparisonOutcome:
    equal: bool
    mode: str  # ordered | unordered | boolean
    missing: int = 0
    extra: int = 0
    permutation_used: tuple[int, ...] | None = None
    detail: str = ""

    def __post_init__(self):
        if self.equal and (self.missing or self.extra):
            raise ValueError("equal outcomes have no missing or extra rows")


# -- normalization -----------------------------------------------------------

_DATE_RE = re.compile(r"^([+-]?\d{4,})-(\d{2})-(\d{2})(Z|[+-]\d{2}:\d{2})?$")
_DATETIME_RE = re.compile(
    r"^([+-]?\d{4,})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(\.\d+)?(Z|[+-]\d{2}:\d{2})?$"
)


def _canonical_number(lexical: str) -> tuple[str, str] | None:
    text = lexical.strip()
    if text in ("NaN", "INF", "+INF", "-INF"):
        return ("-INF" if text == "-INF" else "INF" if "INF" in text else "NaN"), XSD_DOUBLE
    try:
        value = Decimal(text)
    except InvalidOperation:
        return None
    if not value.is_finite():
        return None
    if value == value.to_integral_value():
        return str(int(value)), XSD_INTEGER
    norm = value.normalize()
    out = format(norm, "f")
    return out, XSD_DECIMAL


def _offset(tz: str | None) -> timedelta | None:
    if tz is None:
        return None
    if tz == "Z":
        return timedelta(0)
    sign = -1 if tz[0] == "-" else 1
    return sign * timedelta(hours=int(tz[1:3]), minutes=int(tz[4:6]))


def _canonical_datetime(lexical: str) -> str | None:
    m = _DATETIME_RE.match(lexical.strip())
    if not m:
        return None
    year, mo, d, h, mi, s, frac, tz = m.groups()
    frac = (frac or "").rstrip("0").rstrip(".")
    y = int(year)
    off = _offset(tz)
    if off is not None and 1 <= y <= 9999:
        try:
            dt = datetime(y, int(mo), int(d), int(h), int(mi), int(s), tzinfo=timezone(off))
            dt = dt.astimezone(timezone.utc)
        except (ValueError, OverflowError):
            return None
        return f"{dt.year:04d}-{dt.month:02d}-{dt.day:02d}T{dt.hour:02d}:{dt.minute:02d}:{dt.second:02d}{frac}Z"
    suffix = "Z" if off == timedelta(0) else (tz or "")
    ytxt = f"-{abs(y):04d}" if y < 0 else f"{y:04d}"
    return f"{ytxt}-{mo}-{d}T{h}:{mi}:{s}{frac}{suffix}"


def _canonical_date(lexical: str) -> str | None:
    m = _DATE_RE.match(lexical.strip())
    if not m:
        return None
    year, mo, d, tz = m.groups()
    y = int(year)
    ytxt = f"-{abs(y):04d}" if y < 0 else f"{y:04d}"
    if tz in ("+00:00", "-00:00"):
        tz = "Z"
    return f"{ytxt}-{mo}-{d}{tz or ''}"


def normalize_term(t: RdfTerm) -> RdfTerm:
    """Canonical form used for exact-match comparison (idempotent)."""
    if t.kind != "literal":
        return t
    if t.lang:
        return RdfTerm("literal", t.value, None, t.lang.lower())
    dt = t.datatype
    if dt is None or dt == XSD_STRING:
        return RdfTerm("literal", t.value)
    if dt in _NUMERIC_TYPES:
        canon = _canonical_number(t.value)
        if canon is None:
            log.debug("unparseable numeric literal %r^^<%s>; comparing lexically", t.value, dt)
            return t
        return RdfTerm("literal", canon[0], canon[1])
    if dt == XSD_DATETIME:
        canon = _canonical_datetime(t.value)
        return RdfTerm("literal", canon, dt) if canon else t
    if dt == XSD_DATE:
        canon = _canonical_date(t.value)
        return RdfTerm("literal", canon, dt) if canon else t
    return t


def normalize_results(rs: ResultSet) -> ResultSet:
    if rs.kind == "boolean":
        return rs
    rows = tuple({k: normalize_term(v) for k, v in row.items()} for row in rs.rows)
    return ResultSet("bindings", rs.variables, rows)


# -- comparison --------------------------------------------------------------

def _row_tuples(rs: ResultSet) -> list[tuple]:
    return [tuple(row.get(v) for v in rs.variables) for row in rs.rows]


def _has_bnodes(rows: Iterable[tuple]) -> bool:
    return any(t is not None and t.kind == "bnode" for row in rows for t in row)


def _bnode_blind(row: tuple) -> tuple:
    return tuple(RdfTerm("bnode", "") if t is not None and t.kind == "bnode" else t for t in row)


def _consistent(a: tuple, b: tuple, fwd: dict, back: dict) -> list[tuple[str, str]] | None:
    """Extend the bnode bijection so ``a`` matches ``b``; return new pairs or None."""
    added: list[tuple[str, str]] = []
    for x, y in zip(a, b):
        if x is None or y is None:
            if x is not y:
                break
            continue
        if x.kind == "bnode" and y.kind == "bnode":
            fx, by = fwd.get(x.value), back.get(y.value)
            if fx is None and by is None:
                fwd[x.value], back[y.value] = y.value, x.value
                added.append((x.value, y.value))
            elif fx != y.value or by != x.value:
                break
        elif x != y:
            break
    else:
        return added
    for xv, yv in added:
        del fwd[xv], back[yv]
    return None


def _match_rows(gold: list[tuple], cand: list[tuple], ordered: bool) -> bool:
    if len(gold) != len(cand):
        return False
    if not _has_bnodes(gold) and not _has_bnodes(cand):
        return gold == cand if ordered else Counter(gold) == Counter(cand)
    if not ordered and Counter(map(_bnode_blind, gold)) != Counter(map(_bnode_blind, cand)):
        return False
    fwd: dict[str, str] = {}
    back: dict[str, str] = {}
    if ordered:
        for g, c in zip(gold, cand):
            if _consistent(g, c, fwd, back) is None:
                return False
        return True
    used = [False] * len(cand)

    def place(i: int) -> bool:
        if i == len(gold):
            return True
        for j, c in enumerate(cand):
            if used[j]:
                continue
            added = _consistent(gold[i], c, fwd, back)
            if added is None:
                continue
            used[j] = True
            if place(i + 1):
                return True
            used[j] = False
            for xv, yv in added:
                del fwd[xv], back[yv]
        return False

    return place(0)


def _diff_counts(gold: list[tuple], cand: list[tuple]) -> tuple[int, int]:
    g = Counter(map(_bnode_blind, gold))
    c = Counter(map(_bnode_blind, cand))
    return sum((g - c).values()), sum((c - g).values())


def _column_orders(gold: ResultSet, cand: ResultSet) -> Iterable[tuple[int, ...]]:
    n = len(gold.variables)
    if n <= MAX_PERMUTATION_ARITY:
        yield from itertools.permutations(range(n))
        return
    # wide results: same-named columns first, then greedy value-profile overlap
    mapping: dict[int, int] = {}
    cand_index = {v: j for j, v in enumerate(cand.variables)}
    for i, v in enumerate(gold.variables):
        if v in cand_index:
            mapping[i] = cand_index[v]
    free_c = [j for j in range(n) if j not in mapping.values()]
    profiles_g = {i: Counter(r.get(gold.variables[i]) for r in gold.rows) for i in range(n) if i not in mapping}
    profiles_c = {j: Counter(r.get(cand.variables[j]) for r in cand.rows) for j in free_c}
    for i in sorted(profiles_g):
        best = max(free_c, key=lambda j: (sum((profiles_g[i] & profiles_c[j]).values()), -j))
        mapping[i] = best
        free_c.remove(best)
    yield tuple(mapping[i] for i in range(n))


def compare_results(
    gold: ResultSet,
    candidate: ResultSet,
    order_sensitive: bool = False,
    *,
    distinct: bool = False,
) -> ComparisonOutcome:
    """Exact-match comparison; variable names are ignored, values must agree.

    ``distinct`` switches rows from multiset to set semantics.
    """
    if gold.kind == "boolean" or candidate.kind == "boolean":
        equal = gold.kind == candidate.kind and gold.boolean_value == candidate.boolean_value
        return ComparisonOutcome(equal, "boolean", detail="" if equal else "boolean mismatch")
    mode = "ordered" if order_sensitive else "unordered"
    gold = normalize_results(gold)
    candidate = normalize_results(candidate)
    g_rows = _row_tuples(gold)
    c_rows = _row_tuples(candidate)
    if distinct:
        g_rows = list(dict.fromkeys(g_rows))
        c_rows = list(dict.fromkeys(c_rows))
    if len(gold.variables) != len(candidate.variables):
        return ComparisonOutcome(
            False, mode, len(g_rows), len(c_rows),
            detail=f"arity mismatch: {len(gold.variables)} vs {len(candidate.variables)} columns",
        )
    best: tuple[int, int, tuple[int, ...]] | None = None
    for perm in _column_orders(gold, candidate):
        permuted = [tuple(row[j] for j in perm) for row in c_rows]
        if _match_rows(g_rows, permuted, order_sensitive):
            return ComparisonOutcome(True, mode, permutation_used=perm)
        missing, extra = _diff_counts(g_rows, permuted)
        if best is None or missing + extra < best[0] + best[1]:
            best = (missing, extra, perm)
    missing, extra, perm = best if best else (len(g_rows), len(c_rows), ())
    if missing == 0 and extra == 0:
        # same multiset, wrong order or wrong blank-node structure
        return ComparisonOutcome(False, mode, 0, 0, perm, detail="rows differ in order or blank-node structure")
    return ComparisonOutcome(False, mode, missing, extra, perm)


# -- execution ---------------------------------------------------------------

class SparqlClient:
    """SPARQL protocol client with bounded concurrency and retries.

    4xx answers are never retried; timeouts, connection errors and 5xx are
    retried ``max_attempts`` times with exponential backoff.
    """

    def __init__(
        self,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff: float = 0.5,
        max_in_flight: int = 4,
        method: str = "POST",
        session: requests.Session | None = None,
        user_agent: str = "kgbridge/0.1",
    ):
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.method = method.upper()
        self.session = session or requests.Session()
        self.session.headers.update({"Accept": RESULTS_JSON, "User-Agent": user_agent})
        self._limit = max_in_flight
        self._slots: dict[str, threading.BoundedSemaphore] = {}
        self._lock = threading.Lock()

    def _slot(self, endpoint: str) -> threading.BoundedSemaphore:
        with self._lock:
            if endpoint not in self._slots:
                self._slots[endpoint] = threading.BoundedSemaphore(self._limit)
            return self._slots[endpoint]

    def _request(self, query: str, endpoint: str, timeout: float) -> requests.Response:
        if self.method == "GET":
            return self.session.get(endpoint, params={"query": query}, timeout=timeout)
        return self.session.post(endpoint, data={"query": query}, timeout=timeout)

    def execute(self, query: str, endpoint: str, timeout: float | None = None) -> ResultSet:
        timeout = self.timeout if timeout is None else timeout
        last: EndpointError | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slot(endpoint):
                    resp = self._request(query, endpoint, timeout)
            except requests.Timeout:
                last = EndpointTimeout(f"no answer from {endpoint} within {timeout}s")
                continue
            except requests.RequestException as exc:
                last = EndpointError(None, f"cannot reach {endpoint}: {exc}")
                continue
            if resp.status_code >= 500:
                last = EndpointError(resp.status_code, body=resp.text[:2000])
                continue
            if resp.status_code >= 400:
                raise EndpointError(resp.status_code, body=resp.text[:2000])
            try:
                return ResultSet.from_json(resp.json())
            except ValueError as exc:
                raise MalformedResponse(f"response is not SPARQL JSON results: {exc}") from exc
        assert last is not None
        raise last


def execute_query(
    query: str,
    endpoint: str,
    timeout: float = 60.0,
    client: SparqlClient | None = None,
) -> ResultSet:
    return (client or SparqlClient(timeout=timeout)).execute(query, endpoint, timeout)
