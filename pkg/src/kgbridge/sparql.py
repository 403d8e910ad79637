"""Token-level SPARQL model.

This is not a SPARQL 1.1 grammar.  It lexes the query, checks bracket
balance, detects the query form, collects prefixes and projected variables,
and walks basic graph patterns far enough to know which slot (subject,
predicate, object) every IRI occupies.  That is all the alignment and error
screening code needs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .profiles import RDF_TYPE, KgProfile

FORMS = ("SELECT", "ASK", "CONSTRUCT", "DESCRIBE")

DEFAULT_PREFIXES = {
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "rdfs": "http://www.w3.org/2000/01/rdf-schema#",
    "owl": "http://www.w3.org/2002/07/owl#",
    "xsd": "http://www.w3.org/2001/XMLSchema#",
}

# keywords recorded in QueryDoc.features when present anywhere in the query
FEATURE_KEYWORDS = frozenset({
    "FILTER", "OPTIONAL", "UNION", "MINUS", "HAVING", "LIMIT", "OFFSET",
    "DISTINCT", "COUNT", "SUM", "AVG", "MIN", "MAX", "EXISTS", "VALUES",
    "BIND", "SERVICE", "GRAPH",
})

_MODIFIER_KEYWORDS = {"GROUP", "BY", "HAVING", "ORDER", "ASC", "DESC", "LIMIT", "OFFSET", "VALUES", "UNDEF"}

_PN_CHAR = r"(?:[\w\-:%]|\\[^\s])"
_PN_CHAR_DOT = r"(?:[\w\-.:%]|\\[^\s])"

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\s]*>)
  | (?P<string>'''(?:[^'\\]|\\.|'(?!''))*'''|\"\"\"(?:[^"\\]|\\.|"(?!""))*\"\"\"
        |'(?:[^'\\\n]|\\.)*'|"(?:[^"\\\n]|\\.)*")
  | (?P<var>[?$]\w+)
  | (?P<bnode>_:[\w\-.]*\w|_:\w)
  | (?P<pname>(?:[A-Za-z](?:[\w\-.]*[\w\-])?)?:(?:"""
    + _PN_CHAR + "(?:" + _PN_CHAR_DOT + "*" + _PN_CHAR + r""")?)?)
  | (?P<number>\d*\.\d+(?:[eE][+-]?\d+)?|\d+(?:\.\d*)?[eE][+-]?\d+|\d+)
  | (?P<lang>@[A-Za-z]+(?:-[A-Za-z0-9]+)*)
  | (?P<dtype>\^\^)
  | (?P<op>&&|\|\||!=|<=|>=)
  | (?P<punct>[{}()\[\].,;*/|^!+\-=<>?])
  | (?P<name>[A-Za-z_]\w*)
  | (?P<other>.)
    """,
    re.VERBOSE | re.DOTALL,
)

_PN_ESCAPE_RE = re.compile(r"\\(.)")

_OPEN = {"{": "}", "(": ")", "[": "]"}
_CLOSE = {v: k for k, v in _OPEN.items()}


class QuerySyntaxError(ValueError):
    pass


class LexFailure(QuerySyntaxError):
    """The text is not a query this model can read (no form, unbalanced, malformed)."""


class UnknownPrefix(QuerySyntaxError):
    def __init__(self, label: str):
        self.label = label
        super().__init__(f"undeclared prefix {label}:")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    start: int
    end: int

    @property
    def upper(self) -> str:
        return self.text.upper() if self.kind == "name" else ""


@dataclass(frozen=True)
class TermOccurrence:
    iri: str
    role: str  # entity | property | class | unknown
    positions: tuple[tuple[int, str], ...]  # (triple index or -1, slot)


@dataclass(frozen=True)
class Triple:
    index: int
    subject: str
    predicates: tuple[str, ...]  # several when the predicate is a property path
    object: str


@dataclass(frozen=True)
class QueryDoc:
    raw_text: str
    form: str
    prefixes: Mapping[str, str]
    terms: tuple[TermOccurrence, ...]
    projected_vars: tuple[str, ...]
    order_sensitive: bool
    has_limit: bool
    select_all: bool = False
    has_where_group: bool = True
    triples: tuple[Triple, ...] = ()
    features: frozenset[str] = field(default_factory=frozenset)

    def iris(self) -> list[str]:
        return [t.iri for t in self.terms]


def tokenize(text: str, *, keep_trivia: bool = False) -> list[Token]:
    out = []
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if not keep_trivia and kind in ("ws", "comment"):
            continue
        out.append(Token(kind, m.group(), m.start(), m.end()))
    return out


def _check_balance(tokens: list[Token]) -> None:
    stack: list[Token] = []
    for tok in tokens:
        if tok.kind != "punct":
            continue
        if tok.text in _OPEN:
            stack.append(tok)
        elif tok.text in _CLOSE:
            if not stack or stack[-1].text != _CLOSE[tok.text]:
                raise LexFailure(f"unbalanced group: unexpected {tok.text!r} at offset {tok.start}")
            stack.pop()
    if stack:
        raise LexFailure(f"unbalanced group: {stack[-1].text!r} at offset {stack[-1].start} is never closed")


def _unescape_local(local: str) -> str:
    return _PN_ESCAPE_RE.sub(r"\1", local)


def resolve_pname(text: str, prefixes: Mapping[str, str]) -> str:
    label, _, local = text.partition(":")
    if label not in prefixes:
        raise UnknownPrefix(label)
    return prefixes[label] + _unescape_local(local)


class _Walker:
    """Recursive walk over group graph patterns recording IRI slots."""

    def __init__(self, tokens: list[Token], prefixes: Mapping[str, str]):
        self.toks = tokens
        self.prefixes = prefixes
        self.triples: list[Triple] = []
        # token index -> list of (triple index, slot)
        self.positions: dict[int, list[tuple[int, str]]] = {}

    # -- helpers ---------------------------------------------------------
    def tok(self, i: int) -> Token:
        if i >= len(self.toks):
            raise LexFailure("query ends inside a graph pattern")
        return self.toks[i]

    def is_punct(self, i: int, chars: str) -> bool:
        return i < len(self.toks) and self.toks[i].kind == "punct" and self.toks[i].text in chars

    def is_kw(self, i: int, *words: str) -> bool:
        return i < len(self.toks) and self.toks[i].upper in words

    def term_text(self, i: int) -> str:
        t = self.toks[i]
        if t.kind == "iri":
            return t.text
        if t.kind == "pname":
            try:
                return "<" + resolve_pname(t.text, self.prefixes) + ">"
            except UnknownPrefix:
                return t.text
        return t.text

    def mark(self, i: int, triple: int, slot: str) -> None:
        self.positions.setdefault(i, []).append((triple, slot))

    def skip_balanced(self, i: int) -> int:
        """Skip a bracketed expression starting at ``i``; nested groups are walked."""
        opener = self.tok(i).text
        closer = _OPEN[opener]
        depth = 0
        while True:
            t = self.tok(i)
            if t.kind == "punct" and t.text == "{" and opener != "{":
                i = self.group(i)
                continue
            if t.kind == "punct" and t.text == opener:
                depth += 1
            elif t.kind == "punct" and t.text == closer:
                depth -= 1
                if depth == 0:
                    return i + 1
            i += 1

    # -- grammar ---------------------------------------------------------
    def group(self, i: int) -> int:
        if not self.is_punct(i, "{"):
            raise LexFailure(f"expected '{{' at offset {self.tok(i).start}")
        i += 1
        while not self.is_punct(i, "}"):
            t = self.tok(i)
            kw = t.upper
            if t.kind == "punct" and t.text == "{":
                i = self.group(i)
            elif t.kind == "punct" and t.text == ".":
                i += 1
            elif kw in ("OPTIONAL", "MINUS", "UNION"):
                i += 1
            elif kw == "GRAPH":
                i += 2
            elif kw == "SERVICE":
                i += 1
                if self.is_kw(i, "SILENT"):
                    i += 1
                i += 1
            elif kw == "FILTER":
                i = self.constraint(i + 1)
            elif kw == "BIND":
                if not self.is_punct(i + 1, "("):
                    raise LexFailure(f"BIND without '(' at offset {t.start}")
                i = self.skip_balanced(i + 1)
            elif kw == "VALUES":
                i = self.values(i + 1)
            elif kw == "SELECT":
                i = self.subselect(i)
            else:
                i = self.triples_block(i)
        return i + 1

    def constraint(self, i: int) -> int:
        t = self.tok(i)
        if t.upper == "NOT":
            i += 1
            t = self.tok(i)
        if t.upper == "EXISTS":
            return self.group(i + 1)
        if t.kind == "punct" and t.text == "(":
            return self.skip_balanced(i)
        if t.kind in ("name", "pname", "iri") and self.is_punct(i + 1, "("):
            return self.skip_balanced(i + 1)
        raise LexFailure(f"malformed FILTER at offset {t.start}")

    def values(self, i: int) -> int:
        if self.is_punct(i, "("):
            i = self.skip_balanced(i)
        elif self.tok(i).kind == "var":
            i += 1
        else:
            raise LexFailure(f"malformed VALUES at offset {self.tok(i).start}")
        if not self.is_punct(i, "{"):
            raise LexFailure(f"VALUES without data block at offset {self.tok(i).start}")
        depth = 0
        while True:
            t = self.tok(i)
            if t.kind == "punct" and t.text == "{":
                depth += 1
            elif t.kind == "punct" and t.text == "}":
                depth -= 1
                if depth == 0:
                    return i + 1
            i += 1

    def subselect(self, i: int) -> int:
        while not self.is_punct(i, "{"):
            if self.is_punct(i, "("):
                i = self.skip_balanced(i)
            else:
                i += 1
        i = self.group(i)
        # solution modifiers up to the enclosing '}'
        while not self.is_punct(i, "}"):
            if self.is_punct(i, "(") or self.is_punct(i, "{"):
                i = self.skip_balanced(i) if self.tok(i).text == "(" else self.values_block(i)
            else:
                i += 1
        return i

    def values_block(self, i: int) -> int:
        depth = 0
        while True:
            t = self.tok(i)
            if t.kind == "punct" and t.text == "{":
                depth += 1
            elif t.kind == "punct" and t.text == "}":
                depth -= 1
                if depth == 0:
                    return i + 1
            i += 1

    def triples_block(self, i: int) -> int:
        subj, i, subj_marks = self.node(i)
        if i >= len(self.toks) or self.is_punct(i, ".}"):
            if subj.startswith("_:anon"):
                return i
            where = self.toks[min(i, len(self.toks) - 1)].start
            raise LexFailure(f"incomplete triple pattern at offset {where}")
        return self.property_list(i, subj, subj_marks, closers=".}")

    def node(self, i: int) -> tuple[str, int, list[int]]:
        """Parse a subject/object node; also return the IRI token indices in it."""
        t = self.tok(i)
        if t.kind == "punct" and t.text == "[":
            name = f"_:anon{t.start}"
            i += 1
            if self.is_punct(i, "]"):
                return name, i + 1, []
            i = self.property_list(i, name, [], closers="]")
            if not self.is_punct(i, "]"):
                raise LexFailure(f"expected ']' at offset {self.tok(i).start}")
            return name, i + 1, []
        if t.kind == "punct" and t.text == "(":
            name = f"_:list{t.start}"
            i += 1
            while not self.is_punct(i, ")"):
                _, i, marks = self.node(i)
                for m in marks:
                    self.mark(m, -1, "object")
            return name, i + 1, []
        if t.kind in ("iri", "pname"):
            return self.term_text(i), i + 1, [i]
        if t.kind in ("var", "bnode", "number"):
            return t.text, i + 1, []
        if t.kind == "punct" and t.text in "+-" and i + 1 < len(self.toks) and self.toks[i + 1].kind == "number":
            return t.text + self.toks[i + 1].text, i + 2, []
        if t.kind == "name" and t.upper in ("TRUE", "FALSE"):
            return t.text.lower(), i + 1, []
        if t.kind == "string":
            text = t.text
            marks = []
            i += 1
            if i < len(self.toks) and self.toks[i].kind == "lang":
                text += self.toks[i].text
                i += 1
            elif i < len(self.toks) and self.toks[i].kind == "dtype":
                i += 1
                dt = self.tok(i)
                if dt.kind not in ("iri", "pname"):
                    raise LexFailure(f"expected datatype IRI at offset {dt.start}")
                marks.append(i)
                text += "^^" + self.term_text(i)
                i += 1
            return text, i, marks
        raise LexFailure(f"malformed triple pattern near {t.text!r} at offset {t.start}")

    def property_list(self, i: int, subj: str, subj_marks: list[int], closers: str) -> int:
        while True:
            preds, pred_marks, i = self.verb(i)
            while True:
                index = len(self.triples)
                for m in subj_marks:
                    self.mark(m, index, "subject")
                for m in pred_marks:
                    self.mark(m, index, "predicate")
                # reserve the index before descending into nested [ ... ] objects
                self.triples.append(None)
                obj, i, obj_marks = self.node(i)
                for m in obj_marks:
                    self.mark(m, index, "object")
                self.triples[index] = Triple(index, subj, tuple(preds), obj)
                if self.is_punct(i, ","):
                    i += 1
                    continue
                break
            if self.is_punct(i, ";"):
                while self.is_punct(i, ";"):
                    i += 1
                if i >= len(self.toks) or self.is_punct(i, closers):
                    return i
                continue
            return i

    def verb(self, i: int) -> tuple[list[str], list[int], int]:
        t = self.tok(i)
        if t.kind == "var":
            return [t.text], [], i + 1
        preds: list[str] = []
        toks: list[int] = []
        i = self.path(i, preds, toks)
        if not preds and not toks:
            raise LexFailure(f"expected a predicate at offset {t.start}")
        return preds, toks, i

    def path(self, i: int, preds: list[str], toks: list[int]) -> int:
        while True:
            while self.is_punct(i, "^"):
                i += 1
            t = self.tok(i)
            if t.kind == "punct" and t.text == "(":
                i = self.path(i + 1, preds, toks)
                if not self.is_punct(i, ")"):
                    raise LexFailure(f"unterminated path group at offset {t.start}")
                i += 1
            elif t.kind == "punct" and t.text == "!":
                i += 1
                if self.is_punct(i, "("):
                    j = i + 1
                    while not self.is_punct(j, ")"):
                        if self.toks[j].kind in ("iri", "pname"):
                            preds.append(self.term_text(j))
                            toks.append(j)
                        j += 1
                    i = j + 1
                else:
                    continue
            elif t.kind in ("iri", "pname"):
                preds.append(self.term_text(i))
                toks.append(i)
                i += 1
            elif t.kind == "name" and t.text == "a":
                preds.append(f"<{RDF_TYPE}>")
                i += 1
            else:
                raise LexFailure(f"expected a predicate near {t.text!r} at offset {t.start}")
            while self.is_punct(i, "*+?"):
                i += 1
            if self.is_punct(i, "/|"):
                i += 1
                continue
            return i


def _top_level_form(tokens: list[Token]) -> int:
    depth = 0
    for i, t in enumerate(tokens):
        if t.kind == "punct" and t.text in _OPEN:
            depth += 1
        elif t.kind == "punct" and t.text in _CLOSE:
            depth -= 1
        elif depth == 0 and t.upper in FORMS:
            return i
    return -1


def _projection(tokens: list[Token], i: int) -> tuple[list[str], bool, int]:
    """Read a SELECT clause starting after the keyword; return index of body start."""
    names: list[str] = []
    star = False
    while i < len(tokens):
        t = tokens[i]
        if t.upper in ("DISTINCT", "REDUCED"):
            i += 1
        elif t.kind == "var":
            names.append(t.text[1:])
            i += 1
        elif t.kind == "punct" and t.text == "*":
            star = True
            i += 1
        elif t.kind == "punct" and t.text == "(":
            depth, j, alias = 0, i, None
            while j < len(tokens):
                tj = tokens[j]
                if tj.kind == "punct" and tj.text == "(":
                    depth += 1
                elif tj.kind == "punct" and tj.text == ")":
                    depth -= 1
                    if depth == 0:
                        break
                elif depth == 1 and tj.upper == "AS" and j + 1 < len(tokens) and tokens[j + 1].kind == "var":
                    alias = tokens[j + 1].text[1:]
                j += 1
            if alias:
                names.append(alias)
            i = j + 1
        else:
            break
    return names, star, i


def _features(tokens: list[Token]) -> frozenset[str]:
    found = set()
    for i, t in enumerate(tokens):
        u = t.upper
        if u in FEATURE_KEYWORDS:
            found.add(u)
        elif u in ("ORDER", "GROUP") and i + 1 < len(tokens) and tokens[i + 1].upper == "BY":
            found.add(f"{u} BY")
    return frozenset(found)


def _check_modifiers(tokens: list[Token], i: int) -> tuple[bool, bool]:
    """Validate the solution-modifier tail; return (order_by, limit)."""
    order_by = has_limit = False
    while i < len(tokens):
        t = tokens[i]
        u = t.upper
        if t.kind == "punct" and t.text in "({":
            closer = _OPEN[t.text]
            depth = 0
            while i < len(tokens):
                tt = tokens[i]
                if tt.kind == "punct" and tt.text == t.text:
                    depth += 1
                elif tt.kind == "punct" and tt.text == closer:
                    depth -= 1
                    if depth == 0:
                        break
                i += 1
            i += 1
            continue
        if u == "ORDER" and i + 1 < len(tokens) and tokens[i + 1].upper == "BY":
            order_by = True
        elif u == "LIMIT":
            has_limit = True
        if u in _MODIFIER_KEYWORDS or t.kind in ("var", "number"):
            i += 1
        elif t.kind in ("name", "pname", "iri") and i + 1 < len(tokens) and tokens[i + 1].text == "(":
            i += 1
        else:
            raise LexFailure(f"unexpected content after query near {t.text!r} at offset {t.start}")
    return order_by, has_limit


def parse_query(
    text: str,
    profile: KgProfile | None = None,
    *,
    extra_prefixes: Mapping[str, str] | None = None,
) -> QueryDoc:
    """Lex ``text`` into a :class:`QueryDoc`.

    Known prefixes are the RDF defaults, then ``profile.prefixes``, then
    ``extra_prefixes``, then the query's own declarations (later wins).
    Terms come back with ``role="unknown"``; see :func:`extract_terms`.
    """
    if not text or not text.strip():
        raise LexFailure("empty query")
    tokens = tokenize(text)
    _check_balance(tokens)

    prefixes = dict(DEFAULT_PREFIXES)
    if profile is not None:
        prefixes.update(profile.prefixes)
    if extra_prefixes:
        prefixes.update(extra_prefixes)

    form_at = _top_level_form(tokens)
    if form_at < 0:
        raise LexFailure("no query form keyword (SELECT, ASK, CONSTRUCT, DESCRIBE)")

    declared: set[int] = set()
    i = 0
    while i < form_at:
        t = tokens[i]
        if t.upper == "PREFIX" and i + 2 < len(tokens) and tokens[i + 1].kind == "pname" \
                and tokens[i + 1].text.endswith(":") and tokens[i + 2].kind == "iri":
            prefixes[tokens[i + 1].text[:-1]] = tokens[i + 2].text[1:-1]
            declared.update((i + 1, i + 2))
            i += 3
        elif t.upper == "BASE" and i + 1 < len(tokens) and tokens[i + 1].kind == "iri":
            declared.add(i + 1)
            i += 2
        else:
            raise LexFailure(f"unexpected content before query form near {t.text!r} at offset {t.start}")

    form = tokens[form_at].upper
    walker = _Walker(tokens, prefixes)
    projected: list[str] = []
    star = False
    i = form_at + 1
    if form == "SELECT":
        projected, star, i = _projection(tokens, i)
    elif form == "CONSTRUCT" and walker.is_punct(i, "{"):
        i = walker.group(i)
    elif form == "DESCRIBE":
        while i < len(tokens) and not (tokens[i].upper == "WHERE" or walker.is_punct(i, "{")):
            if tokens[i].upper in ("FROM", "NAMED", "ORDER", "LIMIT", "OFFSET"):
                break
            i += 1

    while walker.is_kw(i, "FROM"):
        i += 1
        if walker.is_kw(i, "NAMED"):
            i += 1
        i += 1

    has_group = False
    if walker.is_kw(i, "WHERE"):
        i += 1
        if not walker.is_punct(i, "{"):
            raise LexFailure("WHERE without a group pattern")
    if walker.is_punct(i, "{"):
        i = walker.group(i)
        has_group = True
    order_by, has_limit = _check_modifiers(tokens, i)

    terms = _collect_terms(tokens, walker, prefixes, declared)
    return QueryDoc(
        raw_text=text,
        form=form,
        prefixes=prefixes,
        terms=tuple(terms),
        projected_vars=tuple(projected) if form == "SELECT" else (),
        order_sensitive=order_by,
        has_limit=has_limit,
        select_all=star,
        has_where_group=has_group,
        triples=tuple(walker.triples),
        features=_features(tokens),
    )


def _collect_terms(
    tokens: list[Token], walker: _Walker, prefixes: Mapping[str, str], skip: set[int]
) -> list[TermOccurrence]:
    order: list[str] = []
    positions: dict[str, list[tuple[int, str]]] = {}
    for i, t in enumerate(tokens):
        if t.kind not in ("iri", "pname") or i in skip:
            continue
        if t.kind == "iri":
            iri = t.text[1:-1]
        else:
            try:
                iri = resolve_pname(t.text, prefixes)
            except UnknownPrefix:
                continue
        if iri not in positions:
            order.append(iri)
            positions[iri] = []
        positions[iri].extend(walker.positions.get(i) or [(-1, "object")])
    return [TermOccurrence(iri, "unknown", tuple(dict.fromkeys(positions[iri]))) for iri in order]


def expand_prefixes(doc: QueryDoc) -> QueryDoc:
    """Rewrite prefixed names as ``<absolute IRIs>`` and drop PREFIX lines."""
    text = doc.raw_text
    toks = tokenize(text, keep_trivia=True)
    out: list[str] = []
    i = 0
    while i < len(toks):
        t = toks[i]
        if t.kind == "name" and t.upper == "PREFIX":
            j = i + 1
            seen = []
            while j < len(toks) and len(seen) < 2:
                if toks[j].kind not in ("ws", "comment"):
                    seen.append(toks[j])
                j += 1
            if len(seen) == 2 and seen[0].kind == "pname" and seen[1].kind == "iri":
                while j < len(toks) and toks[j].kind == "ws":
                    j += 1
                i = j
                continue
        if t.kind == "pname":
            out.append("<" + resolve_pname(t.text, doc.prefixes) + ">")
        else:
            out.append(t.text)
        i += 1
    new_text = "".join(out)
    if new_text == text:
        return doc
    expanded = parse_query(new_text, extra_prefixes=doc.prefixes)
    return replace(expanded, prefixes=doc.prefixes)


def _type_predicates(profile: KgProfile | None) -> set[str]:
    preds = {f"<{RDF_TYPE}>"}
    if profile is not None:
        preds.add(f"<{profile.type_property}>")
    return preds


def type_object_triples(doc: QueryDoc, profile: KgProfile | None) -> set[int]:
    types = _type_predicates(profile)
    return {t.index for t in doc.triples if types.intersection(t.predicates)}


def assign_role(
    candidates: tuple[str, ...],
    positions: Iterable[tuple[int, str]],
    type_triples: set[int],
) -> str:
    """Namespace first, slot as tiebreaker.

    Each position suggests a role (predicate -> property, object of a typing
    triple -> class, anything else -> entity).  Suggestions that agree with
    the namespace candidates decide; otherwise a term only ever seen as a
    predicate is ``unknown`` and anything else falls back to its namespace.
    """
    if not candidates:
        return "unknown"
    positions = list(positions)
    suggested = set()
    for triple, slot in positions:
        if slot == "predicate":
            suggested.add("property")
        elif slot == "object" and triple in type_triples:
            suggested.add("class")
        else:
            suggested.add("entity")
    agree = [r for r in ("property", "class", "entity") if r in suggested and r in candidates]
    if agree:
        return agree[0]
    if all(slot == "predicate" for _, slot in positions):
        return "unknown"
    for r in ("class", "entity", "property"):
        if r in candidates:
            return r
    return "unknown"


def extract_terms(doc: QueryDoc, profile: KgProfile) -> list[TermOccurrence]:
    """One occurrence per unique IRI, roles assigned from ``profile``."""
    types = type_object_triples(doc, profile)
    return [
        replace(t, role=assign_role(profile.candidate_roles(t.iri), t.positions, types))
        for t in doc.terms
    ]


def validate_syntax(text: str) -> list[str]:
    """Return syntax findings; an empty list means the query looks well formed."""
    try:
        doc = parse_query(text)
    except LexFailure as exc:
        msg = str(exc)
        if msg.startswith("no query form"):
            return ["no query form"]
        return [msg]
    findings = []
    for tok in tokenize(text):
        if tok.kind == "other":
            findings.append(f"unexpected character {tok.text!r} at offset {tok.start}")
            break
    if doc.form in ("SELECT", "ASK") and not doc.has_where_group:
        findings.append("missing WHERE group")
    return findings


def is_order_sensitive(doc: QueryDoc) -> bool:
    return doc.order_sensitive
