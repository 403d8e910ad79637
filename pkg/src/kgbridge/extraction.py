"""Pull an executable query out of raw model output.

The chain is: last complete ``<sparql>...</sparql>`` pair, then the last
fenced code block holding a query keyword, then a keyword scan over the raw
text.  Candidates are sanitized and validated; every failure is logged.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

from .sparql import LexFailure, parse_query, validate_syntax

_TAG_PAIR_RE = re.compile(r"<sparql>(.*?)</sparql>", re.IGNORECASE | re.DOTALL)
_TAG_OPEN_RE = re.compile(r"<sparql>", re.IGNORECASE)
_TAG_CLOSE_RE = re.compile(r"</sparql>", re.IGNORECASE)
_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
_FORM_WORD_RE = re.compile(r"\b(SELECT|ASK|CONSTRUCT|DESCRIBE)\b", re.IGNORECASE)
_MATERIAL_RE = re.compile(r"\b(SELECT|ASK|CONSTRUCT|DESCRIBE|PREFIX)\b", re.IGNORECASE)

# where a query may begin in free text; lower-case prose like "I will select"
# must not anchor, so each keyword needs query-like syntax after it
_ANCHOR_RE = re.compile(
    r"""\b(?:
        PREFIX\s+[A-Za-z][\w\-.]*:?\s*<
      | PREFIX\s+:\s*<
      | SELECT\s+(?:DISTINCT\b|REDUCED\b|[?$*(])
      | ASK\s*(?:WHERE\b|\{)
      | CONSTRUCT\s*(?:WHERE\b|\{)
      | DESCRIBE\s+(?:[?$<*]|[A-Za-z][\w\-]*:)
    )""",
    re.IGNORECASE | re.VERBOSE,
)
_TRAILING_MODIFIER_RE = re.compile(
    r"""\A(?:\s*(?:
        GROUP\s+BY\s+(?:\?\w+|\([^()]*(?:\([^()]*\)[^()]*)*\))(?:\s+(?:\?\w+|\([^()]*\)))*
      | HAVING\s*\([^()]*(?:\([^()]*\)[^()]*)*\)
      | ORDER\s+BY(?:\s+(?:(?:ASC|DESC)\s*\([^()]*(?:\([^()]*\)[^()]*)*\)|\?\w+|[\w:]+\([^()]*\)))+
      | LIMIT\s+\d+
      | OFFSET\s+\d+
    ))+""",
    re.IGNORECASE | re.VERBOSE,
)

_STRAY_TAG_RE = re.compile(r"</?(?:think|sparql|query|answer|code|pre)\b[^<>]*>", re.IGNORECASE)
_FENCE_MARK_RE = re.compile(r"```[\w\-]*")

METHODS = ("sparql_tag", "code_fence", "keyword_scan")


@dataclass(frozen=True)
class ExtractionResult:
    status: str  # extracted | failed
    query_text: str | None = None
    method: str | None = None
    failure_reason: str | None = None
    note: str | None = None

    def __post_init__(self):
        if (self.status == "extracted") != (self.query_text is not None and self.method is not None):
            raise ValueError("extracted results carry both query text and method")

    @property
    def ok(self) -> bool:
        return self.status == "extracted"


@dataclass(frozen=True)
class FailureLogEntry:
    run_id: str
    raw_digest: str
    stage: str  # extraction | validation
    reason: str


def _has_material(text: str) -> bool:
    return bool(_MATERIAL_RE.search(text))


def _scan_segment(raw: str) -> str | None:
    m = _ANCHOR_RE.search(raw)
    if not m:
        return None
    start = m.start()
    depth = 0
    end = None
    i = start
    in_str: str | None = None
    while i < len(raw):
        ch = raw[i]
        if in_str:
            if ch == "\\":
                i += 2
                continue
            if ch == in_str or ch == "\n":
                in_str = None
        elif ch in "\"'":
            in_str = ch
        elif ch == "<":
            close = raw.find(">", i)
            if close > 0 and not re.search(r"\s", raw[i:close]):
                i = close + 1
                continue
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                end = i + 1
                break
        i += 1
    if end is None:
        # never closed: keep everything, validation will reject it
        return raw[start:].strip()
    tail = _TRAILING_MODIFIER_RE.match(raw[end:])
    if tail:
        end += tail.end()
    return raw[start:end].strip()


def extract_candidate(raw: str) -> ExtractionResult:
    if not isinstance(raw, str):
        raw = str(raw)
    pairs = [m.group(1) for m in _TAG_PAIR_RE.finditer(raw)]
    for body in reversed(pairs):
        if body.strip() and _has_material(body):
            return ExtractionResult("extracted", body.strip(), "sparql_tag")
    opens = list(_TAG_OPEN_RE.finditer(raw))
    if opens:
        last_open = opens[-1]
        closes = [c for c in _TAG_CLOSE_RE.finditer(raw) if c.start() > last_open.start()]
        body = raw[last_open.end():]
        if not closes and body.strip() and _has_material(body):
            return ExtractionResult("extracted", body.strip(), "sparql_tag", note="unclosed <sparql> tag")
    for body in reversed(_FENCE_RE.findall(raw)):
        if _FORM_WORD_RE.search(body):
            return ExtractionResult("extracted", body.strip(), "code_fence")
    segment = _scan_segment(raw)
    if segment:
        return ExtractionResult("extracted", segment, "keyword_scan")
    return ExtractionResult("failed", failure_reason="no_query_material")


def _sanitize_once(text: str) -> str:
    out: list[str] = []
    pending_space = False
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            pending_space = True
            i += 1
            continue
        if ch == "<":
            tag = _STRAY_TAG_RE.match(text, i)
            if tag:
                pending_space = True
                i = tag.end()
                continue
        if ch == "`" and text.startswith("```", i):
            i = _FENCE_MARK_RE.match(text, i).end()
            pending_space = True
            continue
        if ch == "#":
            nl = text.find("\n", i)
            i = n if nl < 0 else nl
            pending_space = True
            continue
        if pending_space and out:
            out.append(" ")
        pending_space = False
        if ch in "\"'":
            j = _literal_end(text, i)
            out.append(text[i:j])
            i = j
            continue
        if ch == "<":
            close = text.find(">", i)
            if close > 0 and not any(c.isspace() for c in text[i + 1:close]) and "<" not in text[i + 1:close]:
                out.append(text[i:close + 1])
                i = close + 1
                continue
        out.append(ch)
        i += 1
    return "".join(out).strip()


def _literal_end(text: str, i: int) -> int:
    q = text[i]
    triple = text.startswith(q * 3, i)
    delim = q * 3 if triple else q
    j = i + len(delim)
    while j < len(text):
        if text[j] == "\\":
            j += 2
            continue
        if text.startswith(delim, j):
            return j + len(delim)
        if not triple and text[j] == "\n":
            return j
        j += 1
    return len(text)


def sanitize(query_text: str) -> str:
    """Drop stray tags, fences and comments; collapse whitespace outside literals."""
    current = query_text
    for _ in range(len(query_text) + 2):
        nxt = _sanitize_once(current)
        if nxt == current:
            return nxt
        current = nxt
    return current


def validate_candidate(query_text: str) -> str | None:
    """Return a failure reason, or None when the candidate may be executed."""
    if not query_text or not _FORM_WORD_RE.search(query_text):
        return "missing_query_form"
    try:
        doc = parse_query(query_text)
    except LexFailure as exc:
        msg = str(exc)
        if msg.startswith("no query form"):
            return "missing_query_form"
        return f"bad_syntax: {msg}"
    if doc.form in ("SELECT", "ASK") and not doc.has_where_group:
        return "missing_where"
    if doc.form == "SELECT" and not doc.projected_vars and not doc.select_all:
        return "missing_projection"
    findings = validate_syntax(query_text)
    if findings:
        return "bad_syntax: " + "; ".join(findings)
    return None


def raw_digest(raw: str) -> str:
    return hashlib.sha256(raw.encode("utf-8", "surrogatepass")).hexdigest()


class FailureLog:
    """Append-only JSON-lines log of extraction and validation failures."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.entries: list[FailureLogEntry] = []
        self._lock = threading.Lock()

    def add(self, entry: FailureLogEntry) -> None:
        with self._lock:
            self.entries.append(entry)
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(asdict(entry), sort_keys=True) + "\n")

    @staticmethod
    def read(path: str | Path) -> list[FailureLogEntry]:
        p = Path(path)
        if not p.exists():
            return []
        return [FailureLogEntry(**json.loads(line)) for line in p.read_text(encoding="utf-8").splitlines() if line.strip()]


@dataclass(frozen=True)
class ProcessedOutput:
    extraction: ExtractionResult
    query: str | None  # sanitized, validated candidate
    validation_error: str | None

    @property
    def ok(self) -> bool:
        return self.query is not None


def process_output(run_id: str, raw: str, log: FailureLog | None = None) -> ProcessedOutput:
    """extract -> sanitize -> validate, logging exactly one entry per failure."""
    result = extract_candidate(raw)
    if not result.ok:
        if log is not None:
            log.add(FailureLogEntry(run_id, raw_digest(raw), "extraction", result.failure_reason or "unknown"))
        return ProcessedOutput(result, None, None)
    cleaned = sanitize(result.query_text)
    reason = validate_candidate(cleaned)
    if reason is not None:
        if log is not None:
            log.add(FailureLogEntry(run_id, raw_digest(raw), "validation", reason))
        return ProcessedOutput(result, None, reason)
    return ProcessedOutput(result, cleaned, None)


def load_review_overrides(path: str | Path | None) -> dict[str, dict]:
    """Reviewer overrides keyed by run id: ``{"run_id": ..., "query": ... | null, "note": ...}``.

    A ``null`` query marks the run as rejected at review.
    """
    if not path or not Path(path).exists():
        return {}
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        if "run_id" not in rec:
            raise ValueError(f"{path}:{n}: override without run_id")
        out[rec["run_id"]] = rec
    return out
