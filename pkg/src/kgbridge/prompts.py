"""Render translation prompts for the five prompting strategies.

Templates are plain text files using ``string.Template`` placeholders
(``$nlq``, ``$sparql_query_kg1``, ``$kg1_name``, ``$kg2_name``, ``$er2``,
``$instruction``, ``$exemplars``, ``$scaffold``).  Every value except
``$exemplars`` and ``$scaffold`` is substituted already JSON-encoded.  The
built-in set lives in ``data/templates``; a directory holding
``<strategy>.txt`` files overrides it per strategy.

``spec_digest`` is the SHA-256 of the canonical JSON form of the spec
followed by a newline and the rendered text.
"""

from __future__ import annotations

import enum
import hashlib
import json
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

TAG_INSTRUCTION = (
    "Given the information above, produce a SPARQL query for KG2. In your answer please "
    "highlight the final, complete SPARQL query within the tags '<sparql>' and '</sparql>'."
)
FEW_SHOT_LEAD = "Here are 4 examples:"
COT_LEAD = (
    "Before giving the query, explain step by step how you build it: which parts of the KG1 "
    "query carry over, and why you pick each KG2 entity and property given the KG1 query and er2."
)
COT_TAG_STEPS = (
    ("entity mapping", "list the entities and relations the question mentions and find their KG2 equivalents in er2."),
    ("source analysis", "describe the structure of the KG1 query: form, triple patterns, filters, ordering, aggregation."),
    ("property equivalents", "choose the KG2 properties and classes that stand in for the KG1 ones, using er2."),
    ("construction", "write the KG2 query so that it keeps the logical structure of the KG1 query."),
    ("validation", "check the query against how KG2 models its data (identifiers, type property, prefixes)."),
)

EXEMPLAR_COUNT = 4


class Strategy(str, enum.Enum):
    ZERO_SHOT = "zero_shot"
    ZERO_SHOT_ER = "zero_shot_er"
    FEW_SHOT_ER = "few_shot_er"
    COT = "cot"
    COT_TAGS = "cot_tags"

    @classmethod
    def parse(cls, value: "str | Strategy") -> "Strategy":
        if isinstance(value, Strategy):
            return value
        key = value.strip().lower().replace("-", "_")
        for s in cls:
            if key in (s.value, s.name.lower()):
                return s
        raise ValueError(f"unknown strategy {value!r}")

    @property
    def uses_er2(self) -> bool:
        return self is not Strategy.ZERO_SHOT


@dataclass(frozen=True)
class PromptSpec:
    nlq: str
    sparql_query_kg1: str
    kg1_name: str
    kg2_name: str
    strategy: Strategy
    er2: Sequence[Any] | None = None
    exemplars: Sequence[Any] | None = None
    instruction: str | None = None  # None: the strategy default

    def canonical(self) -> dict:
        return {
            "nlq": self.nlq,
            "sparql_query_kg1": self.sparql_query_kg1,
            "kg1_name": self.kg1_name,
            "kg2_name": self.kg2_name,
            "strategy": Strategy.parse(self.strategy).value,
            "er2": None if self.er2 is None else [list(e) for e in er2_pairs(self.er2)],
            "exemplars": None if self.exemplars is None else [_exemplar_dict(e) for e in self.exemplars],
            "instruction": self.instruction,
        }


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    strategy: Strategy
    spec_digest: str
    system: str | None = None


def er2_pairs(er2: Iterable[Any]) -> list[tuple[str, tuple[str, ...]]]:
    """Normalise er2 entries to ``(source_iri, target_iris)`` pairs.

    Accepts mapping objects with ``source_id``/``target_ids`` attributes,
    dicts keyed ``<kg>_id`` and ``<kg>_ids`` (a singular ``<kg>_id`` holding
    a list is read as the targets), and plain pairs.
    """
    out = []
    for entry in er2:
        if hasattr(entry, "source_id"):
            src, tgts = entry.source_id, entry.target_ids
        elif isinstance(entry, dict):
            src = entry.get("source_id")
            tgts = entry.get("target_ids")
            for k, v in entry.items():
                if tgts is None and (k.endswith("_ids") or (k.endswith("_id") and isinstance(v, list))):
                    tgts = v
                elif src is None and k.endswith("_id") and isinstance(v, str):
                    src = v
            if src is None:
                raise ValueError(f"er2 entry without a source id: {entry!r}")
        else:
            src, tgts = entry
        if isinstance(tgts, str):
            tgts = [tgts]
        out.append((str(src), tuple(tgts or ())))
    return out


def _key(kg_name: str) -> str:
    return kg_name.strip().lower().replace(" ", "_")


def format_er2(er2: Iterable[Any] | None, kg1_name: str, kg2_name: str) -> str:
    """The er2 block as shown in prompts: one ``{"<kg1>_id", "<kg2>_ids"}`` object per entry."""
    pairs = er2_pairs(er2 or ())
    if not pairs:
        return "[]"
    k1, k2 = f"{_key(kg1_name)}_id", f"{_key(kg2_name)}_ids"
    items = [
        "{" + f"{json.dumps(k1)}: {_js(src)},\n{json.dumps(k2)}: {_js(list(tgts))}" + "}"
        for src, tgts in pairs
    ]
    return "[" + ",\n".join(items) + "]"


def _js(value) -> str:
    return json.dumps(value, ensure_ascii=False)


def _exemplar_dict(ex: Any) -> dict:
    if isinstance(ex, dict):
        get = ex.get
    else:
        def get(k, default=None):
            return getattr(ex, k, default)
    er2 = get("er2")
    return {
        "id": get("id"),
        "nlq": get("nlq"),
        "query_kg1": get("query_kg1"),
        "query_kg2": get("query_kg2"),
        "er2": None if er2 is None else [list(p) for p in er2_pairs(er2)],
    }


def default_instruction(strategy: Strategy) -> str:
    strategy = Strategy.parse(strategy)
    if strategy is Strategy.FEW_SHOT_ER:
        return f"{TAG_INSTRUCTION} {FEW_SHOT_LEAD}"
    if strategy is Strategy.COT:
        return f"{COT_LEAD} {TAG_INSTRUCTION}"
    if strategy is Strategy.COT_TAGS:
        return (
            "Reason through the five steps below, writing each one inside <think> and </think> tags. "
            + TAG_INSTRUCTION
        )
    return TAG_INSTRUCTION


def cot_tags_scaffold() -> str:
    lines = [
        f"<think>Step {chr(ord('a') + i)} ({name}): {text}</think>"
        for i, (name, text) in enumerate(COT_TAG_STEPS)
    ]
    return "\n".join(lines)


def validate_spec(spec: PromptSpec) -> list[str]:
    """Findings that make ``spec`` unrenderable; an empty list means ok."""
    findings = []
    try:
        strategy = Strategy.parse(spec.strategy)
    except ValueError as exc:
        return [str(exc)]
    if not spec.nlq or not spec.nlq.strip():
        findings.append("nlq is empty")
    if not spec.sparql_query_kg1 or not spec.sparql_query_kg1.strip():
        findings.append("sparql_query_kg1 is empty")
    if not spec.kg1_name or not spec.kg2_name:
        findings.append("both knowledge graph names are required")
    elif _key(spec.kg1_name) == _key(spec.kg2_name):
        findings.append("kg1_name and kg2_name must differ")
    if strategy is Strategy.ZERO_SHOT and spec.er2 is not None:
        findings.append("zero_shot carries no er2 (use zero_shot_er)")
    if strategy.uses_er2 and spec.er2 is None:
        findings.append(f"{strategy.value} needs an er2 mapping")
    if strategy is Strategy.FEW_SHOT_ER:
        n = len(spec.exemplars or ())
        if n != EXEMPLAR_COUNT:
            findings.append(f"few_shot_er needs exactly {EXEMPLAR_COUNT} exemplars, got {n}")
    elif spec.exemplars:
        findings.append(f"{strategy.value} takes no exemplars")
    if spec.er2 is not None:
        try:
            er2_pairs(spec.er2)
        except (TypeError, ValueError) as exc:
            findings.append(f"er2 malformed: {exc}")
    return findings


class PromptSpecError(ValueError):
    def __init__(self, findings: list[str]):
        self.findings = findings
        super().__init__("; ".join(findings))


def load_template(strategy: Strategy, template_dir: str | Path | None = None) -> str:
    strategy = Strategy.parse(strategy)
    name = f"{strategy.value}.txt"
    if template_dir is not None:
        p = Path(template_dir) / name
        if p.exists():
            return p.read_text(encoding="utf-8")
    return resources.files("kgbridge").joinpath("data/templates").joinpath(name).read_text(encoding="utf-8")


def _exemplar_block(n: int, ex: dict, kg1: str, kg2: str) -> str:
    body = (
        f'{{"natural_language_question": {_js(ex["nlq"])},\n'
        f'"sparql_query_kg1": {_js(ex["query_kg1"])},\n'
        f'"kg1_name": {_js(kg1)}, "kg2_name": {_js(kg2)},\n'
        f'"er2": {format_er2(ex["er2"], kg1, kg2)}}}'
    )
    return f"Example {n}:\n{body}\n<sparql>{ex['query_kg2']}</sparql>"


def render_prompt(
    spec: PromptSpec,
    *,
    template_dir: str | Path | None = None,
    system: str | None = None,
) -> RenderedPrompt:
    findings = validate_spec(spec)
    if findings:
        raise PromptSpecError(findings)
    strategy = Strategy.parse(spec.strategy)
    instruction = spec.instruction if spec.instruction is not None else default_instruction(strategy)
    exemplars = [_exemplar_dict(e) for e in spec.exemplars or ()]
    values = {
        "nlq": _js(spec.nlq),
        "sparql_query_kg1": _js(spec.sparql_query_kg1),
        "kg1_name": _js(spec.kg1_name),
        "kg2_name": _js(spec.kg2_name),
        "er2": format_er2(spec.er2, spec.kg1_name, spec.kg2_name),
        "instruction": _js(instruction),
        "exemplars": "\n\n".join(
            _exemplar_block(i, ex, spec.kg1_name, spec.kg2_name) for i, ex in enumerate(exemplars, 1)
        ),
        "scaffold": cot_tags_scaffold(),
    }
    template = string.Template(load_template(strategy, template_dir))
    try:
        text = template.substitute(values)
    except (KeyError, ValueError) as exc:
        raise PromptSpecError([f"template for {strategy.value} is invalid: {exc}"]) from exc
    canon = json.dumps(spec.canonical(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    digest = hashlib.sha256((canon + "\n" + text).encode("utf-8")).hexdigest()
    return RenderedPrompt(text=text, strategy=strategy, spec_digest=digest, system=system)
