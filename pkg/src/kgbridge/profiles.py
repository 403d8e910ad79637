"""Knowledge-graph profiles: namespaces, endpoints and identifier style.

Profiles are plain data.  The built-in set (DBpedia, Wikidata, DBLP,
OpenAlex) lives in ``data/profiles.json``; user files use the same schema::

    {"schema_version": 1,
     "profiles": [{"name": ..., "endpoint_url": ...,
                   "entity_namespaces": [...], "property_namespaces": [...],
                   "class_namespaces": [...], "type_property": ...,
                   "identifier_style": "human_readable" | "numeric",
                   "prefixes": {"label": "namespace", ...}}]}

``prefixes`` is optional and lists the prefix labels an endpoint predefines
(Wikidata queries usually omit ``wd:``/``wdt:`` declarations).

An endpoint URL can be overridden with ``SPARQL_ENDPOINT_<NAME>`` where
``<NAME>`` is the upper-cased profile name.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"

IDENTIFIER_STYLES = ("human_readable", "numeric")
ROLES = ("entity", "property", "class")

_REQUIRED = (
    "name",
    "endpoint_url",
    "entity_namespaces",
    "property_namespaces",
    "class_namespaces",
    "type_property",
    "identifier_style",
)


class ConfigError(ValueError):
    """Invalid profile or run configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if message else path)


@dataclass(frozen=True)
class KgProfile:
    name: str
    endpoint_url: str
    entity_namespaces: tuple[str, ...]
    property_namespaces: tuple[str, ...]
    class_namespaces: tuple[str, ...]
    type_property: str
    identifier_style: str = "human_readable"
    prefixes: Mapping[str, str] = field(default_factory=dict)

    def namespaces(self, role: str | None = None) -> tuple[str, ...]:
        if role is None:
            return self.entity_namespaces + self.property_namespaces + self.class_namespaces
        return {
            "entity": self.entity_namespaces,
            "property": self.property_namespaces,
            "class": self.class_namespaces,
        }[role]

    def owns(self, iri: str) -> bool:
        return any(iri.startswith(ns) for ns in self.namespaces())

    def candidate_roles(self, iri: str) -> tuple[str, ...]:
        """Roles whose longest matching namespace covers ``iri``.

        Several roles come back only when the very same namespace is declared
        for each of them (``dbo:`` is both property and class namespace).
        """
        best = 0
        found: list[str] = []
        for role in ROLES:
            for ns in self.namespaces(role):
                if not iri.startswith(ns):
                    continue
                if len(ns) > best:
                    best, found = len(ns), [role]
                elif len(ns) == best and role not in found:
                    found.append(role)
        return tuple(found)

    def local_name(self, iri: str) -> str | None:
        """The part of ``iri`` after its longest matching profile namespace."""
        matches = [ns for ns in self.namespaces() if iri.startswith(ns)]
        if not matches:
            return None
        return iri[len(max(matches, key=len)):]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "endpoint_url": self.endpoint_url,
            "entity_namespaces": list(self.entity_namespaces),
            "property_namespaces": list(self.property_namespaces),
            "class_namespaces": list(self.class_namespaces),
            "type_property": self.type_property,
            "identifier_style": self.identifier_style,
            "prefixes": dict(sorted(self.prefixes.items())),
        }


@dataclass(frozen=True)
class TranslationDirection:
    source: KgProfile
    target: KgProfile

    def __post_init__(self):
        if self.source.name == self.target.name:
            raise ConfigError("direction", f"source and target are both {self.source.name}")

    @property
    def key(self) -> str:
        return f"{self.source.name}->{self.target.name}"

    def __str__(self) -> str:
        return self.key


def _profile_from_dict(raw: object, where: str) -> KgProfile:
    if not isinstance(raw, dict):
        raise ConfigError(where, "expected an object")
    for key in _REQUIRED:
        if key not in raw or raw[key] in (None, ""):
            raise ConfigError(f"{where}.{key}" if where else key, "missing")
    for key in ("entity_namespaces", "property_namespaces", "class_namespaces"):
        value = raw[key]
        if not isinstance(value, list) or not all(isinstance(v, str) and v for v in value):
            raise ConfigError(f"{where}.{key}", "expected a list of IRI prefixes")
    if raw["identifier_style"] not in IDENTIFIER_STYLES:
        raise ConfigError(f"{where}.identifier_style", f"expected one of {IDENTIFIER_STYLES}")
    prefixes = raw.get("prefixes") or {}
    if not isinstance(prefixes, dict):
        raise ConfigError(f"{where}.prefixes", "expected an object")
    profile = KgProfile(
        name=raw["name"],
        endpoint_url=raw["endpoint_url"],
        entity_namespaces=tuple(raw["entity_namespaces"]),
        property_namespaces=tuple(raw["property_namespaces"]),
        class_namespaces=tuple(raw["class_namespaces"]),
        type_property=raw["type_property"],
        identifier_style=raw["identifier_style"],
        prefixes=dict(prefixes),
    )
    _check_overlap(profile, where)
    return profile


def _check_overlap(profile: KgProfile, where: str) -> None:
    # identical namespaces may be shared between roles; strict nesting may not
    for a in ROLES:
        for b in ROLES:
            if a >= b:
                continue
            for ns_a in profile.namespaces(a):
                for ns_b in profile.namespaces(b):
                    if ns_a != ns_b and (ns_a.startswith(ns_b) or ns_b.startswith(ns_a)):
                        raise ConfigError(
                            f"{where}.{a}_namespaces",
                            f"{ns_a} overlaps {b} namespace {ns_b}",
                        )


def apply_env_overrides(profiles: Iterable[KgProfile], environ: Mapping[str, str] | None = None) -> list[KgProfile]:
    environ = os.environ if environ is None else environ
    out = []
    for p in profiles:
        url = environ.get(f"SPARQL_ENDPOINT_{p.name.upper()}")
        out.append(replace(p, endpoint_url=url) if url else p)
    return out


def parse_profiles(data: object) -> list[KgProfile]:
    if not isinstance(data, dict) or not isinstance(data.get("profiles"), list):
        raise ConfigError("profiles", "expected an object with a 'profiles' list")
    profiles = [_profile_from_dict(raw, f"profiles[{i}]") for i, raw in enumerate(data["profiles"])]
    seen = set()
    for i, p in enumerate(profiles):
        if p.name in seen:
            raise ConfigError(f"profiles[{i}].name", f"duplicate profile {p.name!r}")
        seen.add(p.name)
    return profiles


def builtin_profiles() -> list[KgProfile]:
    text = resources.files("kgbridge").joinpath("data/profiles.json").read_text(encoding="utf-8")
    return parse_profiles(json.loads(text))


def load_profiles(path: str | Path | None = None, *, environ: Mapping[str, str] | None = None) -> dict[str, KgProfile]:
    """Load the built-in profiles, then overlay ``path`` (same name wins)."""
    registry = {p.name: p for p in builtin_profiles()}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError("profiles", f"not valid JSON ({exc})") from exc
        for p in parse_profiles(data):
            registry[p.name] = p
    return {p.name: p for p in apply_env_overrides(registry.values(), environ)}


def dump_profiles(profiles: Iterable[KgProfile]) -> str:
    return json.dumps(
        {"schema_version": 1, "profiles": [p.to_dict() for p in profiles]},
        indent=2,
        ensure_ascii=False,
    ) + "\n"


def direction(profiles: Mapping[str, KgProfile], spec: str) -> TranslationDirection:
    """Build a direction from ``"DBpedia->Wikidata"`` (``:`` also accepted)."""
    sep = "->" if "->" in spec else ":"
    try:
        src, tgt = (s.strip() for s in spec.split(sep))
    except ValueError:
        raise ConfigError("direction", f"cannot parse {spec!r}") from None
    for name in (src, tgt):
        if name not in profiles:
            raise ConfigError("direction", f"unknown knowledge graph {name!r}")
    return TranslationDirection(profiles[src], profiles[tgt])
