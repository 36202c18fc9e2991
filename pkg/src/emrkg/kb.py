"""File-based disease knowledge base.

The KB ships as line-delimited JSON: a header line ``{"schema": "kb/1"}``
followed by one disease record per line. Records carry scalar attributes
(description, prevention, cure time, cause), a treatments list, and a
``relations`` map from relation type to target-name list. This replaces
live crawling of the source site so runs are reproducible offline.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from emrkg.errors import DataError
from emrkg.schema import KB_RELATIONS, RELATION_ENDPOINTS

log = logging.getLogger(__name__)

SCHEMA_TAG = "kb/1"

# Tail catalog per KB relation (all KB relations are disease-headed).
_TAIL_TYPE: dict[str, str] = {
    rel: RELATION_ENDPOINTS[rel][0][1] for rel in KB_RELATIONS
}


class ParseError(DataError):
    """Malformed KB line; message carries the 1-based line number."""


class UnknownRelationType(DataError):
    """Relation name outside the fixed KB relation set."""


@dataclass(frozen=True)
class DiseaseEntry:
    name: str
    description: str = ""
    prevention: str = ""
    cure_time: str = ""
    treatments: tuple[str, ...] = ()
    cause: str = ""
    relations: tuple[tuple[str, str], ...] = ()  # (relation type, target name)

    def __post_init__(self) -> None:
        if not self.name:
            raise DataError("disease entry requires a non-empty name")
        for rel, target in self.relations:
            if rel not in _TAIL_TYPE:
                raise UnknownRelationType(f"unknown relation type {rel!r}")
            if not target:
                raise DataError(f"empty target for relation {rel!r} of {self.name!r}")


@dataclass(frozen=True)
class Catalogs:
    """Per-type entity name catalogs, each sorted and duplicate-free."""

    disease: tuple[str, ...] = ()
    food: tuple[str, ...] = ()
    department: tuple[str, ...] = ()
    drug: tuple[str, ...] = ()
    examination: tuple[str, ...] = ()
    symptom: tuple[str, ...] = ()

    def by_label(self) -> dict[str, tuple[str, ...]]:
        return {
            "Disease": self.disease,
            "Food": self.food,
            "Department": self.department,
            "Drug": self.drug,
            "Examination": self.examination,
            "Symptom": self.symptom,
        }


_CATALOG_FIELD = {
    "Disease": "disease",
    "Food": "food",
    "Department": "department",
    "Drug": "drug",
    "Examination": "examination",
    "Symptom": "symptom",
}


def _parse_record(obj: dict, lineno: int) -> DiseaseEntry:
    if not isinstance(obj, dict):
        raise ParseError(f"line {lineno}: expected a JSON object, got {type(obj).__name__}")
    name = obj.get("name", "")
    if not isinstance(name, str) or not name:
        raise ParseError(f"line {lineno}: missing or empty disease name")

    def scalar(key: str) -> str:
        value = obj.get(key, "")
        if not isinstance(value, str):
            raise ParseError(f"line {lineno}: field {key!r} must be a string")
        return value

    treatments = obj.get("treatments", [])
    if not isinstance(treatments, list) or not all(isinstance(t, str) for t in treatments):
        raise ParseError(f"line {lineno}: 'treatments' must be a list of strings")

    raw_relations = obj.get("relations", {})
    if not isinstance(raw_relations, dict):
        raise ParseError(f"line {lineno}: 'relations' must be an object")
    relations: list[tuple[str, str]] = []
    for rel, targets in raw_relations.items():
        if rel not in _TAIL_TYPE:
            raise UnknownRelationType(f"line {lineno}: unknown relation type {rel!r}")
        if not isinstance(targets, list) or not all(isinstance(t, str) and t for t in targets):
            raise ParseError(f"line {lineno}: targets of {rel!r} must be non-empty strings")
        relations.extend((rel, t) for t in targets)

    return DiseaseEntry(
        name=name,
        description=scalar("description"),
        prevention=scalar("prevention"),
        cure_time=scalar("cure_time"),
        treatments=tuple(treatments),
        cause=scalar("cause"),
        relations=tuple(relations),
    )


def _merge(earlier: DiseaseEntry, later: DiseaseEntry) -> DiseaseEntry:
    # Scalars: the later non-empty value wins; an absent field never erases
    # earlier data. Lists: order-preserving union.
    def scalar(a: str, b: str) -> str:
        return b if b else a

    def union(a: tuple, b: tuple) -> tuple:
        seen = set()
        out = []
        for item in a + b:
            if item not in seen:
                seen.add(item)
                out.append(item)
        return tuple(out)

    return DiseaseEntry(
        name=earlier.name,
        description=scalar(earlier.description, later.description),
        prevention=scalar(earlier.prevention, later.prevention),
        cure_time=scalar(earlier.cure_time, later.cure_time),
        treatments=union(earlier.treatments, later.treatments),
        cause=scalar(earlier.cause, later.cause),
        relations=union(earlier.relations, later.relations),
    )


def load_kb(path: str | Path) -> tuple[list[DiseaseEntry], Catalogs]:
    """Load disease entries and build the six per-type name catalogs.

    Duplicate disease names merge field-wise (scalars last-writer-wins,
    lists unioned) with a warning. Pure function of the file contents, so
    repeated loads are identical.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        log.warning("knowledge base %s is empty", path)
        return [], Catalogs()

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"line 1: invalid JSON in header: {exc}") from exc
    if not isinstance(header, dict) or header.get("schema") != SCHEMA_TAG:
        raise ParseError(f"line 1: expected schema header {{\"schema\": \"{SCHEMA_TAG}\"}}")

    by_name: dict[str, DiseaseEntry] = {}
    order: list[str] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: invalid JSON: {exc}") from exc
        entry = _parse_record(obj, lineno)
        if entry.name in by_name:
            log.warning("line %d: duplicate disease %r merged", lineno, entry.name)
            by_name[entry.name] = _merge(by_name[entry.name], entry)
        else:
            by_name[entry.name] = entry
            order.append(entry.name)

    entries = [by_name[name] for name in order]
    if not entries:
        log.warning("knowledge base %s contains no disease records", path)

    buckets: dict[str, set[str]] = {label: set() for label in _CATALOG_FIELD}
    for entry in entries:
        buckets["Disease"].add(entry.name)
        for rel, target in entry.relations:
            buckets[_TAIL_TYPE[rel]].add(target)
    catalogs = Catalogs(
        **{
            _CATALOG_FIELD[label]: tuple(sorted(names))
            for label, names in buckets.items()
        }
    )
    return entries, catalogs


def kb_to_triples(entries: list[DiseaseEntry]) -> list[tuple[str, str, str]]:
    """One (head name, relation, tail name) per relation instance,
    in entry order. Attribute fields stay on the disease node."""
    return [
        (entry.name, rel, target)
        for entry in entries
        for rel, target in entry.relations
    ]


def kb_into_graph(graph, entries: list[DiseaseEntry]) -> int:
    """Insert KB entries into a knowledge graph: disease nodes carry the
    scalar attributes, relation targets become typed nodes. Returns the
    number of triples added."""
    added = 0
    for entry in entries:
        attributes = {
            key: value
            for key, value in (
                ("description", entry.description),
                ("prevention", entry.prevention),
                ("cure_time", entry.cure_time),
                ("cause", entry.cause),
            )
            if value
        }
        if entry.treatments:
            attributes["treatments"] = list(entry.treatments)
        head = graph.upsert_node("Disease", entry.name, attributes)
        for rel, target in entry.relations:
            tail = graph.upsert_node(_TAIL_TYPE[rel], target)
            if graph.add_triple(head, rel, tail):
                added += 1
    return added
