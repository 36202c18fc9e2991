"""In-memory typed property graph with deterministic export.

Node identity is (label, normalized name) where normalization trims
whitespace and unifies full-width ASCII forms with their half-width
equivalents; clinical text mixes both widths freely. Triples are unique
per (head, relation, tail) and every relation constrains its endpoint
labels, so a malformed edge fails fast instead of surfacing as a bad
query result later.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from emrkg.errors import DataError, InternalError
from emrkg.schema import GRAPH_LABELS, RELATION_ENDPOINTS, SPAN_TYPE_TO_RELATION

log = logging.getLogger(__name__)

SCHEMA_TAG = "graph/1"


class LabelUnknown(DataError):
    """Node label outside the graph label universe."""


class DanglingEndpoint(DataError):
    """Triple references a node id that is not in the graph."""


class RelationTypeMismatch(DataError):
    """Endpoint labels violate the relation's (head, tail) constraint."""


class SchemaVersionMismatch(DataError):
    """Graph file missing or carrying an unsupported schema header."""


class IoError(DataError):
    """Unreadable or truncated graph file; message carries the position."""


def normalize_name(name: str) -> str:
    """Trim and fold full-width ASCII (U+FF01..U+FF5E, ideographic space)
    to half-width so width variants of the same name share one node."""
    out = []
    for ch in name.strip():
        code = ord(ch)
        if 0xFF01 <= code <= 0xFF5E:
            out.append(chr(code - 0xFEE0))
        elif code == 0x3000:
            out.append(" ")
        else:
            out.append(ch)
    return "".join(out)


@dataclass
class Node:
    id: int
    label: str
    name: str
    attributes: dict = field(default_factory=dict)


class Triple(NamedTuple):
    head: int
    relation: str
    tail: int


class KnowledgeGraph:
    """Nodes plus unique triples with (label+name), head and tail indexes."""

    def __init__(self) -> None:
        self.nodes: dict[int, Node] = {}
        self.triples: list[Triple] = []
        self._triple_set: set[Triple] = set()
        self._by_key: dict[tuple[str, str], int] = {}
        self._by_head: dict[int, list[Triple]] = {}
        self._by_tail: dict[int, list[Triple]] = {}
        self._next_id = 1

    # -- nodes ---------------------------------------------------------

    def upsert_node(self, label: str, name: str, attributes: dict | None = None) -> int:
        """Insert or update the node identified by (label, normalized name);
        on update, incoming attributes overwrite same-named keys."""
        if label not in GRAPH_LABELS:
            raise LabelUnknown(f"unknown node label {label!r}")
        if not name.strip():
            raise DataError("node name must be non-empty")
        key = (label, normalize_name(name))
        node_id = self._by_key.get(key)
        if node_id is None:
            node_id = self._next_id
            self._next_id += 1
            self.nodes[node_id] = Node(node_id, label, name, dict(attributes or {}))
            self._by_key[key] = node_id
        elif attributes:
            self.nodes[node_id].attributes.update(attributes)
        return node_id

    def find_node(self, label: str, name: str) -> Node | None:
        node_id = self._by_key.get((label, normalize_name(name)))
        return self.nodes[node_id] if node_id is not None else None

    # -- triples -------------------------------------------------------

    def _check_triple(self, head: int, relation: str, tail: int) -> None:
        if head not in self.nodes or tail not in self.nodes:
            missing = head if head not in self.nodes else tail
            raise DanglingEndpoint(f"triple endpoint id {missing} not in graph")
        pairs = RELATION_ENDPOINTS.get(relation)
        if pairs is None:
            raise RelationTypeMismatch(f"unknown relation type {relation!r}")
        endpoint = (self.nodes[head].label, self.nodes[tail].label)
        if endpoint not in pairs:
            raise RelationTypeMismatch(
                f"{relation} does not admit {endpoint[0]} -> {endpoint[1]}"
            )

    def add_triple(self, head: int, relation: str, tail: int) -> bool:
        """Add one typed edge; re-adding an existing triple is a no-op.
        Returns True if the triple was new."""
        self._check_triple(head, relation, tail)
        triple = Triple(head, relation, tail)
        if triple in self._triple_set:
            return False
        self.triples.append(triple)
        self._triple_set.add(triple)
        self._by_head.setdefault(head, []).append(triple)
        self._by_tail.setdefault(tail, []).append(triple)
        return True

    def _remove_triple(self, triple: Triple) -> None:
        self.triples.remove(triple)
        self._triple_set.remove(triple)
        self._by_head[triple.head].remove(triple)
        self._by_tail[triple.tail].remove(triple)

    def merge_node_into(self, source_id: int, target_id: int) -> int:
        """Re-point every triple incident to source onto target, then drop
        the source node. Duplicates created by re-pointing collapse.
        Returns the number of re-pointed triples."""
        if source_id not in self.nodes or target_id not in self.nodes:
            raise DanglingEndpoint("merge endpoints must exist")
        if source_id == target_id:
            return 0
        incident = list(self._by_head.get(source_id, [])) + [
            t for t in self._by_tail.get(source_id, []) if t.head != source_id
        ]
        moved = 0
        for triple in incident:
            self._remove_triple(triple)
            head = target_id if triple.head == source_id else triple.head
            tail = target_id if triple.tail == source_id else triple.tail
            self._check_triple(head, triple.relation, tail)
            if self.add_triple(head, triple.relation, tail):
                moved += 1
        node = self.nodes.pop(source_id)
        del self._by_key[(node.label, normalize_name(node.name))]
        self._by_head.pop(source_id, None)
        self._by_tail.pop(source_id, None)
        return moved

    # -- queries -------------------------------------------------------

    def pattern_query(self, head_label: str, head_name: str, relation: str) -> list[Node]:
        """All tail nodes of (head_label {head_name}) -[relation]-> (*),
        sorted by name. Absent head yields an empty list."""
        head = self.find_node(head_label, head_name)
        if head is None:
            return []
        tails = [
            self.nodes[t.tail]
            for t in self._by_head.get(head.id, [])
            if t.relation == relation
        ]
        return sorted(tails, key=lambda n: (n.name, n.id))

    def triples_from(self, node_id: int) -> list[Triple]:
        return list(self._by_head.get(node_id, []))

    def triples_to(self, node_id: int) -> list[Triple]:
        return list(self._by_tail.get(node_id, []))

    def validate(self) -> None:
        """Check referential integrity and index consistency; raises on
        the first violation found."""
        for key, node_id in self._by_key.items():
            node = self.nodes.get(node_id)
            if node is None or (node.label, normalize_name(node.name)) != key:
                raise InternalError(f"stale name index entry {key!r}")
        if len(self._by_key) != len(self.nodes):
            raise InternalError("name index and node store disagree")
        if len(self._triple_set) != len(self.triples):
            raise InternalError("duplicate triples in store")
        indexed = [t for ts in self._by_head.values() for t in ts]
        if sorted(indexed) != sorted(self.triples):
            raise InternalError("head index out of sync")
        indexed = [t for ts in self._by_tail.values() for t in ts]
        if sorted(indexed) != sorted(self.triples):
            raise InternalError("tail index out of sync")
        for triple in self.triples:
            self._check_triple(*triple)


def add_patient_record(
    graph: KnowledgeGraph,
    patient_name: str,
    entities: list[tuple[str, str]],
    attributes: dict | None = None,
) -> int:
    """Insert one patient node plus its extracted (entity type, surface)
    pairs, linked by the per-type patient relation. Returns the patient id."""
    patient_id = graph.upsert_node("Patient", patient_name, attributes)
    for label, surface in entities:
        relation = SPAN_TYPE_TO_RELATION.get(label)
        if relation is None:
            raise LabelUnknown(f"no patient relation for entity type {label!r}")
        entity_id = graph.upsert_node(label, surface)
        graph.add_triple(patient_id, relation, entity_id)
    return patient_id


# -- export --------------------------------------------------------------


def _sorted_nodes(graph: KnowledgeGraph) -> list[Node]:
    return sorted(graph.nodes.values(), key=lambda n: (n.label, normalize_name(n.name)))


def _node_sort_key(graph: KnowledgeGraph, node_id: int) -> tuple[str, str]:
    node = graph.nodes[node_id]
    return (node.label, normalize_name(node.name))


def _sorted_triples(graph: KnowledgeGraph) -> list[Triple]:
    return sorted(
        graph.triples,
        key=lambda t: (_node_sort_key(graph, t.head), t.relation, _node_sort_key(graph, t.tail)),
    )


def relation_identifier(relation: str) -> str:
    """CamelCase relation name to the upper snake case used in Cypher,
    e.g. RecommendedFood -> RECOMMENDED_FOOD."""
    out = []
    for i, ch in enumerate(relation):
        if ch.isupper() and i > 0:
            out.append("_")
        out.append(ch.upper())
    return "".join(out)


def _cypher_value(value) -> str:
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace("'", "\\'")
        return f"'{escaped}'"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_cypher_value(v) for v in value) + "]"
    raise DataError(f"unsupported attribute value type {type(value).__name__}")


def export_cypher(graph: KnowledgeGraph, path: str | Path) -> int:
    """Write MERGE statements (one per node, one per triple) in canonical
    order; structurally identical graphs export byte-identically."""
    statements = []
    for node in _sorted_nodes(graph):
        props = {"name": node.name, **dict(sorted(node.attributes.items()))}
        rendered = ", ".join(f"{k}: {_cypher_value(v)}" for k, v in props.items())
        statements.append(f"MERGE (n:{node.label} {{{rendered}}});")
    for triple in _sorted_triples(graph):
        head, tail = graph.nodes[triple.head], graph.nodes[triple.tail]
        statements.append(
            f"MATCH (a:{head.label} {{name: {_cypher_value(head.name)}}}), "
            f"(b:{tail.label} {{name: {_cypher_value(tail.name)}}}) "
            f"MERGE (a)-[:{relation_identifier(triple.relation)}]->(b);"
        )
    try:
        Path(path).write_text("".join(s + "\n" for s in statements), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return len(statements)


def export_csv(graph: KnowledgeGraph, nodes_path: str | Path, rels_path: str | Path) -> None:
    """Bulk-import companion to the Cypher export: nodes.csv carries
    canonical re-numbered ids so identical graphs yield identical files."""
    ordered = _sorted_nodes(graph)
    export_id = {node.id: i for i, node in enumerate(ordered, start=1)}
    try:
        with open(nodes_path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["id", "label", "name", "attributes"])
            for node in ordered:
                writer.writerow([
                    export_id[node.id],
                    node.label,
                    node.name,
                    json.dumps(dict(sorted(node.attributes.items())), ensure_ascii=False),
                ])
        with open(rels_path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["head", "relation", "tail"])
            for triple in _sorted_triples(graph):
                writer.writerow([export_id[triple.head], triple.relation, export_id[triple.tail]])
    except OSError as exc:
        raise IoError(f"cannot write CSV export: {exc}") from exc


# -- persistence ----------------------------------------------------------


def save_graph(graph: KnowledgeGraph, path: str | Path) -> None:
    """Lossless line-delimited JSON snapshot (internal ids preserved)."""
    lines = [json.dumps({"schema": SCHEMA_TAG}, ensure_ascii=False)]
    for node_id in sorted(graph.nodes):
        node = graph.nodes[node_id]
        lines.append(json.dumps(
            {"kind": "node", "id": node.id, "label": node.label,
             "name": node.name, "attributes": node.attributes},
            ensure_ascii=False, sort_keys=True,
        ))
    for triple in graph.triples:
        lines.append(json.dumps(
            {"kind": "triple", "head": triple.head, "relation": triple.relation,
             "tail": triple.tail},
            ensure_ascii=False, sort_keys=True,
        ))
    try:
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_graph(path: str | Path) -> KnowledgeGraph:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise SchemaVersionMismatch(f"{path}: empty graph file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError:
        raise SchemaVersionMismatch(f"{path}: line 1 is not a schema header")
    if not isinstance(header, dict) or header.get("schema") != SCHEMA_TAG:
        raise SchemaVersionMismatch(
            f"{path}: unsupported schema {header.get('schema') if isinstance(header, dict) else header!r}"
        )

    graph = KnowledgeGraph()
    pending: list[tuple[int, dict]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IoError(f"{path}: line {lineno}: truncated or invalid record: {exc.msg}") from exc
        kind = obj.get("kind")
        if kind == "node":
            try:
                node_id = int(obj["id"])
                label, name = obj["label"], obj["name"]
                attributes = obj.get("attributes", {})
            except (KeyError, TypeError, ValueError) as exc:
                raise IoError(f"{path}: line {lineno}: malformed node record") from exc
            if label not in GRAPH_LABELS:
                raise IoError(f"{path}: line {lineno}: unknown label {label!r}")
            key = (label, normalize_name(name))
            if key in graph._by_key or node_id in graph.nodes:
                raise IoError(f"{path}: line {lineno}: duplicate node {key!r}")
            graph.nodes[node_id] = Node(node_id, label, name, dict(attributes))
            graph._by_key[key] = node_id
            graph._next_id = max(graph._next_id, node_id + 1)
        elif kind == "triple":
            pending.append((lineno, obj))
        else:
            raise IoError(f"{path}: line {lineno}: unknown record kind {kind!r}")
    for lineno, obj in pending:
        try:
            head, relation, tail = int(obj["head"]), obj["relation"], int(obj["tail"])
        except (KeyError, TypeError, ValueError) as exc:
            raise IoError(f"{path}: line {lineno}: malformed triple record") from exc
        try:
            graph.add_triple(head, relation, tail)
        except DataError as exc:
            raise IoError(f"{path}: line {lineno}: {exc}") from exc
    return graph
