"""Modulation knowledge graph: triple parsing, ontology validation,
heterogeneous graph construction and node featurization.

The graph is typed: 8 node types and 7 directed relation types, each
relation with a fixed (head type, tail type) signature. A curated default
triple file covering the ten modulation classes ships with the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, DeclarationError, TripleParseError
from .sigsyn import CLASSES, ModulationClass


class NodeType(Enum):
    modulationMethod = "modulationMethod"
    modulationType = "modulationType"
    base = "base"
    bandwidthLevel = "bandwidthLevel"
    situation = "situation"
    modulationTheory = "modulationTheory"
    carrierType = "carrierType"
    dataType = "dataType"


class RelationType(Enum):
    possesses = "possesses"
    isBaseOf = "isBaseOf"
    hasBandwidthIn = "hasBandwidthIn"
    adopts = "adopts"
    includes = "includes"
    isUsedIn = "isUsedIn"
    isModulatedBy = "isModulatedBy"


#: (head type, tail type) signature of each relation.
SIGNATURES: dict[RelationType, tuple[NodeType, NodeType]] = {
    RelationType.possesses: (NodeType.modulationType, NodeType.modulationMethod),
    RelationType.isBaseOf: (NodeType.base, NodeType.modulationMethod),
    RelationType.hasBandwidthIn: (NodeType.bandwidthLevel, NodeType.modulationMethod),
    RelationType.adopts: (NodeType.situation, NodeType.modulationMethod),
    RelationType.includes: (NodeType.modulationTheory, NodeType.modulationType),
    RelationType.isUsedIn: (NodeType.carrierType, NodeType.modulationType),
    RelationType.isModulatedBy: (NodeType.dataType, NodeType.modulationType),
}

NODE_TYPES: tuple[NodeType, ...] = tuple(NodeType)
RELATIONS: tuple[RelationType, ...] = tuple(RelationType)


class Triple(NamedTuple):
    head: str
    relation: RelationType
    tail: str


def parse_triples(text: str) -> tuple[list[Triple], dict[str, NodeType]]:
    """Parse the TSV triple format.

    Lines: ``@node<TAB>name<TAB>NodeType`` declares a node,
    ``head<TAB>relation<TAB>tail`` states a fact, ``#`` starts a comment.
    Duplicate triples are dropped (first occurrence kept). Every node
    referenced by a triple must be declared somewhere in the file.
    """
    type_map: dict[str, NodeType] = {}
    raw: list[tuple[int, Triple]] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split("\t")
        if len(fields) != 3:
            raise TripleParseError(line_no, f"expected 3 tab-separated fields, got {len(fields)}")
        if fields[0] == "@node":
            _, name, type_name = fields
            if not name:
                raise TripleParseError(line_no, "empty node name")
            try:
                ntype = NodeType(type_name)
            except ValueError:
                raise TripleParseError(line_no, f"unknown node type {type_name!r}") from None
            if name in type_map and type_map[name] is not ntype:
                raise TripleParseError(
                    line_no, f"node {name!r} re-declared as {type_name} "
                    f"(was {type_map[name].value})"
                )
            type_map[name] = ntype
            continue
        head, rel_name, tail = fields
        if not head or not tail:
            raise TripleParseError(line_no, "empty head or tail node name")
        try:
            rel = RelationType(rel_name)
        except ValueError:
            raise TripleParseError(line_no, f"unknown relation {rel_name!r}") from None
        raw.append((line_no, Triple(head, rel, tail)))

    for line_no, t in raw:
        for name in (t.head, t.tail):
            if name not in type_map:
                raise DeclarationError(
                    f"line {line_no}: node {name!r} used but never declared"
                )
    seen = set()
    triples = []
    for _, t in raw:
        if t not in seen:
            seen.add(t)
            triples.append(t)
    return triples, type_map


def validate_ontology(
    triples: list[Triple], type_map: dict[str, NodeType]
) -> list[str]:
    """Return one violation message per triple breaking a relation signature."""
    violations = []
    for t in triples:
        want_head, want_tail = SIGNATURES[t.relation]
        got_head = type_map[t.head]
        got_tail = type_map[t.tail]
        if got_head is not want_head or got_tail is not want_tail:
            violations.append(
                f"{t.head} -{t.relation.value}-> {t.tail}: signature is "
                f"({got_head.value}, {got_tail.value}), expected "
                f"({want_head.value}, {want_tail.value})"
            )
    return violations


@dataclass
class HeteroGraph:
    """Typed directed graph plus a relation-blind 0/1 adjacency matrix."""

    node_names: list[str]
    node_types: list[NodeType]
    edges: dict[RelationType, list[tuple[int, int]]]
    adjacency: np.ndarray

    def __post_init__(self):
        self.index = {n: i for i, n in enumerate(self.node_names)}

    @property
    def num_nodes(self) -> int:
        return len(self.node_names)

    @classmethod
    def from_edges(
        cls,
        node_names: list[str],
        node_types: list[NodeType],
        edges: dict[RelationType, list[tuple[int, int]]],
    ) -> "HeteroGraph":
        a = len(node_names)
        adj = np.zeros((a, a), dtype=np.int8)
        for pairs in edges.values():
            for h, t in pairs:
                if not (0 <= h < a and 0 <= t < a):
                    raise ValueError(f"edge ({h}, {t}) out of range for {a} nodes")
                adj[h, t] = 1
        full_edges = {r: list(edges.get(r, [])) for r in RELATIONS}
        return cls(node_names, node_types, full_edges, adj)


def build_graph(
    triples: list[Triple], type_map: dict[str, NodeType]
) -> HeteroGraph:
    """Index declared nodes in first-appearance order and materialize edges.

    Refuses triples that fail :func:`validate_ontology`.
    """
    violations = validate_ontology(triples, type_map)
    if violations:
        raise ValueError(
            f"{len(violations)} ontology violation(s); first: {violations[0]}"
        )
    names = list(type_map.keys())
    types = [type_map[n] for n in names]
    index = {n: i for i, n in enumerate(names)}
    edges: dict[RelationType, list[tuple[int, int]]] = {r: [] for r in RELATIONS}
    for t in triples:
        edges[t.relation].append((index[t.head], index[t.tail]))
    return HeteroGraph.from_edges(names, types, edges)


def init_node_features(g: HeteroGraph, scale: bool = True) -> np.ndarray:
    """Structural node features, one row per node, width ``12 + num_nodes``.

    Columns: [#1st-order undirected neighbors, #2nd-order undirected
    neighbors (distance exactly 2), out-degree, in-degree] min-max scaled
    to [0,1] per column, then the 8-dim node-type one-hot, then the node's
    adjacency-matrix row. ``scale=False`` leaves the four scalar columns
    as raw counts (useful for exact checks).
    """
    a = g.num_nodes
    if a == 0:
        raise ValueError("empty graph")
    adj = g.adjacency.astype(bool)
    und = adj | adj.T
    np.fill_diagonal(und, False)

    first = und.sum(axis=1).astype(np.float64)
    two_hop = (und @ und.astype(np.int64)) > 0
    np.fill_diagonal(two_hop, False)
    second = (two_hop & ~und).sum(axis=1).astype(np.float64)

    out_deg = np.zeros(a)
    in_deg = np.zeros(a)
    for pairs in g.edges.values():
        for h, t in pairs:
            out_deg[h] += 1
            in_deg[t] += 1

    scalars = np.stack([first, second, out_deg, in_deg], axis=1)
    if scale:
        lo = scalars.min(axis=0)
        hi = scalars.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        scaled = np.where(hi > lo, (scalars - lo) / span, 0.0)
    else:
        scaled = scalars

    one_hot = np.zeros((a, len(NODE_TYPES)))
    type_pos = {t: i for i, t in enumerate(NODE_TYPES)}
    for i, t in enumerate(g.node_types):
        one_hot[i, type_pos[t]] = 1.0

    return np.concatenate([scaled, one_hot, g.adjacency.astype(np.float64)], axis=1)


def anchors(
    g: HeteroGraph, classes: tuple[ModulationClass, ...] = CLASSES
) -> dict[ModulationClass, int]:
    """Map each modulation class to its modulationMethod node index."""
    out: dict[ModulationClass, int] = {}
    for cls in classes:
        idx = g.index.get(cls.name)
        if idx is None:
            raise ConfigurationError(f"class {cls.name} has no node in the graph")
        if g.node_types[idx] is not NodeType.modulationMethod:
            raise ConfigurationError(
                f"node {cls.name} has type {g.node_types[idx].value}, "
                "expected modulationMethod"
            )
        out[cls] = idx
    if len(set(out.values())) != len(out):
        raise ConfigurationError("anchor mapping is not injective")
    return out


def default_triples_text() -> str:
    return (
        resources.files("kgamc").joinpath("data/default_mkg.tsv").read_text("utf-8")
    )


def load_default_graph() -> tuple[HeteroGraph, list[Triple], dict[str, NodeType]]:
    triples, type_map = parse_triples(default_triples_text())
    return build_graph(triples, type_map), triples, type_map


def graph_stats(g: HeteroGraph) -> dict:
    """Node/edge/type counts for the ``kg inspect`` report."""
    type_counts = {t.value: 0 for t in NODE_TYPES}
    for t in g.node_types:
        type_counts[t.value] += 1
    edge_counts = {r.value: len(g.edges[r]) for r in RELATIONS}
    return {
        "nodes": g.num_nodes,
        "edges": int(sum(edge_counts.values())),
        "node_types": type_counts,
        "relations": edge_counts,
    }
