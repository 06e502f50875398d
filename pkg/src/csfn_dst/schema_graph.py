"""Schema graph over domain, slot and domain-slot nodes.

Nodes are ordered domains, then distinct slots, then domain-slot pairs.
Edges (undirected):

* every pair of domains;
* slot -- domain when the domain declares the slot;
* domain -- pair and slot -- pair for each domain-slot pair;
* slot -- slot for declared value-overlap pairs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from pathlib import Path

import numpy as np

NODE_DOMAIN, NODE_SLOT, NODE_DOMAIN_SLOT = "domain", "slot", "domain_slot"


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class SchemaDef:
    domains: tuple[str, ...]
    slots_per_domain: dict
    overlap_pairs: tuple[tuple[str, str], ...] = ()

    @classmethod
    def from_dict(cls, raw: dict) -> "SchemaDef":
        try:
            domains = tuple(raw["domains"])
            slots = {d: tuple(raw["slots"][d]) for d in domains}
        except KeyError as exc:
            raise SchemaError(f"schema is missing {exc}") from None
        pairs = tuple(tuple(p) for p in raw.get("overlap_pairs", ()))
        schema = cls(domains, slots, pairs)
        schema.validate()
        return schema

    def to_dict(self) -> dict:
        return {
            "domains": list(self.domains),
            "slots": {d: list(s) for d, s in self.slots_per_domain.items()},
            "overlap_pairs": [list(p) for p in self.overlap_pairs],
        }

    def validate(self) -> None:
        if not self.domains:
            raise SchemaError("schema declares no domains")
        if len(set(self.domains)) != len(self.domains):
            raise SchemaError("duplicate domain names")
        known = set()
        for d in self.domains:
            slots = self.slots_per_domain.get(d, ())
            if len(set(slots)) != len(slots):
                raise SchemaError(f"duplicate slot names in domain {d!r}")
            known.update(slots)
        for pair in self.overlap_pairs:
            if len(pair) != 2 or pair[0] == pair[1]:
                raise SchemaError(f"overlap pair must name two different slots: {pair!r}")
            for s in pair:
                if s not in known:
                    raise SchemaError(f"overlap pair names unknown slot {s!r}")

    @property
    def domain_slots(self) -> list[tuple[str, str]]:
        return [(d, s) for d in self.domains for s in self.slots_per_domain[d]]


def load_schema(path) -> SchemaDef:
    with open(path, encoding="utf-8") as fh:
        return SchemaDef.from_dict(json.load(fh))


def bundled_schema_path(name: str) -> Path:
    """Path of a schema shipped with the package: ``multiwoz21`` or ``toy``."""
    return Path(str(resources.files("csfn_dst") / "data" / f"{name}_schema.json"))


@dataclass(frozen=True)
class SchemaGraph:
    schema: SchemaDef
    domains: tuple[str, ...]
    slots: tuple[str, ...]
    domain_slots: tuple[tuple[str, str], ...]
    edges: frozenset = field(repr=False)

    @property
    def M(self) -> int:
        return len(self.domains)

    @property
    def N(self) -> int:
        return len(self.slots)

    @property
    def J(self) -> int:
        return len(self.domain_slots)

    @property
    def n_nodes(self) -> int:
        return self.M + self.N + self.J

    def domain_index(self, domain: str) -> int:
        return self.domains.index(domain)

    def slot_index(self, slot: str) -> int:
        return self.M + self.slots.index(slot)

    def pair_index(self, domain: str, slot: str) -> int:
        """Zero-based domain-slot ordinal (0..J-1)."""
        return self.domain_slots.index((domain, slot))

    def node_names(self) -> list[str]:
        names = list(self.domains) + list(self.slots)
        names += [f"{d} {s}" for d, s in self.domain_slots]
        return names

    def node_types(self) -> list[str]:
        return [NODE_DOMAIN] * self.M + [NODE_SLOT] * self.N + [NODE_DOMAIN_SLOT] * self.J


def build_schema_graph(schema: SchemaDef) -> SchemaGraph:
    schema.validate()
    domains = tuple(schema.domains)
    slots: list[str] = []
    for d in domains:
        for s in schema.slots_per_domain[d]:
            if s not in slots:
                slots.append(s)
    pairs = tuple(schema.domain_slots)
    M, N = len(domains), len(slots)
    edges = set()

    def link(i, j):
        edges.add((min(i, j), max(i, j)))

    for i, j in combinations(range(M), 2):
        link(i, j)
    for di, d in enumerate(domains):
        for s in schema.slots_per_domain[d]:
            link(M + slots.index(s), di)
    for k, (d, s) in enumerate(pairs):
        o = M + N + k
        link(domains.index(d), o)
        link(M + slots.index(s), o)
    for a, b in schema.overlap_pairs:
        link(M + slots.index(a), M + slots.index(b))
    return SchemaGraph(schema, domains, tuple(slots), pairs, frozenset(edges))


def adjacency_matrix(g: SchemaGraph) -> np.ndarray:
    """Symmetric 0/1 matrix over all nodes, with ones on the diagonal."""
    n = g.n_nodes
    a = np.eye(n, dtype=np.int8)
    for i, j in g.edges:
        a[i, j] = a[j, i] = 1
    return a


def domain_slot_row_index(g: SchemaGraph, j: int) -> int:
    """Zero-based row of the j-th (1-based) domain-slot node."""
    if not 1 <= j <= g.J:
        raise IndexError(f"domain-slot ordinal {j} outside 1..{g.J}")
    return g.M + g.N + j - 1


def state_adjacency(length: int, triplet_spans) -> np.ndarray:
    """Adjacency over a serialized previous state.

    Token 0 is the state's [CLS] and links to everything; every other token
    links only to tokens of its own triplet. ``triplet_spans`` holds
    half-open ``(start, end)`` token ranges.
    """
    a = np.eye(length, dtype=np.int8)
    a[0, :] = 1
    a[:, 0] = 1
    for start, end in triplet_spans:
        a[start:end, start:end] = 1
    return a
