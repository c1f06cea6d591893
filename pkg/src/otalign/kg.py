"""Knowledge-graph pair model, text ingestion and graph index structures.

Entity rows are global: all G1 entities first, then all G2 entities, so the
global row of a G2 entity is ``n1 + local_index``. Relations follow the same
convention (``r1 + local_relation``).
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp


class KgFormatError(ValueError):
    """Raised for malformed or inconsistent input files."""


class Side(enum.IntEnum):
    G1 = 1
    G2 = 2


class EntityRef(NamedTuple):
    side: Side
    index: int


class Triplet(NamedTuple):
    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class KnowledgeGraph:
    entity_count: int
    relation_count: int
    triplets: np.ndarray  # (n, 3) int64 rows of head, relation, tail
    entity_names: list[str] | None = None
    relation_names: list[str] | None = None

    def __post_init__(self):
        t = np.asarray(self.triplets, dtype=np.int64).reshape(-1, 3)
        if t.size:
            if t[:, [0, 2]].min() < 0 or t[:, [0, 2]].max() >= self.entity_count:
                raise KgFormatError("triplet references an entity outside the graph")
            if t[:, 1].min() < 0 or t[:, 1].max() >= self.relation_count:
                raise KgFormatError("triplet references a relation outside the graph")
            t = np.unique(t, axis=0)
        t.setflags(write=False)
        object.__setattr__(self, "triplets", t)
        names = {n: i for i, n in enumerate(self.entity_names or [])}
        object.__setattr__(self, "_name_index", names)

    def __len__(self):
        return len(self.triplets)

    def iter_triplets(self):
        for h, r, t in self.triplets:
            yield Triplet(int(h), int(r), int(t))

    def entity_id(self, token: str) -> int:
        """Resolve a file token (integer id or interned name) to a local index."""
        if token in self._name_index:
            return self._name_index[token]
        try:
            idx = int(token)
        except ValueError:
            raise KgFormatError(f"unknown entity: {token}") from None
        if not 0 <= idx < self.entity_count:
            raise KgFormatError(f"entity out of range: {token}")
        return idx


@dataclass(frozen=True)
class KgPair:
    g1: KnowledgeGraph
    g2: KnowledgeGraph
    features: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(self.features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != self.n1 + self.n2:
            raise KgFormatError(
                f"feature matrix has shape {x.shape}, expected ({self.n1 + self.n2}, d)"
            )
        if not np.isfinite(x).all():
            raise KgFormatError("feature matrix contains NaN or Inf")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)

    @property
    def n1(self) -> int:
        return self.g1.entity_count

    @property
    def n2(self) -> int:
        return self.g2.entity_count

    @property
    def num_entities(self) -> int:
        return self.n1 + self.n2

    @property
    def num_relations(self) -> int:
        return self.g1.relation_count + self.g2.relation_count

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def global_row(self, ref: EntityRef) -> int:
        return ref.index if ref.side == Side.G1 else self.n1 + ref.index

    def global_triplets(self) -> np.ndarray:
        """All triplets with global entity rows and global relation ids."""
        t2 = self.g2.triplets + np.array([self.n1, self.g1.relation_count, self.n1])
        return np.concatenate([self.g1.triplets, t2]).astype(np.int64)

    def with_features(self, features) -> "KgPair":
        return KgPair(self.g1, self.g2, features)


@dataclass
class AlignmentSet:
    """Prior seeds, scored pseudo labels and held-out test pairs.

    Pairs are ``(g1_local, g2_local)`` tuples.
    """

    prior: list[tuple[int, int]] = field(default_factory=list)
    pseudo: dict[tuple[int, int], float] = field(default_factory=dict)
    test: list[tuple[int, int]] = field(default_factory=list)

    def validate(self):
        prior = set(self.prior)
        if len(prior) != len(self.prior):
            raise ValueError("duplicate prior pair")
        if prior & set(self.pseudo):
            raise ValueError("pair is both prior and pseudo")
        pairs = list(prior) + list(self.pseudo)
        lefts = [i for i, _ in pairs]
        rights = [j for _, j in pairs]
        if len(set(lefts)) != len(lefts) or len(set(rights)) != len(rights):
            raise ValueError("alignment is not one-to-one")
        for pair, score in self.pseudo.items():
            if not 0.0 < score <= 1.0:
                raise ValueError(f"reliability {score} of {pair} outside (0, 1]")

    def reliability(self, pair) -> float:
        if pair in self.pseudo:
            return self.pseudo[pair]
        return 1.0

    def labelled(self) -> list[tuple[int, int]]:
        return list(self.prior) + sorted(self.pseudo)

    def unaligned(self, n1: int, n2: int) -> tuple[np.ndarray, np.ndarray]:
        """Entities of each side not covered by prior or pseudo pairs."""
        used1 = np.zeros(n1, dtype=bool)
        used2 = np.zeros(n2, dtype=bool)
        for i, j in self.labelled():
            used1[i] = True
            used2[j] = True
        return np.flatnonzero(~used1), np.flatnonzero(~used2)


# ---------------------------------------------------------------- ingestion


def _read_lines(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield lineno, line


def load_triplets(path, side: Side = Side.G1, entity_count: int | None = None) -> KnowledgeGraph:
    """Parse a triplet file into a graph with dense indices.

    Lines hold ``head relation tail`` separated by tabs or whitespace. If every
    token is an integer the ids are used as indices directly; otherwise all
    tokens are treated as names and interned in first-seen order. A line with
    a single token declares a standalone entity.
    """
    rows = []
    for lineno, line in _read_lines(path):
        parts = line.split("\t") if "\t" in line else line.split()
        parts = [p.strip() for p in parts]
        if len(parts) not in (1, 3) or not all(parts):
            raise KgFormatError(
                f"{path}:{lineno}: expected 'head relation tail', got {len(parts)} field(s)"
            )
        rows.append((lineno, parts))
    if not rows:
        raise KgFormatError(f"{path}: empty triplet file")

    def _is_int(tok):
        try:
            int(tok)
        except ValueError:
            return False
        return True

    numeric = all(_is_int(tok) for _, parts in rows for tok in parts)
    triplets = []
    standalone = []
    if numeric:
        for lineno, parts in rows:
            ids = [int(tok) for tok in parts]
            if min(ids) < 0:
                raise KgFormatError(f"{path}:{lineno}: negative id")
            if len(ids) == 1:
                standalone.append(ids[0])
            else:
                triplets.append(ids)
        t = np.array(triplets, dtype=np.int64).reshape(-1, 3)
        n_ent = max([*t[:, [0, 2]].ravel().tolist(), *standalone, -1]) + 1
        n_rel = int(t[:, 1].max()) + 1 if len(t) else 0
        ent_names = rel_names = None
    else:
        ent_index: dict[str, int] = {}
        rel_index: dict[str, int] = {}
        for lineno, parts in rows:
            if len(parts) == 1:
                standalone.append(ent_index.setdefault(parts[0], len(ent_index)))
                continue
            h, r, tl = parts
            hi = ent_index.setdefault(h, len(ent_index))
            ri = rel_index.setdefault(r, len(rel_index))
            ti = ent_index.setdefault(tl, len(ent_index))
            triplets.append((hi, ri, ti))
        t = np.array(triplets, dtype=np.int64).reshape(-1, 3)
        n_ent, n_rel = len(ent_index), len(rel_index)
        ent_names, rel_names = list(ent_index), list(rel_index)
    if entity_count is not None:
        if entity_count < n_ent:
            raise KgFormatError(f"{path}: {n_ent} entities exceed declared {entity_count}")
        n_ent = entity_count
    return KnowledgeGraph(n_ent, n_rel, t, ent_names, rel_names)


def save_triplets(graph: KnowledgeGraph, path):
    """Write integer triplets, declaring entities no triplet touches."""
    touched = np.zeros(graph.entity_count, dtype=bool)
    touched[graph.triplets[:, 0]] = True
    touched[graph.triplets[:, 2]] = True
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in graph.triplets:
            fh.write(f"{h}\t{r}\t{t}\n")
        for e in np.flatnonzero(~touched):
            fh.write(f"{e}\n")


def load_features(path, num_rows: int, dim: int | None = None) -> np.ndarray:
    """Read ``entity_id v1 ... vd`` lines into a ``(num_rows, d)`` matrix."""
    out = None
    seen = np.zeros(num_rows, dtype=bool)
    for lineno, line in _read_lines(path):
        parts = line.split()
        try:
            idx = int(parts[0])
            values = np.array([float(v) for v in parts[1:]])
        except ValueError as exc:
            raise KgFormatError(f"{path}:{lineno}: {exc}") from None
        if out is None:
            dim = dim if dim is not None else len(values)
            if dim < 1:
                raise KgFormatError(f"{path}:{lineno}: no feature values")
            out = np.zeros((num_rows, dim))
        if len(values) != dim:
            raise KgFormatError(
                f"{path}:{lineno}: dimension {len(values)} does not match {dim}"
            )
        if not 0 <= idx < num_rows:
            raise KgFormatError(f"{path}:{lineno}: entity {idx} outside 0..{num_rows - 1}")
        if seen[idx]:
            raise KgFormatError(f"duplicate feature row: {idx}")
        seen[idx] = True
        out[idx] = values
    if out is None:
        raise KgFormatError(f"{path}: empty feature file")
    missing = np.flatnonzero(~seen)
    if missing.size:
        raise KgFormatError(f"missing feature row: {missing[0]}")
    if not np.isfinite(out).all():
        raise KgFormatError(f"{path}: non-finite feature value")
    return out


def save_matrix(matrix, path, header: str | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for i, row in enumerate(np.asarray(matrix)):
            fh.write(str(i) + " " + " ".join(repr(float(v)) for v in row) + "\n")


def save_features(features, path):
    save_matrix(features, path)


def load_pairs(path, kg: KgPair | None = None) -> list[tuple[int, int]]:
    """Read ``g1_entity<TAB>g2_entity`` alignment pairs as local indices."""
    pairs = []
    for lineno, line in _read_lines(path):
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2:
            raise KgFormatError(f"{path}:{lineno}: expected two entity ids")
        try:
            if kg is not None:
                pair = (kg.g1.entity_id(parts[0].strip()), kg.g2.entity_id(parts[1].strip()))
            else:
                pair = (int(parts[0]), int(parts[1]))
        except (KgFormatError, ValueError) as exc:
            raise KgFormatError(f"{path}:{lineno}: {exc}") from None
        pairs.append(pair)
    return pairs


def save_pairs(pairs, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in pairs:
            fh.write(f"{i}\t{j}\n")


def load_kg_pair(triplets1, triplets2, features) -> KgPair:
    g1 = load_triplets(triplets1, Side.G1)
    g2 = load_triplets(triplets2, Side.G2)
    x = load_features(features, g1.entity_count + g2.entity_count)
    return KgPair(g1, g2, x)


# ---------------------------------------------------------------- indexes


def build_normalized_adjacency(kg: KgPair) -> sp.csr_matrix:
    """Symmetrically normalised ``D^-1/2 (A + I) D^-1/2`` over both graphs.

    Triplets become undirected edges; parallel edges collapse to one entry.
    """
    n = kg.num_entities
    t = kg.global_triplets()
    heads, tails = t[:, 0], t[:, 2]
    rows = np.concatenate([heads, tails, np.arange(n)])
    cols = np.concatenate([tails, heads, np.arange(n)])
    adj = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    adj.data[:] = 1.0  # duplicates were summed
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
    return (inv_sqrt @ adj @ inv_sqrt).tocsr()


def neighbor_relations(kg: KgPair, entity: int) -> list[tuple[int, int]]:
    """Signed relation occurrences of a global entity row.

    ``+1`` where the entity is the head (predecessor), ``-1`` where it is the
    tail (successor); one entry per triplet occurrence, in triplet order.
    """
    out = []
    for h, r, t in kg.global_triplets():
        if h == entity:
            out.append((int(r), 1))
        if t == entity:
            out.append((int(r), -1))
    return out


def signed_incidence(kg: KgPair) -> sp.csr_matrix:
    """``(entities, relations)`` matrix of summed +1/-1 relation occurrences."""
    t = kg.global_triplets()
    rows = np.concatenate([t[:, 0], t[:, 2]])
    cols = np.concatenate([t[:, 1], t[:, 1]])
    vals = np.concatenate([np.ones(len(t)), -np.ones(len(t))])
    return sp.csr_matrix((vals, (rows, cols)), shape=(kg.num_entities, kg.num_relations))


def occurrence_counts(kg: KgPair) -> np.ndarray:
    """Number of signed relation occurrences per global entity row."""
    t = kg.global_triplets()
    return np.bincount(np.concatenate([t[:, 0], t[:, 2]]), minlength=kg.num_entities)


def entity_neighbors(graph: KnowledgeGraph) -> sp.csr_matrix:
    """Binary undirected one-hop neighbour matrix without self loops."""
    n = graph.entity_count
    t = graph.triplets
    rows = np.concatenate([t[:, 0], t[:, 2]])
    cols = np.concatenate([t[:, 2], t[:, 0]])
    keep = rows != cols
    m = sp.csr_matrix((np.ones(keep.sum()), (rows[keep], cols[keep])), shape=(n, n))
    m.data[:] = 1.0
    return m


def entity_relation_sets(graph: KnowledgeGraph) -> sp.csr_matrix:
    """Binary ``(entities, relations)`` matrix: entity touches relation."""
    t = graph.triplets
    rows = np.concatenate([t[:, 0], t[:, 2]])
    cols = np.concatenate([t[:, 1], t[:, 1]])
    m = sp.csr_matrix(
        (np.ones(rows.size), (rows, cols)), shape=(graph.entity_count, graph.relation_count)
    )
    m.data[:] = 1.0
    return m
