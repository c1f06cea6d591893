"""Global-local aggregation embeddings.

Relation features are averaged head/tail feature concatenations; each entity
gets a signed average of its relations' features, fused with its own feature
through a residual ReLU layer, then two highway-gated graph convolutions over
the combined graph produce the final embeddings.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from otalign import kernels
from otalign.kg import KgPair, build_normalized_adjacency, occurrence_counts, signed_incidence

STAGES = ("relation_aggregated", "layer2", "final")


class UnusedRelationWarning(UserWarning):
    pass


@dataclass
class ModelParams:
    w1: np.ndarray  # (d, 3d)
    b1: np.ndarray  # (d,)
    w_gcn2: np.ndarray
    w_gcn3: np.ndarray
    w_gate2: np.ndarray
    w_gate3: np.ndarray
    b_gate2: np.ndarray
    b_gate3: np.ndarray

    @property
    def dim(self) -> int:
        return self.b1.shape[0]

    def names(self):
        return [f.name for f in fields(self)]

    def items(self):
        return [(name, getattr(self, name)) for name in self.names()]

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.items()})

    def check(self):
        d = self.dim
        shapes = {"w1": (d, 3 * d), "b1": (d,), "b_gate2": (d,), "b_gate3": (d,)}
        for name, value in self.items():
            want = shapes.get(name, (d, d))
            if value.shape != want:
                raise ValueError(f"{name} has shape {value.shape}, expected {want}")
            if not np.isfinite(value).all():
                raise ValueError(f"{name} has non-finite entries")

    @classmethod
    def zeros(cls, dim: int) -> "ModelParams":
        sq = lambda: np.zeros((dim, dim))  # noqa: E731
        return cls(np.zeros((dim, 3 * dim)), np.zeros(dim), sq(), sq(), sq(), sq(),
                   np.zeros(dim), np.zeros(dim))

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator, gate_bias: float = -1.0) -> "ModelParams":
        """Glorot-uniform weights, zero biases, gate biases at ``gate_bias``."""

        def glorot(fan_out, fan_in):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_out, fan_in))

        return cls(
            w1=glorot(dim, 3 * dim),
            b1=np.zeros(dim),
            w_gcn2=glorot(dim, dim),
            w_gcn3=glorot(dim, dim),
            w_gate2=glorot(dim, dim),
            w_gate3=glorot(dim, dim),
            b_gate2=np.full(dim, gate_bias),
            b_gate3=np.full(dim, gate_bias),
        )


def relation_features(kg: KgPair) -> np.ndarray:
    """Mean of ``[x_head || x_tail]`` over each relation's triplets.

    Rows follow global relation ids; relations without triplets get a zero row
    and trigger an :class:`UnusedRelationWarning`.
    """
    t = kg.global_triplets()
    x = kg.features
    n_rel = kg.num_relations
    pairs = np.concatenate([x[t[:, 0]], x[t[:, 2]]], axis=1)
    sums = np.zeros((n_rel, 2 * kg.dim))
    np.add.at(sums, t[:, 1], pairs)
    counts = np.bincount(t[:, 1], minlength=n_rel).astype(np.float64)
    unused = np.flatnonzero(counts == 0)
    if unused.size:
        warnings.warn(f"{unused.size} relation(s) have no triplets: {unused[:10].tolist()}",
                      UnusedRelationWarning, stacklevel=2)
    return sums / np.maximum(counts, 1.0)[:, None]


def entity_relation_context(kg: KgPair, rel_features: np.ndarray) -> np.ndarray:
    """Signed, occurrence-weighted average of each entity's relation features."""
    incidence = signed_incidence(kg)
    counts = occurrence_counts(kg).astype(np.float64)
    summed = np.asarray(incidence @ rel_features)
    return summed / np.maximum(counts, 1.0)[:, None]


def relu(x):
    return np.maximum(x, 0.0)


def global_relation_aggregation(features, context, params: ModelParams) -> np.ndarray:
    pre = np.concatenate([features, context], axis=1) @ params.w1.T + params.b1
    return relu(pre) + features


def gcn_highway_layer(h_in, adjacency, w_gcn, w_gate, b_gate) -> np.ndarray:
    transformed = relu(adjacency @ h_in @ w_gcn)
    gate = expit(h_in @ w_gate + b_gate)
    return gate * transformed + (1.0 - gate) * h_in


@dataclass(frozen=True)
class GraphInputs:
    """Parameter-free quantities of one KG pair, computed once."""

    features: np.ndarray
    context: np.ndarray
    adjacency: sp.csr_matrix
    n1: int

    @classmethod
    def from_pair(cls, kg: KgPair) -> "GraphInputs":
        rel = relation_features(kg)
        return cls(kg.features, entity_relation_context(kg, rel),
                   build_normalized_adjacency(kg), kg.n1)


@dataclass
class ForwardCache:
    x_cat: np.ndarray
    pre1: np.ndarray
    h1: np.ndarray
    layers: list  # per gcn layer: (h_in, propagated, pre, transformed, gate)
    h3: np.ndarray


def _layer_with_cache(h_in, adjacency, w_gcn, w_gate, b_gate):
    propagated = np.asarray(adjacency @ h_in)
    pre = propagated @ w_gcn
    transformed = relu(pre)
    gate = expit(h_in @ w_gate + b_gate)
    out = gate * transformed + (1.0 - gate) * h_in
    return out, (h_in, propagated, pre, transformed, gate)


def forward_cache(inputs: GraphInputs, params: ModelParams) -> ForwardCache:
    x_cat = np.concatenate([inputs.features, inputs.context], axis=1)
    pre1 = x_cat @ params.w1.T + params.b1
    h1 = relu(pre1) + inputs.features
    h2, c2 = _layer_with_cache(h1, inputs.adjacency, params.w_gcn2, params.w_gate2, params.b_gate2)
    h3, c3 = _layer_with_cache(h2, inputs.adjacency, params.w_gcn3, params.w_gate3, params.b_gate3)
    return ForwardCache(x_cat, pre1, h1, [c2, c3], h3)


def forward(kg: KgPair | GraphInputs, params: ModelParams) -> np.ndarray:
    """Final entity embeddings, one row per global entity."""
    inputs = kg if isinstance(kg, GraphInputs) else GraphInputs.from_pair(kg)
    return forward_cache(inputs, params).h3


def forward_stages(kg: KgPair | GraphInputs, params: ModelParams) -> dict[str, np.ndarray]:
    inputs = kg if isinstance(kg, GraphInputs) else GraphInputs.from_pair(kg)
    cache = forward_cache(inputs, params)
    return dict(zip(STAGES, (cache.h1, cache.layers[1][0], cache.h3)))


def backward(cache: ForwardCache, adjacency, params: ModelParams, grad_h3) -> ModelParams:
    """Gradients of a scalar loss w.r.t. every parameter, given dL/dH3.

    ReLU uses subgradient 0 at exactly zero pre-activation.
    """
    grads = {}
    grad_h = grad_h3
    for layer, (h_in, propagated, pre, transformed, gate) in zip((3, 2), reversed(cache.layers)):
        w_gcn = getattr(params, f"w_gcn{layer}")
        w_gate = getattr(params, f"w_gate{layer}")
        g_pre = grad_h * gate * (pre > 0)
        g_gate_pre = grad_h * (transformed - h_in) * gate * (1.0 - gate)
        grads[f"w_gcn{layer}"] = propagated.T @ g_pre
        grads[f"w_gate{layer}"] = h_in.T @ g_gate_pre
        grads[f"b_gate{layer}"] = g_gate_pre.sum(axis=0)
        # adjacency is symmetric
        grad_h = (grad_h * (1.0 - gate)
                  + g_gate_pre @ w_gate.T
                  + np.asarray(adjacency @ (g_pre @ w_gcn.T)))
    g_pre1 = grad_h * (cache.pre1 > 0)
    grads["w1"] = g_pre1.T @ cache.x_cat
    grads["b1"] = g_pre1.sum(axis=0)
    return ModelParams(**grads)


def embedding_distance(h_i, h_j) -> float:
    """L1 distance between two embeddings."""
    h_i = np.asarray(h_i, dtype=np.float64)
    h_j = np.asarray(h_j, dtype=np.float64)
    if h_i.shape != h_j.shape:
        raise ValueError(f"shape mismatch: {h_i.shape} vs {h_j.shape}")
    return float(np.abs(h_i - h_j).sum())


def pairwise_distances(emb_a, emb_b, n_threads: int = 1) -> np.ndarray:
    return kernels.l1_cdist(emb_a, emb_b, n_threads)


def save_embeddings(matrix, path, n1: int, stage: str = "final"):
    from otalign.kg import save_matrix

    n = np.asarray(matrix).shape[0]
    save_matrix(matrix, path, header=f"n1={n1} n2={n - n1} stage={stage}")


def load_embeddings(path) -> tuple[np.ndarray, int | None]:
    """Read an embedding dump; returns the matrix and ``n1`` from its header."""
    from otalign.kg import KgFormatError

    n1 = None
    rows = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("n1="):
                        n1 = int(tok[3:])
                continue
            parts = line.split()
            try:
                idx = int(parts[0])
                vals = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise KgFormatError(f"{path}:{lineno}: {exc}") from None
            if dim is None:
                dim = len(vals)
            if len(vals) != dim or dim == 0:
                raise KgFormatError(f"{path}:{lineno}: dimension {len(vals)} does not match {dim}")
            if idx in rows:
                raise KgFormatError(f"{path}:{lineno}: duplicate row {idx}")
            rows[idx] = vals
    if not rows:
        raise KgFormatError(f"{path}: empty embedding file")
    if sorted(rows) != list(range(len(rows))):
        raise KgFormatError(f"{path}: rows are not 0..{len(rows) - 1}")
    return np.array([rows[i] for i in range(len(rows))]), n1
