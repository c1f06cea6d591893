"""Hit@k and MRR over held-out alignment pairs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from otalign import kernels


@dataclass
class EvalReport:
    hits: dict[int, float]
    mrr: float
    ranks: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        out = {f"hit@{k}": self.hits[k] for k in sorted(self.hits)}
        out["mrr"] = self.mrr
        out["n"] = int(self.ranks.size)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)

    def format(self) -> str:
        lines = [f"hit@{k} {self.hits[k]:.4f}" for k in sorted(self.hits)]
        lines.append(f"mrr {self.mrr:.4f}")
        return "\n".join(lines)


def rank_targets(embeddings, test_pairs, n1: int, candidates=None, n_threads: int = 1) -> np.ndarray:
    """1-based rank of each true target among the candidate G2 entities.

    Distances are L1; ties are broken by the smaller entity index. By default
    the candidates are the test targets themselves.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    pairs = np.asarray(test_pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.shape[0] == 0:
        raise ValueError("no test pairs")
    n2 = emb.shape[0] - n1
    if pairs[:, 0].min() < 0 or pairs[:, 0].max() >= n1:
        raise ValueError("test source entity has no embedding")
    if pairs[:, 1].min() < 0 or pairs[:, 1].max() >= n2:
        raise ValueError("test target entity has no embedding")
    if candidates is None:
        candidates = np.unique(pairs[:, 1])
    candidates = np.sort(np.asarray(candidates, dtype=np.int64))
    dist = kernels.l1_cdist(emb[pairs[:, 0]], emb[n1 + candidates], n_threads)
    # true distances come from the same kernel so rounding cannot reorder ties
    pos = np.minimum(np.searchsorted(candidates, pairs[:, 1]), candidates.size - 1)
    inside = candidates[pos] == pairs[:, 1]
    true_d = np.where(inside, dist[np.arange(len(pairs)), pos], 0.0)
    for p in np.flatnonzero(~inside):
        i, j = pairs[p]
        true_d[p] = kernels.l1_cdist(emb[i:i + 1], emb[n1 + j:n1 + j + 1])[0, 0]
    closer = (dist < true_d[:, None]).sum(axis=1)
    tied_before = ((dist == true_d[:, None]) & (candidates[None, :] < pairs[:, 1:2])).sum(axis=1)
    return 1 + closer + tied_before


def evaluate(embeddings, test_pairs, n1: int, ks=(1, 10), candidates=None,
             n_threads: int = 1) -> EvalReport:
    ranks = rank_targets(embeddings, test_pairs, n1, candidates, n_threads)
    hits = {k: float(np.mean(ranks <= k)) for k in ks}
    return EvalReport(hits, float(np.mean(1.0 / ranks)), ranks)
