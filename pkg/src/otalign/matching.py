"""Rectified distances and conflict-free pseudo labeling.

Cost matrices are indexed by local entity ids: rows are G1 entities, columns
G2 entities. The greedy matcher repeatedly lets every unmatched source pick
its nearest free target below the threshold, resolves contested targets in
favour of the cheaper pair (then the smaller source index), and retires the
matched entities until a round adds nothing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from otalign import kernels
from otalign.embedding import relation_features
from otalign.kg import KgPair, entity_neighbors, entity_relation_sets

log = logging.getLogger(__name__)

ORACLE_MAX_SOURCES = 10


@dataclass(frozen=True)
class RectifyConfig:
    lam: float = 10.0
    theta: float = 4.0
    max_rounds: int = 50

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if not self.theta > 0:
            raise ValueError("theta must be positive")


@dataclass
class CandidateSet:
    pairs: list[tuple[int, int, float]]
    e1_active: np.ndarray
    e2_active: np.ndarray


@dataclass
class TransportPlan:
    matches: list[tuple[int, int]]
    total_cost: float
    costs: list[float] = field(default_factory=list)
    rounds: int = 0
    capped: bool = False

    def weight(self, theta: float) -> float:
        """Threshold-shifted weight: sum of ``theta - cost`` over matches."""
        return float(sum(theta - c for c in self.costs))

    def __len__(self):
        return len(self.matches)


# ------------------------------------------------------------ similarity


def match_relations(rel_features: np.ndarray, r1: int, used=None) -> sp.csr_matrix:
    """Mutual L1 nearest neighbours between G1 and G2 relation features.

    Returns a binary ``(r1, r2)`` matrix. Relations flagged unused never match.
    """
    r_total = rel_features.shape[0]
    r2 = r_total - r1
    used = np.ones(r_total, dtype=bool) if used is None else np.asarray(used, dtype=bool)
    idx1 = np.flatnonzero(used[:r1])
    idx2 = np.flatnonzero(used[r1:])
    out = sp.lil_matrix((r1, r2))
    if idx1.size and idx2.size:
        dist = kernels.l1_cdist(rel_features[idx1], rel_features[r1 + idx2])
        best12 = dist.argmin(axis=1)
        best21 = dist.argmin(axis=0)
        for a, b in enumerate(best12):
            if best21[b] == a:
                out[idx1[a], idx2[b]] = 1.0
    return out.tocsr()


class SimilarityIndex:
    """Neighbourhood structures needed to score entity pairs.

    The score of ``(e_i, e_j)`` is ``s_ent + s_rel``: the Dice-normalised count
    of aligned neighbour pairs plus the Dice-normalised count of matched
    relation pairs among the two entities' relations. Each term lies in
    [0, 1] because alignments and relation matches are one-to-one.
    """

    def __init__(self, kg: KgPair, rel_features: np.ndarray | None = None):
        if rel_features is None:
            rel_features = relation_features(kg)
        self.n1, self.n2 = kg.n1, kg.n2
        self.nbr1 = entity_neighbors(kg.g1)
        self.nbr2 = entity_neighbors(kg.g2)
        self.rels1 = entity_relation_sets(kg.g1)
        self.rels2 = entity_relation_sets(kg.g2)
        used = np.zeros(kg.num_relations, dtype=bool)
        used[kg.global_triplets()[:, 1]] = True
        self.rel_match = match_relations(rel_features, kg.g1.relation_count, used)
        self.deg1 = np.asarray(self.nbr1.sum(axis=1)).ravel()
        self.deg2 = np.asarray(self.nbr2.sum(axis=1)).ravel()
        self.nrel1 = np.asarray(self.rels1.sum(axis=1)).ravel()
        self.nrel2 = np.asarray(self.rels2.sum(axis=1)).ravel()
        # relation part does not depend on the alignment
        self._rel_counts = (self.rels1 @ self.rel_match @ self.rels2.T).tocsr()

    def matrix(self, aligned, rows=None, cols=None) -> np.ndarray:
        """Dense similarity block for ``rows x cols`` given aligned pairs."""
        rows = np.arange(self.n1) if rows is None else np.asarray(rows, dtype=np.int64)
        cols = np.arange(self.n2) if cols is None else np.asarray(cols, dtype=np.int64)
        aligned = list(aligned)
        if aligned:
            a = np.array(aligned, dtype=np.int64)
            amat = sp.csr_matrix((np.ones(len(a)), (a[:, 0], a[:, 1])), shape=(self.n1, self.n2))
            ent = (self.nbr1[rows] @ amat @ self.nbr2[cols].T).toarray()
        else:
            ent = np.zeros((rows.size, cols.size))
        rel = self._rel_counts[rows][:, cols].toarray()
        return (_dice(ent, self.deg1[rows], self.deg2[cols])
                + _dice(rel, self.nrel1[rows], self.nrel2[cols]))


def _dice(count, size_a, size_b):
    denom = size_a[:, None] + size_b[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denom > 0, 2.0 * count / np.where(denom > 0, denom, 1.0), 0.0)


def neighborhood_match_similarity(kg: KgPair, aligned, e_i: int, e_j: int,
                                  rel_match: sp.spmatrix | None = None) -> float:
    """Similarity of one pair, computed directly from neighbour sets."""
    if rel_match is None:
        rel = relation_features(kg)
        used = np.zeros(kg.num_relations, dtype=bool)
        used[kg.global_triplets()[:, 1]] = True
        rel_match = match_relations(rel, kg.g1.relation_count, used)
    aligned = set(map(tuple, aligned))

    def nbrs(graph, e):
        t = graph.triplets
        out = set(t[t[:, 0] == e, 2].tolist()) | set(t[t[:, 2] == e, 0].tolist())
        out.discard(e)
        return out

    def rels(graph, e):
        t = graph.triplets
        return set(t[(t[:, 0] == e) | (t[:, 2] == e), 1].tolist())

    n_i, n_j = nbrs(kg.g1, e_i), nbrs(kg.g2, e_j)
    r_i, r_j = rels(kg.g1, e_i), rels(kg.g2, e_j)
    s = 0.0
    if n_i or n_j:
        hits = sum(1 for u in n_i for v in n_j if (u, v) in aligned)
        s += 2.0 * hits / (len(n_i) + len(n_j))
    if r_i or r_j:
        rm = rel_match.tocsr()
        hits = sum(1 for r in r_i for q in r_j if rm[r, q] != 0)
        s += 2.0 * hits / (len(r_i) + len(r_j))
    return s


def rectified_distance(d, s, config: RectifyConfig):
    return d - config.lam * s


# -------------------------------------------------------------- labeling


def naive_align(rectified_row, targets=None) -> int:
    """Target with the smallest rectified distance; ties go to the smaller index."""
    row = np.asarray(rectified_row, dtype=np.float64)
    targets = np.arange(row.size) if targets is None else np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        raise ValueError("no unaligned target entities")
    order = np.argsort(targets, kind="stable")
    targets = targets[order]
    return int(targets[np.argmin(row[targets])])


def _subsets(rectified, e1, e2):
    n, m = rectified.shape
    e1 = np.arange(n) if e1 is None else np.sort(np.asarray(e1, dtype=np.int64))
    e2 = np.arange(m) if e2 is None else np.sort(np.asarray(e2, dtype=np.int64))
    return e1, e2


def generate_candidates(rectified, unaligned_e1=None, unaligned_e2=None,
                        config: RectifyConfig = RectifyConfig()) -> CandidateSet:
    """All cross pairs with rectified distance below theta."""
    rectified = np.asarray(rectified, dtype=np.float64)
    e1, e2 = _subsets(rectified, unaligned_e1, unaligned_e2)
    sub = rectified[np.ix_(e1, e2)]
    ii, jj = np.nonzero(sub < config.theta)
    pairs = [(int(e1[a]), int(e2[b]), float(sub[a, b])) for a, b in zip(ii, jj)]
    return CandidateSet(pairs, e1[np.unique(ii)], e2[np.unique(jj)])


def greedy_ot_pseudo_label(rectified, unaligned_e1=None, unaligned_e2=None,
                           config: RectifyConfig = RectifyConfig()) -> TransportPlan:
    """Conflict-free pseudo labels from the greedy transport heuristic.

    The smaller active candidate side acts as the transport source.
    """
    rectified = np.asarray(rectified, dtype=np.float64)
    cands = generate_candidates(rectified, unaligned_e1, unaligned_e2, config)
    src, dst = cands.e1_active, cands.e2_active
    if src.size == 0:
        return TransportPlan([], 0.0)
    cost = rectified[np.ix_(src, dst)]
    swapped = src.size > dst.size
    if swapped:
        rows, cols, rounds, capped = kernels.greedy_match(np.ascontiguousarray(cost.T),
                                                          config.theta, config.max_rounds)
        rows, cols = cols, rows
    else:
        rows, cols, rounds, capped = kernels.greedy_match(cost, config.theta, config.max_rounds)
    if capped:
        log.warning("greedy matching stopped at the %d-round cap", config.max_rounds)
    order = np.argsort(rows, kind="stable")
    rows, cols = rows[order], cols[order]
    costs = cost[rows, cols].tolist()
    matches = [(int(src[a]), int(dst[b])) for a, b in zip(rows, cols)]
    return TransportPlan(matches, float(sum(costs)), costs, int(rounds), bool(capped))


def naive_pseudo_label(rectified, unaligned_e1=None, unaligned_e2=None,
                       config: RectifyConfig = RectifyConfig()) -> TransportPlan:
    """Nearest-target labeling without conflict-aware transport.

    Each source takes its nearest target below theta; a contested target stays
    with the first source (smallest index) that claimed it.
    """
    rectified = np.asarray(rectified, dtype=np.float64)
    e1, e2 = _subsets(rectified, unaligned_e1, unaligned_e2)
    matches, costs, taken = [], [], set()
    if e1.size == 0 or e2.size == 0:
        return TransportPlan([], 0.0)
    sub = rectified[np.ix_(e1, e2)]
    best = sub.argmin(axis=1)
    for a, b in enumerate(best):
        c = sub[a, b]
        if c < config.theta and b not in taken:
            taken.add(b)
            matches.append((int(e1[a]), int(e2[b])))
            costs.append(float(c))
    return TransportPlan(matches, float(sum(costs)), costs, 1)


def exact_assignment_oracle(cost, theta: float) -> TransportPlan:
    """Maximum ``sum(theta - cost)`` partial matching over pairs below theta.

    Exhaustive dynamic programme over subsets of the smaller side, so only
    usable for small instances.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    transposed = n > m
    c = cost.T if transposed else cost
    s, big = c.shape
    if s > ORACLE_MAX_SOURCES:
        raise ValueError(f"oracle limited to {ORACLE_MAX_SOURCES} sources, got {s}")
    if s == 0 or big == 0:
        return TransportPlan([], 0.0)
    weight = theta - c
    feasible = c < theta
    size = 1 << s
    dp = np.full(size, -np.inf)
    dp[0] = 0.0
    # choice[col, mask] = source placed on col to reach mask, or -1
    choice = np.full((big, size), -1, dtype=np.int64)
    prev = np.empty((big, size), dtype=np.int64)
    masks = np.arange(size)
    for col in range(big):
        new = dp.copy()
        new_prev = masks.copy()
        for i in range(s):
            if not feasible[i, col]:
                continue
            bit = 1 << i
            base = masks[(masks & bit) == 0]
            cand = dp[base] + weight[i, col]
            target = base | bit
            better = cand > new[target]
            new[target[better]] = cand[better]
            new_prev[target[better]] = base[better]
            choice[col, target[better]] = i
        prev[col] = new_prev
        dp = new
    mask = int(np.argmax(dp))
    pairs = []
    for col in range(big - 1, -1, -1):
        i = choice[col, mask]
        if prev[col, mask] != mask and i >= 0:
            pairs.append((int(i), col))
        mask = int(prev[col, mask])
    if transposed:
        pairs = [(col, i) for i, col in pairs]
    pairs.sort()
    costs = [float(cost[i, j]) for i, j in pairs]
    return TransportPlan(pairs, float(sum(costs)), costs)


def calibrate_theta(rectified, unaligned_e1=None, unaligned_e2=None) -> float:
    """Scale-free threshold: midway between typical best and second-best costs."""
    rectified = np.asarray(rectified, dtype=np.float64)
    e1, e2 = _subsets(rectified, unaligned_e1, unaligned_e2)
    sub = rectified[np.ix_(e1, e2)]
    if sub.shape[0] > sub.shape[1]:
        sub = sub.T
    if sub.size == 0:
        raise ValueError("cannot calibrate on an empty cost matrix")
    if sub.shape[1] < 2:
        theta = float(np.median(sub))
    else:
        two = np.partition(sub, 1, axis=1)[:, :2]
        theta = 0.5 * float(np.median(two[:, 0]) + np.median(two[:, 1]))
    return max(theta, 1e-6)


def save_plan(plan: TransportPlan, path):
    with open(path, "w", encoding="utf-8") as fh:
        for (i, j), c in zip(plan.matches, plan.costs):
            fh.write(f"{i}\t{j}\t{c!r}\n")


def save_candidates(cands: CandidateSet, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i, j, c in cands.pairs:
            fh.write(f"{i}\t{j}\t{c!r}\n")
