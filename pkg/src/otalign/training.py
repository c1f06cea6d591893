"""Soft-margin alignment training alternating with pseudo labeling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from otalign import kernels
from otalign.config import LossConfig, PipelineConfig
from otalign.embedding import GraphInputs, ModelParams, backward, forward, forward_cache
from otalign.evaluation import evaluate
from otalign.kg import AlignmentSet, KgPair
from otalign.matching import (
    SimilarityIndex,
    TransportPlan,
    calibrate_theta,
    greedy_ot_pseudo_label,
    naive_pseudo_label,
)

log = logging.getLogger(__name__)

BETA1, BETA2, EPS = 0.9, 0.999, 1e-8


def reliability_score(d_tilde, theta: float, w: float = 0.25):
    """Weight of a pseudo-labeled pair: ``sigmoid(w * theta - d_tilde)``.

    Prior seeds do not go through this function; their weight is 1.
    """
    return expit(w * theta - np.asarray(d_tilde, dtype=np.float64))


def sample_negatives(embeddings, n1: int, pairs, k: int, n_threads: int = 1) -> np.ndarray:
    """For each ``(i, j)`` the ``k`` G2 entities nearest to ``i`` other than ``j``.

    Returns a ``(len(pairs), k)`` array of G2 local indices, nearest first,
    ties broken by index.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    n2 = emb.shape[0] - n1
    if k >= n2:
        raise ValueError(f"need more than {k} target entities, graph has {n2}")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.shape[0] == 0:
        return np.empty((0, k), dtype=np.int64)
    dist = kernels.l1_cdist(emb[pairs[:, 0]], emb[n1:], n_threads)
    dist[np.arange(len(pairs)), pairs[:, 1]] = np.inf
    order = np.argsort(dist, axis=1, kind="stable")
    return order[:, :k]


def adaptive_negative_sampling(embeddings, n1: int, positive_pair, k: int) -> list[tuple[int, int]]:
    i, _ = positive_pair
    negs = sample_negatives(embeddings, n1, [positive_pair], k)[0]
    return [(int(i), int(j)) for j in negs]


def _pair_distances(emb, n1, sources, targets):
    return np.abs(emb[sources] - emb[n1 + targets]).sum(axis=-1)


def alignment_loss(embeddings, n1: int, pairs, reliabilities, negatives, gamma: float = 1.0) -> float:
    """Reliability-weighted hinge loss over positive/negative pair distances."""
    emb = np.asarray(embeddings, dtype=np.float64)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(len(pairs), -1)
    d_pos = _pair_distances(emb, n1, pairs[:, 0], pairs[:, 1])
    d_neg = _pair_distances(emb, n1, pairs[:, 0, None], negatives)
    margins = np.maximum(d_pos[:, None] - d_neg + gamma, 0.0)
    return float((np.asarray(reliabilities, dtype=np.float64)[:, None] * margins).sum())


def loss_gradients(inputs: GraphInputs, params: ModelParams, pairs, reliabilities, negatives,
                   gamma: float = 1.0) -> tuple[float, ModelParams]:
    """Loss of one batch and its exact (sub)gradient w.r.t. every parameter.

    Reliabilities and negatives are constants of the batch. Hinge and L1 kinks
    take subgradient 0.
    """
    n1 = inputs.n1
    cache = forward_cache(inputs, params)
    emb = cache.h3
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(len(pairs), -1)
    rel = np.asarray(reliabilities, dtype=np.float64)
    src, dst = pairs[:, 0], pairs[:, 1]
    d_pos = _pair_distances(emb, n1, src, dst)
    d_neg = _pair_distances(emb, n1, src[:, None], negatives)
    margins = d_pos[:, None] - d_neg + gamma
    active = margins > 0
    loss = float((rel[:, None] * np.where(active, margins, 0.0)).sum())

    k = negatives.shape[1]
    a_idx = np.concatenate([src, np.repeat(src, k)])
    b_idx = n1 + np.concatenate([dst, negatives.ravel()])
    weights = np.concatenate([rel * active.sum(axis=1), -(rel[:, None] * active).ravel()])
    grad_h = np.zeros_like(emb)
    kernels.l1_pair_backward(emb, a_idx, b_idx, weights, grad_h)
    return loss, backward(cache, inputs.adjacency, params, grad_h)


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()})


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState,
              learning_rate: float) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    step = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, value in params.items():
        g = getattr(grads, name)
        m = BETA1 * state.m[name] + (1 - BETA1) * g
        v = BETA2 * state.v[name] + (1 - BETA2) * g * g
        m_hat = m / (1 - BETA1 ** step)
        v_hat = v / (1 - BETA2 ** step)
        new_params[name] = value - learning_rate * m_hat / (np.sqrt(v_hat) + EPS)
        new_m[name], new_v[name] = m, v
    return ModelParams(**new_params), AdamState(new_m, new_v, step)


# ------------------------------------------------------------- pipeline


@dataclass
class LabelRound:
    plan: TransportPlan
    pseudo: dict
    theta: float


def pseudo_label(embeddings, n1: int, sim: SimilarityIndex, prior, previous_pseudo,
                 config: PipelineConfig) -> LabelRound:
    """Label all non-prior entities from scratch on the current embeddings."""
    emb = np.asarray(embeddings)
    n2 = emb.shape[0] - n1
    used1 = np.zeros(n1, dtype=bool)
    used2 = np.zeros(n2, dtype=bool)
    for i, j in prior:
        used1[i] = used2[j] = True
    u1, u2 = np.flatnonzero(~used1), np.flatnonzero(~used2)
    if u1.size == 0 or u2.size == 0:
        return LabelRound(TransportPlan([], 0.0), {}, config.theta or 0.0)
    rect = kernels.l1_cdist(emb[u1], emb[n1 + u2], config.workers)
    # theta lives on the embedding-distance scale, so calibrate before rectifying
    theta = config.theta if config.theta is not None else calibrate_theta(rect)
    if config.lam > 0:
        aligned = list(prior) + list(previous_pseudo)
        rect -= config.lam * sim.matrix(aligned, u1, u2)
    rc = config.rectify(theta)
    label = greedy_ot_pseudo_label if config.matcher == "ot" else naive_pseudo_label
    plan = label(rect, None, None, rc)
    scores = reliability_score(np.array(plan.costs), theta, config.w)
    pseudo = {(int(u1[a]), int(u2[b])): float(r) for (a, b), r in zip(plan.matches, scores)}
    return LabelRound(plan, pseudo, theta)


@dataclass
class PipelineResult:
    embeddings: np.ndarray
    alignment: AlignmentSet
    params: ModelParams
    history: list[dict] = field(default_factory=list)


def run_pipeline(kg: KgPair, prior_seeds, config: PipelineConfig = PipelineConfig(),
                 test_pairs=None) -> PipelineResult:
    """Alternate margin training and conflict-free pseudo labeling.

    Without prior seeds the first labels come from the untrained model.
    Pseudo labels are recomputed from scratch after every outer iteration and
    training stops early once they stop changing.
    """
    loss_cfg: LossConfig = config.loss
    if config.dim is not None and config.dim != kg.dim:
        raise ValueError(f"configured dimension {config.dim} != feature dimension {kg.dim}")
    rng = np.random.default_rng(config.rng_seed)
    prior = [(int(i), int(j)) for i, j in prior_seeds]
    AlignmentSet(prior=prior).validate()
    inputs = GraphInputs.from_pair(kg)
    sim = SimilarityIndex(kg)
    params = ModelParams.init(kg.dim, rng)
    state = AdamState.zeros(params)
    n1 = kg.n1
    history: list[dict] = []
    pseudo: dict = {}
    epochs_done = 0

    def record(iteration, loss, round_: LabelRound | None, emb):
        entry = {"iteration": iteration, "epoch": epochs_done, "loss": loss,
                 "pseudo_labels": len(pseudo)}
        if round_ is not None:
            entry["theta"] = round_.theta
            entry["match_rounds"] = round_.plan.rounds
            if round_.plan.capped:
                entry["round_cap_hit"] = True
        if test_pairs:
            entry["hit@1"] = evaluate(emb, test_pairs, n1, ks=(1,)).hits[1]
        history.append(entry)
        log.info("iteration %d: %s", iteration, entry)

    if not prior:
        emb = forward(inputs, params)
        first = pseudo_label(emb, n1, sim, prior, {}, config)
        pseudo = first.pseudo
        record(0, None, first, emb)

    per_iter = loss_cfg.epochs_per_iteration
    for iteration in range(1, loss_cfg.outer_iterations + 1):
        if epochs_done >= loss_cfg.epochs:
            break
        pairs = prior + sorted(pseudo)
        if not pairs:
            log.warning("no labelled pairs to train on; stopping")
            break
        pair_arr = np.array(pairs, dtype=np.int64)
        rel_arr = np.array([1.0] * len(prior) + [pseudo[p] for p in sorted(pseudo)])
        epoch_loss = 0.0
        for _ in range(min(per_iter, loss_cfg.epochs - epochs_done)):
            emb = forward(inputs, params)
            negs = sample_negatives(emb, n1, pair_arr, loss_cfg.k_neg, config.workers)
            order = rng.permutation(len(pairs))
            epoch_loss = 0.0
            for start in range(0, len(order), loss_cfg.batch_size):
                batch = order[start:start + loss_cfg.batch_size]
                loss, grads = loss_gradients(inputs, params, pair_arr[batch], rel_arr[batch],
                                             negs[batch], loss_cfg.gamma)
                params, state = adam_step(params, grads, state, loss_cfg.learning_rate)
                epoch_loss += loss
            epochs_done += 1
        emb = forward(inputs, params)
        round_ = pseudo_label(emb, n1, sim, prior, pseudo, config)
        unchanged = set(round_.pseudo) == set(pseudo)
        pseudo = round_.pseudo
        record(iteration, epoch_loss, round_, emb)
        if unchanged:
            break

    emb = forward(inputs, params)
    alignment = AlignmentSet(prior=prior, pseudo=pseudo, test=list(test_pairs or []))
    alignment.validate()
    return PipelineResult(emb, alignment, params, history)
