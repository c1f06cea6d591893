import numpy as np
import pytest
import scipy.sparse as sp

from otalign.embedding import (
    GraphInputs,
    ModelParams,
    UnusedRelationWarning,
    embedding_distance,
    entity_relation_context,
    forward,
    forward_stages,
    gcn_highway_layer,
    global_relation_aggregation,
    load_embeddings,
    relation_features,
    save_embeddings,
)
from otalign.kg import KgPair, KnowledgeGraph, build_normalized_adjacency

from conftest import random_pair

EMPTY = KnowledgeGraph(1, 1, np.empty((0, 3)))


def pair_g1(n, n_rel, triplets, features):
    """G1 holds the structure; G2 is a single isolated entity."""
    g1 = KnowledgeGraph(n, n_rel, np.array(triplets).reshape(-1, 3))
    x = np.vstack([np.asarray(features, dtype=float), np.zeros((1, len(features[0])))])
    return KgPair(g1, EMPTY, x)


def test_relation_feature_single_triplet():
    kg = pair_g1(2, 1, [[0, 0, 1]], [[1, 0], [0, 1]])
    np.testing.assert_array_equal(relation_features(kg)[0], [1, 0, 0, 1])


def test_relation_feature_mean():
    kg = pair_g1(4, 1, [[0, 0, 1], [2, 0, 3]], [[1, 0], [0, 1], [3, 0], [0, 3]])
    np.testing.assert_array_equal(relation_features(kg)[0], [2, 0, 0, 2])


def test_unused_relation_is_zero_with_warning():
    kg = pair_g1(2, 2, [[0, 0, 1]], [[1, 0], [0, 1]])
    with pytest.warns(UnusedRelationWarning):
        rel = relation_features(kg)
    np.testing.assert_array_equal(rel[1], [0, 0, 0, 0])


def test_context_head_only():
    kg = pair_g1(2, 1, [[0, 0, 1]], [[0, 0], [0, 0]])
    ctx = entity_relation_context(kg, np.array([[1.0, 1, 0, 0], [0, 0, 0, 0]]))
    np.testing.assert_array_equal(ctx[0], [1, 1, 0, 0])


def test_context_signed_average():
    # entity 1 is head of r0 and tail of r1
    kg = pair_g1(3, 2, [[1, 0, 2], [0, 1, 1]], [[0, 0]] * 3)
    rel = np.array([[2.0, 0, 0, 0], [0, 2, 0, 0], [0, 0, 0, 0]])  # last row: G2 relation
    ctx = entity_relation_context(kg, rel)
    np.testing.assert_array_equal(ctx[1], [1, -1, 0, 0])
    np.testing.assert_array_equal(ctx[3], [0, 0, 0, 0])  # isolated G2 entity


def test_context_occurrence_weighting():
    # entity 0 heads r0 twice and r1 once: (2 * x0 + x1) / 3
    kg = pair_g1(3, 2, [[0, 0, 1], [0, 0, 2], [0, 1, 1]], [[0.0]] * 3)
    rel = np.array([[3.0, 0], [0, 3.0], [0, 0]])
    np.testing.assert_allclose(entity_relation_context(kg, rel)[0], [2, 1])


def test_global_aggregation_cases():
    x = np.array([[0.5, -1.0]])
    ctx = np.ones((1, 4))
    zero = ModelParams.zeros(2)
    np.testing.assert_array_equal(global_relation_aggregation(x, ctx, zero), x)
    off = ModelParams.zeros(2)
    off.w1 = np.ones((2, 6))
    off.b1 = np.full(2, -1e6)
    np.testing.assert_array_equal(global_relation_aggregation(x, ctx, off), x)
    p = ModelParams.zeros(1)
    p.w1 = np.array([[1.0, 1.0, 1.0]])
    out = global_relation_aggregation(np.array([[1.0]]), np.array([[1.0, 1.0]]), p)
    np.testing.assert_array_equal(out, [[4.0]])


def test_highway_limits(rng):
    h = rng.standard_normal((5, 3))
    a = sp.identity(5, format="csr") * 0.5
    w = rng.standard_normal((3, 3))
    g = rng.standard_normal((3, 3))
    carry = gcn_highway_layer(h, a, w, g, np.full(3, -1e4))
    np.testing.assert_array_equal(carry, h)
    transform = gcn_highway_layer(h, a, w, g, np.full(3, 1e4))
    np.testing.assert_allclose(transform, np.maximum(a @ h @ w, 0))


def test_highway_half_gate():
    out = gcn_highway_layer(np.array([[2.0]]), sp.csr_matrix([[1.0]]), np.array([[1.0]]),
                            np.array([[0.0]]), np.array([0.0]))
    np.testing.assert_allclose(out, [[2.0]])


def test_forward_zero_weights_closed_gates_is_identity(rng):
    kg = random_pair(rng, dim=5)
    params = ModelParams.zeros(5)
    params.b_gate2[:] = params.b_gate3[:] = -1e4
    np.testing.assert_array_equal(forward(kg, params), kg.features)


def test_forward_zero_weights_gates_at_zero(rng):
    # zero gate weights and biases put gates at 0.5; with zero gcn weights the
    # transform branch is 0, so each layer halves the residual
    kg = random_pair(rng, dim=3)
    out = forward(kg, ModelParams.zeros(3))
    np.testing.assert_allclose(out, kg.features / 4)


def _permuted(kg, rng):
    p1, p2 = rng.permutation(kg.n1), rng.permutation(kg.n2)
    q1 = rng.permutation(kg.g1.relation_count)
    q2 = rng.permutation(kg.g2.relation_count)

    def relabel(g, p, q):
        t = g.triplets
        return KnowledgeGraph(g.entity_count, g.relation_count,
                              np.stack([p[t[:, 0]], q[t[:, 1]], p[t[:, 2]]], axis=1))

    x = np.empty_like(kg.features)
    x[p1] = kg.features[:kg.n1]
    x[kg.n1 + p2] = kg.features[kg.n1:]
    return KgPair(relabel(kg.g1, p1, q1), relabel(kg.g2, p2, q2), x), np.concatenate([p1, kg.n1 + p2])


def test_forward_equivariance(rng):
    kg = random_pair(rng, n1=25, n2=25, r1=5, r2=6, t1=60, t2=55, dim=6)
    params = ModelParams.init(6, rng)
    out = forward(kg, params)
    permuted, perm = _permuted(kg, rng)
    out_p = forward(permuted, params)
    np.testing.assert_allclose(out_p[perm], out, rtol=1e-12, atol=1e-12)


def test_forward_deterministic(rng):
    kg = random_pair(rng, dim=4)
    a = forward(kg, ModelParams.init(4, np.random.default_rng(3)))
    b = forward(kg, ModelParams.init(4, np.random.default_rng(3)))
    assert np.array_equal(a, b)


def affected_by(kg, entity):
    """Entities whose embedding may change when one feature row changes."""
    t = kg.global_triplets()
    rels = set(t[(t[:, 0] == entity) | (t[:, 2] == entity), 1].tolist())
    seeds = {entity}
    for h, r, tl in t:
        if r in rels:
            seeds.update((int(h), int(tl)))
    adj = build_normalized_adjacency(kg)
    reach = np.zeros(kg.num_entities, dtype=bool)
    reach[list(seeds)] = True
    for _ in range(2):
        reach = (adj @ reach.astype(float)) > 0
    return reach


def test_forward_locality(rng):
    kg = random_pair(rng, n1=25, n2=25, r1=12, r2=12, t1=18, t2=18, dim=4)
    params = ModelParams.init(4, rng)
    base = forward(kg, params)
    for entity in (0, 7, 30):
        x = kg.features.copy()
        x[entity] += rng.standard_normal(4)
        moved = forward(kg.with_features(x), params)
        reach = affected_by(kg, entity)
        assert (~reach).any()
        assert np.array_equal(moved[~reach], base[~reach])


def test_forward_finite_and_stages(rng):
    kg = random_pair(rng, dim=4)
    params = ModelParams.init(4, rng)
    stages = forward_stages(kg, params)
    assert list(stages) == ["relation_aggregated", "layer2", "final"]
    for value in stages.values():
        assert value.shape == kg.features.shape and np.isfinite(value).all()
    np.testing.assert_array_equal(stages["final"], forward(GraphInputs.from_pair(kg), params))


def test_params_init_shapes(rng):
    p = ModelParams.init(7, rng)
    p.check()
    assert p.w1.shape == (7, 21)
    assert np.all(p.b_gate2 == -1.0) and np.all(p.b1 == 0.0)
    assert np.abs(p.w1).max() <= np.sqrt(6 / 28)


def test_params_check_rejects_bad_shape():
    p = ModelParams.zeros(3)
    p.w_gcn2 = np.zeros((3, 2))
    with pytest.raises(ValueError, match="w_gcn2"):
        p.check()


def test_embedding_distance():
    assert embedding_distance([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert embedding_distance([1.0, 2.0], [0.0, 0.0]) == 3.0
    a, b = np.random.default_rng(0).standard_normal((2, 6))
    assert embedding_distance(a, b) == embedding_distance(b, a)


def test_embedding_dump_round_trip(tmp_path, rng):
    m = rng.standard_normal((5, 3))
    path = tmp_path / "emb.txt"
    save_embeddings(m, path, n1=2)
    back, n1 = load_embeddings(path)
    assert n1 == 2
    np.testing.assert_array_equal(back, m)
