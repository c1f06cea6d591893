import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otalign.kg import (
    AlignmentSet,
    EntityRef,
    KgFormatError,
    KgPair,
    KnowledgeGraph,
    Side,
    build_normalized_adjacency,
    load_features,
    load_pairs,
    load_triplets,
    neighbor_relations,
    save_triplets,
)

from conftest import random_pair


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_load_integer_triplets(tmp_path):
    g = load_triplets(write(tmp_path, "t.tsv", "0\t0\t1\n1\t0\t2\n"))
    assert (g.entity_count, g.relation_count, len(g)) == (3, 1, 2)
    assert g.entity_names is None


def test_load_named_triplets_interns_in_order(tmp_path):
    g = load_triplets(write(tmp_path, "t.tsv", "a\tr\tb\nb\tr\tc\n"))
    assert (g.entity_count, g.relation_count, len(g)) == (3, 1, 2)
    assert g.entity_names == ["a", "b", "c"]
    assert g.entity_id("c") == 2


def test_arity_violation_reports_line(tmp_path):
    with pytest.raises(KgFormatError, match=":1:"):
        load_triplets(write(tmp_path, "t.tsv", "0 0\n"))


def test_empty_triplet_file(tmp_path):
    with pytest.raises(KgFormatError, match="empty"):
        load_triplets(write(tmp_path, "t.tsv", "\n"))


def test_standalone_entity_declaration(tmp_path):
    g = load_triplets(write(tmp_path, "t.tsv", "0\t0\t1\n4\n"))
    assert g.entity_count == 5
    assert len(g) == 1


def test_duplicate_triplets_are_dropped():
    g = KnowledgeGraph(2, 1, np.array([[0, 0, 1], [0, 0, 1]]))
    assert len(g) == 1


def test_load_features(tmp_path):
    x = load_features(write(tmp_path, "f.txt", "0 1 2\n2 5 6\n1 3 4\n"), 3)
    np.testing.assert_array_equal(x, [[1, 2], [3, 4], [5, 6]])


def test_missing_feature_row(tmp_path):
    with pytest.raises(KgFormatError, match="missing feature row: 1"):
        load_features(write(tmp_path, "f.txt", "0 1 2\n2 5 6\n"), 3)


def test_inconsistent_feature_dimension(tmp_path):
    with pytest.raises(KgFormatError, match="dimension"):
        load_features(write(tmp_path, "f.txt", "0 1 2\n1 3 4 5\n2 5 6\n"), 3)


def test_duplicate_feature_row(tmp_path):
    with pytest.raises(KgFormatError, match="duplicate feature row: 0"):
        load_features(write(tmp_path, "f.txt", "0 1 2\n0 3 4\n"), 2)


def test_non_finite_features_rejected():
    g = KnowledgeGraph(1, 0, np.empty((0, 3)))
    with pytest.raises(KgFormatError):
        KgPair(g, g, np.array([[np.nan], [0.0]]))


def test_load_pairs_by_name(tmp_path):
    g1 = load_triplets(write(tmp_path, "a.tsv", "x\tr\ty\n"))
    g2 = load_triplets(write(tmp_path, "b.tsv", "p\tq\tz\n"))
    kg = KgPair(g1, g2, np.zeros((4, 1)))
    assert load_pairs(write(tmp_path, "s.tsv", "y\tp\n"), kg) == [(1, 0)]


def _single(n1, t1, n2=1, t2=()):
    g1 = KnowledgeGraph(n1, 1, np.array(t1, dtype=np.int64).reshape(-1, 3))
    g2 = KnowledgeGraph(n2, 1, np.array(t2, dtype=np.int64).reshape(-1, 3))
    return KgPair(g1, g2, np.zeros((n1 + n2, 1)))


def test_adjacency_isolated_entity_is_unit_self_loop():
    a = build_normalized_adjacency(_single(1, []))
    np.testing.assert_array_equal(a.toarray(), np.eye(2))


def test_adjacency_single_edge():
    # degrees 2 (self loop + edge): every entry 1 / sqrt(2 * 2)
    a = build_normalized_adjacency(_single(2, [[0, 0, 1]])).toarray()
    np.testing.assert_allclose(a[:2, :2], [[0.5, 0.5], [0.5, 0.5]])


def test_adjacency_deduplicates_reverse_edges():
    one = build_normalized_adjacency(_single(2, [[0, 0, 1]])).toarray()
    both = build_normalized_adjacency(_single(2, [[0, 0, 1], [1, 0, 0]])).toarray()
    np.testing.assert_array_equal(one, both)


def test_adjacency_properties(rng):
    kg = random_pair(rng, n1=15, n2=12)
    a = build_normalized_adjacency(kg).toarray()
    np.testing.assert_allclose(a, a.T)
    assert np.isfinite(a).all() and (a.sum(axis=1) > 0).all()
    assert not a[:kg.n1, kg.n1:].any() and not a[kg.n1:, :kg.n1].any()


def test_neighbor_relations():
    kg = _single(3, [[0, 0, 1]])
    assert neighbor_relations(kg, 0) == [(0, 1)]
    assert neighbor_relations(kg, 2) == []
    g1 = KnowledgeGraph(3, 2, np.array([[0, 0, 1], [2, 1, 0]]))
    kg = KgPair(g1, KnowledgeGraph(1, 1, np.empty((0, 3))), np.zeros((4, 1)))
    assert neighbor_relations(kg, 0) == [(0, 1), (1, -1)]


def test_global_row_ordering():
    kg = _single(3, [[0, 0, 1]], n2=2)
    assert kg.global_row(EntityRef(Side.G1, 2)) == 2
    assert kg.global_row(EntityRef(Side.G2, 1)) == 4
    assert kg.global_triplets().tolist() == [[0, 0, 1]]


def test_alignment_set_validation():
    AlignmentSet(prior=[(0, 0)], pseudo={(1, 1): 0.5}).validate()
    with pytest.raises(ValueError, match="one-to-one"):
        AlignmentSet(prior=[(0, 0)], pseudo={(1, 0): 0.5}).validate()
    with pytest.raises(ValueError):
        AlignmentSet(prior=[(0, 0)], pseudo={(0, 0): 0.5}).validate()
    with pytest.raises(ValueError, match="reliability"):
        AlignmentSet(pseudo={(0, 0): 0.0}).validate()
    s = AlignmentSet(prior=[(0, 2)], pseudo={(1, 0): 0.3})
    assert s.reliability((0, 2)) == 1.0
    u1, u2 = s.unaligned(3, 3)
    assert u1.tolist() == [2] and u2.tolist() == [1]


triplet_lists = st.lists(
    st.tuples(st.integers(0, 9), st.integers(0, 3), st.integers(0, 9)), min_size=1, max_size=30
)


@settings(max_examples=50, deadline=None)
@given(triplet_lists, st.integers(0, 5))
def test_save_load_round_trip(tmp_path_factory, rows, extra):
    n = max(max(h, t) for h, _, t in rows) + 1 + extra
    g = KnowledgeGraph(n, 4, np.array(rows))
    path = tmp_path_factory.mktemp("rt") / "t.tsv"
    save_triplets(g, path)
    back = load_triplets(str(path))
    assert back.entity_count == n
    assert {tuple(r) for r in back.triplets.tolist()} == set(rows)
