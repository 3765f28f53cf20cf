import numpy as np
import pytest

from linkdist.graph import (
    INDUCTIVE,
    TRANSDUCTIVE,
    ContainerFormatError,
    Graph,
    GraphValidationError,
    InsufficientNodesError,
    NoEdgesError,
    SamplingError,
    SplitMasks,
    alpha_schedule,
    average_degree,
    build_train_view,
    class_weights,
    epoch_budget,
    generate_sbm,
    load_container,
    make_full_split,
    make_semi_split,
    normalized_adjacency,
    sample_negative_pairs,
    save_container,
)
from linkdist.nn import make_rng


def tiny_graph(n=4, edges=((0, 1), (1, 2)), labels=(0, 1, 0, 1), num_classes=2,
               feat_dim=3):
    feats = np.arange(n * feat_dim, dtype=np.float32).reshape(n, feat_dim)
    return Graph(feats, np.array(edges), num_classes, np.array(labels))


# ---------------------------------------------------------------------------
# Graph invariants
# ---------------------------------------------------------------------------


def test_graph_rejects_self_loop():
    with pytest.raises(GraphValidationError, match="self-loop"):
        tiny_graph(edges=((0, 0),))


def test_graph_rejects_duplicate_unordered_pair():
    with pytest.raises(GraphValidationError, match="duplicate"):
        tiny_graph(edges=((0, 1), (1, 0)))


def test_graph_rejects_out_of_range_endpoint():
    with pytest.raises(GraphValidationError):
        tiny_graph(edges=((0, 7),))


def test_graph_rejects_bad_labels():
    with pytest.raises(GraphValidationError):
        tiny_graph(labels=(0, 1, 2, 0))


def test_edge_reads_are_counted():
    g = tiny_graph()
    assert g.adjacency_reads == 0
    _ = g.edges
    _ = g.edges
    assert g.adjacency_reads == 2


# ---------------------------------------------------------------------------
# adjacency normalization
# ---------------------------------------------------------------------------


def test_normalized_adjacency_single_edge():
    g = tiny_graph(n=2, edges=((0, 1),), labels=(0, 1))
    a = normalized_adjacency(g).toarray()
    np.testing.assert_allclose(a, [[0.5, 0.5], [0.5, 0.5]])


def test_normalized_adjacency_isolated_node_identity_row():
    g = tiny_graph(n=3, edges=((0, 1),), labels=(0, 1, 0))
    a = normalized_adjacency(g).toarray()
    np.testing.assert_allclose(a[2], [0.0, 0.0, 1.0])


def test_normalized_adjacency_triangle():
    g = tiny_graph(n=3, edges=((0, 1), (0, 2), (1, 2)), labels=(0, 1, 0))
    a = normalized_adjacency(g).toarray()
    np.testing.assert_allclose(a, np.full((3, 3), 1 / 3))


def test_normalized_adjacency_rows_sum_to_one_with_isolated_nodes():
    rng = make_rng(0)
    g = generate_sbm(3, 30, 0.2, 0.01, feat_dim=4, feat_noise=0.1, rng=rng)
    sums = np.asarray(normalized_adjacency(g).sum(axis=1)).reshape(-1)
    np.testing.assert_allclose(sums, 1.0, atol=1e-6)


# ---------------------------------------------------------------------------
# degree / epoch budget
# ---------------------------------------------------------------------------


def synthetic_with_counts(num_nodes, num_edges):
    """Any valid graph with exactly the requested node/edge counts."""
    pairs = []
    step = 1
    while len(pairs) < num_edges:
        for i in range(num_nodes - step):
            pairs.append((i, i + step))
            if len(pairs) == num_edges:
                break
        step += 1
    feats = np.zeros((num_nodes, 1), dtype=np.float32)
    return Graph(feats, np.array(pairs), 2, np.zeros(num_nodes, dtype=np.int64))


def test_average_degree_and_budget_at_citation_scale():
    # 2708 nodes / 5278 edges gives average degree ~3.90 and budget 52
    g = synthetic_with_counts(2708, 5278)
    assert average_degree(g) == pytest.approx(3.898, abs=0.002)
    assert epoch_budget(g) == 52


def test_epoch_budget_dense_graph():
    # 13752 nodes / 245861 edges: average degree ~35.76, budget 6
    g = synthetic_with_counts(13752, 245861)
    assert average_degree(g) == pytest.approx(35.76, abs=0.01)
    assert epoch_budget(g) == 6


def test_epoch_budget_requires_edges():
    g = tiny_graph(edges=())
    with pytest.raises(NoEdgesError):
        epoch_budget(g)


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------


def test_semi_split_sizes_and_disjointness():
    rng = make_rng(1)
    g = generate_sbm(3, 700, 0.01, 0.001, feat_dim=4, feat_noise=0.1, rng=rng)
    masks = make_semi_split(g, rng)
    n_train, n_val, n_test = masks.counts()
    assert n_train <= 60 and n_val == 500 and n_test == 1000
    assert not (masks.train & masks.val).any()
    assert not (masks.train & masks.test).any()
    assert not (masks.val & masks.test).any()
    for c in range(g.num_classes):
        assert (g.labels[masks.train] == c).sum() <= 20


def test_semi_split_small_class_taken_whole():
    n = 1600
    labels = np.zeros(n, dtype=np.int64)
    labels[:7] = 1  # class 1 has only 7 members
    g = Graph(np.zeros((n, 2), dtype=np.float32), np.array([[0, 1]]), 2, labels)
    masks = make_semi_split(g, make_rng(2))
    assert (g.labels[masks.train] == 1).sum() == 7


def test_semi_split_insufficient_nodes():
    g = generate_sbm(2, 100, 0.05, 0.01, feat_dim=2, feat_noise=0.0, rng=make_rng(3))
    with pytest.raises(InsufficientNodesError):
        make_semi_split(g, make_rng(3))


def test_full_split_2708_gives_1625_542_541():
    g = synthetic_with_counts(2708, 1)
    masks = make_full_split(g, make_rng(4))
    assert masks.counts() == (1625, 542, 541)


def test_full_split_10_gives_6_2_2():
    g = synthetic_with_counts(10, 1)
    assert make_full_split(g, make_rng(5)).counts() == (6, 2, 2)


@pytest.mark.parametrize("n", [5, 9, 17, 100, 333])
def test_full_split_partitions_every_size(n):
    g = synthetic_with_counts(n, 1)
    masks = make_full_split(g, make_rng(n))
    assert masks.counts()[0] == round(0.6 * n)
    combined = masks.train.astype(int) + masks.val.astype(int) + masks.test.astype(int)
    np.testing.assert_array_equal(combined, 1)


def test_split_masks_reject_overlap():
    with pytest.raises(GraphValidationError):
        SplitMasks(np.array([True, False]), np.array([True, False]),
                   np.array([False, False]))


# ---------------------------------------------------------------------------
# training views
# ---------------------------------------------------------------------------


def path_graph_masks():
    g = tiny_graph(n=3, edges=((0, 1), (1, 2)), labels=(0, 1, 0))
    masks = SplitMasks(np.array([True, False, False]),
                       np.array([False, False, False]),
                       np.array([False, False, True]))
    return g, masks


def test_transductive_view_sees_everything():
    g, masks = path_graph_masks()
    view = build_train_view(g, masks, TRANSDUCTIVE)
    assert view.visible_nodes.all()
    assert view.num_visible_edges == 2


def test_inductive_view_hides_eval_nodes_and_their_edges():
    g, masks = path_graph_masks()
    view = build_train_view(g, masks, INDUCTIVE)
    np.testing.assert_array_equal(view.visible_nodes, [True, True, False])
    np.testing.assert_array_equal(view.visible_edges, [[0, 1]])


def test_inductive_view_edges_never_touch_eval_nodes():
    rng = make_rng(6)
    g = generate_sbm(4, 500, 0.02, 0.002, feat_dim=8, feat_noise=0.2, rng=rng)
    masks = make_semi_split(g, rng)
    view = build_train_view(g, masks, INDUCTIVE)
    ev = masks.eval_mask
    for a, b in view.visible_edges:
        assert not ev[a] and not ev[b]


def test_view_counts_masked_feature_reads():
    g, masks = path_graph_masks()
    view = build_train_view(g, masks, INDUCTIVE)
    view.features([0, 1])
    assert view.masked_feature_reads == 0
    view.features([2])
    assert view.masked_feature_reads == 1


def test_view_counts_eval_label_reads():
    g, masks = path_graph_masks()
    view = build_train_view(g, masks, INDUCTIVE)
    view.labels([0])
    assert view.eval_label_reads == 0
    view.labels([2])
    assert view.eval_label_reads == 1


def test_local_adjacency_matches_subgraph():
    g, masks = path_graph_masks()
    view = build_train_view(g, masks, INDUCTIVE)
    a = view.local_normalized_adjacency().toarray()
    np.testing.assert_allclose(a, [[0.5, 0.5], [0.5, 0.5]])


# ---------------------------------------------------------------------------
# alpha schedule
# ---------------------------------------------------------------------------


def labelled_fraction_fixture(train_flags, edges):
    n = len(train_flags)
    g = Graph(np.zeros((n, 1), dtype=np.float32), np.array(edges), 2,
              np.zeros(n, dtype=np.int64))
    train = np.array(train_flags, dtype=bool)
    masks = SplitMasks(train, np.zeros(n, bool), np.zeros(n, bool))
    return build_train_view(g, masks, TRANSDUCTIVE), masks


def test_alpha_zero_when_all_endpoints_labelled():
    view, masks = labelled_fraction_fixture([True] * 4,
                                            [(0, 1), (1, 2), (2, 3)])
    assert alpha_schedule(view, masks).alpha == 0.0


def test_alpha_one_when_no_endpoint_labelled():
    view, masks = labelled_fraction_fixture([False] * 4, [(0, 1), (2, 3)])
    assert alpha_schedule(view, masks).alpha == 1.0


def test_alpha_quarter_with_six_of_eight_labelled_endpoints():
    # brute-force endpoint count: edges (0,1),(0,2),(1,3),(2,3) give every node
    # 2 appearances; labelling {0,1,2} makes 6 of the 8 endpoints labelled
    view, masks = labelled_fraction_fixture(
        [True, True, True, False],
        [(0, 1), (0, 2), (1, 3), (2, 3)],
    )
    sched = alpha_schedule(view, masks)
    assert sched.total_endpoints == 8
    assert sched.n_labelled_endpoints == 6
    assert sched.alpha == pytest.approx(0.25)


def test_alpha_monotone_in_labelling():
    rng = make_rng(7)
    g = generate_sbm(2, 30, 0.2, 0.05, feat_dim=2, feat_noise=0.0, rng=rng)
    n = g.num_nodes
    train = np.zeros(n, dtype=bool)
    prev = 1.0
    for node in rng.permutation(n)[:20]:
        train[node] = True
        masks = SplitMasks(train.copy(), np.zeros(n, bool), np.zeros(n, bool))
        view = build_train_view(g, masks, TRANSDUCTIVE)
        alpha = alpha_schedule(view, masks).alpha
        assert alpha <= prev + 1e-12
        prev = alpha


# ---------------------------------------------------------------------------
# class weights
# ---------------------------------------------------------------------------


def test_class_weights_elementwise_ratio():
    # y_n = [0.5, 0.5], y_e = [0.25, 0.75] -> weights [2, 2/3]
    n = 8
    labels = np.array([0, 1, 0, 1, 1, 1, 0, 1])
    train = np.array([True, True, False, False, False, False, False, False])
    # edges chosen so labelled endpoints are node0 once and node1 three times
    edges = [(0, 2), (1, 3), (1, 4), (1, 5)]
    g = Graph(np.zeros((n, 1), dtype=np.float32), np.array(edges), 2, labels)
    masks = SplitMasks(train, np.zeros(n, bool), np.zeros(n, bool))
    view = build_train_view(g, masks, TRANSDUCTIVE)
    cw = class_weights(view, masks)
    np.testing.assert_allclose(cw.node_dist, [0.5, 0.5])
    np.testing.assert_allclose(cw.endpoint_dist, [0.25, 0.75])
    np.testing.assert_allclose(cw.weights, [2.0, 2 / 3])


def test_class_weights_equal_distributions_give_ones():
    # 4-cycle with alternating labels, all nodes in train: every node appears
    # twice as an endpoint, so node and endpoint distributions coincide
    labels = np.array([0, 1, 0, 1])
    g = Graph(np.zeros((4, 1), dtype=np.float32),
              np.array([(0, 1), (1, 2), (2, 3), (0, 3)]), 2, labels)
    masks = SplitMasks(np.ones(4, bool), np.zeros(4, bool), np.zeros(4, bool))
    view = build_train_view(g, masks, TRANSDUCTIVE)
    cw = class_weights(view, masks)
    np.testing.assert_allclose(cw.weights, [1.0, 1.0])


def star_fixture():
    # star: center 0 labelled class 0, leaves 1..3 labelled class 1
    labels = np.array([0, 1, 1, 1])
    g = Graph(np.zeros((4, 1), dtype=np.float32),
              np.array([(0, 1), (0, 2), (0, 3)]), 2, labels)
    train = np.ones(4, dtype=bool)
    masks = SplitMasks(train, np.zeros(4, bool), np.zeros(4, bool))
    return build_train_view(g, masks, TRANSDUCTIVE), masks


def test_class_weights_star_endpoint_distribution_uniform():
    view, masks = star_fixture()
    cw = class_weights(view, masks)
    # endpoint appearances: class 0 three times (center), class 1 three times
    np.testing.assert_allclose(cw.endpoint_dist, [0.5, 0.5])
    # y_n = [0.25, 0.75]
    np.testing.assert_allclose(cw.weights, [0.5, 1.5])


def test_class_weights_identity_sum_property():
    rng = make_rng(8)
    for trial in range(5):
        g = generate_sbm(3, 40, 0.15, 0.05, feat_dim=3, feat_noise=0.1, rng=rng)
        train = rng.random(g.num_nodes) < 0.4
        if np.bincount(g.labels[train], minlength=3).min() == 0:
            continue
        masks = SplitMasks(train, np.zeros(g.num_nodes, bool),
                           np.zeros(g.num_nodes, bool))
        view = build_train_view(g, masks, TRANSDUCTIVE)
        cw = class_weights(view, masks)
        if not cw.floored_classes:
            assert float(cw.weights @ cw.endpoint_dist) == pytest.approx(1.0)


def test_class_weights_floor_for_unseen_endpoint_class():
    # class 1 is in the training set but only on an isolated node
    labels = np.array([0, 0, 1, 0])
    g = Graph(np.zeros((4, 1), dtype=np.float32), np.array([(0, 1), (0, 3)]),
              2, labels)
    train = np.array([True, True, True, False])
    masks = SplitMasks(train, np.zeros(4, bool), np.zeros(4, bool))
    view = build_train_view(g, masks, TRANSDUCTIVE)
    with pytest.warns(UserWarning, match="flooring"):
        cw = class_weights(view, masks)
    assert cw.floored_classes == [1]
    assert np.isfinite(cw.weights).all()
    assert cw.weights[1] > 0


# ---------------------------------------------------------------------------
# negative sampling
# ---------------------------------------------------------------------------


def test_negative_pairs_two_node_view():
    g = tiny_graph(n=2, edges=((0, 1),), labels=(0, 1))
    masks = SplitMasks(np.array([True, True]), np.zeros(2, bool), np.zeros(2, bool))
    view = build_train_view(g, masks, TRANSDUCTIVE)
    pairs = sample_negative_pairs(view, 50, make_rng(9))
    assert set(map(tuple, pairs)) <= {(0, 1), (1, 0)}


def test_negative_pairs_never_equal_endpoints():
    rng = make_rng(10)
    g = generate_sbm(2, 20, 0.2, 0.05, feat_dim=2, feat_noise=0.0, rng=rng)
    masks = SplitMasks(np.zeros(40, bool), np.zeros(40, bool), np.zeros(40, bool))
    view = build_train_view(g, masks, TRANSDUCTIVE)
    pairs = sample_negative_pairs(view, 10_000, rng)
    assert (pairs[:, 0] != pairs[:, 1]).all()


def test_negative_pairs_uniform_endpoint_usage():
    # 100k pairs on a 100-node view: each node appears 2000 +- 300 times
    rng = make_rng(11)
    g = generate_sbm(2, 50, 0.1, 0.05, feat_dim=2, feat_noise=0.0, rng=rng)
    masks = SplitMasks(np.zeros(100, bool), np.zeros(100, bool), np.zeros(100, bool))
    view = build_train_view(g, masks, TRANSDUCTIVE)
    pairs = sample_negative_pairs(view, 100_000, rng)
    counts = np.bincount(pairs.reshape(-1), minlength=100)
    assert counts.min() >= 1700 and counts.max() <= 2300


def test_negative_pairs_need_two_visible_nodes():
    g = tiny_graph(n=2, edges=((0, 1),), labels=(0, 1))
    masks = SplitMasks(np.zeros(2, bool), np.zeros(2, bool),
                       np.array([False, True]))
    view = build_train_view(g, masks, INDUCTIVE)
    with pytest.raises(SamplingError):
        sample_negative_pairs(view, 5, make_rng(12))


# ---------------------------------------------------------------------------
# SBM generator
# ---------------------------------------------------------------------------


def test_sbm_disjoint_triangles():
    g = generate_sbm(2, 3, 1.0, 0.0, feat_dim=2, feat_noise=0.0, rng=make_rng(13))
    np.testing.assert_array_equal(g.labels, [0, 0, 0, 1, 1, 1])
    got = set(map(tuple, g.edges))
    assert got == {(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)}


def test_sbm_empty_when_probabilities_zero():
    g = generate_sbm(2, 5, 0.0, 0.0, feat_dim=2, feat_noise=0.0, rng=make_rng(14))
    assert g.num_edges == 0


def test_sbm_expected_edge_count_within_3_sigma():
    blocks, npb, p_in, p_out = 3, 60, 0.2, 0.02
    g = generate_sbm(blocks, npb, p_in, p_out, feat_dim=4, feat_noise=0.1,
                     rng=make_rng(15))
    n_in_pairs = blocks * npb * (npb - 1) // 2
    n_out_pairs = (blocks * (blocks - 1) // 2) * npb * npb
    mean = n_in_pairs * p_in + n_out_pairs * p_out
    var = n_in_pairs * p_in * (1 - p_in) + n_out_pairs * p_out * (1 - p_out)
    assert abs(g.num_edges - mean) <= 3 * np.sqrt(var)


def test_sbm_rejects_bad_probabilities():
    with pytest.raises(ValueError):
        generate_sbm(2, 3, 0.1, 0.5, feat_dim=2, feat_noise=0.0, rng=make_rng(16))


# ---------------------------------------------------------------------------
# container round trips
# ---------------------------------------------------------------------------


def test_container_round_trip_minimal(tmp_path):
    g = tiny_graph(n=2, edges=((0, 1),), labels=(0, 1))
    save_container(tmp_path / "g", g)
    loaded, masks = load_container(tmp_path / "g")
    assert masks is None
    np.testing.assert_array_equal(loaded.features, g.features)
    np.testing.assert_array_equal(loaded._edges, g._edges)
    np.testing.assert_array_equal(loaded.labels, g.labels)
    assert loaded.num_classes == g.num_classes


def test_container_save_load_save_byte_identical(tmp_path):
    rng = make_rng(17)
    g = generate_sbm(3, 20, 0.2, 0.05, feat_dim=5, feat_noise=0.3, rng=rng)
    masks = SplitMasks(*(m := [np.zeros(60, bool) for _ in range(3)]))
    m[0][:10] = True
    m[1][10:20] = True
    m[2][20:30] = True
    masks = SplitMasks(m[0], m[1], m[2])
    p1 = save_container(tmp_path / "a", g, masks)
    loaded, lmasks = load_container(p1)
    p2 = save_container(tmp_path / "b", loaded, lmasks)
    for f in sorted(x.name for x in p1.iterdir()):
        assert (p1 / f).read_bytes() == (p2 / f).read_bytes(), f


def test_container_with_predefined_split_round_trip(tmp_path):
    g = tiny_graph()
    masks = SplitMasks(np.array([True, False, False, False]),
                       np.array([False, True, False, False]),
                       np.array([False, False, True, False]))
    save_container(tmp_path / "g", g, masks)
    _, loaded_masks = load_container(tmp_path / "g")
    np.testing.assert_array_equal(loaded_masks.train, masks.train)
    np.testing.assert_array_equal(loaded_masks.val, masks.val)
    np.testing.assert_array_equal(loaded_masks.test, masks.test)


def test_container_length_mismatch_detected(tmp_path):
    g = tiny_graph()
    path = save_container(tmp_path / "g", g)
    (path / "features.f32").write_bytes(b"\x00" * 8)
    with pytest.raises(ContainerFormatError, match="features"):
        load_container(path)


def test_container_rejects_unordered_edges(tmp_path):
    g = tiny_graph()
    path = save_container(tmp_path / "g", g)
    bad = np.array([[1, 0], [1, 2]], dtype="<u4")
    bad.tofile(path / "edges.u32")
    with pytest.raises(ContainerFormatError, match="ordered"):
        load_container(path)


def test_container_missing_meta(tmp_path):
    with pytest.raises(ContainerFormatError, match="meta.json"):
        load_container(tmp_path)
