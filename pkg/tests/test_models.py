import numpy as np
import pytest

from linkdist.graph import Graph, generate_sbm, normalized_adjacency
from linkdist.models import (
    ForkedMLP,
    GCNModel,
    MLPModel,
    copy_weights,
    load_snapshot,
    predict_mlp_mode,
    predict_mp_mode,
    save_snapshot,
)
from linkdist.nn import DimensionError, grad_check, make_rng, mse


def edgeless_graph(n=5, feat_dim=4):
    feats = make_rng(0).normal(size=(n, feat_dim)).astype(np.float32)
    return Graph(feats, np.zeros((0, 2), dtype=np.int64), 3,
                 np.zeros(n, dtype=np.int64))


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------


def test_mlp_single_row_shape():
    m = MLPModel(6, 4, make_rng(1), hidden=8)
    out, _ = m.forward(np.ones((1, 6), dtype=np.float32))
    assert out.shape == (1, 4)


def test_mlp_zero_weights_give_zero_logits():
    m = MLPModel(5, 3, rng=None, hidden=8)
    x = make_rng(2).normal(size=(4, 5)).astype(np.float32)
    out, _ = m.forward(x)
    np.testing.assert_array_equal(out, 0.0)


def test_mlp_eval_mode_deterministic():
    m = MLPModel(5, 3, make_rng(3), hidden=8)
    x = make_rng(4).normal(size=(4, 5)).astype(np.float32)
    a, _ = m.forward(x, training=False)
    b, _ = m.forward(x, training=False)
    np.testing.assert_array_equal(a, b)


def test_mlp_width_mismatch():
    m = MLPModel(5, 3, make_rng(5), hidden=8)
    with pytest.raises(DimensionError):
        m.forward(np.zeros((2, 4), dtype=np.float32))


# ---------------------------------------------------------------------------
# GCN
# ---------------------------------------------------------------------------


def test_gcn_isolated_node_propagation_is_identity():
    g = edgeless_graph(n=1, feat_dim=3)
    m = GCNModel(3, 2, rng=None, hidden=3)
    m.adjacency = normalized_adjacency(g)
    m.layer1.weight.value[:] = np.eye(3, dtype=np.float32)
    out, _ = m.forward(g.features)  # layers 2,3 zero: logits all zero
    np.testing.assert_array_equal(out, 0.0)
    # but the first propagation left the features intact
    np.testing.assert_allclose(m._propagate(g.features), g.features)


def test_gcn_symmetric_pair_identical_logits():
    feats = np.ones((2, 4), dtype=np.float32)
    g = Graph(feats, np.array([[0, 1]]), 2, np.array([0, 1]))
    m = GCNModel(4, 2, make_rng(6), hidden=8)
    m.adjacency = normalized_adjacency(g)
    out, _ = m.forward(g.features)
    np.testing.assert_allclose(out[0], out[1], atol=1e-6)


def test_gcn_on_edgeless_graph_equals_mlp_with_shared_weights():
    g = edgeless_graph(n=6, feat_dim=4)
    rng = make_rng(7)
    mlp = MLPModel(4, 3, rng, hidden=8)
    gcn = GCNModel(4, 3, rng=None, hidden=8)
    for a, b in zip(gcn.params(), mlp.params()):
        a.value[:] = b.value
    gcn.adjacency = normalized_adjacency(g)
    out_gcn, _ = gcn.forward(g.features)
    out_mlp, _ = mlp.forward(g.features)
    np.testing.assert_allclose(out_gcn, out_mlp, atol=1e-6)


def test_gcn_adjacency_node_count_mismatch():
    g = edgeless_graph(n=6, feat_dim=4)
    m = GCNModel(4, 3, make_rng(8), hidden=8)
    m.adjacency = normalized_adjacency(g)
    with pytest.raises(DimensionError, match="6"):
        m.forward(np.zeros((5, 4), dtype=np.float32))


def test_gcn_backward_matches_fd_on_small_graph():
    rng = make_rng(9)
    g = generate_sbm(2, 4, 0.8, 0.2, feat_dim=3, feat_noise=0.3, rng=rng)
    m = GCNModel(3, 2, rng, hidden=5, dtype=np.float64)
    m.adjacency = normalized_adjacency(g)
    x = g.features.astype(np.float64)
    coeff = make_rng(10).normal(size=(g.num_nodes, 2))

    def loss_fn():
        m.zero_grads()
        out, cache = m.forward(x, training=False)
        m.backward(cache, coeff)
        return float((out * coeff).sum())

    for p in m.params():
        assert grad_check(loss_fn, p, tolerance=1e-3).passed


def test_gcn_precomputed_first_propagation_identical():
    rng = make_rng(11)
    g = generate_sbm(2, 5, 0.6, 0.1, feat_dim=4, feat_noise=0.2, rng=rng)
    m = GCNModel(4, 2, rng, hidden=6)
    m.adjacency = normalized_adjacency(g)
    ax = (m.adjacency @ g.features).astype(np.float32)
    out1, _ = m.forward(g.features)
    out2, _ = m.forward(g.features, pre_propagated=ax)
    np.testing.assert_array_equal(out1, out2)


# ---------------------------------------------------------------------------
# Forked MLP
# ---------------------------------------------------------------------------


def test_forked_zero_heads_give_zero_outputs():
    m = ForkedMLP(4, 3, make_rng(12), hidden=8)
    for head in (m.output_head, m.inference_head):
        head.weight.value[:] = 0
        head.bias.value[:] = 0
    (z, s), _ = m.forward(make_rng(13).normal(size=(3, 4)).astype(np.float32))
    np.testing.assert_array_equal(z, 0.0)
    np.testing.assert_array_equal(s, 0.0)


def test_forked_identical_rows_identical_outputs():
    m = ForkedMLP(4, 3, make_rng(14), hidden=8)
    x = np.tile(make_rng(15).normal(size=(1, 4)).astype(np.float32), (2, 1))
    (z, s), _ = m.forward(x, training=False)
    np.testing.assert_array_equal(z[0], z[1])
    np.testing.assert_array_equal(s[0], s[1])


def test_forked_eval_mode_bit_identical_across_calls():
    m = ForkedMLP(5, 3, make_rng(16), hidden=8)
    x = make_rng(17).normal(size=(6, 5)).astype(np.float32)
    (z1, s1), _ = m.forward(x, training=False)
    (z2, s2), _ = m.forward(x, training=False)
    assert z1.tobytes() == z2.tobytes()
    assert s1.tobytes() == s2.tobytes()


def test_forked_mse_between_heads_gradcheck():
    rng = make_rng(18)
    m = ForkedMLP(4, 3, rng, hidden=6, dtype=np.float64)
    x = rng.normal(size=(5, 4))

    def loss_fn():
        m.zero_grads()
        (z, s), cache = m.forward(x, training=False)
        loss, dz, ds = mse(z, s)
        m.backward(cache, dz, ds)
        return loss

    for p in (m.hidden1.weight, m.hidden2.weight, m.output_head.weight,
              m.inference_head.weight):
        assert grad_check(loss_fn, p, tolerance=1e-3).passed


# ---------------------------------------------------------------------------
# inference modes
# ---------------------------------------------------------------------------


def test_mlp_mode_argmax():
    m = ForkedMLP(3, 3, rng=None, hidden=4)
    m.output_head.bias.value[:] = [[0.1, 3.0, -1.0]]
    pred = predict_mlp_mode(m, np.zeros((2, 3), dtype=np.float32))
    np.testing.assert_array_equal(pred, [1, 1])


def test_mlp_mode_tie_breaks_to_lowest_class():
    m = ForkedMLP(3, 4, rng=None, hidden=4)
    m.output_head.bias.value[:] = [[0.5, 2.0, 2.0, 1.0]]
    pred = predict_mlp_mode(m, np.zeros((1, 3), dtype=np.float32))
    assert pred[0] == 1


def test_mlp_mode_invariant_to_constant_logit_shift():
    m = ForkedMLP(3, 3, make_rng(19), hidden=4)
    x = make_rng(20).normal(size=(5, 3)).astype(np.float32)
    before = predict_mlp_mode(m, x)
    m.output_head.bias.value += 7.5
    after = predict_mlp_mode(m, x)
    np.testing.assert_array_equal(before, after)


def test_mp_mode_isolated_node_uses_z_only():
    g = edgeless_graph(n=3, feat_dim=4)
    m = ForkedMLP(4, 3, make_rng(21), hidden=4)
    np.testing.assert_array_equal(predict_mp_mode(m, g, alpha=0.7),
                                  predict_mlp_mode(m, g.features))


def test_mp_mode_alpha_zero_equals_mlp_mode():
    rng = make_rng(22)
    g = generate_sbm(3, 10, 0.4, 0.1, feat_dim=5, feat_noise=0.5, rng=rng)
    m = ForkedMLP(5, 3, rng, hidden=8)
    np.testing.assert_array_equal(predict_mp_mode(m, g, alpha=0.0),
                                  predict_mlp_mode(m, g.features))


def test_mp_mode_path_graph_hand_combination():
    # path 0-1-2: score_1 must be z_1 + alpha * (s_0 + s_2)
    feats = make_rng(23).normal(size=(3, 4)).astype(np.float32)
    g = Graph(feats, np.array([[0, 1], [1, 2]]), 3, np.array([0, 1, 2]))
    m = ForkedMLP(4, 3, make_rng(24), hidden=8)
    (z, s), _ = m.forward(g.features, training=False)
    alpha = 0.6
    scores = np.array([
        z[0] + alpha * s[1],
        z[1] + alpha * (s[0] + s[2]),
        z[2] + alpha * s[1],
    ])
    np.testing.assert_array_equal(predict_mp_mode(m, g, alpha),
                                  np.argmax(scores, axis=1))


def test_mp_mode_edge_order_invariance():
    rng = make_rng(25)
    g = generate_sbm(2, 12, 0.4, 0.1, feat_dim=4, feat_noise=0.4, rng=rng)
    m = ForkedMLP(4, 2, rng, hidden=8)
    base = predict_mp_mode(m, g, alpha=0.9)
    perm = make_rng(26).permutation(g.num_edges)
    g2 = Graph(g.features, g._edges[perm], 2, g.labels)
    np.testing.assert_array_equal(base, predict_mp_mode(m, g2, alpha=0.9))


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("cls", [MLPModel, ForkedMLP])
def test_snapshot_round_trip(tmp_path, cls):
    rng = make_rng(27)
    m = cls(5, 3, rng, hidden=8)
    m.block1.batch_norm.running_mean[:] = rng.normal(size=8).astype(np.float32)
    m.block1.batch_norm.running_var[:] = rng.uniform(0.5, 2, size=8).astype(np.float32)
    save_snapshot(tmp_path / "snap", m)
    loaded = load_snapshot(tmp_path / "snap")
    x = rng.normal(size=(4, 5)).astype(np.float32)
    if cls is ForkedMLP:
        (z1, s1), _ = m.forward(x)
        (z2, s2), _ = loaded.forward(x)
        np.testing.assert_array_equal(z1, z2)
        np.testing.assert_array_equal(s1, s2)
    else:
        out1, _ = m.forward(x)
        out2, _ = loaded.forward(x)
        np.testing.assert_array_equal(out1, out2)


def test_copy_weights_transfers_forward_behavior():
    rng = make_rng(28)
    src = MLPModel(4, 2, rng, hidden=8)
    dst = MLPModel(4, 2, rng=None, hidden=8)
    copy_weights(dst, src)
    x = rng.normal(size=(3, 4)).astype(np.float32)
    np.testing.assert_array_equal(src.forward(x)[0], dst.forward(x)[0])
