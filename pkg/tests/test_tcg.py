import math

import numpy as np
import pytest

from tcgl import numcore as nc
from tcgl import oracles, tcg


def rng(seed=0):
    return np.random.default_rng(seed)


def test_chain_graphs():
    g = tcg.build_chain_graph(rng().standard_normal((4, 3)))
    assert {(i, j) for i, j in zip(*np.nonzero(np.triu(g.a)))} == {(0, 1), (1, 2), (2, 3)}
    assert g.a.sum() == 6
    assert np.array_equal(g.a, g.a.T) and not np.diag(g.a).any()
    two = tcg.build_chain_graph([np.ones(2), np.zeros(2)])
    assert np.array_equal(two.a, [[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        tcg.build_chain_graph(np.ones((1, 3)))


def test_view_identity_and_full_drop():
    g = tcg.build_chain_graph(rng(1).standard_normal((5, 4)))
    same = tcg.generate_view(g, 0.0, 0.0, seed=3)
    assert np.array_equal(same.a, g.a) and np.array_equal(same.x.data, g.x.data)
    empty = tcg.generate_view(g, 1.0, 0.0, seed=3)
    assert not empty.a.any()
    with pytest.raises(ValueError):
        tcg.generate_view(g, 1.2, 0.0, seed=0)
    with pytest.raises(ValueError):
        tcg.generate_view(g, 0.1, -0.1, seed=0)


def test_views_only_remove_edges_and_mask_whole_dimensions():
    g = tcg.build_chain_graph(rng(2).standard_normal((6, 8)))
    for seed in range(50):
        v = tcg.generate_view(g, 0.5, 0.5, seed)
        assert (v.a <= g.a).all() and np.array_equal(v.a, v.a.T)
        zeroed = np.all(v.x.data == 0, axis=0)
        kept = np.all(v.x.data == g.x.data, axis=0)
        assert (zeroed | kept).all()


def test_edge_survival_rate():
    a = tcg.chain_adjacency(2, (20_000,))
    dropped, _ = tcg.corruption_masks(rng(3), a, 1, 0.2, 0.0)
    assert abs(dropped[:, 0, 1].mean() - 0.8) < 0.01


def test_two_node_operator_is_the_mean():
    a = tcg.chain_adjacency(2)
    assert np.allclose(tcg.normalized_adjacency(a), [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)
    params = tcg.GcnParams([nc.Tensor(np.eye(3))], [nc.Tensor(np.zeros(3))])
    x = rng(4).uniform(0, 1, (2, 3))
    out = tcg.gcn_forward((x, a), params).data
    assert np.allclose(out, np.tile(x.mean(axis=0), (2, 1)), atol=1e-15)


def test_isolated_nodes_keep_their_features():
    params = tcg.GcnParams([nc.Tensor(np.eye(3))], [nc.Tensor(np.zeros(3))])
    x = rng(5).standard_normal((4, 3))
    out = tcg.gcn_forward((x, np.zeros((4, 4))), params).data
    assert np.array_equal(out, np.maximum(x, 0))


@pytest.mark.parametrize("n", range(3, 9))
def test_gcn_permutation_equivariance_and_oracle(n):
    r = rng(n)
    upper = np.triu(r.random((n, n)) < 0.5, k=1)
    a = (upper | upper.T).astype(float)
    x = r.standard_normal((n, 5))
    params = tcg.init_gcn(r, 5, 4, depth=2)
    p = np.eye(n)[r.permutation(n)]
    base = tcg.gcn_forward((x, a), params).data
    assert np.abs(tcg.gcn_forward((p @ x, p @ a @ p.T), params).data - p @ base).max() < 1e-9
    ref = oracles.gcn(x, a, [w.data for w in params.weights], [b.data for b in params.biases])
    assert np.abs(ref - base).max() < 1e-10


def test_gcn_errors_and_depth():
    params = tcg.init_gcn(rng(), 4, 3)
    with pytest.raises(ValueError):
        tcg.gcn_forward((np.ones((3, 5)), np.zeros((3, 3))), params)
    with pytest.raises(ValueError):
        tcg.gcn_forward((np.ones((3, 4)), np.zeros((2, 2))), params)
    with pytest.raises(ValueError):
        tcg.init_gcn(rng(), 4, 3, depth=4)
    assert len(tcg.init_gcn(rng(), 4, 3, depth=3).weights) == 3


def test_intra_and_inter_parameters_are_distinct():
    a, b = tcg.init_gcn(rng(6), 4, 4), tcg.init_gcn(rng(6), 4, 4)
    assert a.weights[0] is not b.weights[0]


def test_single_node_loss_is_exactly_zero():
    head = tcg.init_projection(rng(7), 4)
    u, v = rng(8).standard_normal((2, 1, 4))
    assert tcg.graph_contrastive_loss(nc.Tensor(u), nc.Tensor(v), head).item() == 0.0
    assert tcg.pair_loss(nc.Tensor(u), nc.Tensor(v), 0, head).item() == 0.0


def test_identical_embeddings_give_log_five():
    head = tcg.init_projection(rng(9), 4)
    row = rng(10).standard_normal(4)
    u = np.tile(row, (3, 1))
    losses = tcg.pair_losses(nc.Tensor(u), nc.Tensor(u), head).data
    assert np.allclose(losses, math.log(5), atol=1e-12)


def test_loss_matches_scalar_oracle_and_is_symmetric():
    r = rng(11)
    for _ in range(50):
        n, f = int(r.integers(1, 7)), int(r.integers(2, 6))
        head = tcg.init_projection(r, f, tau=0.5)
        u, v = r.standard_normal((2, n, f))
        j = tcg.graph_contrastive_loss(nc.Tensor(u), nc.Tensor(v), head).item()
        arrays = [p.data for p in (head.w1, head.b1, head.w2, head.b2)]
        ref = oracles.contrastive_loss(oracles.mlp_projection(u, *arrays), oracles.mlp_projection(v, *arrays), 0.5)
        assert abs(j - ref) < 1e-10
        assert abs(j - tcg.graph_contrastive_loss(nc.Tensor(v), nc.Tensor(u), head).item()) < 1e-12
        perm = r.permutation(n)
        assert abs(j - tcg.graph_contrastive_loss(nc.Tensor(u[perm]), nc.Tensor(v[perm]), head).item()) < 1e-10
        assert (tcg.pair_losses(nc.Tensor(u), nc.Tensor(v), head).data >= 0).all()


def test_batched_loss_matches_per_graph():
    r = rng(12)
    head = tcg.init_projection(r, 3)
    u, v = r.standard_normal((2, 4, 5, 3))
    batched = tcg.graph_contrastive_loss(nc.Tensor(u), nc.Tensor(v), head).data
    single = [tcg.graph_contrastive_loss(nc.Tensor(u[i]), nc.Tensor(v[i]), head).item() for i in range(4)]
    assert np.allclose(batched, single, atol=1e-13)
    with pytest.raises(ValueError):
        tcg.graph_contrastive_loss(nc.Tensor(u), nc.Tensor(v[:, :4]), head)


def test_temperature_must_be_positive():
    with pytest.raises(ValueError):
        tcg.init_projection(rng(), 3, tau=0.0)


def test_total_graph_loss_examples():
    assert tcg.tcg_total_loss([0.3, 0.4], 0.5, alpha=0.0, beta=0.0).item() == 0.0
    assert tcg.tcg_total_loss([0.7], 0.9, alpha=1.0, beta=0.0).item() == pytest.approx(0.7)
    assert tcg.tcg_total_loss([0.2, 0.3, 0.1], 0.4).item() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        tcg.tcg_total_loss([0.1], 0.1, alpha=-1.0)


def test_graph_loss_gradient_on_four_nodes():
    r = rng(13)
    head, gcn = tcg.init_projection(r, 3), tcg.init_gcn(r, 3, 3)
    a = tcg.chain_adjacency(4)
    a1, mask = tcg.corruption_masks(r, a, 3, 0.2, 0.1)
    x = r.standard_normal((4, 3))

    def loss(xt):
        return tcg.graph_contrastive_loss(tcg.gcn_forward((nc.mul(xt, mask), a1), gcn),
                                          tcg.gcn_forward((xt, a), gcn), head)
    assert nc.grad_check(loss, x) < 1e-4


def test_one_small_sgd_step_decreases_graph_loss():
    r = rng(14)
    gcn, head = tcg.init_gcn(r, 4, 4), tcg.init_projection(r, 4)
    x = r.standard_normal((5, 4))
    a = tcg.chain_adjacency(5)
    a1, mask = tcg.corruption_masks(r, a, 4, 0.2, 0.1)
    params = {**{f"g{k}": p for k, p in gcn.named_parameters().items()},
              **{f"h{k}": p for k, p in head.named_parameters().items()}}

    def loss():
        return tcg.graph_contrastive_loss(tcg.gcn_forward((x * mask, a1), gcn), tcg.gcn_forward((x, a), gcn), head)
    before = loss()
    before.backward()
    nc.sgd_step(params, {k: p.grad for k, p in params.items()}, nc.OptimizerState(lr=1e-3))
    assert loss().item() < before.item()
