import math

import numpy as np
import pytest
import torch

from conftest import random_diagram
from floorgraph.exceptions import EmptyMask, ShapeMismatch
from floorgraph.generator import (
    ConvMPNRound,
    GeneratorConfig,
    LayoutGenerator,
    fit_rectangle,
    generate,
    sample_node_inputs,
)
from floorgraph.graph import BubbleDiagram
from floorgraph.layers import GraphBatch, GTEBlock, graph_conv, node_attention
from floorgraph.layout import Rect

SMALL = GeneratorConfig(channels=4, gte_blocks=2, head_channels=(8, 4))


def brute_attention(x, sets, scale):
    """Per-node loop over explicit neighbour lists."""
    n = x.shape[0]
    flat = x.reshape(n, -1).double()
    out = torch.zeros_like(flat)
    for r in range(n):
        s = sets[r]
        if not s:
            continue
        logits = torch.stack([flat[r] @ flat[j] for j in s]) / math.sqrt(len(s))
        w = torch.softmax(logits, 0)
        out[r] = scale * sum(w[k] * flat[j] for k, j in enumerate(s))
    return out.reshape(x.shape)


def test_attention_equal_logits_hand_computed():
    # query orthogonal to three keys: all logits 0, weights 1/3
    x = torch.tensor([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 2.0, 0.0, 0.0],
        [0.0, 0.0, 3.0, 0.0],
        [0.0, 0.0, 0.0, 6.0],
    ], dtype=torch.float64).view(4, 4, 1, 1)
    relation = torch.zeros(4, 4, dtype=torch.bool)
    relation[0, 1:] = True
    out, w = node_attention(x, relation, 1.0, return_weights=True)
    np.testing.assert_allclose(w[0, 0, 1:].numpy(), [1 / 3] * 3)
    np.testing.assert_allclose(out[0].flatten().numpy(), [0.0, 2 / 3, 1.0, 2.0])
    assert (out[1:] == 0).all()


def test_attention_single_neighbour_and_zero_scale():
    x = torch.randn(2, 3, 2, 2, dtype=torch.float64)
    rel = torch.tensor([[False, True], [True, False]])
    out, w = node_attention(x, rel, 0.5, return_weights=True)
    assert w[0, 0, 1] == 1.0
    torch.testing.assert_close(out[0], 0.5 * x[1])
    zero = node_attention(x, rel, torch.zeros(()))
    assert (zero == 0).all()


def test_attention_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = random_diagram(rng, max_rooms=7)
        b = GraphBatch([d])
        x = torch.randn(d.num_rooms, 2, 2, 2, dtype=torch.float64) * 0.5
        for relation, sets in ((b.conn, [d.neighbors(r) for r in range(d.num_rooms)]),
                               (b.nonconn, [d.non_neighbors(r) for r in range(d.num_rooms)])):
            torch.testing.assert_close(node_attention(x, relation, 0.7), brute_attention(x, sets, 0.7))


def test_attention_rows_sum_to_one_over_random_graphs():
    rng = np.random.default_rng(1)
    for _ in range(100):
        d = random_diagram(rng, max_rooms=8)
        b = GraphBatch([d])
        x = torch.randn(d.num_rooms, 16, 8, 8)
        for relation in (b.conn, b.nonconn):
            _, w = node_attention(x, relation, 1.0, return_weights=True)
            sums = w.sum(-1)[0]
            nonempty = relation.any(1)
            assert torch.allclose(sums[nonempty], torch.ones(int(nonempty.sum())), atol=1e-6)
            assert (sums[~nonempty] == 0).all()


def test_multi_head_attention_splits_channels():
    x = torch.randn(3, 4, 2, 2, dtype=torch.float64)
    rel = ~torch.eye(3, dtype=torch.bool)
    two = node_attention(x, rel, 1.0, heads=2)
    halves = torch.cat([node_attention(x[:, :2], rel, 1.0), node_attention(x[:, 2:], rel, 1.0)], dim=1)
    torch.testing.assert_close(two, halves)
    with pytest.raises(ShapeMismatch):
        node_attention(x, rel, 1.0, heads=3)


def test_graph_conv_identity_and_zero():
    g = torch.randn(3, 4, dtype=torch.float64)
    torch.testing.assert_close(graph_conv(g, torch.eye(3, dtype=torch.float64), torch.eye(4, dtype=torch.float64)),
                               torch.nn.functional.gelu(g))
    assert (graph_conv(torch.zeros(3, 4), torch.ones(3, 3), torch.randn(4, 4)) == 0).all()


def test_graph_conv_matches_dense_oracle():
    rng = np.random.default_rng(2)
    a = (rng.random((3, 3)) < 0.5).astype(float) + np.eye(3)
    g, p = rng.normal(size=(3, 4)), rng.normal(size=(4, 4))
    z = a @ g @ p
    from scipy.special import erf

    expected = 0.5 * z * (1 + erf(z / np.sqrt(2)))
    got = graph_conv(torch.tensor(g), torch.tensor(a), torch.tensor(p)).numpy()
    np.testing.assert_allclose(got, expected, atol=1e-6)
    with pytest.raises(ShapeMismatch):
        graph_conv(torch.tensor(g), torch.eye(2, dtype=torch.float64), torch.tensor(p))


def test_gte_block_is_identity_before_gmb_at_init():
    rng = np.random.default_rng(3)
    block = GTEBlock(16)
    for _ in range(100):
        d = random_diagram(rng, max_rooms=8)
        b = GraphBatch([d])
        x = torch.randn(d.num_rooms, 16, 8, 8)
        assert torch.equal(block.attention_sum(x, b), x)
    assert block(x, b).shape == x.shape


def test_isolated_nodes_get_no_connected_attention():
    d = BubbleDiagram([0, 1])
    b = GraphBatch([d])
    x = torch.randn(2, 4, 2, 2)
    assert (node_attention(x, b.conn, 1.0) == 0).all()
    assert (node_attention(x, b.nonconn, 1.0) != 0).any()


def test_conv_mpn_variants():
    torch.manual_seed(0)
    d = BubbleDiagram([0, 1, 2], [(0, 1)])
    b = GraphBatch([d])
    x = torch.randn(3, 16, 8, 8)
    outs = {}
    for v in ("eq2", "eq3", "eq4"):
        torch.manual_seed(0)
        layer = ConvMPNRound(GeneratorConfig(update_variant=v, gte_blocks=2))
        outs[v] = layer(x, b)
        assert outs[v].shape == x.shape
    assert not torch.allclose(outs["eq2"], outs["eq4"])


def test_conv_mpn_single_node_pools_are_zero():
    layer = ConvMPNRound(GeneratorConfig(gte_blocks=1))
    b = GraphBatch([BubbleDiagram([4])])
    x = torch.randn(1, 16, 8, 8)
    fused = layer.fuse_input(x, b)
    assert (fused[:, 16:] == 0).all()
    torch.testing.assert_close(layer(x, b), layer.cnn(torch.cat([layer.gte(x, b), torch.zeros(1, 32, 8, 8)], 1)))


def test_expand_upsample_head_shapes():
    torch.manual_seed(0)
    g = LayoutGenerator()
    z = torch.randn(5, 138)
    assert g.expand_to_volume(z).shape == (5, 16, 8, 8)
    with pytest.raises(ShapeMismatch):
        g.expand_to_volume(torch.randn(5, 137))
    x8 = torch.randn(2, 16, 8, 8)
    assert g.upsample(x8, 0).shape == (2, 16, 16, 16)
    assert g.upsample(torch.randn(2, 16, 16, 16), 1).shape == (2, 16, 32, 32)
    with pytest.raises(ShapeMismatch):
        g.upsample(torch.randn(1, 16, 32, 32), 1)
    out = g.generation_head(torch.randn(2, 16, 32, 32) * 10)
    assert out.shape == (2, 1, 32, 32)
    assert out.abs().max() <= 1


def test_linear_stages_map_zero_to_zero():
    g = LayoutGenerator(SMALL)
    with torch.no_grad():
        g.expand.bias.zero_()
        g.upsamples[0].bias.zero_()
    assert (g.expand_to_volume(torch.zeros(2, 138)) == 0).all()
    assert (g.upsample(torch.zeros(1, 4, 8, 8), 0) == 0).all()
    a, b = torch.randn(138), torch.randn(138)
    f = g.expand_to_volume
    torch.testing.assert_close(f(a + b), f(a) + f(b) - f(torch.zeros(138)), atol=1e-5, rtol=1e-5)


def test_generate_shapes_and_determinism():
    torch.manual_seed(0)
    g = LayoutGenerator(SMALL)
    d = BubbleDiagram([0, 1, 2, 3], [(0, 1), (1, 2), (2, 3)])
    masks = generate(g, d, 5)
    assert len(masks) == 4 and all(m.shape == (1, 32, 32) for m in masks)
    again = generate(g, d, 5)
    assert all(torch.equal(a, b) for a, b in zip(masks, again))


def test_generator_is_permutation_equivariant():
    torch.manual_seed(0)
    g = LayoutGenerator(SMALL).double()
    d = BubbleDiagram([0, 1, 2, 3, 4], [(0, 1), (1, 2), (3, 4), (0, 4)])
    z = sample_node_inputs([d], 3, dtype=torch.float64)
    perm = [2, 4, 0, 3, 1]
    out = g(z, GraphBatch([d], torch.float64))
    out_perm = g(z[perm], GraphBatch([d.permuted(perm)], torch.float64))
    torch.testing.assert_close(out_perm, out[perm])


def test_batched_graphs_do_not_interact():
    torch.manual_seed(0)
    g = LayoutGenerator(SMALL).double()
    d1 = BubbleDiagram([0, 1, 2], [(0, 1)])
    d2 = BubbleDiagram([3, 4], [(0, 1)])
    z1 = sample_node_inputs([d1], 1, dtype=torch.float64)
    z2 = sample_node_inputs([d2], 2, dtype=torch.float64)
    joint = g(torch.cat([z1, z2]), GraphBatch([d1, d2], torch.float64))
    torch.testing.assert_close(joint[:3], g(z1, GraphBatch([d1], torch.float64)))
    torch.testing.assert_close(joint[3:], g(z2, GraphBatch([d2], torch.float64)))


def scan_bbox(mask):
    rows, cols = [], []
    for y in range(32):
        for x in range(32):
            if mask[y][x] > 0:
                rows.append(y)
                cols.append(x)
    return min(cols), min(rows), max(cols) + 1, max(rows) + 1


def test_fit_rectangle():
    m = -np.ones((32, 32))
    m[2, 3] = m[5, 7] = 0.5
    assert fit_rectangle(m) == Rect(3, 2, 8, 6)
    with pytest.raises(EmptyMask):
        fit_rectangle(np.zeros((1, 32, 32)))
    assert fit_rectangle(torch.ones(1, 32, 32)) == Rect(0, 0, 32, 32)
    rng = np.random.default_rng(4)
    for _ in range(50):
        m = np.where(rng.random((32, 32)) < 0.01, 1.0, -1.0)
        if (m > 0).any():
            assert fit_rectangle(m).as_list() == list(scan_bbox(m))
