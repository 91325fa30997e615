import numpy as np
import pytest
import torch

from conftest import central_difference, relative_error
from floorgraph.discriminator import CriticConfig, LayoutCritic, gradient_penalty
from floorgraph.exceptions import LengthMismatch
from floorgraph.graph import BubbleDiagram
from floorgraph.layers import GraphBatch

TINY = CriticConfig(type_channels=1, channels=2, room_dim=8)


def masks(n, seed=0, dtype=torch.float32):
    return torch.rand(n, 1, 32, 32, generator=torch.Generator().manual_seed(seed), dtype=dtype) * 2 - 1


def test_output_shapes_and_probes():
    torch.manual_seed(0)
    critic = LayoutCritic()
    d = BubbleDiagram([0, 1, 2], [(0, 1), (1, 2)])
    b = GraphBatch([d])
    m = masks(3)
    x = critic.embed_room_input(m, b.type_one_hot())
    assert x.shape == (3, 16, 32, 32)
    x = critic.downsamples[0](critic.rounds[0](x, b))
    assert x.shape == (3, 16, 16, 16)
    x = critic.downsamples[1](critic.rounds[1](x, b))
    assert x.shape == (3, 16, 8, 8)
    assert critic.room_head(x).shape == (3, 128)
    score, logits = critic(m, b)
    assert score.shape == (1,) and logits.shape == (1, 10)


def test_single_room_and_blank_masks_are_finite():
    torch.manual_seed(0)
    critic = LayoutCritic()
    b = GraphBatch([BubbleDiagram([5])])
    score, logits = critic(masks(1) * 0, b)
    assert torch.isfinite(score).all() and logits.shape == (1, 10)


def test_room_type_changes_embedding():
    torch.manual_seed(0)
    critic = LayoutCritic()
    m = masks(1)
    a = critic.embed_room_input(m, torch.eye(10)[[2]])
    b = critic.embed_room_input(m, torch.eye(10)[[7]])
    assert not torch.allclose(a, b)
    assert torch.equal(a, critic.embed_room_input(m, torch.eye(10)[[2]]))


def test_score_is_invariant_to_room_order():
    torch.manual_seed(0)
    critic = LayoutCritic().double()
    d = BubbleDiagram([0, 1, 2, 3], [(0, 1), (1, 2), (0, 3)])
    m = masks(4, dtype=torch.float64)
    perm = [3, 1, 0, 2]
    s1, c1 = critic(m, GraphBatch([d], torch.float64))
    s2, c2 = critic(m[perm], GraphBatch([d.permuted(perm)], torch.float64))
    assert torch.allclose(s1, s2, atol=1e-6) and torch.allclose(c1, c2, atol=1e-6)


def test_length_mismatch():
    critic = LayoutCritic(TINY)
    with pytest.raises(LengthMismatch):
        critic(masks(2), GraphBatch([BubbleDiagram([0, 1, 2])]))


def test_per_room_classification_flag():
    critic = LayoutCritic(CriticConfig(per_room_classification=True))
    _, logits = critic(masks(3), GraphBatch([BubbleDiagram([0, 1, 2])]))
    assert logits.shape == (3, 10)


def unit_linear_critic(batch, seed=0):
    """Score = <w, masks of the graph> with ||w|| = 1 per graph."""
    w = torch.randn(batch.num_nodes, 1, 32, 32, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)
    norms = batch.sum_nodes(w.pow(2).flatten(1).sum(1)).sqrt()
    w = w / norms[batch.graph_index].view(-1, 1, 1, 1)
    return lambda x, b: b.sum_nodes((x * w).flatten(1).sum(1))


def test_penalty_vanishes_for_unit_norm_linear_critic():
    b = GraphBatch([BubbleDiagram([0, 1]), BubbleDiagram([2, 3, 4], [(0, 1)])], torch.float64)
    real, fake = masks(5, 1, torch.float64), masks(5, 2, torch.float64)
    gp = gradient_penalty(unit_linear_critic(b), real, fake, b, torch.Generator().manual_seed(0))
    assert gp < 1e-10


def test_penalty_of_constant_critic_is_lambda():
    b = GraphBatch([BubbleDiagram([0, 1]), BubbleDiagram([2])], torch.float64)
    constant = lambda x, batch: torch.zeros(batch.num_graphs, dtype=x.dtype)  # noqa: E731
    gp = gradient_penalty(constant, masks(3, 1, torch.float64), masks(3, 2, torch.float64), b, lambda_gp=10.0)
    assert gp.item() == 10.0


def test_penalty_matches_finite_difference_gradient_norm():
    torch.manual_seed(0)
    critic = LayoutCritic(TINY).double()
    d = BubbleDiagram([0, 3], [(0, 1)])
    b = GraphBatch([d], torch.float64)
    x = masks(2, 3, torch.float64)
    # real == fake pins the interpolate regardless of epsilon
    gp = gradient_penalty(critic, x, x, b, lambda_gp=10.0)
    fd = central_difference(lambda m: critic(m, b)[0].sum(), x)
    expected = 10.0 * (fd.norm() - 1) ** 2
    assert relative_error(gp, expected) < 1e-3
    assert gp >= 0


def test_penalty_is_nonnegative_and_differentiable():
    torch.manual_seed(1)
    critic = LayoutCritic(TINY)
    b = GraphBatch([BubbleDiagram([0, 1], [(0, 1)])])
    gp = gradient_penalty(critic, masks(2, 1), masks(2, 2), b, torch.Generator().manual_seed(0))
    assert gp >= 0
    gp.backward()
    assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in critic.parameters())
