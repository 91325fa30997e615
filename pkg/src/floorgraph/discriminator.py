"""Node-classification critic over graphs of room masks."""

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn

from .exceptions import LengthMismatch
from .graph import NUM_ROOM_TYPES
from .layers import conv3x3, set_pool


@dataclass
class CriticConfig:
    type_channels: int = 8
    channels: int = 16
    room_dim: int = 128
    per_room_classification: bool = False

    def to_dict(self):
        return asdict(self)


def _act():
    return nn.LeakyReLU(0.1)


class CriticMPN(nn.Module):
    """Plain convolutional message passing: [g; sum over N(r); sum over non-N(r)]."""

    def __init__(self, channels):
        super().__init__()
        self.cnn = nn.Sequential(conv3x3(3 * channels, 2 * channels), _act(), conv3x3(2 * channels, channels), _act())

    def forward(self, x, batch):
        return self.cnn(torch.cat([x, set_pool(x, batch.conn), set_pool(x, batch.nonconn)], dim=1))


class LayoutCritic(nn.Module):
    def __init__(self, cfg=None):
        super().__init__()
        self.cfg = cfg = cfg or CriticConfig()
        c, t = cfg.channels, cfg.type_channels
        self.type_expand = nn.Linear(NUM_ROOM_TYPES, t * 32 * 32)
        self.encoder = nn.Sequential(
            conv3x3(t + 1, c), _act(), conv3x3(c, c), _act(), conv3x3(c, c), _act()
        )
        self.rounds = nn.ModuleList(CriticMPN(c) for _ in range(2))
        self.downsamples = nn.ModuleList(
            nn.Sequential(nn.Conv2d(c, c, 4, stride=2, padding=1), _act()) for _ in range(2)
        )
        d = cfg.room_dim
        self.room_head = nn.Sequential(
            conv3x3(c, d // 4, stride=2), _act(),
            conv3x3(d // 4, d // 2, stride=2), _act(),
            conv3x3(d // 2, d, stride=2), nn.Flatten(),
        )
        self.score = nn.Linear(d, 1)
        self.classify = nn.Linear(d, NUM_ROOM_TYPES)

    def embed_room_input(self, masks, type_one_hot):
        t = self.type_expand(type_one_hot).view(-1, self.cfg.type_channels, 32, 32)
        return self.encoder(torch.cat([masks, t], dim=1))

    def room_vectors(self, masks, batch):
        if masks.shape[0] != batch.num_nodes:
            raise LengthMismatch(f"{masks.shape[0]} masks for {batch.num_nodes} rooms")
        x = self.embed_room_input(masks, batch.type_one_hot(masks.dtype))
        for mpn, down in zip(self.rounds, self.downsamples):
            x = down(mpn(x, batch))
        return self.room_head(x)

    def forward(self, masks, batch):
        """Returns ``(score, class_logits)``: one score per graph, and class
        logits per graph (or per room with ``per_room_classification``)."""
        rooms = self.room_vectors(masks, batch)
        pooled = batch.sum_nodes(rooms)
        score = self.score(pooled).squeeze(-1)
        logits = self.classify(rooms if self.cfg.per_room_classification else pooled)
        return score, logits


def gradient_penalty(critic, real, fake, batch, generator=None, lambda_gp=10.0):
    """WGAN-GP penalty on masks interpolated with one epsilon per graph.

    ``critic(masks, batch)`` may return a score tensor or a tuple whose first
    element is the per-graph score.
    """
    eps = torch.rand(batch.num_graphs, generator=generator, dtype=real.dtype)
    eps = eps[batch.graph_index].view(-1, *([1] * (real.dim() - 1)))
    mixed = (eps * real.detach() + (1 - eps) * fake.detach()).requires_grad_(True)
    out = critic(mixed, batch)
    score = out[0] if isinstance(out, tuple) else out
    grad = None
    if score.requires_grad:
        (grad,) = torch.autograd.grad(score.sum(), mixed, create_graph=True, allow_unused=True)
    if grad is None:  # critic ignores its input
        grad = torch.zeros_like(mixed)
    # vector_norm has a zero subgradient at the origin, unlike sqrt of a sum
    norms = torch.stack([torch.linalg.vector_norm(g) for g in batch.split(grad)])
    return lambda_gp * ((norms - 1) ** 2).mean()
