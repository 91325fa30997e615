"""Adversarial, room-classification and graph cycle-consistency objectives."""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .exceptions import ShapeMismatch
from .graph import NUM_ROOM_TYPES, BubbleDiagram
from .layers import conv3x3


def adversarial_losses(real_score, fake_score):
    """Wasserstein critic and generator losses (penalty added by the caller)."""
    real_score, fake_score = real_score.mean(), fake_score.mean()
    return fake_score - real_score, -fake_score


def presence_targets(diagrams, dtype=torch.float32):
    """Multi-hot vector of the room types present in each diagram."""
    if isinstance(diagrams, BubbleDiagram):
        diagrams = [diagrams]
    out = torch.zeros(len(diagrams), NUM_ROOM_TYPES, dtype=dtype)
    for k, d in enumerate(diagrams):
        out[k, [int(t) for t in d.room_types]] = 1.0
    return out


def room_targets(diagrams, dtype=torch.float32):
    """One-hot room type per room, in batch node order."""
    if isinstance(diagrams, BubbleDiagram):
        diagrams = [diagrams]
    types = torch.tensor([int(t) for d in diagrams for t in d.room_types])
    return F.one_hot(types, NUM_ROOM_TYPES).to(dtype)


def classification_loss(class_logits, diagrams, per_room=False):
    """Mean binary cross-entropy of sigmoid(logits) against room-type targets."""
    logits = class_logits.reshape(-1, NUM_ROOM_TYPES)
    build = room_targets if per_room else presence_targets
    target = build(diagrams, logits.dtype)
    if target.shape != logits.shape:
        raise ShapeMismatch(f"logits {tuple(logits.shape)} vs targets {tuple(target.shape)}")
    return F.binary_cross_entropy_with_logits(logits, target)


def gcyc_loss(g_gt, g_gen):
    """Frobenius distance between target and estimated weighted adjacency."""
    g_gt = torch.as_tensor(g_gt, dtype=g_gen.dtype)
    if g_gt.shape != g_gen.shape:
        raise ShapeMismatch(f"{tuple(g_gt.shape)} vs {tuple(g_gen.shape)}")
    return torch.linalg.matrix_norm(g_gt - g_gen, ord="fro")


class LayoutToGraph(nn.Module):
    """Estimate a weighted adjacency matrix from a graph of room masks.

    Each mask is embedded by a small strided CNN; every room pair is scored
    from symmetric pair features plus the mean embedding of its layout.
    """

    def __init__(self, embed_dim=64, hidden=64):
        super().__init__()
        self.encoder = nn.Sequential(
            conv3x3(1, 8, stride=2), nn.LeakyReLU(0.1),
            conv3x3(8, 16, stride=2), nn.LeakyReLU(0.1),
            conv3x3(16, 32, stride=2), nn.LeakyReLU(0.1),
            nn.Flatten(), nn.Linear(32 * 4 * 4, embed_dim),
        )
        self.pair_head = nn.Sequential(
            nn.Linear(3 * embed_dim, hidden), nn.LeakyReLU(0.1), nn.Linear(hidden, 1)
        )

    def forward(self, masks):
        """``masks``: (M, 1, 32, 32) for one layout. Returns an (M, M) matrix."""
        m = masks.shape[0]
        e = self.encoder(masks)
        context = e.mean(0, keepdim=True).expand(m * m, -1)
        ei = e[:, None, :].expand(m, m, -1).reshape(m * m, -1)
        ej = e[None, :, :].expand(m, m, -1).reshape(m * m, -1)
        s = self.pair_head(torch.cat([ei + ej, ei * ej, context], dim=1)).view(m, m)
        s = (s + s.T) / 2
        return s * (1 - torch.eye(m, dtype=s.dtype))

    def per_graph(self, masks, batch):
        return [self(part) for part in batch.split(masks)]


def layout_to_graph(estimator, masks):
    return estimator(masks)
