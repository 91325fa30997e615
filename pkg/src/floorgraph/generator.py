"""Graph-Transformer layout generator and rectangle fitting."""

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .exceptions import EmptyMask, ShapeMismatch
from .graph import NOISE_DIM, NUM_ROOM_TYPES, build_node_input
from .layers import GraphBatch, GraphTransformerEncoder, conv3x3, set_pool
from .layout import Rect

VARIANTS = ("eq2", "eq3", "eq4")


@dataclass
class GeneratorConfig:
    noise_dim: int = NOISE_DIM
    type_dim: int = NUM_ROOM_TYPES
    channels: int = 16
    resolutions: tuple = (8, 16, 32)
    gte_blocks: int = 8
    attention_heads: int = 1
    update_variant: str = "eq2"
    use_cna: bool = True
    use_nna: bool = True
    use_gmb: bool = True
    normalize: bool = True
    head_channels: tuple = (256, 128)

    def __post_init__(self):
        self.resolutions = tuple(self.resolutions)
        self.head_channels = tuple(self.head_channels)
        if self.update_variant not in VARIANTS:
            raise ValueError(f"update_variant must be one of {VARIANTS}")
        if self.gte_blocks < 1:
            raise ValueError("gte_blocks must be >= 1")
        if any(b != 2 * a for a, b in zip(self.resolutions, self.resolutions[1:])):
            raise ValueError(f"resolutions must double at each level, got {self.resolutions}")
        if self.resolutions[-1] != 32:
            raise ValueError("the last resolution must be 32")
        if self.attention_heads > 1 and (self.channels * self.resolutions[0] ** 2) % self.attention_heads:
            raise ValueError("attention_heads must divide the flattened feature length")

    @property
    def input_dim(self):
        return self.noise_dim + self.type_dim

    def to_dict(self):
        return asdict(self)


class ConvMPNRound(nn.Module):
    """One message-passing round: a GTE stack plus pooled connected and
    non-connected messages, fused by a two-layer CNN."""

    def __init__(self, cfg):
        super().__init__()
        c = cfg.channels
        self.variant = cfg.update_variant
        self.gte = GraphTransformerEncoder(
            c, cfg.gte_blocks, cfg.attention_heads, cfg.use_cna, cfg.use_nna, cfg.use_gmb, cfg.normalize
        )
        cin = c if self.variant == "eq4" else 3 * c
        self.cnn = nn.Sequential(conv3x3(cin, 2 * c), nn.GELU(), conv3x3(2 * c, c))

    def fuse_input(self, x, batch):
        h = self.gte(x, batch)
        if self.variant == "eq3":
            h = h - x
        if self.variant == "eq4":
            return h
        return torch.cat([h, set_pool(x, batch.conn), set_pool(x, batch.nonconn)], dim=1)

    def forward(self, x, batch):
        return self.cnn(self.fuse_input(x, batch))


class LayoutGenerator(nn.Module):
    def __init__(self, cfg=None):
        super().__init__()
        self.cfg = cfg = cfg or GeneratorConfig()
        c, r0 = cfg.channels, cfg.resolutions[0]
        self.expand = nn.Linear(cfg.input_dim, c * r0 * r0)
        self.rounds = nn.ModuleList(ConvMPNRound(cfg) for _ in cfg.resolutions)
        self.upsamples = nn.ModuleList(
            nn.ConvTranspose2d(c, c, 4, stride=2, padding=1) for _ in cfg.resolutions[1:]
        )
        h1, h2 = cfg.head_channels
        self.head = nn.Sequential(
            conv3x3(c, h1), nn.GELU(), conv3x3(h1, h2), nn.GELU(), conv3x3(h2, 1), nn.Tanh()
        )
        self._init_weights()

    def _init_weights(self):
        # unit-gain fan-in scaling keeps the per-room signal alive through the
        # conv stack. The default init shrinks it until the untrained generator
        # ignores its noise, and relu gain overshoots into a saturated tanh.
        # The output conv keeps its default small init.
        out = self.head[-2]
        for m in self.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)) and m is not out:
                nn.init.kaiming_normal_(m.weight, nonlinearity="linear")
                nn.init.zeros_(m.bias)
        nn.init.normal_(self.expand.weight, std=self.cfg.input_dim ** -0.5)
        nn.init.zeros_(self.expand.bias)

    def expand_to_volume(self, node_inputs):
        if node_inputs.shape[-1] != self.cfg.input_dim:
            raise ShapeMismatch(f"node input length {node_inputs.shape[-1]} != {self.cfg.input_dim}")
        r0 = self.cfg.resolutions[0]
        return self.expand(node_inputs).view(-1, self.cfg.channels, r0, r0)

    def upsample(self, x, level=0):
        if x.shape[-1] not in self.cfg.resolutions[:-1]:
            raise ShapeMismatch(f"cannot upsample a {x.shape[-1]}px volume")
        return self.upsamples[level](x)

    def generation_head(self, x):
        if tuple(x.shape[1:]) != (self.cfg.channels, 32, 32):
            raise ShapeMismatch(f"head expects ({self.cfg.channels}, 32, 32), got {tuple(x.shape[1:])}")
        return self.head(x)

    def features(self, node_inputs, batch):
        x = self.expand_to_volume(node_inputs)
        for level, mpn in enumerate(self.rounds):
            x = mpn(x, batch)
            if level < len(self.upsamples):
                x = self.upsample(x, level)
        return x

    def forward(self, node_inputs, batch):
        """Masks of shape (N, 1, 32, 32) in [-1, 1]."""
        return self.generation_head(self.features(node_inputs, batch))

    def gte_encoders(self):
        return [mpn.gte for mpn in self.rounds]


def sample_node_inputs(diagrams, rng, noise_dim=NOISE_DIM, dtype=torch.float32):
    """Stack one noise + one-hot vector per room, in batch node order."""
    rng = np.random.default_rng(rng)
    rows = [build_node_input(t, rng, noise_dim) for d in diagrams for t in d.room_types]
    return torch.tensor(np.stack(rows), dtype=dtype)


@torch.no_grad()
def generate(model, diagram, rng):
    """One (1, 32, 32) mask tensor per room of ``diagram``."""
    dtype = next(model.parameters()).dtype
    batch = GraphBatch([diagram], dtype=dtype)
    z = sample_node_inputs([diagram], rng, model.cfg.noise_dim, dtype)
    masks = model(z, batch)
    return list(masks.unbind(0))


def fit_rectangle(mask):
    """Tightest half-open box around pixels with value > 0."""
    grid = np.asarray(mask.detach().cpu() if torch.is_tensor(mask) else mask).reshape(32, 32)
    rows = np.flatnonzero((grid > 0).any(axis=1))
    cols = np.flatnonzero((grid > 0).any(axis=0))
    if rows.size == 0:
        raise EmptyMask("no pixel above zero")
    return Rect(cols[0], rows[0], cols[-1] + 1, rows[-1] + 1)


def masks_to_rects(masks):
    """Fit rectangles, using ``None`` for rooms whose mask is empty."""
    out = []
    for m in masks:
        try:
            out.append(fit_rectangle(m))
        except EmptyMask:
            out.append(None)
    return out


def rects_to_masks(rects, dtype=torch.float32):
    """Real layouts in the generator's value range: +1 inside a room, -1 outside."""
    arr = np.stack([r.mask() for r in rects]).astype(np.float64) * 2 - 1
    return torch.tensor(arr[:, None], dtype=dtype)
