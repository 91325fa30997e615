"""Masked graph modeling: hide a share of nodes or edges, encode what is
visible with a graph-Transformer encoder, reconstruct the rest with a
shallow decoder. The trained encoder initialises the generator's GTEs."""

import json
import math
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .checkpoint import load_checkpoint, save_checkpoint
from .exceptions import NoEdges, NonFiniteLoss, ShapeMismatch
from .graph import NUM_ROOM_TYPES, one_hot
from .layers import GraphBatch, GraphTransformerEncoder

BRANCHES = ("node", "edge")
EDGE_CONSTRUCTIONS = ("line", "complement")


def mask_count(n, ratio):
    """round(ratio * n) clamped to [1, n - 1]; zero below two items.

    Rounds halves up, on the decimal value of ``ratio``, so 0.5 * 5 masks 3.
    """
    if not 0 < ratio < 1:
        raise ValueError("mask ratio must lie in (0, 1)")
    if n < 2:
        return 0
    k = int((Decimal(repr(ratio)) * n).quantize(Decimal(1), rounding=ROUND_HALF_UP))
    return min(max(k, 1), n - 1)


@dataclass(frozen=True)
class EdgeBranchGraph:
    """Graph whose nodes are node pairs of a bubble diagram.

    With the line construction the pairs are the diagram's edges (label 1);
    with the complement construction they are its non-edges (label 0). Two
    pairs are connected when they share an endpoint.
    """

    pairs: tuple
    connections: tuple
    labels: tuple

    @property
    def num_items(self):
        return len(self.pairs)


def build_edge_branch(diagram, construction="line"):
    if construction == "line":
        pairs, label = list(diagram.edges), 1
    elif construction == "complement":
        present = diagram.edge_set
        n = diagram.num_rooms
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in present]
        label = 0
    else:
        raise ValueError(f"unknown edge construction {construction!r}")
    if not pairs:
        raise NoEdges(f"{construction} edge branch of this diagram is empty")
    connections = tuple(
        (a, b)
        for a in range(len(pairs))
        for b in range(a + 1, len(pairs))
        if set(pairs[a]) & set(pairs[b])
    )
    return EdgeBranchGraph(tuple(pairs), connections, (label,) * len(pairs))


@dataclass(frozen=True)
class MaskPlan:
    masked_nodes: tuple
    masked_edges: tuple
    ratio: float


def sample_mask_plan(diagram, ratio, rng, edge_construction="line"):
    """Uniformly random masked subsets of rooms and of edge-branch items."""
    rng = np.random.default_rng(rng)
    n = diagram.num_rooms
    nodes = tuple(sorted(int(i) for i in rng.choice(n, mask_count(n, ratio), replace=False)))
    try:
        e = build_edge_branch(diagram, edge_construction).num_items
    except NoEdges:
        e = 0
    edges = tuple(sorted(int(i) for i in rng.choice(e, mask_count(e, ratio), replace=False))) if e else ()
    return MaskPlan(nodes, edges, ratio)


@dataclass
class PretrainConfig:
    encoder_blocks: int = 8
    decoder_blocks: int = 2
    mask_ratio: float = 0.4
    channels: int = 16
    volume_size: int = 8
    attention_heads: int = 1
    max_items: int = 128
    branches: tuple = BRANCHES
    edge_construction: str = "line"
    batch_size: int = 32
    steps: int = 3000
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        self.branches = tuple(self.branches)
        if self.decoder_blocks >= self.encoder_blocks:
            raise ValueError("decoder must be shallower than the encoder")
        if not 0 < self.mask_ratio < 1:
            raise ValueError("mask_ratio must lie in (0, 1)")
        if not self.branches or set(self.branches) - set(BRANCHES):
            raise ValueError(f"branches must be a nonempty subset of {BRANCHES}")
        if self.edge_construction not in EDGE_CONSTRUCTIONS:
            raise ValueError(f"edge_construction must be one of {EDGE_CONSTRUCTIONS}")

    def to_dict(self):
        return asdict(self)


@dataclass
class BranchGraph:
    """Items of one branch for one diagram: features, connectivity, targets."""

    features: np.ndarray
    edges: list
    targets: list
    masked: tuple = field(default=())

    @property
    def num_items(self):
        return len(self.targets)

    @property
    def visible(self):
        hidden = set(self.masked)
        return [i for i in range(self.num_items) if i not in hidden]


def node_branch_graph(diagram, masked=()):
    feats = np.stack([one_hot(t) for t in diagram.room_types])
    return BranchGraph(feats, list(diagram.edges), [int(t) for t in diagram.room_types], tuple(masked))


def edge_branch_graph(diagram, masked=(), construction="line"):
    eb = build_edge_branch(diagram, construction)
    feats = np.stack([
        np.concatenate([one_hot(diagram.room_types[i]) + one_hot(diagram.room_types[j]), [label]])
        for (i, j), label in zip(eb.pairs, eb.labels)
    ])
    return BranchGraph(feats, list(eb.connections), list(eb.labels), tuple(masked))


class MaskedBranch(nn.Module):
    """Asymmetric encoder/decoder for one item type (nodes or edges)."""

    def __init__(self, in_dim, num_classes, cfg):
        super().__init__()
        c, s = cfg.channels, cfg.volume_size
        self.cfg = cfg
        self.embed = nn.Linear(in_dim, c * s * s)
        self.encoder = GraphTransformerEncoder(c, cfg.encoder_blocks, cfg.attention_heads)
        self.mask_token = nn.Parameter(0.02 * torch.randn(c, s, s))
        self.pos_embed = nn.Parameter(0.02 * torch.randn(cfg.max_items, c))
        self.decoder = GraphTransformerEncoder(c, cfg.decoder_blocks, cfg.attention_heads)
        self.head = nn.Sequential(nn.Conv2d(c, 4, 1), nn.GELU(), nn.Flatten(), nn.Linear(4 * s * s, num_classes))
        nn.init.zeros_(self.head[-1].weight)
        nn.init.zeros_(self.head[-1].bias)

    def _volumes(self, feats):
        c, s = self.cfg.channels, self.cfg.volume_size
        x = torch.as_tensor(feats, dtype=self.embed.weight.dtype)
        return self.embed(x).view(-1, c, s, s)

    def encode_visible(self, graphs):
        """Latents for visible items only, encoded on the visible induced subgraphs."""
        feats, sizes, edge_lists = [], [], []
        for g in graphs:
            vis = g.visible
            relabel = {old: new for new, old in enumerate(vis)}
            feats.append(g.features[vis])
            sizes.append(len(vis))
            edge_lists.append([(relabel[i], relabel[j]) for i, j in g.edges if i in relabel and j in relabel])
        batch = GraphBatch.from_graphs(sizes, edge_lists, dtype=self.embed.weight.dtype)
        x = self._volumes(np.concatenate(feats)) if batch.num_nodes else self.mask_token.new_zeros((0,) + self.mask_token.shape)
        return self.encoder(x, batch) if batch.num_nodes else x

    def decode(self, latents, graphs):
        """Logits for every item: latents and mask tokens back in original order."""
        tokens, k = [], 0
        for g in graphs:
            if g.num_items > self.cfg.max_items:
                raise ShapeMismatch(f"{g.num_items} items exceed max_items={self.cfg.max_items}")
            hidden = set(g.masked)
            for i in range(g.num_items):
                if i in hidden:
                    tok = self.mask_token
                else:
                    tok = latents[k]
                    k += 1
                tokens.append(tok + self.pos_embed[i][:, None, None])
        batch = GraphBatch.from_graphs([g.num_items for g in graphs], [g.edges for g in graphs], self.embed.weight.dtype)
        return self.head(self.decoder(torch.stack(tokens), batch))

    def forward(self, graphs):
        return self.decode(self.encode_visible(graphs), graphs)

    def encoder_parameter_count(self):
        return sum(p.numel() for m in (self.embed, self.encoder) for p in m.parameters())

    def decoder_parameter_count(self):
        own = self.mask_token.numel() + self.pos_embed.numel()
        return own + sum(p.numel() for m in (self.decoder, self.head) for p in m.parameters())


def _branch_targets(graphs):
    targets = torch.tensor([t for g in graphs for t in g.targets], dtype=torch.long)
    masked = torch.zeros(len(targets), dtype=torch.bool)
    k = 0
    for g in graphs:
        masked[[k + i for i in g.masked]] = True
        k += g.num_items
    return targets, masked


def pretraining_loss(node_logits, edge_logits, masked, targets):
    """Cross-entropy summed over masked items of both branches.

    ``masked`` and ``targets`` are ``(node, edge)`` pairs of a boolean mask
    and a class-index tensor; a branch whose logits are ``None`` is skipped.
    """
    total = None
    for logits, mask, target in zip((node_logits, edge_logits), masked, targets):
        if logits is None:
            continue
        term = F.cross_entropy(logits[mask], target[mask], reduction="sum") if mask.any() else logits.sum() * 0
        total = term if total is None else total + term
    return total


class MaskedGraphPretrainer(nn.Module):
    def __init__(self, cfg=None):
        super().__init__()
        self.cfg = cfg = cfg or PretrainConfig()
        self.node_branch = MaskedBranch(NUM_ROOM_TYPES, NUM_ROOM_TYPES, cfg) if "node" in cfg.branches else None
        self.edge_branch = MaskedBranch(NUM_ROOM_TYPES + 1, 2, cfg) if "edge" in cfg.branches else None

    def branch_graphs(self, diagrams, plans):
        nodes = [node_branch_graph(d, p.masked_nodes) for d, p in zip(diagrams, plans)]
        edges = []
        for d, p in zip(diagrams, plans):
            try:
                edges.append(edge_branch_graph(d, p.masked_edges, self.cfg.edge_construction))
            except NoEdges:
                pass  # edgeless diagrams skip the edge branch
        return nodes, edges

    def forward(self, diagrams, plans):
        """Returns ``(loss, outputs)``; outputs maps branch -> (logits, targets, masked)."""
        nodes, edges = self.branch_graphs(diagrams, plans)
        outputs = {}
        if self.node_branch is not None:
            outputs["node"] = (self.node_branch(nodes),) + _branch_targets(nodes)
        if self.edge_branch is not None and edges:
            outputs["edge"] = (self.edge_branch(edges),) + _branch_targets(edges)
        node = outputs.get("node", (None, None, None))
        edge = outputs.get("edge", (None, None, None))
        loss = pretraining_loss(node[0], edge[0], (node[2], edge[2]), (node[1], edge[1]))
        return loss, outputs

    def encoders(self):
        out = {}
        if self.node_branch is not None:
            out["node_encoder"] = self.node_branch.encoder
        if self.edge_branch is not None:
            out["edge_encoder"] = self.edge_branch.encoder
        return out


@torch.no_grad()
def recovery_accuracy(model, diagrams, rounds=10, seed=12345):
    """Accuracy on masked items over ``rounds`` fresh random plans per diagram."""
    rng = np.random.default_rng(seed)
    hits = {b: 0 for b in BRANCHES}
    counts = {b: 0 for b in BRANCHES}
    for _ in range(rounds):
        plans = [sample_mask_plan(d, model.cfg.mask_ratio, rng, model.cfg.edge_construction) for d in diagrams]
        _, outputs = model(diagrams, plans)
        for branch, (logits, targets, masked) in outputs.items():
            hits[branch] += int((logits.argmax(1)[masked] == targets[masked]).sum())
            counts[branch] += int(masked.sum())
    return {b: hits[b] / counts[b] for b in BRANCHES if counts[b]}


def pretrain_run(diagrams, cfg=None, out_dir=None, callback=None):
    """Optimise all enabled branches jointly on fresh mask plans each step.

    Writes ``pretrain_log.jsonl`` and an encoder-only checkpoint under
    ``out_dir`` when given. Returns ``(model, losses)``.
    """
    cfg = cfg or PretrainConfig()
    diagrams = list(diagrams)
    if not diagrams:
        raise ValueError("no diagrams to pre-train on")
    torch.manual_seed(cfg.seed)
    model = MaskedGraphPretrainer(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    losses = []
    log = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log = open(out_dir / "pretrain_log.jsonl", "w", encoding="utf-8")
    try:
        for step in range(1, cfg.steps + 1):
            k = min(cfg.batch_size, len(diagrams))
            batch = [diagrams[i] for i in sorted(rng.choice(len(diagrams), k, replace=False))]
            plans = [sample_mask_plan(d, cfg.mask_ratio, rng, cfg.edge_construction) for d in batch]
            loss, _ = model(batch, plans)
            value = loss.item()
            if not math.isfinite(value):
                raise NonFiniteLoss(step, {"pretraining": value})
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            losses.append(value)
            if log is not None:
                log.write(json.dumps({"step": step, "loss": value}) + "\n")
            if callback is not None:
                callback(step, model, value)
    finally:
        if log is not None:
            log.close()
    if out_dir is not None:
        save_encoder(model, out_dir / "encoder", step=cfg.steps)
    return model, losses


def save_encoder(model, path, step=0):
    states = {name: enc.state_dict() for name, enc in model.encoders().items()}
    return save_checkpoint(path, states, "gte_encoder", step, model.cfg.to_dict())


def _merge_states(states):
    """Parameter-wise mean when both branches were pre-trained."""
    if len(states) == 1:
        return next(iter(states.values()))
    keys = next(iter(states.values())).keys()
    return {k: torch.stack([s[k] for s in states.values()]).mean(0) for k in keys}


def export_encoder(checkpoint, generator):
    """Load pre-trained encoder blocks into every GTE of ``generator``.

    ``checkpoint`` is a checkpoint directory or a ``MaskedGraphPretrainer``.
    Decoder, mask-token and positional parameters are never exported.
    """
    if isinstance(checkpoint, MaskedGraphPretrainer):
        states = {k: v.state_dict() for k, v in checkpoint.encoders().items()}
    else:
        manifest, states = load_checkpoint(checkpoint)
        if manifest.get("component") != "gte_encoder":
            raise ValueError(f"checkpoint component is {manifest.get('component')!r}, not 'gte_encoder'")
    state = _merge_states(states)
    for gte in generator.gte_encoders():
        target = gte.state_dict()
        if target.keys() != state.keys():
            raise ShapeMismatch(
                f"encoder has {len(state)} tensors, generator GTE expects {len(target)} (block count differs)"
            )
        for k, v in state.items():
            if v.shape != target[k].shape:
                raise ShapeMismatch(f"{k}: pretrained {tuple(v.shape)} vs generator {tuple(target[k].shape)}")
        gte.load_state_dict({k: v.to(target[k].dtype) for k, v in state.items()})
    return generator
