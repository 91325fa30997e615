"""Graph batching and the graph-Transformer building blocks.

Several graphs are processed as one disjoint union: every node carries a
feature volume ``(C, H, W)`` and all cross-node operations are masked by
block-diagonal relations, so nothing leaks between graphs.
"""

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .exceptions import ShapeMismatch


class GraphBatch:
    """Disjoint union of bubble diagrams with precomputed node relations.

    Attributes
    ----------
    conn : bool tensor (N, N)
        ``conn[r, s]`` is true when rooms r and s share an edge.
    nonconn : bool tensor (N, N)
        Same graph, distinct rooms, no edge.
    adjacency : float tensor (N, N)
        ``conn`` plus self-loops, used by the graph modeling block.
    """

    def __init__(self, diagrams, dtype=torch.float32):
        self.diagrams = list(diagrams)
        types = [int(t) for d in self.diagrams for t in d.room_types]
        self._build([d.num_rooms for d in self.diagrams], [d.edges for d in self.diagrams], types, dtype)

    @classmethod
    def from_graphs(cls, sizes, edge_lists, dtype=torch.float32):
        """Batch of untyped graphs given as node counts and edge lists."""
        out = cls.__new__(cls)
        out.diagrams = []
        out._build(list(sizes), list(edge_lists), [0] * int(sum(sizes)), dtype)
        return out

    def _build(self, sizes, edge_lists, types, dtype):
        self.sizes = sizes
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        n = int(self.offsets[-1])
        conn = np.zeros((n, n), dtype=bool)
        same = np.zeros((n, n), dtype=bool)
        for k, edges in enumerate(edge_lists):
            o = self.offsets[k]
            same[o:o + sizes[k], o:o + sizes[k]] = True
            for i, j in edges:
                conn[o + i, o + j] = conn[o + j, o + i] = True
        nonconn = same & ~conn
        np.fill_diagonal(nonconn, False)
        self.conn = torch.from_numpy(conn)
        self.nonconn = torch.from_numpy(nonconn)
        self.adjacency = torch.from_numpy(conn | np.eye(n, dtype=bool)).to(dtype)
        self.graph_index = torch.from_numpy(np.repeat(np.arange(len(sizes)), sizes))
        self.room_types = torch.tensor(types, dtype=torch.long)

    @property
    def num_nodes(self):
        return int(self.offsets[-1])

    @property
    def num_graphs(self):
        return len(self.sizes)

    def to(self, dtype):
        self.adjacency = self.adjacency.to(dtype)
        return self

    def split(self, x):
        """Per-graph views of a node-major tensor."""
        return [x[self.offsets[k]:self.offsets[k + 1]] for k in range(self.num_graphs)]

    def sum_nodes(self, x):
        out = x.new_zeros((self.num_graphs,) + tuple(x.shape[1:]))
        return out.index_add(0, self.graph_index, x)

    def type_one_hot(self, dtype=torch.float32):
        return F.one_hot(self.room_types, 10).to(dtype)


def set_pool(x, relation):
    """Sum of neighbour volumes per node; zero for an empty neighbour set."""
    weights = relation.to(x.dtype)
    return torch.einsum("rs,s...->r...", weights, x)


def node_attention(x, relation, scale, heads=1, return_weights=False):
    """Softmax attention of every node over the nodes in its relation row.

    Volumes are flattened, logits are dot products divided by the square
    root of the row's set size, and the output is ``scale`` times the
    weighted sum of the flattened volumes. Rows with an empty set give zero.
    """
    n = x.shape[0]
    flat = x.reshape(n, -1)
    if flat.shape[1] % heads:
        raise ShapeMismatch(f"{heads} heads do not divide feature length {flat.shape[1]}")
    v = flat.reshape(n, heads, -1).transpose(0, 1)  # (heads, N, d/heads)
    card = relation.sum(dim=1).clamp(min=1).to(x.dtype)
    logits = v @ v.transpose(1, 2) / card.sqrt()[None, :, None]
    logits = logits.masked_fill(~relation, torch.finfo(x.dtype).min)
    weights = torch.softmax(logits, dim=-1) * relation.to(x.dtype)
    out = (weights @ v).transpose(0, 1).reshape_as(x)
    out = scale * out
    if return_weights:
        return out, weights
    return out


def graph_conv(x, adjacency, weight):
    """GeLU(A g P): neighbour sum over nodes, then per-pixel channel mixing."""
    if adjacency.shape != (x.shape[0], x.shape[0]) or weight.shape[0] != x.shape[1]:
        raise ShapeMismatch(
            f"adjacency {tuple(adjacency.shape)} / weight {tuple(weight.shape)} vs features {tuple(x.shape)}"
        )
    mixed = torch.einsum("rs,sc...->rc...", adjacency.to(x.dtype), x)
    return F.gelu(torch.einsum("nc...,cd->nd...", mixed, weight))


class NodeNorm(nn.Module):
    """Normalise each node's whole volume, then apply a per-channel affine."""

    def __init__(self, channels, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        y = F.layer_norm(x, x.shape[1:], eps=self.eps)
        shape = (1, -1) + (1,) * (x.dim() - 2)
        return y * self.weight.view(shape) + self.bias.view(shape)


class GTEBlock(nn.Module):
    """One graph-Transformer block: connected + non-connected node attention
    added to the input, followed by a residual graph modeling block."""

    def __init__(self, channels, heads=1, use_cna=True, use_nna=True, use_gmb=True, normalize=True):
        super().__init__()
        self.heads = heads
        self.use_cna, self.use_nna, self.use_gmb = use_cna, use_nna, use_gmb
        self.alpha = nn.Parameter(torch.zeros(()))
        self.beta = nn.Parameter(torch.zeros(()))
        self.norm_attn = NodeNorm(channels) if normalize else nn.Identity()
        self.norm_gmb = NodeNorm(channels) if normalize else nn.Identity()
        self.gmb_weight = nn.Parameter(torch.empty(channels, channels))
        nn.init.kaiming_uniform_(self.gmb_weight, a=math.sqrt(5))

    def attention_sum(self, x, batch):
        h = self.norm_attn(x)
        out = x
        if self.use_cna:
            out = out + node_attention(h, batch.conn, self.alpha, self.heads)
        if self.use_nna:
            out = out + node_attention(h, batch.nonconn, self.beta, self.heads)
        return out

    def forward(self, x, batch):
        x = self.attention_sum(x, batch)
        if self.use_gmb:
            x = x + graph_conv(self.norm_gmb(x), batch.adjacency, self.gmb_weight)
        return x


class GraphTransformerEncoder(nn.Module):
    def __init__(self, channels, num_blocks=8, heads=1, use_cna=True, use_nna=True, use_gmb=True, normalize=True):
        super().__init__()
        if num_blocks < 1:
            raise ValueError("need at least one block")
        self.channels = channels
        self.blocks = nn.ModuleList(
            GTEBlock(channels, heads, use_cna, use_nna, use_gmb, normalize) for _ in range(num_blocks)
        )

    def forward(self, x, batch):
        for block in self.blocks:
            x = block(x, batch)
        return x


def conv3x3(cin, cout, stride=1):
    return nn.Conv2d(cin, cout, 3, stride=stride, padding=1)
