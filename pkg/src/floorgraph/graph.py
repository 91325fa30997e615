"""Bubble diagrams: room types, node inputs and shortest-path adjacency."""

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .exceptions import EmptyGraph, IndexOutOfRange, InvalidDiagram, SelfLoop

NOISE_DIM = 128
NUM_ROOM_TYPES = 10


class RoomType(IntEnum):
    LIVING_ROOM = 0
    KITCHEN = 1
    BEDROOM = 2
    BATHROOM = 3
    CLOSET = 4
    BALCONY = 5
    CORRIDOR = 6
    DINING_ROOM = 7
    LAUNDRY_ROOM = 8
    UNKNOWN = 9

    @property
    def label(self):
        return self.name.lower().replace("_", " ")

    @classmethod
    def from_label(cls, label):
        return cls[label.strip().upper().replace(" ", "_")]


def one_hot(room_type, num_types=NUM_ROOM_TYPES):
    vec = np.zeros(num_types)
    vec[int(RoomType(room_type))] = 1.0
    return vec


def _canonical_edges(edges):
    return tuple(sorted({(min(int(i), int(j)), max(int(i), int(j))) for i, j in edges}))


@dataclass(frozen=True)
class BubbleDiagram:
    """Room-type labelled undirected graph.

    Edges are stored once, as sorted ``(min, max)`` pairs, so two diagrams
    with the same adjacency compare equal regardless of how edges were given.
    """

    room_types: tuple
    edges: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "room_types", tuple(RoomType(int(t)) for t in self.room_types))
        validate(self)
        object.__setattr__(self, "edges", _canonical_edges(self.edges))

    @property
    def num_rooms(self):
        return len(self.room_types)

    @property
    def edge_set(self):
        return frozenset(self.edges)

    def adjacency_matrix(self):
        adj = np.zeros((self.num_rooms, self.num_rooms), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = True
        return adj

    def neighbors(self, r):
        return sorted({j for i, j in self.edges if i == r} | {i for i, j in self.edges if j == r})

    def non_neighbors(self, r):
        connected = set(self.neighbors(r))
        return [s for s in range(self.num_rooms) if s != r and s not in connected]

    def permuted(self, perm):
        """Return the diagram with room ``perm[k]`` moved to position ``k``."""
        perm = list(perm)
        inverse = {old: new for new, old in enumerate(perm)}
        return BubbleDiagram(
            [self.room_types[p] for p in perm],
            [(inverse[i], inverse[j]) for i, j in self.edges],
        )


def validate(diagram):
    """Raise the matching :class:`InvalidDiagram` subclass if ``diagram`` is malformed."""
    num_rooms = len(diagram.room_types)
    if num_rooms == 0:
        raise EmptyGraph()
    for edge in diagram.edges:
        if len(edge) != 2:
            raise InvalidDiagram(f"edge {edge!r} is not a pair")
        i, j = int(edge[0]), int(edge[1])
        if not (0 <= i < num_rooms and 0 <= j < num_rooms):
            raise IndexOutOfRange(i, j, num_rooms)
        if i == j:
            raise SelfLoop(i)
    return True


def build_node_input(room_type, rng, noise_dim=NOISE_DIM):
    """Concatenate standard-normal noise with the one-hot room type.

    ``rng`` is a seed or a ``numpy.random.Generator``; an integer seed makes
    the result a pure function of ``(room_type, rng)``.
    """
    rng = np.random.default_rng(rng)
    return np.concatenate([rng.standard_normal(noise_dim), one_hot(room_type)])


def shortest_path_matrix(diagram):
    """Hop distance between every pair of rooms, ``-1`` where no path exists."""
    n = diagram.num_rooms
    adjacency = [[] for _ in range(n)]
    for i, j in diagram.edges:
        adjacency[i].append(j)
        adjacency[j].append(i)
    dist = np.full((n, n), -1, dtype=np.int64)
    for source in range(n):
        dist[source, source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in adjacency[u]:
                if dist[source, v] < 0:
                    dist[source, v] = dist[source, u] + 1
                    queue.append(v)
    return dist
