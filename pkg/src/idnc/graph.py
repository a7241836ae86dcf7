"""Conflict graph over (user, wanted packet) pairs, plus criticality layers.

Two vertices are adjacent when the corresponding transmissions can be merged
into one XOR combination that stays instantly decodable for both users:
either they name the same packet, or each user already has the other's
packet. Cliques therefore map one-to-one onto valid coded transmissions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .model import PacketCombination, UserState

# Absolute tolerance when a criticality gap sits exactly on an integer
# boundary: the strict inequality fails and the user falls one layer down.
LAYER_TIE_TOL = 1e-9


class FrameCompleteError(RuntimeError):
    """Raised when an operation needs at least one incomplete user."""


class InvalidCliqueError(RuntimeError):
    """A vertex set violating pairwise adjacency reached clique handling."""


class Vertex(NamedTuple):
    user_id: int
    packet_id: int


@dataclass
class IdncGraph:
    """Snapshot of the conflict graph at one recovery transmission.

    Side information is captured as per-user bitmasks at build time, so the
    graph stays consistent even after the live user states move on.
    """

    vertices: list[Vertex]
    num_packets: int
    has_mask: dict[int, int]
    wants_mask: dict[int, int]
    _adjacency: np.ndarray | None = field(default=None, repr=False)
    _index: dict[tuple[int, int], int] | None = field(default=None, repr=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def adjacency(self) -> np.ndarray:
        """Dense symmetric adjacency matrix, built lazily from the snapshot."""
        if self._adjacency is None:
            self._adjacency = self._build_adjacency()
        return self._adjacency

    def _build_adjacency(self) -> np.ndarray:
        n = len(self.vertices)
        if n == 0:
            return np.zeros((0, 0), dtype=bool)
        users = sorted(self.has_mask)
        row_of = {u: k for k, u in enumerate(users)}
        has_rows = np.zeros((len(users), self.num_packets), dtype=bool)
        for u in users:
            m = self.has_mask[u]
            for j in range(self.num_packets):
                if (m >> j) & 1:
                    has_rows[row_of[u], j] = True
        uix = np.array([row_of[v.user_id] for v in self.vertices])
        pkt = np.array([v.packet_id for v in self.vertices])
        # both_have[a, b]: user of a has the packet of b
        both_have = has_rows[uix][:, pkt]
        adj = (pkt[:, None] == pkt[None, :]) | (both_have & both_have.T)
        np.fill_diagonal(adj, False)
        return adj

    def index_of(self, user_id: int, packet_id: int) -> int:
        if self._index is None:
            self._index = {
                (v.user_id, v.packet_id): k for k, v in enumerate(self.vertices)
            }
        return self._index[(user_id, packet_id)]

    def pairwise_adjacent(self, a: int, b: int) -> bool:
        """Adjacency from the snapshot masks, without building the matrix."""
        va, vb = self.vertices[a], self.vertices[b]
        if va.packet_id == vb.packet_id:
            return va.user_id != vb.user_id
        return bool(
            (self.has_mask[vb.user_id] >> va.packet_id) & 1
            and (self.has_mask[va.user_id] >> vb.packet_id) & 1
        )


# A clique is a set of vertex indices into graph.vertices.
Clique = frozenset[int]


@dataclass(frozen=True)
class Layering:
    """Vertex partition by criticality; layers[0] is the most critical."""

    layers: tuple[frozenset[int], ...]
    h: int
    user_layer: dict[int, int]


def build_graph(states: Sequence[UserState]) -> IdncGraph:
    """One vertex per (incomplete user, wanted packet), in sorted order."""
    vertices: list[Vertex] = []
    has_mask: dict[int, int] = {}
    wants_mask: dict[int, int] = {}
    num_packets = 0
    for s in states:
        num_packets = len(s.has) + len(s.wants)
        if s.completed:
            continue
        hm = 0
        for j in s.has:
            hm |= 1 << j
        wm = 0
        for j in sorted(s.wants):
            wm |= 1 << j
            vertices.append(Vertex(s.user_id, j))
        has_mask[s.user_id] = hm
        wants_mask[s.user_id] = wm
    return IdncGraph(vertices, num_packets, has_mask, wants_mask)


def are_adjacent(v1: Vertex, v2: Vertex, states: Sequence[UserState]) -> bool:
    """Adjacency against live user states (states indexed by user id)."""
    if v1 == v2:
        raise ValueError("adjacency is defined over distinct vertices")
    if v1.packet_id == v2.packet_id:
        return v1.user_id != v2.user_id
    return (
        v1.packet_id in states[v2.user_id].has
        and v2.packet_id in states[v1.user_id].has
    )


def clique_to_combination(
    clique: Clique, graph: IdncGraph
) -> tuple[PacketCombination, frozenset[int]]:
    """Turn a clique into its XOR payload and targeted-user set.

    Raises:
        InvalidCliqueError: some pair of the given vertices is not adjacent,
            which signals an internal logic fault in the caller.
    """
    if not clique:
        raise ValueError("cannot form a combination from an empty clique")
    members = sorted(clique)
    for a_pos, a in enumerate(members):
        for b in members[a_pos + 1 :]:
            if not graph.pairwise_adjacent(a, b):
                raise InvalidCliqueError(
                    f"vertices {graph.vertices[a]} and {graph.vertices[b]} "
                    "are not adjacent"
                )
    packets = frozenset(graph.vertices[k].packet_id for k in members)
    targeted = frozenset(graph.vertices[k].user_id for k in members)
    return PacketCombination(packets), targeted


def anticipated_ct(state: UserState, t: int | None = None) -> float:
    """Projected individual completion time given the delay so far.

    Users with nothing to recover are pinned to 0; for completed users the
    value is frozen because the delay counter no longer moves.
    """
    if state.wants0 == 0:
        return 0.0
    return (state.wants0 + state.delay - state.p) / (1.0 - state.p)


def _layer_index(act_max: float, state: UserState) -> int:
    """Criticality layer of a user: how many extra delay units it can absorb
    before its projected completion time passes the current maximum."""
    gap = (act_max - anticipated_ct(state)) * (1.0 - state.p)
    nearest = round(gap)
    if abs(gap - nearest) <= LAYER_TIE_TOL:
        # exact boundary: the strict criterion fails, next layer
        return int(nearest) + 1
    return int(math.floor(gap)) + 1


def _max_anticipated_ct(states: Sequence[UserState]) -> tuple[int, float]:
    """Argmax of anticipated completion time over incomplete users.

    Ties break toward the lowest user id for reproducibility.
    """
    best_id = -1
    best = -math.inf
    for s in states:
        if s.completed:
            continue
        a = anticipated_ct(s)
        if a > best:
            best_id, best = s.user_id, a
    if best_id < 0:
        raise FrameCompleteError("frame already complete")
    return best_id, best


def compute_critical_set(states: Sequence[UserState], t: int | None = None) -> set[int]:
    """Users whose next single delay unit would raise the maximum projected
    completion time; the argmax user always belongs."""
    _, act_max = _max_anticipated_ct(states)
    return {
        s.user_id
        for s in states
        if not s.completed and _layer_index(act_max, s) == 1
    }


def partition_layers(
    graph: IdncGraph, states: Sequence[UserState], t: int | None = None
) -> Layering:
    """Partition graph vertices into criticality layers G_1..G_h.

    All vertices of one user share a layer; layer 1 holds exactly the users
    whose criticality gap rounds below one extra delay unit, so the critical
    set is always contained in it.
    """
    if not graph.vertices:
        raise ValueError("cannot layer an empty graph")
    _, act_max = _max_anticipated_ct(states)
    user_layer: dict[int, int] = {}
    for u in graph.has_mask:
        user_layer[u] = _layer_index(act_max, states[u])
    h = max(user_layer.values())
    buckets: list[set[int]] = [set() for _ in range(h)]
    for k, v in enumerate(graph.vertices):
        buckets[user_layer[v.user_id] - 1].add(k)
    return Layering(tuple(frozenset(b) for b in buckets), h, user_layer)
