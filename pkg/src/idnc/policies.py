"""Transmission-selection policies: layered critical-first plus baselines.

Every policy maps (conflict graph, user states, time) to one clique, i.e.
one XOR combination. The layered policy first serves the most critical
users (those one delay unit away from raising the projected frame
completion time), then extends the chosen clique through less critical
layers. The two baselines solve a single max-weight clique over the whole
graph; they are deterministic stand-ins approximating, not reproducing,
the completion-time and decoding-delay heuristics they are compared with.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Sequence

from .cliques import (
    best_combination,
    extend_clique_through_layer,
    greedy_max_weight_clique,
    weighted_subgraph,
)
from .graph import Clique, IdncGraph, partition_layers
from .model import P_MAX, UserState

# Lower clamp for erasure probabilities entering the log weight; the weight
# would diverge at 0 and vanish at 1.
P_FLOOR = 1e-9


class PolicyKind(str, Enum):
    PCT = "pct"
    MINCT = "minct"
    SDD = "sdd"


def vertex_weight_pct(p: float) -> float:
    """Selection weight of a user under the layered policy.

    -log(p), natural base (the argmax over cliques is invariant to the
    base), with p clamped into [P_FLOOR, P_MAX] to stay finite.
    """
    return -math.log(min(max(p, P_FLOOR), P_MAX))


def _solve_full_graph(
    graph: IdncGraph, weights: dict[int, float], solver: str
) -> Clique:
    if solver == "greedy":
        return greedy_max_weight_clique(weighted_subgraph(graph, weights))
    masks = graph.wants_mask
    _, served = best_combination(
        sorted(masks),
        weights,
        masks,
        masks,
        graph.num_packets,
    )
    return frozenset(graph.index_of(u, j) for u, j in served.items())


def select_pct(
    graph: IdncGraph,
    states: Sequence[UserState],
    t: int,
    solver: str = "exact",
) -> Clique:
    """Layered selection: optimal clique in the most critical layer, then
    grown through each following layer without disturbing earlier picks."""
    if not graph.vertices:
        raise ValueError("nothing to schedule: the graph is empty")
    layering = partition_layers(graph, states, t)
    weights = {u: vertex_weight_pct(states[u].p) for u in graph.wants_mask}

    if solver == "greedy":
        clique: Clique = frozenset()
        for layer in layering.layers:
            if not layer:
                continue
            wg_layer = weighted_subgraph(graph, weights, layer)
            clique = extend_clique_through_layer(wg_layer, clique, graph, solver="greedy")
        return clique

    kappa = 0
    members: dict[int, int] = {}
    for n in range(1, layering.h + 1):
        layer_users = sorted(
            u for u, ln in layering.user_layer.items() if ln == n
        )
        if not layer_users:
            continue
        # packets wanted by already-served users must stay out of the payload
        forbidden = 0
        for u in members:
            forbidden |= graph.wants_mask[u]
        added, served = best_combination(
            layer_users,
            weights,
            graph.wants_mask,
            graph.wants_mask,
            graph.num_packets,
            base_packets=kappa,
            forbidden=forbidden & ~kappa,
        )
        kappa |= added
        members.update(served)
    return frozenset(graph.index_of(u, j) for u, j in members.items())


def select_minct_baseline(
    graph: IdncGraph,
    states: Sequence[UserState],
    t: int,
    solver: str = "exact",
) -> Clique:
    """Completion-time baseline: one max-weight clique over the full graph,
    weighting each user by its expected remaining reception burden."""
    if not graph.vertices:
        raise ValueError("nothing to schedule: the graph is empty")
    weights = {
        u: (1.0 - states[u].p) * (states[u].wants0 + states[u].delay)
        for u in graph.wants_mask
    }
    return _solve_full_graph(graph, weights, solver)


def select_sdd_baseline(
    graph: IdncGraph,
    states: Sequence[UserState],
    t: int,
    solver: str = "exact",
) -> Clique:
    """Decoding-delay baseline: maximize the expected number of users that
    decode this transmission (weight 1 - p per user)."""
    if not graph.vertices:
        raise ValueError("nothing to schedule: the graph is empty")
    weights = {u: 1.0 - states[u].p for u in graph.wants_mask}
    return _solve_full_graph(graph, weights, solver)


_SELECTORS = {
    PolicyKind.PCT: select_pct,
    PolicyKind.MINCT: select_minct_baseline,
    PolicyKind.SDD: select_sdd_baseline,
}


def select(
    policy: PolicyKind,
    graph: IdncGraph,
    states: Sequence[UserState],
    t: int,
    solver: str = "exact",
) -> Clique:
    """Dispatch to the selected policy."""
    return _SELECTORS[PolicyKind(policy)](graph, states, t, solver=solver)
