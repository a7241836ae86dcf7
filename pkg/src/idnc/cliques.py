"""Max-weight clique solvers over vertex-weighted conflict (sub)graphs.

Two families live here. The generic solvers (`max_weight_clique_exact`,
`max_weight_clique_bruteforce`, `greedy_max_weight_clique`) work on any
`WeightedGraph` and implement the documented tie-breaks; they are the
reference API and stay honest at desk scale. The combination-space engine
(`best_combination`) exploits the structure of this particular conflict
graph: a clique is fully determined by the set of packets it XORs together
plus every user with exactly one wanted packet in that set, so the search
can branch over packets instead of (user, packet) vertices. That cuts the
search space by orders of magnitude on dense instances and is what the
transmission policies call in the hot loop. Both families are
cross-validated against each other in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .graph import Clique, IdncGraph

try:  # pragma: no cover - exercised implicitly by which path runs
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def decorate(f):
            return f

        return decorate


# Weight sums within this width are treated as ties (then cardinality and
# lexicographic order decide); the prune margin is looser so that float
# drift along deep search paths can never cut off a true optimum.
EPS_TIE = 1e-12
EPS_PRUNE = 1e-9

# When true, every solver re-checks that its output is a clique. Tests
# flip this on; the hot loop keeps it off.
VALIDATE = False

BRUTE_FORCE_LIMIT = 20


@dataclass(frozen=True)
class WeightedGraph:
    """A vertex-weighted (sub)graph handed to the clique solvers.

    ``vertex_ids`` carries the caller's vertex labels (indices into the
    originating conflict graph); solvers answer in those labels. For a
    standalone instance just leave the default 0..n-1 labeling.
    """

    adjacency: np.ndarray
    weights: np.ndarray
    vertex_ids: np.ndarray

    @staticmethod
    def build(
        adjacency: np.ndarray,
        weights: Sequence[float],
        vertex_ids: Sequence[int] | None = None,
    ) -> "WeightedGraph":
        adj = np.asarray(adjacency, dtype=bool)
        w = np.asarray(weights, dtype=float)
        n = len(w)
        if adj.shape != (n, n):
            raise ValueError("adjacency must be square and match weights")
        if n and (not np.array_equal(adj, adj.T) or adj.diagonal().any()):
            raise ValueError("adjacency must be symmetric and irreflexive")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        if vertex_ids is None:
            ids = np.arange(n, dtype=np.int64)
        else:
            ids = np.asarray(vertex_ids, dtype=np.int64)
            if len(ids) != n or np.any(np.diff(ids) <= 0):
                raise ValueError("vertex_ids must be strictly ascending, one per vertex")
        return WeightedGraph(adj, w, ids)

    @property
    def num_vertices(self) -> int:
        return len(self.weights)


def weighted_subgraph(
    graph: IdncGraph,
    user_weight: Mapping[int, float] | Callable[[int], float],
    subset: Iterable[int] | None = None,
) -> WeightedGraph:
    """Weighted view of the conflict graph (or an induced vertex subset).

    Weights are per user: every vertex of user i gets user_weight(i).
    """
    if callable(user_weight):
        weight_of = user_weight
    else:
        weight_of = user_weight.__getitem__
    if subset is None:
        ids = np.arange(graph.num_vertices, dtype=np.int64)
    else:
        ids = np.asarray(sorted(subset), dtype=np.int64)
    adj = graph.adjacency[np.ix_(ids, ids)] if len(ids) else np.zeros((0, 0), bool)
    w = np.array([weight_of(graph.vertices[k].user_id) for k in ids], dtype=float)
    return WeightedGraph.build(adj, w, ids)


def _is_clique(wg: WeightedGraph, members: Sequence[int]) -> bool:
    for a_pos, a in enumerate(members):
        for b in members[a_pos + 1 :]:
            if not wg.adjacency[a, b]:
                return False
    return True


class _Incumbent:
    """Best clique so far under the (weight, cardinality, lex) order."""

    __slots__ = ("weight", "card", "key", "members")

    def __init__(self) -> None:
        self.weight = 0.0
        self.card = 0
        self.key: tuple[int, ...] = ()
        self.members: tuple[int, ...] = ()

    def offer(self, wg: WeightedGraph, members: Sequence[int]) -> None:
        w = math.fsum(wg.weights[k] for k in members)
        card = len(members)
        if w > self.weight + EPS_TIE:
            pass
        elif abs(w - self.weight) <= EPS_TIE:
            key = tuple(sorted(int(wg.vertex_ids[k]) for k in members))
            if card > self.card or (card == self.card and key < self.key):
                self.weight, self.card, self.key = w, card, key
                self.members = tuple(members)
            return
        else:
            return
        self.weight = w
        self.card = card
        self.key = tuple(sorted(int(wg.vertex_ids[k]) for k in members))
        self.members = tuple(members)


def max_weight_clique_exact(wg: WeightedGraph) -> Clique:
    """Exact branch-and-bound max-weight clique.

    Branches over vertices in (descending weight, ascending index) order
    with the admissible bound "current weight + sum of remaining candidate
    weights". Ties on total weight (within EPS_TIE) prefer larger
    cardinality, then the lexicographically smallest sorted label tuple.
    """
    n = wg.num_vertices
    if n == 0:
        return frozenset()
    adj = wg.adjacency
    w = wg.weights
    order = sorted(range(n), key=lambda k: (-w[k], k))
    best = _Incumbent()
    best.offer(wg, ())

    def visit(cur: list[int], cur_w: float, cand: list[int]) -> None:
        bound = cur_w + sum(w[k] for k in cand)
        if bound < best.weight - EPS_TIE:
            return
        if bound <= best.weight + EPS_TIE and len(cur) + len(cand) < best.card:
            return
        if not cand:
            best.offer(wg, cur)
            return
        v = cand[0]
        cur.append(v)
        visit(cur, cur_w + w[v], [u for u in cand[1:] if adj[v, u]])
        cur.pop()
        visit(cur, cur_w, cand[1:])

    visit([], 0.0, order)
    if VALIDATE and not _is_clique(wg, best.members):
        raise AssertionError("solver produced a non-clique")
    return frozenset(int(wg.vertex_ids[k]) for k in best.members)


def max_weight_clique_bruteforce(wg: WeightedGraph) -> Clique:
    """Testing oracle: enumerate every clique and keep the best.

    Subsets that are not cliques are infeasible and can never win, so
    enumerating cliques (grown in ascending vertex order) covers the full
    search space. Refuses instances past BRUTE_FORCE_LIMIT vertices.
    """
    n = wg.num_vertices
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"brute force handles at most {BRUTE_FORCE_LIMIT} vertices, got {n}"
        )
    adj = wg.adjacency
    best = _Incumbent()
    best.offer(wg, ())

    def grow(cur: list[int], allowed: list[int]) -> None:
        if cur:
            best.offer(wg, cur)
        for pos, v in enumerate(allowed):
            cur.append(v)
            grow(cur, [u for u in allowed[pos + 1 :] if adj[v, u]])
            cur.pop()

    grow([], list(range(n)))
    if VALIDATE and not _is_clique(wg, best.members):
        raise AssertionError("oracle produced a non-clique")
    return frozenset(int(wg.vertex_ids[k]) for k in best.members)


def greedy_max_weight_clique(wg: WeightedGraph) -> Clique:
    """Heuristic fallback: insert vertices by descending weight when
    compatible with everything chosen so far. No optimality guarantee."""
    order = sorted(range(wg.num_vertices), key=lambda k: (-wg.weights[k], k))
    chosen: list[int] = []
    for v in order:
        if all(wg.adjacency[v, u] for u in chosen):
            chosen.append(v)
    return frozenset(int(wg.vertex_ids[k]) for k in chosen)


def extend_clique_through_layer(
    wg_layer: WeightedGraph,
    base: Clique,
    full_graph: IdncGraph,
    solver: str = "exact",
) -> Clique:
    """Grow ``base`` with the best compatible clique inside one layer.

    Only layer vertices adjacent (in the full graph) to every base member
    are candidates; the result always contains base and is a clique of the
    full graph. An empty candidate set returns base unchanged.
    """
    base_list = sorted(base)
    if VALIDATE:
        for a_pos, a in enumerate(base_list):
            for b in base_list[a_pos + 1 :]:
                if not full_graph.pairwise_adjacent(a, b):
                    raise AssertionError("base is not a clique of the full graph")
    keep = [
        pos
        for pos, gid in enumerate(wg_layer.vertex_ids)
        if all(full_graph.pairwise_adjacent(int(gid), b) for b in base_list)
    ]
    if not keep:
        return frozenset(base)
    sub = WeightedGraph.build(
        wg_layer.adjacency[np.ix_(keep, keep)],
        wg_layer.weights[keep],
        wg_layer.vertex_ids[keep],
    )
    solve = greedy_max_weight_clique if solver == "greedy" else max_weight_clique_exact
    return frozenset(base) | solve(sub)


# --------------------------------------------------------------------------
# Combination-space engine
# --------------------------------------------------------------------------
#
# Vocabulary for the kernel below. A candidate solution is a set of packets
# ("combination"); an active user is served when exactly one of its wanted
# packets is inside the combination and that packet is an allowed target
# for it. Per user the kernel tracks:
#   cnt  - how many of its wanted packets the combination holds (capped at 2)
#   srv  - currently served
#   pot  - not hit yet, but some allowed target is still undecided
# The sum of weights over srv|pot users is an admissible bound; it is
# maintained incrementally and restored exactly on backtrack.


@njit(cache=True)
def _combination_kernel(
    weights,  # f8[n] per active user, positive
    cnt0,  # u1[n] wanted packets already inside the base combination (cap 2)
    srv0,  # u1[n] served by the base combination alone
    tmask,  # u8[n, words] allowed-target packet masks
    cand_word,  # i8[K] word index of each candidate packet
    cand_mask,  # u8[K] bit mask of each candidate packet
    users_ptr,  # i8[K+1] CSR over users wanting each candidate
    users_idx,  # i4[...]
    tusers_ptr,  # i8[K+1] CSR over users allowed to target each candidate
    tusers_idx,  # i4[...]
    rem,  # u8[K+1, words] suffix masks of undecided candidates
    out_kappa,  # u8[words] chosen packets (output)
):
    n = weights.shape[0]
    K = cand_word.shape[0]
    words = rem.shape[1]

    cnt = cnt0.copy()
    srv = srv0.copy()
    pot = np.zeros(n, dtype=np.uint8)
    alive_w = 0.0
    srv_cnt = 0
    pot_cnt = 0
    for i in range(n):
        if srv[i] == 1:
            alive_w += weights[i]
            srv_cnt += 1
        elif cnt[i] == 0:
            for wd in range(words):
                if tmask[i, wd] & rem[0, wd]:
                    pot[i] = 1
                    alive_w += weights[i]
                    pot_cnt += 1
                    break

    # Greedy construction seeds the incumbent: repeatedly add the packet
    # with the best immediate served-weight gain. The bound then prunes
    # most of the tree that merely rediscovers solutions this good.
    gcnt = cnt0.copy()
    gsrv = srv0.copy()
    chosen = np.zeros(K, dtype=np.uint8)
    while True:
        pick = -1
        pick_d = EPS_TIE
        for k2 in range(K):
            if chosen[k2] == 1:
                continue
            d = 0.0
            for idx in range(tusers_ptr[k2], tusers_ptr[k2 + 1]):
                i = tusers_idx[idx]
                if gcnt[i] == 0:
                    d += weights[i]
            for idx in range(users_ptr[k2], users_ptr[k2 + 1]):
                i = users_idx[idx]
                if gcnt[i] == 1 and gsrv[i] == 1:
                    d -= weights[i]
            if d > pick_d:
                pick = k2
                pick_d = d
        if pick < 0:
            break
        chosen[pick] = 1
        for idx in range(users_ptr[pick], users_ptr[pick + 1]):
            i = users_idx[idx]
            if gcnt[i] == 0:
                gcnt[i] = 1
                if tmask[i, cand_word[pick]] & cand_mask[pick]:
                    gsrv[i] = 1
            elif gcnt[i] == 1:
                gcnt[i] = 2
                gsrv[i] = 0

    cur_kappa = np.zeros(words, dtype=np.uint64)
    best_w = 0.0
    best_card = 0
    for i in range(n):
        if gsrv[i] == 1:
            best_w += weights[i]
            best_card += 1
    for wd in range(words):
        out_kappa[wd] = 0
    for k2 in range(K):
        if chosen[k2] == 1:
            out_kappa[cand_word[k2]] |= cand_mask[k2]

    cap = users_idx.shape[0] + tusers_idx.shape[0] + 8
    t_user = np.empty(cap, dtype=np.int64)
    t_cnt = np.empty(cap, dtype=np.uint8)
    t_srv = np.empty(cap, dtype=np.uint8)
    t_pot = np.empty(cap, dtype=np.uint8)
    top = 0

    ph = np.zeros(K + 1, dtype=np.uint8)
    alive0 = np.zeros(K + 1, dtype=np.float64)
    scnt0 = np.zeros(K + 1, dtype=np.int64)
    pcnt0 = np.zeros(K + 1, dtype=np.int64)
    tbase = np.zeros(K + 1, dtype=np.int64)

    k = 0
    ph[0] = 0
    while k >= 0:
        if ph[k] == 0:
            # fresh node: prune, or terminate when nothing can still be served
            if alive_w < best_w - EPS_PRUNE or (
                alive_w <= best_w + EPS_TIE and srv_cnt + pot_cnt <= best_card
            ):
                k -= 1
                continue
            if pot_cnt == 0:
                tw = 0.0
                for i in range(n):
                    if srv[i] == 1:
                        tw += weights[i]
                if tw > best_w + EPS_TIE or (
                    tw >= best_w - EPS_TIE and srv_cnt > best_card
                ):
                    best_w = tw
                    best_card = srv_cnt
                    for wd in range(words):
                        out_kappa[wd] = cur_kappa[wd]
                k -= 1
                continue
            alive0[k] = alive_w
            scnt0[k] = srv_cnt
            pcnt0[k] = pot_cnt
            tbase[k] = top
            # the packet is only worth adding if it can serve somebody now
            useful = False
            for idx in range(tusers_ptr[k], tusers_ptr[k + 1]):
                i = tusers_idx[idx]
                if cnt[i] == 0 and pot[i] == 1:
                    useful = True
                    break
            if useful:
                # apply include
                for idx in range(users_ptr[k], users_ptr[k + 1]):
                    i = users_idx[idx]
                    t_user[top] = i
                    t_cnt[top] = cnt[i]
                    t_srv[top] = srv[i]
                    t_pot[top] = pot[i]
                    top += 1
                    c = cnt[i]
                    if c == 0:
                        cnt[i] = 1
                        if tmask[i, cand_word[k]] & cand_mask[k]:
                            srv[i] = 1
                            pot[i] = 0
                            srv_cnt += 1
                            pot_cnt -= 1
                        else:
                            if pot[i] == 1:
                                pot[i] = 0
                                alive_w -= weights[i]
                                pot_cnt -= 1
                    elif c == 1:
                        cnt[i] = 2
                        if srv[i] == 1:
                            srv[i] = 0
                            alive_w -= weights[i]
                            srv_cnt -= 1
                cur_kappa[cand_word[k]] |= cand_mask[k]
                ph[k] = 1
            else:
                # apply exclude straight away
                for idx in range(tusers_ptr[k], tusers_ptr[k + 1]):
                    i = tusers_idx[idx]
                    if cnt[i] == 0 and pot[i] == 1:
                        gone = True
                        for wd in range(words):
                            if tmask[i, wd] & rem[k + 1, wd]:
                                gone = False
                                break
                        if gone:
                            t_user[top] = i
                            t_cnt[top] = cnt[i]
                            t_srv[top] = srv[i]
                            t_pot[top] = pot[i]
                            top += 1
                            pot[i] = 0
                            alive_w -= weights[i]
                            pot_cnt -= 1
                ph[k] = 2
            ph[k + 1] = 0
            k += 1
        elif ph[k] == 1:
            # undo include, then apply exclude
            while top > tbase[k]:
                top -= 1
                i = t_user[top]
                cnt[i] = t_cnt[top]
                srv[i] = t_srv[top]
                pot[i] = t_pot[top]
            alive_w = alive0[k]
            srv_cnt = scnt0[k]
            pot_cnt = pcnt0[k]
            cur_kappa[cand_word[k]] &= ~cand_mask[k]
            for idx in range(tusers_ptr[k], tusers_ptr[k + 1]):
                i = tusers_idx[idx]
                if cnt[i] == 0 and pot[i] == 1:
                    gone = True
                    for wd in range(words):
                        if tmask[i, wd] & rem[k + 1, wd]:
                            gone = False
                            break
                    if gone:
                        t_user[top] = i
                        t_cnt[top] = cnt[i]
                        t_srv[top] = srv[i]
                        t_pot[top] = pot[i]
                        top += 1
                        pot[i] = 0
                        alive_w -= weights[i]
                        pot_cnt -= 1
            ph[k] = 2
            ph[k + 1] = 0
            k += 1
        else:
            # undo exclude
            while top > tbase[k]:
                top -= 1
                i = t_user[top]
                cnt[i] = t_cnt[top]
                srv[i] = t_srv[top]
                pot[i] = t_pot[top]
            alive_w = alive0[k]
            srv_cnt = scnt0[k]
            pot_cnt = pcnt0[k]
            k -= 1
    return best_w, best_card


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _mask_words(mask: int, words: int) -> np.ndarray:
    out = np.zeros(words, dtype=np.uint64)
    for wd in range(words):
        out[wd] = (mask >> (64 * wd)) & 0xFFFFFFFFFFFFFFFF
    return out


def _mask_bools(mask: int, num_packets: int) -> np.ndarray:
    """Bitmask to a boolean vector of length num_packets."""
    nbytes = (num_packets + 7) // 8
    raw = np.frombuffer(mask.to_bytes(nbytes, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:num_packets].astype(bool)


def best_combination(
    user_ids: Sequence[int],
    weights: Mapping[int, float],
    wants: Mapping[int, int],
    targets: Mapping[int, int],
    num_packets: int,
    base_packets: int = 0,
    forbidden: int = 0,
) -> tuple[int, dict[int, int]]:
    """Best packet combination to add on top of an (optionally empty) base.

    Args:
        user_ids: users that may join the transmission's targeted set.
        weights: positive selection weight per user.
        wants: per-user bitmask of wanted packets.
        targets: per-user bitmask of packets it may be targeted with
            (subset of wants; restricts to a vertex subset of the graph).
        num_packets: frame size N (bitmask width).
        base_packets: packets already fixed in the combination.
        forbidden: packets that must not be added (e.g. wanted by users the
            base combination already serves).

    Returns:
        (added packet mask, {user id: decoded packet}) over ``user_ids``.
        A user with exactly one wanted packet inside base ∪ added that is
        also an allowed target decodes that packet. Maximizes total served
        weight; weight ties prefer more served users, then a fixed
        deterministic representative (the greedy seed when it already ties
        the optimum, otherwise the first improving solution found).
    """
    users = sorted(user_ids)
    n = len(users)
    if n == 0:
        return 0, {}
    words = max(1, (num_packets + 63) // 64)

    w_arr = np.empty(n, dtype=np.float64)
    cnt0 = np.zeros(n, dtype=np.uint8)
    srv0 = np.zeros(n, dtype=np.uint8)
    tmask = np.zeros((n, words), dtype=np.uint64)
    open_targets = 0
    for r, u in enumerate(users):
        wu = float(weights[u])
        if not wu > 0.0:
            raise ValueError("combination search needs positive user weights")
        w_arr[r] = wu
        tm = targets[u]
        if tm & ~wants[u]:
            raise ValueError("targets must be a subset of wants")
        tmask[r] = _mask_words(tm, words)
        ov = base_packets & wants[u]
        c = _popcount(ov)
        if c == 0:
            open_targets |= tm
        elif c == 1:
            cnt0[r] = 1
            if ov & tm:
                srv0[r] = 1
        else:
            cnt0[r] = 2

    wants_mat = np.zeros((n, num_packets), dtype=bool)
    targets_mat = np.zeros((n, num_packets), dtype=bool)
    for r, u in enumerate(users):
        wants_mat[r] = _mask_bools(wants[u], num_packets)
        targets_mat[r] = _mask_bools(targets[u], num_packets)

    cand_arr = np.nonzero(
        _mask_bools(open_targets & ~base_packets & ~forbidden, num_packets)
    )[0]
    # branch on heavy packets first: total weight of users they can serve
    free = cnt0 == 0
    serve_w = targets_mat[free][:, cand_arr].T @ w_arr[free]
    order = np.lexsort((cand_arr, -serve_w))
    cand_arr = cand_arr[order]

    K = len(cand_arr)
    cand_word = (cand_arr // 64).astype(np.int64)
    cand_bit = np.uint64(1) << (cand_arr % 64).astype(np.uint64)

    # CSR over users wanting / allowed to target each candidate packet
    rows_w, cols_w = np.nonzero(wants_mat[:, cand_arr].T)
    users_ptr = np.searchsorted(rows_w, np.arange(K + 1)).astype(np.int64)
    users_idx = cols_w.astype(np.int32)
    rows_t, cols_t = np.nonzero(targets_mat[:, cand_arr].T)
    tusers_ptr = np.searchsorted(rows_t, np.arange(K + 1)).astype(np.int64)
    tusers_idx = cols_t.astype(np.int32)

    rem = np.zeros((K + 1, words), dtype=np.uint64)
    for k in range(K - 1, -1, -1):
        rem[k] = rem[k + 1]
        rem[k, cand_word[k]] |= cand_bit[k]

    out_kappa = np.zeros(words, dtype=np.uint64)
    best_w, best_card = _combination_kernel(
        w_arr,
        cnt0,
        srv0,
        tmask,
        cand_word,
        cand_bit,
        users_ptr,
        users_idx,
        tusers_ptr,
        tusers_idx,
        rem,
        out_kappa,
    )

    added = 0
    for wd in range(words):
        added |= int(out_kappa[wd]) << (64 * wd)
    total = base_packets | added
    served: dict[int, int] = {}
    for u in users:
        ov = total & wants[u]
        if _popcount(ov) == 1 and ov & targets[u]:
            served[u] = ov.bit_length() - 1
    if VALIDATE and len(served) != best_card:
        raise AssertionError("kernel served-count mismatch")
    return added, served
