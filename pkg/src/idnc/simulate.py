"""Frame simulation, per-frame accounting, and aggregation across frames.

A frame run is: sample per-user erasure probabilities, broadcast the frame
uncoded once, then loop coded recovery transmissions chosen by a policy
until every user holds all packets (or a safety cap aborts the frame).
The per-user ledger obeys an exact integer identity on every non-aborted
frame: completion time = initial wants + decoding delay + erasures before
completion. `verify_accounting_identity` re-derives it from the raw
transmission log; `theorem1_residual` measures how far the closed-form
delay-based projection sits from the realized completion time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import (
    build_graph,
    clique_to_combination,
    compute_critical_set,
    partition_layers,
)
from .model import (
    OutcomeKind,
    PacketCombination,
    SystemConfig,
    UserState,
    apply_reception,
    classify_packet,
    run_initial_phase,
    sample_user_erasures,
)
from .policies import PolicyKind, select


@dataclass(frozen=True)
class TransmissionRecord:
    """One recovery transmission: payload, targets, and per-user channel
    outcomes (only users still incomplete at send time appear)."""

    t: int
    combination: PacketCombination
    targeted: frozenset[int]
    erased: dict[int, bool]


@dataclass(frozen=True)
class UserRecord:
    user_id: int
    p: float
    wants0: int
    delay: int
    erasures: int
    completion_time: int | None


@dataclass
class FrameMetrics:
    """Everything measured on one frame."""

    users: list[UserRecord]
    initial_wants: list[frozenset[int]]
    transmission_log: list[TransmissionRecord]
    overall_completion_time: int | None
    sum_decoding_delay: int
    aborted: bool


@dataclass(frozen=True)
class RunSummary:
    """Per-(policy, configuration) aggregate over non-aborted frames."""

    policy: str
    num_users: int
    num_packets: int
    mean_erasure: float
    iterations: int
    mean_ct: float
    stderr_ct: float
    mean_sdd: float
    stderr_sdd: float
    mean_dd_per_user: float
    stderr_dd_per_user: float
    aborted_frames: int


def simulate_frame(
    config: SystemConfig,
    policy: PolicyKind,
    seed,
    *,
    solver: str = "exact",
    structural_checks: bool = False,
) -> FrameMetrics:
    """Run one complete frame, deterministically for a given seed.

    The random stream is consumed in a fixed order: the per-user erasure
    probabilities, then the initial-phase reception matrix, then one draw
    per still-incomplete user (ascending id) per recovery transmission.
    """
    rng = np.random.default_rng(seed)
    p = sample_user_erasures(config, rng)
    states = run_initial_phase(config, p, rng)
    return run_recovery(
        config, states, policy, rng, solver=solver, structural_checks=structural_checks
    )


def run_recovery(
    config: SystemConfig,
    states: list[UserState],
    policy: PolicyKind,
    rng: np.random.Generator,
    *,
    solver: str = "exact",
    structural_checks: bool = False,
) -> FrameMetrics:
    """Drive the coded recovery loop on already-initialized user states."""
    initial_wants = [frozenset(s.wants) for s in states]
    log: list[TransmissionRecord] = []
    t = 0
    aborted = False
    while any(not s.completed for s in states):
        if t >= config.max_recovery_transmissions:
            aborted = True
            break
        t += 1
        graph = build_graph(states)
        clique = select(policy, graph, states, t, solver=solver)
        combo, targeted = clique_to_combination(clique, graph)
        if structural_checks:
            _structural_assertions(graph, states, t, combo, targeted)
        active = [s for s in states if not s.completed]
        draws = rng.random(len(active))
        erased: dict[int, bool] = {}
        for k, s in enumerate(active):
            hit = bool(draws[k] < s.p)
            erased[s.user_id] = hit
            apply_reception(s, combo, t, received=not hit)
        log.append(TransmissionRecord(t, combo, targeted, erased))

    records = [
        UserRecord(s.user_id, s.p, s.wants0, s.delay, s.erasures, s.completion_time)
        for s in states
    ]
    overall = None
    if not aborted:
        overall = max(s.completion_time for s in states)
        if structural_checks:
            assert overall == max(r.completion_time for r in records)
    return FrameMetrics(
        users=records,
        initial_wants=initial_wants,
        transmission_log=log,
        overall_completion_time=overall,
        sum_decoding_delay=sum(s.delay for s in states),
        aborted=aborted,
    )


def _structural_assertions(graph, states, t, combo, targeted) -> None:
    critical = compute_critical_set(states, t)
    layering = partition_layers(graph, states, t)
    for u in critical:
        if layering.user_layer[u] != 1:
            raise AssertionError(f"critical user {u} left the first layer at t={t}")
    for u in targeted:
        outcome = classify_packet(states[u], combo)
        if outcome.kind is not OutcomeKind.INSTANTLY_DECODABLE:
            raise AssertionError(
                f"combination {sorted(combo.packets)} is not instantly "
                f"decodable for targeted user {u} at t={t}"
            )


def verify_accounting_identity(metrics: FrameMetrics) -> bool:
    """Recount every user's ledger from the raw transmission log alone.

    Returns true iff the log is internally consistent with the stored
    per-user counters and the exact identity
    completion = wants0 + delay + erasures-before-completion
    holds for every user. Aborted frames have no completion times, so the
    identity is undefined there.
    """
    if metrics.aborted:
        raise ValueError("accounting identity is undefined for aborted frames")
    for pos, rec in enumerate(metrics.transmission_log):
        if rec.t != pos + 1:
            return False
    for i, stored in enumerate(metrics.users):
        wants = set(metrics.initial_wants[i])
        delay = 0
        erasures = 0
        completion = 0 if not wants else None
        for rec in metrics.transmission_log:
            if completion is not None:
                break
            if i not in rec.erased:
                return False
            if rec.erased[i]:
                erasures += 1
                continue
            overlap = rec.combination.packets & wants
            if len(overlap) == 1:
                wants -= overlap
                if not wants:
                    completion = rec.t
            else:
                delay += 1
        if completion is None:
            return False
        if (stored.wants0, stored.delay, stored.erasures, stored.completion_time) != (
            len(metrics.initial_wants[i]),
            delay,
            erasures,
            completion,
        ):
            return False
        if completion != stored.wants0 + delay + erasures:
            return False
    return True


def theorem1_residual(metrics: FrameMetrics) -> np.ndarray:
    """Per-user gap between the realized completion time and its
    delay-based projection (wants0 + delay - p) / (1 - p).

    Users already complete after the initial phase never enter recovery;
    their projection and completion time are both zero by convention.
    """
    if metrics.aborted:
        raise ValueError("residuals are undefined for aborted frames")
    out = np.zeros(len(metrics.users))
    for i, r in enumerate(metrics.users):
        if r.wants0 > 0:
            out[i] = r.completion_time - (r.wants0 + r.delay - r.p) / (1.0 - r.p)
    return out


def _mean_stderr(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    mean = math.fsum(xs) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, math.sqrt(var / n)


def aggregate(
    frames: Sequence[FrameMetrics],
    *,
    policy: str = "",
    num_users: int | None = None,
    num_packets: int | None = None,
    mean_erasure: float = float("nan"),
) -> RunSummary:
    """Means and standard errors over the non-aborted frames of one run."""
    ok = [f for f in frames if not f.aborted]
    if not ok:
        raise ValueError("all frames aborted; nothing to aggregate")
    m = num_users if num_users is not None else len(ok[0].users)
    if num_packets is None:
        num_packets = -1
    mean_ct, se_ct = _mean_stderr([float(f.overall_completion_time) for f in ok])
    mean_sdd, se_sdd = _mean_stderr([float(f.sum_decoding_delay) for f in ok])
    mean_pu, se_pu = _mean_stderr(
        [f.sum_decoding_delay / len(f.users) for f in ok]
    )
    return RunSummary(
        policy=policy,
        num_users=m,
        num_packets=num_packets,
        mean_erasure=mean_erasure,
        iterations=len(frames),
        mean_ct=mean_ct,
        stderr_ct=se_ct,
        mean_sdd=mean_sdd,
        stderr_sdd=se_sdd,
        mean_dd_per_user=mean_pu,
        stderr_dd_per_user=se_pu,
        aborted_frames=len(frames) - len(ok),
    )
