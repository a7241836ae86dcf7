"""Sender-side model of broadcast receivers and packet-reception semantics.

A frame of N source packets is first broadcast uncoded; each receiver keeps
an independent record of which packets survived its erasure channel. The
recovery phase then sends XOR combinations, and every reception at a user is
either non-innovative, instantly decodable, or non-instantly decodable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

# Erasure probabilities are clamped below 1: a user that never receives
# anything would make frame completion undefined.
P_MAX = 0.999


@dataclass
class SystemConfig:
    """Static parameters of one simulated system."""

    num_users: int
    num_packets: int
    mean_erasure: float
    erasure_spread: float = 0.1
    base_seed: int = 0
    # Safety cap on recovery transmissions; None derives ~50x the expected
    # minimum so it never triggers on healthy configurations.
    max_recovery_transmissions: int | None = None

    def __post_init__(self) -> None:
        if self.num_users < 1:
            raise ValueError("num_users must be >= 1")
        if self.num_packets < 1:
            raise ValueError("num_packets must be >= 1")
        if not 0.0 <= self.mean_erasure < 1.0:
            raise ValueError("mean_erasure must lie in [0, 1)")
        if self.erasure_spread < 0.0:
            raise ValueError("erasure_spread must be >= 0")
        if self.base_seed < 0:
            raise ValueError("base_seed must be a nonnegative integer")
        if self.max_recovery_transmissions is None:
            self.max_recovery_transmissions = math.ceil(
                50.0 * self.num_packets / (1.0 - self.mean_erasure)
            )
        if self.max_recovery_transmissions < 1:
            raise ValueError("max_recovery_transmissions must be >= 1")


@dataclass
class UserState:
    """One receiver as the sender sees it.

    ``has`` and ``wants`` always partition {0..N-1}. ``wants0`` freezes the
    size of the wants set at the start of the recovery phase; ``delay``
    counts received-but-useless packets and ``erasures`` counts lost
    recovery transmissions, both only while the user is incomplete.
    """

    user_id: int
    p: float
    has: set[int]
    wants: set[int]
    wants0: int
    delay: int = 0
    erasures: int = 0
    completion_time: int | None = None

    @property
    def completed(self) -> bool:
        return not self.wants


@dataclass(frozen=True)
class PacketCombination:
    """The set of source packets XORed into one coded transmission."""

    packets: frozenset[int]

    def __post_init__(self) -> None:
        if not self.packets:
            raise ValueError("a packet combination must be nonempty")
        if any(j < 0 for j in self.packets):
            raise ValueError("packet ids must be nonnegative")


class OutcomeKind(Enum):
    NON_INNOVATIVE = "non_innovative"
    INSTANTLY_DECODABLE = "instantly_decodable"
    NON_INSTANTLY_DECODABLE = "non_instantly_decodable"


@dataclass(frozen=True)
class ReceptionOutcome:
    """Classification of one combination at one user.

    ``packet`` is set exactly when the outcome is instantly decodable and
    names the single wanted packet the user can extract.
    """

    kind: OutcomeKind
    packet: int | None = None


def sample_user_erasures(config: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw one erasure probability per user for a fresh frame.

    Uniform on [P - spread, P + spread], clamped into [0, P_MAX] so the
    average stays at P whenever no clamping occurs.
    """
    lo = config.mean_erasure - config.erasure_spread
    p = lo + 2.0 * config.erasure_spread * rng.random(config.num_users)
    return np.clip(p, 0.0, P_MAX)


def run_initial_phase(
    config: SystemConfig, p: np.ndarray, rng: np.random.Generator
) -> list[UserState]:
    """Broadcast the frame uncoded once and record what every user caught.

    Args:
        config: system parameters.
        p: per-user erasure probabilities, length ``config.num_users``.
        rng: source of the per-packet reception draws.

    Returns:
        One UserState per user. Users that caught everything are already
        complete (completion_time 0) and never enter the recovery phase.
    """
    if len(p) != config.num_users:
        raise ValueError("p must have one entry per user")
    draws = rng.random((config.num_users, config.num_packets))
    erased = draws < np.asarray(p)[:, None]
    states = []
    for i in range(config.num_users):
        wants = {int(j) for j in np.nonzero(erased[i])[0]}
        has = set(range(config.num_packets)) - wants
        states.append(
            UserState(
                user_id=i,
                p=float(p[i]),
                has=has,
                wants=wants,
                wants0=len(wants),
                completion_time=0 if not wants else None,
            )
        )
    return states


def classify_packet(user: UserState, combo: PacketCombination) -> ReceptionOutcome:
    """Classify a received combination at one user.

    Exactly one outcome applies: no wanted packet inside means the whole
    combination is already known (non-innovative); exactly one wanted packet
    can be XORed out instantly; two or more cannot be used at all.
    """
    overlap = combo.packets & user.wants
    if not overlap:
        return ReceptionOutcome(OutcomeKind.NON_INNOVATIVE)
    if len(overlap) == 1:
        return ReceptionOutcome(OutcomeKind.INSTANTLY_DECODABLE, next(iter(overlap)))
    return ReceptionOutcome(OutcomeKind.NON_INSTANTLY_DECODABLE)


def apply_reception(
    user: UserState, combo: PacketCombination, t: int, received: bool
) -> UserState:
    """Account one recovery transmission at one user, in place.

    Erased transmissions bump the erasure counter; received useless ones
    bump the decoding delay; a received instantly decodable combination
    moves its one wanted packet and may complete the user at time t.
    Completed users are inert.
    """
    if t < 1:
        raise ValueError("recovery transmission indices start at 1")
    if user.completed:
        return user
    if not received:
        user.erasures += 1
        return user
    outcome = classify_packet(user, combo)
    if outcome.kind is OutcomeKind.INSTANTLY_DECODABLE:
        user.wants.remove(outcome.packet)
        user.has.add(outcome.packet)
        if not user.wants:
            user.completion_time = t
    else:
        user.delay += 1
    return user
