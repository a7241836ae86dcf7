"""Packet-level simulation of instantly decodable network coding over
erasure broadcast channels, with pluggable transmission policies and an
experiment sweep CLI."""

from .model import (
    P_MAX,
    OutcomeKind,
    PacketCombination,
    ReceptionOutcome,
    SystemConfig,
    UserState,
    apply_reception,
    classify_packet,
    run_initial_phase,
    sample_user_erasures,
)
from .graph import (
    Clique,
    FrameCompleteError,
    IdncGraph,
    InvalidCliqueError,
    Layering,
    Vertex,
    anticipated_ct,
    are_adjacent,
    build_graph,
    clique_to_combination,
    compute_critical_set,
    partition_layers,
)
from .cliques import (
    WeightedGraph,
    best_combination,
    extend_clique_through_layer,
    greedy_max_weight_clique,
    max_weight_clique_bruteforce,
    max_weight_clique_exact,
    weighted_subgraph,
)
from .policies import (
    PolicyKind,
    select,
    select_minct_baseline,
    select_pct,
    select_sdd_baseline,
    vertex_weight_pct,
)
from .simulate import (
    FrameMetrics,
    RunSummary,
    TransmissionRecord,
    UserRecord,
    aggregate,
    run_recovery,
    simulate_frame,
    theorem1_residual,
    verify_accounting_identity,
)

__version__ = "0.1.0"
