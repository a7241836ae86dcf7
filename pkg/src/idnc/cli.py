"""Sweep harness: run every policy over a grid of (users, packets, erasure).

One summary CSV row per (policy, grid point), aggregated over seeded
Monte Carlo frames, plus a JSON manifest recording the fully resolved run
configuration next to the CSV. Rerunning the same spec with the same base
seed reproduces the data rows byte for byte; only the manifest timestamp
moves. Presets fig1..fig5 name the five standard experiment grids.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from datetime import datetime, timezone
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .model import SystemConfig
from .simulate import RunSummary, aggregate, simulate_frame

SUMMARY_HEADER = (
    "policy,M,N,P,iterations,mean_ct,stderr_ct,mean_sdd,stderr_sdd,"
    "mean_dd_per_user,stderr_dd_per_user,aborted_frames"
)
PER_FRAME_HEADER = "policy,M,N,P,iteration,ct,sdd,dd_per_user,aborted"

# start:stop:step ranges include the stop value when it lands within this
# tolerance of the final step.
RANGE_TOL = 1e-12
ERASURE_MAX = 0.95

SWEEPABLE = ("users", "packets", "erasure")
KNOWN_POLICIES = ("pct", "minct", "sdd")

RNG_NOTE = (
    "per frame: numpy default_rng(SeedSequence((base_seed, point_index, "
    "iteration))); draw order: per-user erasure probabilities, initial-phase "
    "reception matrix, then one uniform per still-incomplete user in "
    "ascending id order per recovery transmission"
)

log = logging.getLogger("idnc.sweep")


PRESETS: dict[str, dict] = {
    # completion time (fig1) and decoding delay (fig2) against user count
    "fig1": dict(
        sweep="users",
        users=(20, 40, 60, 80, 100),
        packets=(60,),
        erasure=(0.25, 0.5),
    ),
    "fig2": dict(
        sweep="users",
        users=(20, 40, 60, 80, 100),
        packets=(60,),
        erasure=(0.25, 0.5),
    ),
    # completion time (fig3) and decoding delay (fig4) against frame size
    "fig3": dict(
        sweep="packets",
        users=(60,),
        packets=(15, 30, 45, 60, 75, 90),
        erasure=(0.25, 0.5),
    ),
    "fig4": dict(
        sweep="packets",
        users=(60,),
        packets=(15, 30, 45, 60, 75, 90),
        erasure=(0.25, 0.5),
    ),
    # both metrics against the average erasure probability
    "fig5": dict(
        sweep="erasure",
        users=(60,),
        packets=(30,),
        erasure=(0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5),
    ),
}


@dataclasses.dataclass(frozen=True)
class SweepSpec:
    """Fully resolved description of one sweep run."""

    sweep: str
    users: tuple[int, ...]
    packets: tuple[int, ...]
    erasure: tuple[float, ...]
    iterations: int = 500
    policies: tuple[str, ...] = KNOWN_POLICIES
    base_seed: int = 0
    spread: float = 0.1
    solver: str = "exact"
    max_transmissions: int | None = None
    out: str = "results.csv"
    per_frame: str | None = None

    def __post_init__(self) -> None:
        if self.sweep not in SWEEPABLE:
            raise ValueError(f"sweep parameter must be one of {SWEEPABLE}")
        for name in ("users", "packets"):
            vals = getattr(self, name)
            if not vals:
                raise ValueError(f"{name} list must be nonempty")
            if any(not isinstance(v, int) or v < 1 for v in vals):
                raise ValueError(f"{name} values must be integers >= 1")
        if not self.erasure:
            raise ValueError("erasure list must be nonempty")
        for p in self.erasure:
            if not 0.0 <= p <= ERASURE_MAX:
                raise ValueError(
                    f"erasure value {p} outside [0, {ERASURE_MAX}]"
                )
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.policies:
            raise ValueError("policy list must be nonempty")
        for pol in self.policies:
            if pol not in KNOWN_POLICIES:
                raise ValueError(f"unknown policy {pol!r}")
        if self.spread < 0:
            raise ValueError("spread must be >= 0")
        if self.solver not in ("exact", "greedy"):
            raise ValueError("solver must be 'exact' or 'greedy'")
        if self.max_transmissions is not None and self.max_transmissions < 1:
            raise ValueError("max_transmissions must be >= 1")
        if self.per_frame is not None and self.per_frame == self.out:
            raise ValueError("per-frame path must differ from the summary path")

    @property
    def grid(self) -> list[tuple[int, int, float]]:
        """All (M, N, P) points, in users-major then packets then erasure
        order. The point index inside this list seeds the frames."""
        return list(product(self.users, self.packets, self.erasure))


def parse_values(text: str, kind: type) -> tuple:
    """Parse a comma list of scalars and/or start:stop:step ranges.

    Ranges include the stop whenever it lands within RANGE_TOL of a step.
    kind=int additionally requires every value to be a whole number.
    """
    out: list[float] = []
    for token in str(text).split(","):
        token = token.strip()
        if not token:
            raise ValueError("empty value in list")
        if ":" in token:
            parts = token.split(":")
            if len(parts) != 3:
                raise ValueError(f"range {token!r} must be start:stop:step")
            start, stop, step = (float(x) for x in parts)
            if step <= 0:
                raise ValueError(f"range {token!r} needs a positive step")
            if stop < start - RANGE_TOL:
                raise ValueError(f"range {token!r} has stop below start")
            k = 0
            while True:
                v = start + k * step
                if v > stop + RANGE_TOL:
                    break
                out.append(round(v, 10))
                k += 1
        else:
            out.append(float(token))
    if kind is int:
        ints = []
        for v in out:
            if abs(v - round(v)) > RANGE_TOL:
                raise ValueError(f"expected an integer, got {v}")
            ints.append(int(round(v)))
        return tuple(ints)
    return tuple(out)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="idnc-sweep",
        description="Run policy sweeps over (users, packets, erasure) grids "
        "and write aggregated CSV results.",
    )
    ap.add_argument("--preset", choices=sorted(PRESETS), help="named grid")
    ap.add_argument("--sweep", choices=SWEEPABLE, help="parameter to sweep")
    ap.add_argument(
        "--values",
        help="values for the swept parameter (comma list and/or "
        "start:stop:step ranges, stop inclusive)",
    )
    ap.add_argument("--users", help="user counts (comma list / ranges)")
    ap.add_argument("--packets", help="frame sizes (comma list / ranges)")
    ap.add_argument(
        "--erasure",
        help=f"average erasure probabilities in [0, {ERASURE_MAX}]",
    )
    ap.add_argument("--iterations", type=int, help="frames per grid point")
    ap.add_argument(
        "--policies", help=f"comma list from {{{','.join(KNOWN_POLICIES)}}}"
    )
    ap.add_argument("--seed", type=int, help="base seed (default 0)")
    ap.add_argument(
        "--spread", type=float, help="half-width of the per-user erasure draw"
    )
    ap.add_argument("--solver", choices=("exact", "greedy"))
    ap.add_argument(
        "--max-transmissions",
        type=int,
        dest="max_transmissions",
        help="abort a frame after this many recovery transmissions",
    )
    ap.add_argument("--out", help="summary CSV path (default results.csv)")
    ap.add_argument(
        "--per-frame",
        dest="per_frame",
        help="also write one row per simulated frame to this CSV",
    )
    ap.add_argument("--config", help="JSON file with the same keys as the flags")
    return ap


_LIST_KEYS = {"users": int, "packets": int, "erasure": float}
_SCALAR_KEYS = (
    "iterations",
    "seed",
    "spread",
    "solver",
    "max_transmissions",
    "out",
    "per_frame",
    "sweep",
    "values",
    "policies",
)


def _layer_from_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValueError(f"config {path} must hold a JSON object")
    known = set(_LIST_KEYS) | set(_SCALAR_KEYS) | {"preset"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    layer = {}
    for key, val in raw.items():
        if key in _LIST_KEYS and isinstance(val, (list, tuple)):
            layer[key] = ",".join(str(v) for v in val)
        elif key == "policies" and isinstance(val, (list, tuple)):
            layer[key] = ",".join(str(v) for v in val)
        else:
            layer[key] = val
    return layer


def parse_config(argv: list[str] | None = None) -> SweepSpec:
    """Resolve defaults, preset, config file, and flags into a SweepSpec.

    Later layers win: defaults < preset < config file < explicit flags.
    Any malformed or out-of-range input exits with a usage error.
    """
    ap = _build_parser()
    args = ap.parse_args(argv)

    try:
        layers: list[dict] = []
        config_layer = _layer_from_config(args.config) if args.config else {}
        preset_name = args.preset or config_layer.pop("preset", None)
        if preset_name is not None:
            if preset_name not in PRESETS:
                raise ValueError(f"unknown preset {preset_name!r}")
            layers.append(dict(PRESETS[preset_name]))
        layers.append(config_layer)
        flag_layer = {
            k: v
            for k, v in vars(args).items()
            if k not in ("preset", "config") and v is not None
        }
        layers.append(flag_layer)

        merged: dict = dict(
            sweep=None,
            users=None,
            packets=None,
            erasure=None,
            values=None,
            iterations=500,
            policies="pct,minct,sdd",
            seed=0,
            spread=0.1,
            solver="exact",
            max_transmissions=None,
            out="results.csv",
            per_frame=None,
        )
        for layer in layers:
            merged.update(layer)

        if merged["sweep"] is None:
            raise ValueError("no sweep parameter (use --sweep or --preset)")
        sweep = merged["sweep"]
        if "values" in flag_layer and sweep in flag_layer:
            raise ValueError(
                f"--values already names the swept {sweep}; drop --{sweep}"
            )
        grid: dict = {}
        for name, kind in _LIST_KEYS.items():
            val = merged[name]
            if name == sweep and merged["values"] is not None:
                val = merged["values"]
            if val is None:
                raise ValueError(f"missing {name} values")
            grid[name] = (
                val if isinstance(val, tuple) else parse_values(val, kind)
            )

        policies = merged["policies"]
        if not isinstance(policies, tuple):
            policies = tuple(
                s.strip() for s in str(policies).split(",") if s.strip()
            )

        spec = SweepSpec(
            sweep=sweep,
            users=grid["users"],
            packets=grid["packets"],
            erasure=grid["erasure"],
            iterations=int(merged["iterations"]),
            policies=policies,
            base_seed=int(merged["seed"]),
            spread=float(merged["spread"]),
            solver=merged["solver"],
            max_transmissions=merged["max_transmissions"],
            out=str(merged["out"]),
            per_frame=merged["per_frame"],
        )
    except ValueError as exc:
        ap.error(str(exc))
    return spec


def _fmt(x: float) -> str:
    """Shortest exact decimal form, stable across runs."""
    return repr(float(x))


def _summary_row(s: RunSummary) -> str:
    return ",".join(
        [
            s.policy,
            str(s.num_users),
            str(s.num_packets),
            _fmt(s.mean_erasure),
            str(s.iterations),
            _fmt(s.mean_ct),
            _fmt(s.stderr_ct),
            _fmt(s.mean_sdd),
            _fmt(s.stderr_sdd),
            _fmt(s.mean_dd_per_user),
            _fmt(s.stderr_dd_per_user),
            str(s.aborted_frames),
        ]
    )


def _write_manifest(spec: SweepSpec, status: str, rows: int, error: str | None):
    payload = {
        "status": status,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "code_version": __version__,
        "base_seed": spec.base_seed,
        "spec": dataclasses.asdict(spec),
        "rng": RNG_NOTE,
        "rows_written": rows,
    }
    if error is not None:
        payload["error"] = error
    path = Path(spec.out).with_suffix(".manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def run_sweep(spec: SweepSpec) -> list[RunSummary]:
    """Run the whole grid and stream results to disk.

    Rows appear in (policy, grid point) order and are flushed as they are
    produced, so a crash leaves a readable partial CSV; the manifest then
    says "failed" instead of "ok".
    """
    points = spec.grid
    summaries: list[RunSummary] = []
    rows_written = 0
    try:
        out_fh = open(spec.out, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise RuntimeError(f"cannot write {spec.out}: {exc}") from exc
    pf_fh = None
    if spec.per_frame is not None:
        try:
            pf_fh = open(spec.per_frame, "w", encoding="utf-8", newline="")
        except OSError as exc:
            out_fh.close()
            raise RuntimeError(f"cannot write {spec.per_frame}: {exc}") from exc

    try:
        out_fh.write(SUMMARY_HEADER + "\n")
        out_fh.flush()
        if pf_fh:
            pf_fh.write(PER_FRAME_HEADER + "\n")
        for policy in spec.policies:
            for point_idx, (m, n, p) in enumerate(points):
                cfg = SystemConfig(
                    num_users=m,
                    num_packets=n,
                    mean_erasure=p,
                    erasure_spread=spec.spread,
                    base_seed=spec.base_seed,
                    max_recovery_transmissions=spec.max_transmissions,
                )
                frames = []
                for it in range(spec.iterations):
                    seed = np.random.SeedSequence(
                        (spec.base_seed, point_idx, it)
                    )
                    fm = simulate_frame(cfg, policy, seed, solver=spec.solver)
                    frames.append(fm)
                    if pf_fh:
                        ct = (
                            ""
                            if fm.aborted
                            else str(fm.overall_completion_time)
                        )
                        pf_fh.write(
                            f"{policy},{m},{n},{_fmt(p)},{it},{ct},"
                            f"{fm.sum_decoding_delay},"
                            f"{_fmt(fm.sum_decoding_delay / m)},"
                            f"{int(fm.aborted)}\n"
                        )
                summary = aggregate(
                    frames,
                    policy=policy,
                    num_users=m,
                    num_packets=n,
                    mean_erasure=p,
                )
                summaries.append(summary)
                out_fh.write(_summary_row(summary) + "\n")
                out_fh.flush()
                if pf_fh:
                    pf_fh.flush()
                rows_written += 1
                log.info(
                    "%s M=%d N=%d P=%g done (%d/%d rows)",
                    policy,
                    m,
                    n,
                    p,
                    rows_written,
                    len(points) * len(spec.policies),
                )
    except Exception as exc:
        _write_manifest(spec, "failed", rows_written, f"{type(exc).__name__}: {exc}")
        raise
    finally:
        out_fh.close()
        if pf_fh:
            pf_fh.close()
    _write_manifest(spec, "ok", rows_written, None)
    return summaries


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("IDNC_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=level if hasattr(logging, level) else "WARNING")
    spec = parse_config(argv)
    try:
        run_sweep(spec)
    except Exception as exc:  # argparse errors exited already
        log.error("sweep failed: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
