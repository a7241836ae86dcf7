"""Figure rendering for sweep CSVs: one curve per policy, error bars from
the stderr columns, optional panel split (e.g. one panel per erasure
probability). Inputs are never modified; identical inputs produce
byte-identical SVG output.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


class MissingColumnError(ValueError):
    """An input CSV lacks a column the figure needs."""


class EmptySelectionError(ValueError):
    """Filtering left no rows to plot."""


# y metric -> (its stderr column, axis label)
METRICS = {
    "mean_ct": ("stderr_ct", "mean completion time (transmissions)"),
    "mean_sdd": ("stderr_sdd", "mean sum decoding delay"),
    "mean_dd_per_user": ("stderr_dd_per_user", "mean decoding delay per user"),
}

AXIS_LABELS = {
    "M": "number of users M",
    "N": "number of packets N",
    "P": "average erasure probability P",
}

POLICY_LABELS = {"pct": "P-CT", "minct": "Min-CT", "sdd": "SDD"}
POLICY_ORDER = ("pct", "minct", "sdd")
POLICY_STYLES = {
    "pct": dict(color="#1f77b4", marker="o", linestyle="-"),
    "minct": dict(color="#d62728", marker="s", linestyle="--"),
    "sdd": dict(color="#2ca02c", marker="^", linestyle="-."),
}

# fixed so rerendering identical inputs yields identical bytes
_SVG_RC = {
    "svg.fonttype": "none",
    "svg.hashsalt": "idnc-plots",
}


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: which CSVs, which axis, which metric panels."""

    inputs: tuple[str, ...]
    x: str
    metrics: tuple[str, ...]
    out: str
    split: str | None = None

    def __post_init__(self) -> None:
        if not self.inputs:
            raise ValueError("at least one input CSV is required")
        if self.x not in AXIS_LABELS:
            raise ValueError(f"x axis must be one of {sorted(AXIS_LABELS)}")
        if not self.metrics:
            raise ValueError("at least one y metric is required")
        for m in self.metrics:
            if m not in METRICS:
                raise ValueError(f"unknown metric {m!r}")
        if self.split is not None and self.split == self.x:
            raise ValueError("cannot split panels by the x-axis parameter")

    @property
    def referenced_columns(self) -> tuple[str, ...]:
        cols = ["policy", self.x]
        if self.split is not None:
            cols.append(self.split)
        for m in self.metrics:
            cols.extend((m, METRICS[m][0]))
        return tuple(dict.fromkeys(cols))


# the five standard figures; fig2/fig4 read the same CSVs as fig1/fig3
PRESETS: dict[str, dict] = {
    "fig1": dict(x="M", metrics=("mean_ct",), split="P"),
    "fig2": dict(x="M", metrics=("mean_sdd",), split="P"),
    "fig3": dict(x="N", metrics=("mean_ct",), split="P"),
    "fig4": dict(x="N", metrics=("mean_sdd",), split="P"),
    # a two-panel delay comparison against the swept erasure probability
    "fig5": dict(x="P", metrics=("mean_ct", "mean_sdd"), split=None),
}


def load_rows(inputs: tuple[str, ...], required: tuple[str, ...]) -> list[dict]:
    """Read and concatenate CSVs, insisting on the referenced columns."""
    rows: list[dict] = []
    for path in inputs:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            have = set(reader.fieldnames or ())
            missing = [c for c in required if c not in have]
            if missing:
                raise MissingColumnError(
                    f"{path} is missing required column {missing[0]!r}"
                )
            rows.extend(reader)
    if not rows:
        raise EmptySelectionError(
            f"no data rows in {', '.join(inputs)}"
        )
    return rows


def _policy_order(rows: list[dict]) -> list[str]:
    present = {r["policy"] for r in rows}
    ordered = [p for p in POLICY_ORDER if p in present]
    ordered.extend(sorted(present - set(POLICY_ORDER)))
    return ordered


def build_figure(spec: FigureSpec) -> plt.Figure:
    """Assemble the matplotlib figure without touching the filesystem
    beyond reading the input CSVs."""
    rows = load_rows(spec.inputs, spec.referenced_columns)

    if spec.split is not None:
        split_values = sorted({float(r[spec.split]) for r in rows})
    else:
        split_values = [None]
    panels = list(product(spec.metrics, split_values))

    fig, axes = plt.subplots(
        1, len(panels), figsize=(5.6 * len(panels), 4.2), squeeze=False
    )
    for idx, ((metric, split_val), ax) in enumerate(zip(panels, axes[0])):
        if split_val is None:
            subset = rows
        else:
            subset = [r for r in rows if float(r[spec.split]) == split_val]
        if not subset:
            raise EmptySelectionError(
                f"no rows match {spec.split} = {split_val:g}"
            )
        stderr_col, metric_label = METRICS[metric]
        for policy in _policy_order(subset):
            pts = sorted(
                (float(r[spec.x]), float(r[metric]), float(r[stderr_col]))
                for r in subset
                if r["policy"] == policy
            )
            ax.errorbar(
                [p[0] for p in pts],
                [p[1] for p in pts],
                yerr=[p[2] for p in pts],
                label=POLICY_LABELS.get(policy, policy),
                capsize=3,
                markersize=5,
                **POLICY_STYLES.get(policy, {}),
            )
        ax.set_xlabel(AXIS_LABELS[spec.x])
        ax.set_ylabel(metric_label)
        letter = chr(ord("a") + idx)
        if split_val is not None:
            ax.set_title(f"({letter}) {spec.split} = {split_val:g}")
        elif len(panels) > 1:
            ax.set_title(f"({letter}) {metric_label}")
        ax.grid(True, alpha=0.3)
        ax.legend()
    fig.tight_layout()
    return fig


def render_figure(spec: FigureSpec) -> str:
    """Render a figure to its output path (SVG unless the path says .png)."""
    with matplotlib.rc_context(_SVG_RC):
        fig = build_figure(spec)
        try:
            suffix = Path(spec.out).suffix.lower()
            if suffix == ".png":
                fig.savefig(spec.out, format="png", dpi=150)
            else:
                fig.savefig(spec.out, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return spec.out
