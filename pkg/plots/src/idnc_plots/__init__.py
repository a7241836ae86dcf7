"""Figure rendering for idnc sweep CSVs."""

from .figures import (
    AXIS_LABELS,
    METRICS,
    POLICY_LABELS,
    PRESETS,
    EmptySelectionError,
    FigureSpec,
    MissingColumnError,
    build_figure,
    load_rows,
    render_figure,
)

__version__ = "0.1.0"
