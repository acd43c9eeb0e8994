"""Duration-segment charts: one row per trace, one colored bar per phoneme.

The same phoneme label always maps to the same color (keyed by a label hash),
so segments can be compared across rows at a glance.
"""

from __future__ import annotations

import hashlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import InputError
from .synthesis import DurationTrace

BAR_HEIGHT = 0.6


def label_color(label: str) -> tuple[float, float, float]:
    """Deterministic, label-keyed color from the stable hash of the label."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    hue = digest[0] / 255.0
    saturation = 0.45 + 0.45 * (digest[1] / 255.0)
    value = 0.55 + 0.40 * (digest[2] / 255.0)
    import colorsys

    return colorsys.hsv_to_rgb(hue, saturation, value)


def trace_geometry(traces: list[DurationTrace]) -> list[list[dict]]:
    """Per-trace drawing coordinates; exposed separately so layout is testable."""
    if not traces:
        raise InputError("at least one trace is required")
    rows = []
    for row_index, trace in enumerate(traces):
        if not trace.segments:
            raise InputError(f"trace {trace.name!r} is empty")
        row = []
        for label, start, frames in trace.segments:
            row.append(
                {
                    "label": label,
                    "x": float(start),
                    "width": float(frames),
                    "y": float(len(traces) - 1 - row_index),
                    "color": label_color(label),
                }
            )
        rows.append(row)
    return rows


def plot_durations(traces: list[DurationTrace], out_path: str) -> str:
    """Render stacked duration bars for the given traces into an image file."""
    rows = trace_geometry(traces)
    fig_height = max(1.5, 0.55 * len(traces) + 0.8)
    fig, ax = plt.subplots(figsize=(12, fig_height))
    for row in rows:
        for seg in row:
            ax.barh(
                seg["y"],
                seg["width"],
                left=seg["x"],
                height=BAR_HEIGHT,
                color=seg["color"],
                edgecolor="white",
                linewidth=0.4,
            )
    ax.set_yticks(
        [len(traces) - 1 - i for i in range(len(traces))],
        [t.name for t in traces],
    )
    ax.set_xlabel("frames")
    ax.set_xlim(0, max(t.total_frames for t in traces) * 1.02)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
