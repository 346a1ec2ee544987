"""Markdown and TSV rendering of study results.

Tables follow the layout of the published study: one row per
configuration, per-joint RMSE and peak columns in display units.  A cell
is bolded when it is strictly more than 30 percent above the reference
row's mean, and a spread is printed only when the seed standard
deviation exceeds 5 percent of the mean.
"""

from __future__ import annotations

import io

BOLD_RATIO = 1.30
SPREAD_RATIO = 0.05
JOINT_LABELS = ("joint 1", "joint 2", "joint 3")


def format_cell(mean: float, std: float, bold: bool) -> str:
    text = f"{mean:.3f}"
    if abs(std) > SPREAD_RATIO * abs(mean):
        text += f" ± {std:.3f}"
    return f"**{text}**" if bold else text


def is_bold(value: float, reference: float) -> bool:
    """Strictly-more-than-30-percent-worse rule against the reference."""
    return value > BOLD_RATIO * reference


def _header(units) -> list:
    cols = ["configuration"]
    for j, unit in zip(JOINT_LABELS, units):
        cols.append(f"{j} RMSE ({unit})")
        cols.append(f"{j} peak ({unit})")
    line = "| " + " | ".join(cols) + " |"
    rule = "|" + "|".join(["---"] * len(cols)) + "|"
    return [line, rule]


def study_table(title: str, rows, reference_name: str) -> str:
    """Render one study as a markdown table.

    `rows` is an ordered list of (name, aggregate_display_dict); the row
    named `reference_name` anchors the bold rule and is never bolded
    itself.
    """
    if not rows:
        return f"## {title}\n\nnothing to report\n"
    by_name = dict(rows)
    if reference_name not in by_name:
        return f"## {title}\n\nnothing to report\n"
    ref = by_name[reference_name]
    units = ref["units"]
    lines = [f"## {title}", ""]
    lines += _header(units)
    for name, agg in rows:
        cells = [name]
        for j in range(3):
            for key in ("rmse", "peak"):
                mean = agg[f"{key}_mean"][j]
                std = agg[f"{key}_std"][j]
                bold = name != reference_name and is_bold(
                    mean, ref[f"{key}_mean"][j]
                )
                cells.append(format_cell(mean, std, bold))
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    return "\n".join(lines)


def homing_series_tsv(series_by_config: dict) -> str:
    """Per-segment RMSE series, one column group per configuration.

    `series_by_config` maps a configuration name to the row list produced
    by the homing series evaluation (segment, homings, aggregate display).
    """
    if not series_by_config:
        return "nothing to report\n"
    names = sorted(series_by_config)
    n_segments = max(len(rows) for rows in series_by_config.values())
    out = io.StringIO()
    cols = ["segment", "homings"]
    for name in names:
        for j in (1, 2, 3):
            cols.append(f"{name}_rmse_j{j}")
    out.write("\t".join(cols) + "\n")
    for k in range(n_segments):
        homings = ""
        cells = []
        for name in names:
            rows = series_by_config[name]
            if k < len(rows):
                row = rows[k]
                homings = str(row["homings"])
                agg = row["aggregate"]
                cells += [f"{agg['rmse_mean'][j]:.6f}" for j in range(3)]
            else:
                cells += ["", "", ""]
        out.write("\t".join([str(k), homings] + cells) + "\n")
    return out.getvalue()


def render_report(sections) -> str:
    """Concatenate rendered sections into the final report document."""
    body = [s for s in sections if s]
    if not body:
        return "nothing to report\n"
    return "\n".join(["# Calibration study report", ""] + body)
