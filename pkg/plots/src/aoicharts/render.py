"""Render sweep CSVs into publication-style vector charts.

Input schema (fixed, produced by the experiment harness):

    experiment,policy,K,gamma,N,avg_cost,ci95,avg_commands,commands_ci95,
    episodes,slots,seed,wall_seconds

Two chart kinds: "vs-k" (average cost against fleet size, one series
per policy, CI bands) and "vs-gamma" (two stacked panels: average cost,
then command rate with the budget diagonal clipped at its saturation
level).  Rendering is deterministic: the same CSV yields byte-identical
SVG output.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

EXPECTED_COLUMNS = (
    "experiment", "policy", "K", "gamma", "N", "avg_cost", "ci95",
    "avg_commands", "commands_ci95", "episodes", "slots", "seed",
    "wall_seconds",
)

CHART_KINDS = ("vs-k", "vs-gamma")

# stable series order and styling; unknown policies get the fallbacks
POLICY_STYLE = {
    "relax-truncate": ("relax-then-truncate", "#1f77b4", "o"),
    "exact-knowledge-relax-truncate": ("exact battery knowledge", "#2ca02c",
                                       "s"),
    "relaxed-lower-bound": ("relaxed lower bound", "#d62728", "^"),
    "greedy": ("request-aware greedy", "#7f7f7f", "v"),
    "unconstrained": ("no transmission constraint", "#9467bd", "D"),
}
FALLBACK_COLORS = ("#8c564b", "#e377c2", "#bcbd22", "#17becf")


class ChartError(ValueError):
    """CSV does not match the schema or holds no drawable data."""


@dataclass
class ChartSpec:
    csv_path: str | Path
    kind: str
    out_path: str | Path
    styles: dict[str, tuple[str, str, str]] = field(default_factory=dict)
    log_x: bool | None = None  # None: log axis for wide K ranges

    def __post_init__(self):
        if self.kind not in CHART_KINDS:
            raise ChartError(f"unknown chart kind {self.kind!r}; "
                             f"expected one of {CHART_KINDS}")


@dataclass
class RenderResult:
    out_path: Path
    n_series: int
    n_rows: int


def read_rows(csv_path) -> list[dict]:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        for col in EXPECTED_COLUMNS:
            if col not in header:
                raise ChartError(f"schema mismatch: missing column {col!r}")
        extra = [c for c in header if c not in EXPECTED_COLUMNS]
        if extra:
            raise ChartError(f"schema mismatch: unexpected column "
                             f"{extra[0]!r}")
        rows = []
        for raw in reader:
            rows.append({
                "policy": raw["policy"],
                "K": int(raw["K"]),
                "gamma": float(raw["gamma"]),
                "avg_cost": float(raw["avg_cost"]),
                "ci95": float(raw["ci95"]),
                "avg_commands": float(raw["avg_commands"]),
                "commands_ci95": float(raw["commands_ci95"]),
            })
    if not rows:
        raise ChartError("no data rows to draw")
    return rows


def _series(rows, x_key):
    """Rows grouped by policy, sorted along the x key; stable order."""
    order = []
    grouped = {}
    for row in rows:
        if row["policy"] not in grouped:
            grouped[row["policy"]] = []
            order.append(row["policy"])
        grouped[row["policy"]].append(row)
    for policy in order:
        grouped[policy].sort(key=lambda r: r[x_key])
    return [(policy, grouped[policy]) for policy in order]


def _style(spec: ChartSpec, policy: str, index: int):
    if policy in spec.styles:
        return spec.styles[policy]
    if policy in POLICY_STYLE:
        return POLICY_STYLE[policy]
    return (policy, FALLBACK_COLORS[index % len(FALLBACK_COLORS)], "x")


def _deterministic_save(fig, out_path: Path) -> None:
    # fixed hash salt and no timestamp: byte-identical re-renders
    matplotlib.rcParams["svg.hashsalt"] = "aoicharts"
    fig.savefig(out_path, format=out_path.suffix.lstrip(".") or "svg",
                metadata={"Date": None})
    plt.close(fig)


def _draw_cost_axis(ax, spec, series, x_key):
    for i, (policy, rows) in enumerate(series):
        label, color, marker = _style(spec, policy, i)
        xs = [r[x_key] for r in rows]
        ys = [r["avg_cost"] for r in rows]
        ci = [r["ci95"] for r in rows]
        ax.plot(xs, ys, color=color, marker=marker, label=label,
                linewidth=1.4, markersize=4)
        ax.fill_between(xs, [y - c for y, c in zip(ys, ci)],
                        [y + c for y, c in zip(ys, ci)],
                        color=color, alpha=0.15, linewidth=0)
    ax.set_ylabel("average on-demand AoI (slots)")
    ax.grid(True, alpha=0.3)


def render(spec: ChartSpec) -> RenderResult:
    """Draw the chart; raises ChartError before writing anything on bad
    input."""
    rows = read_rows(spec.csv_path)
    out_path = Path(spec.out_path)
    if spec.kind == "vs-k":
        series = _series(rows, "K")
        fig, ax = plt.subplots(figsize=(6.0, 4.0), constrained_layout=True)
        _draw_cost_axis(ax, spec, series, "K")
        ax.set_xlabel("number of sensors K")
        ks = sorted({r["K"] for r in rows})
        use_log = spec.log_x if spec.log_x is not None else (
            len(ks) > 1 and ks[-1] / max(ks[0], 1) >= 12)
        if use_log:
            ax.set_xscale("log")
        ax.legend(loc="best", fontsize=8)
        _deterministic_save(fig, out_path)
        return RenderResult(out_path, len(series), len(rows))

    series = _series(rows, "gamma")
    fig, (ax_cost, ax_cmd) = plt.subplots(
        2, 1, figsize=(6.0, 6.4), sharex=True, constrained_layout=True)
    _draw_cost_axis(ax_cost, spec, series, "gamma")
    for i, (policy, prows) in enumerate(series):
        label, color, marker = _style(spec, policy, i)
        xs = [r["gamma"] for r in prows]
        ys = [r["avg_commands"] for r in prows]
        ci = [r["commands_ci95"] for r in prows]
        ax_cmd.plot(xs, ys, color=color, marker=marker, label=label,
                    linewidth=1.4, markersize=4)
        ax_cmd.fill_between(xs, [y - c for y, c in zip(ys, ci)],
                            [y + c for y, c in zip(ys, ci)],
                            color=color, alpha=0.15, linewidth=0)
    # budget diagonal, clipped where the measured rate saturates
    gammas = sorted({r["gamma"] for r in rows})
    sat = max(r["avg_commands"] for r in rows)
    diag = [min(g, sat) for g in gammas]
    ax_cmd.plot(gammas, diag, color="black", linestyle=":", linewidth=1.0,
                label="budget (clipped)")
    ax_cmd.set_xlabel("normalized transmission budget")
    ax_cmd.set_ylabel("command rate (per sensor per slot)")
    ax_cmd.grid(True, alpha=0.3)
    ax_cmd.legend(loc="best", fontsize=8)
    ax_cost.legend(loc="best", fontsize=8)
    _deterministic_save(fig, out_path)
    return RenderResult(out_path, len(series), len(rows))
