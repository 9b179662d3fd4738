"""Figure generation from experiment CSVs.

Reads the harness result schema (run_id,seed,T,algo,metric,value,wall_ms) and
the regret trace schema (t,regret,cum_regret,epoch,switches) and renders
deterministic SVG/PNG figures: log-log rate plots with reference slopes, and
regret curves with sqrt/polylog envelopes and epoch-switch markers.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

# Metric names the result schema may carry.
METRICS = (
    "l2_err",
    "sigma_err",
    "l1_err",
    "uinv_err",
    "winv_err",
    "regret",
    "residual",
    "pop_ratio",
    "slope",
)

RESULT_HEADER = ["run_id", "seed", "T", "algo", "metric", "value", "wall_ms"]
TRACE_HEADER = ["t", "regret", "cum_regret", "epoch", "switches"]

# Fixed render style so repeated runs produce identical bytes.
STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "svg.hashsalt": "plotkit",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
}

PALETTE = ("#1f6fb4", "#d95f02", "#2ca25f", "#7b3294", "#c51b8a", "#636363")


class PlotError(ValueError):
    pass


@dataclass
class PlotSpec:
    """What to draw: inputs, metric, grouping, guides, and the output path."""

    kind: str
    inputs: list
    out: str
    metric: str = "regret"
    group_by: str = "algo"
    reference_slopes: list = field(default_factory=list)
    title: str = ""

    def __post_init__(self):
        if self.kind not in ("rate", "regret"):
            raise PlotError(f"kind must be 'rate' or 'regret', got {self.kind!r}")
        if self.kind == "rate" and self.metric not in METRICS:
            raise PlotError(f"metric {self.metric!r} is not in the result schema registry")
        if not self.inputs:
            raise PlotError("at least one input CSV is required")

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        if path.suffix == ".json":
            raw = json.loads(path.read_text())
        else:
            try:
                import tomllib as toml_reader
            except ModuleNotFoundError:  # pragma: no cover - version dependent
                import tomli as toml_reader
            raw = toml_reader.loads(path.read_text())
        return cls(
            kind=raw.get("kind", "rate"),
            inputs=list(raw.get("inputs", [])),
            out=raw["out"],
            metric=raw.get("metric", "regret"),
            group_by=raw.get("group_by", "algo"),
            reference_slopes=list(raw.get("reference_slopes", [])),
            title=raw.get("title", ""),
        )


def read_result_rows(path):
    """Parse a result CSV; raises PlotError on schema mismatch."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULT_HEADER:
            raise PlotError(f"{path}: expected result header {RESULT_HEADER}, got {header}")
        rows = []
        for rec in reader:
            rows.append(
                {
                    "run_id": rec[0],
                    "seed": int(rec[1]),
                    "T": int(rec[2]),
                    "algo": rec[3],
                    "metric": rec[4],
                    "value": float(rec[5]),
                    "wall_ms": int(rec[6]),
                }
            )
    return rows


def read_trace_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACE_HEADER:
            raise PlotError(f"{path}: expected trace header {TRACE_HEADER}, got {header}")
        t, cum, epoch, switches = [], [], [], []
        for rec in reader:
            t.append(int(rec[0]))
            cum.append(float(rec[2]))
            epoch.append(int(rec[3]))
            switches.append(int(rec[4]))
    return np.array(t), np.array(cum), np.array(epoch), np.array(switches)


def median_series(rows, metric, group_by="algo"):
    """Per-group (T, median, 25th, 75th percentile) arrays."""
    groups = {}
    for row in rows:
        if row["metric"] != metric:
            continue
        groups.setdefault(row[group_by], {}).setdefault(row["T"], []).append(row["value"])
    if not groups:
        raise PlotError(f"no rows carry metric {metric!r}")
    series = {}
    for name, by_t in groups.items():
        ts = np.array(sorted(by_t))
        med = np.array([np.median(by_t[t]) for t in ts])
        lo = np.array([np.percentile(by_t[t], 25) for t in ts])
        hi = np.array([np.percentile(by_t[t], 75) for t in ts])
        series[name] = (ts, med, lo, hi)
    return series


def power_guide(ts, anchor_t, anchor_value, slope):
    """Reference curve through (anchor_t, anchor_value) with the given slope."""
    ts = np.asarray(ts, dtype=float)
    return anchor_value * (ts / anchor_t) ** slope


def polylog_envelope(t, cum):
    """Smallest c with cum(t) <= c * log2(t)^2 for all rounds past the first."""
    t = np.asarray(t, dtype=float)
    mask = t >= 2
    return float(np.max(cum[mask] / np.log2(t[mask]) ** 2))


def _save(fig, out):
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if out.suffix == ".svg" else {}
    fig.savefig(out, metadata=metadata)
    plt.close(fig)
    return out


def plot_rate(spec):
    """Log-log medians with interquartile bands and dashed slope guides."""
    rows = []
    for path in spec.inputs:
        rows.extend(read_result_rows(path))
    series = median_series(rows, spec.metric, spec.group_by)
    for name, (ts, *_rest) in series.items():
        if len(ts) < 3:
            raise PlotError(f"group {name!r} has fewer than 3 T values")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for color, (name, (ts, med, lo, hi)) in zip(
            PALETTE * 4, sorted(series.items())
        ):
            ax.loglog(ts, med, marker="o", markersize=3.5, color=color, label=name)
            ax.fill_between(ts, lo, hi, color=color, alpha=0.2, linewidth=0)
        first = sorted(series.items())[0][1]
        for slope in spec.reference_slopes:
            guide = power_guide(first[0], first[0][0], first[1][0], slope)
            ax.loglog(
                first[0], guide, linestyle="--", linewidth=1.0, color="#555555",
                label=f"slope {slope:g}",
            )
        ax.set_xlabel("T")
        ax.set_ylabel(spec.metric)
        if spec.title:
            ax.set_title(spec.title)
        ax.legend(fontsize=7)
        return _save(fig, spec.out)


def plot_regret(spec):
    """Cumulative regret with sqrt-t and log^2-t overlays and switch markers."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for color, path in zip(PALETTE * 4, spec.inputs):
            t, cum, _epoch, switches = read_trace_rows(path)
            ax.plot(t, cum, color=color, linewidth=1.2, label=Path(path).stem)
            jumps = np.flatnonzero(np.diff(switches) > 0) + 1
            if jumps.size:
                ax.plot(
                    t[jumps], cum[jumps], linestyle="none", marker="|",
                    markersize=7, color=color,
                )
            final = cum[-1]
            if final > 0:
                root = final * np.sqrt(t / t[-1])
                ax.plot(t, root, linestyle="--", linewidth=0.9, color="#555555")
                envelope = polylog_envelope(t, cum)
                mask = t >= 2
                ax.plot(
                    t[mask], envelope * np.log2(t[mask]) ** 2,
                    linestyle=":", linewidth=0.9, color="#999999",
                )
        ax.set_xlabel("t")
        ax.set_ylabel("cumulative regret")
        if spec.title:
            ax.set_title(spec.title)
        ax.legend(fontsize=7)
        return _save(fig, spec.out)


def render(spec):
    if spec.kind == "rate":
        return plot_rate(spec)
    return plot_regret(spec)
