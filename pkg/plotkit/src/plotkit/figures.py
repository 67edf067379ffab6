"""The three figure kinds, drawn straight from results rows.

Every figure prints its plotted group means to stdout (full precision), so
a reader can check the numbers behind the picture without reopening the
CSV. Means are plain averages over raw rows; the only filtering rule is
that data-path delay averages skip rejected flows (``hops == 0``, nothing
was delivered), same as documented on the exporter side. Error bars show
the spread (standard deviation) of per-seed means.
"""

from __future__ import annotations

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .spec import FigureSpec
from .tables import SCHEMA, SchemaError, read_table


def _key_of(row: dict, group_by: tuple[str, ...]) -> tuple:
    return tuple(row[c] for c in group_by)


def _key_label(key: tuple, group_by: tuple[str, ...]) -> str:
    return ",".join(f"{col}={val}" for col, val in zip(group_by, key))


def group_means(rows, group_by, value, keep=None):
    """Mean of ``value(row)`` per group key, with the contributing row count."""
    sums: dict[tuple, float] = {}
    counts: dict[tuple, int] = {}
    for r in rows:
        if keep is not None and not keep(r):
            continue
        k = _key_of(r, group_by)
        sums[k] = sums.get(k, 0.0) + value(r)
        counts[k] = counts.get(k, 0) + 1
    return {k: (sums[k] / counts[k], counts[k]) for k in sums}


def _seed_spread(rows, group_by, value, keep=None):
    """Standard deviation of per-seed means per group (0 for a single seed)."""
    per_seed: dict[tuple, dict[int, list[float]]] = {}
    for r in rows:
        if keep is not None and not keep(r):
            continue
        k = _key_of(r, group_by)
        per_seed.setdefault(k, {}).setdefault(r["seed"], []).append(value(r))
    out = {}
    for k, seeds in per_seed.items():
        means = [float(np.mean(v)) for v in seeds.values()]
        out[k] = float(np.std(means)) if len(means) > 1 else 0.0
    return out


def _print_means(name, means, group_by):
    for k in sorted(means):
        mean, n = means[k]
        print(f"{name}[{_key_label(k, group_by)}] mean={mean!r} rows={n}")


def _end_to_end_ms(r: dict) -> float:
    return r["delay_ms"] + r["setup_delay_ms"]


def _routed(r: dict) -> bool:
    return r["hops"] > 0


def _bars(ax, means, spread, group_by, ylabel):
    keys = sorted(means)
    xs = np.arange(len(keys))
    ax.bar(
        xs,
        [means[k][0] for k in keys],
        yerr=[spread.get(k, 0.0) for k in keys],
        capsize=3,
        color="tab:blue",
    )
    ax.set_xticks(xs)
    ax.set_xticklabels([_key_label(k, group_by) for k in keys], rotation=20, ha="right")
    ax.set_ylabel(ylabel)


def _fig_delay_series(rows, group_by):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    overall = group_means(rows, group_by, _end_to_end_ms)
    _print_means("end_to_end_delay_ms", overall, group_by)
    for key in sorted(overall):
        series = group_means(
            [r for r in rows if _key_of(r, group_by) == key],
            ("flow_id",),
            _end_to_end_ms,
        )
        xs = sorted(series)
        ax.plot(
            [x[0] for x in xs],
            [series[x][0] for x in xs],
            label=_key_label(key, group_by),
        )
    ax.set_xlabel("flow index (one per slot)")
    ax.set_ylabel("end-to-end delay (ms)")
    ax.legend()
    return fig


def _fig_controller_averages(rows, group_by):
    fig, (ax_d, ax_t) = plt.subplots(1, 2, figsize=(9, 4.5))
    delay = group_means(rows, group_by, _end_to_end_ms)
    tput = group_means(rows, group_by, lambda r: r["throughput_mbps"])
    _print_means("end_to_end_delay_ms", delay, group_by)
    _print_means("throughput_mbps", tput, group_by)
    _bars(ax_d, delay, _seed_spread(rows, group_by, _end_to_end_ms), group_by,
          "mean end-to-end delay (ms)")
    _bars(ax_t, tput, _seed_spread(rows, group_by, lambda r: r["throughput_mbps"]),
          group_by, "mean throughput (Mbps)")
    return fig


_COMPARISON_PANELS = (
    ("delay_ms", "data-path delay (ms)", lambda r: r["delay_ms"], _routed),
    ("throughput_mbps", "throughput (Mbps)", lambda r: r["throughput_mbps"], None),
    ("loss_percent", "loss (%)", lambda r: r["loss_ratio"] * 100.0, None),
    ("utility", "utility", lambda r: r["utility"], None),
)


def _fig_policy_comparison(rows, group_by):
    fig, axes = plt.subplots(2, 2, figsize=(9, 7))
    for ax, (name, ylabel, value, keep) in zip(axes.flat, _COMPARISON_PANELS):
        means = group_means(rows, group_by, value, keep)
        _print_means(name, means, group_by)
        _bars(ax, means, _seed_spread(rows, group_by, value, keep), group_by, ylabel)
    return fig


_BUILDERS = {
    "delay_series": _fig_delay_series,
    "controller_averages": _fig_controller_averages,
    "policy_comparison": _fig_policy_comparison,
}


def _placeholder(out_path: Path, detail: str):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.text(0.5, 0.5, f"no data\n{detail}", ha="center", va="center")
    ax.set_axis_off()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render(spec: FigureSpec, base_dir=".", out_dir=".") -> Path:
    """Draw one figure; returns the written image path.

    Inputs resolve against ``base_dir``, the image lands in ``out_dir``.
    Header-only inputs produce a placeholder image and a warning instead
    of an error, so batch renders survive an empty study export.
    """
    for col in spec.group_by:
        if col not in SCHEMA:
            raise SchemaError(spec.output, col, "is not part of the results schema")
    rows = []
    for name in spec.inputs:
        rows.extend(read_table(Path(base_dir) / name).rows)
    out_path = Path(out_dir) / spec.output
    if not rows:
        print(
            f"warning: {', '.join(spec.inputs)}: no data rows; wrote placeholder",
            file=sys.stderr,
        )
        _placeholder(out_path, f"inputs: {', '.join(spec.inputs)}")
        return out_path
    fig = _BUILDERS[spec.kind](rows, spec.group_by)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
