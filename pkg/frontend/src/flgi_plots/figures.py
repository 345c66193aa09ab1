"""Figures from flgi-trials CSV outputs.

Input contract (produced by the simulator's study drivers):

* power CSV: header ``scenario_id,method,metric,value,se`` with scenario ids
  shaped like ``N80-B2-nz4-p0.80``; rejection rows carry metric ``power`` or
  ``type1_error``.
* null CSV: header ``q,prob`` (one row per value of the statistic).

Rendering is batch-only and idempotent: no interactive backend, timestamps
suppressed, so re-running produces byte-identical images.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
# deterministic element ids so re-rendered SVGs are byte-identical
matplotlib.rcParams["svg.hashsalt"] = "flgi-plots"

import matplotlib.pyplot as plt

SCENARIO_ID = re.compile(r"^N(?P<n>\d+)-B(?P<b>\d+)-nz(?P<nz>\d+)-p(?P<p>[0-9.]+)$")

DEFAULT_STYLES = {
    "alloc_prob_flgi": dict(color="#d62728", marker="o", label="allocation probability (FLGI)"),
    "fisher_flgi": dict(color="#1f77b4", marker="s", label="Fisher exact (FLGI)"),
    "glm_flgi": dict(color="#2ca02c", marker="^", label="logistic Wald (FLGI)"),
    "fisher_equal": dict(color="#7f7f7f", marker="d", label="Fisher exact (equal)"),
}


class SchemaError(ValueError):
    """The input CSV does not match the documented schema."""


@dataclass(frozen=True)
class FigureSpec:
    """What to read, how to lay out panels, and where to write the image."""

    input_csv: str | Path
    output_path: str | Path
    method_styles: dict = field(default_factory=lambda: dict(DEFAULT_STYLES))
    max_columns: int = 2
    dpi: int = 150

    @property
    def image_format(self) -> str:
        suffix = Path(self.output_path).suffix.lstrip(".").lower()
        return suffix or "png"


def _save(fig, spec: FigureSpec) -> Path:
    out = Path(spec.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if spec.image_format == "svg" else {}
    fig.savefig(out, dpi=spec.dpi, format=spec.image_format, metadata=metadata)
    plt.close(fig)
    return out


def read_power_rows(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"scenario_id", "method", "metric", "value"}
        if reader.fieldnames is None or not expected <= set(reader.fieldnames):
            raise SchemaError(
                f"{path}: expected columns {sorted(expected)}, "
                f"got {reader.fieldnames}"
            )
        for raw in reader:
            m = SCENARIO_ID.match(raw["scenario_id"])
            if m is None:
                raise SchemaError(
                    f"{path}: unparseable scenario_id {raw['scenario_id']!r}"
                )
            if raw["metric"] not in ("power", "type1_error"):
                continue
            rows.append(
                {
                    "n": int(m["n"]),
                    "b": int(m["b"]),
                    "nz": int(m["nz"]),
                    "p": float(m["p"]),
                    "method": raw["method"],
                    "value": float(raw["value"]),
                    "se": float(raw["se"]) if raw.get("se") else 0.0,
                }
            )
    if not rows:
        raise SchemaError(f"{path}: no rejection-rate rows found")
    return rows


def plot_power(csv_path, spec: FigureSpec | None = None, out=None) -> Path:
    """One panel per category count (row-major, fixed column count), power
    against the experimental success probability, one line per method."""
    if spec is None:
        spec = FigureSpec(input_csv=csv_path, output_path=out or "power.png")
    rows = read_power_rows(csv_path)
    panels = sorted({r["nz"] for r in rows})
    populated = []
    for nz in panels:
        methods = {r["method"] for r in rows if r["nz"] == nz}
        if methods:
            populated.append(nz)
        else:
            print(f"notice: panel nz={nz} has no data; omitted")
    n_cols = min(spec.max_columns, len(populated))
    n_rows = -(-len(populated) // n_cols)
    fig, axes = plt.subplots(
        n_rows, n_cols, figsize=(4.2 * n_cols, 3.2 * n_rows), squeeze=False,
        sharey=True,
    )
    known_methods = sorted({r["method"] for r in rows})
    for method in known_methods:
        if method not in spec.method_styles:
            print(f"notice: method {method!r} has no style; omitted")
    for ax in axes.ravel()[len(populated):]:
        ax.set_visible(False)
    for ax, nz in zip(axes.ravel(), populated):
        for method in known_methods:
            style = spec.method_styles.get(method)
            if style is None:
                continue
            pts = sorted(
                (r["p"], r["value"], r["se"])
                for r in rows
                if r["nz"] == nz and r["method"] == method
            )
            if not pts:
                continue
            xs, ys, ses = zip(*pts)
            ax.errorbar(xs, ys, yerr=[2 * s for s in ses], capsize=2, **style)
        ax.set_title(f"{nz} biomarker categor{'y' if nz == 1 else 'ies'}")
        ax.set_xlabel("experimental success probability")
        ax.set_ylim(0.0, 1.0)
        ax.grid(True, alpha=0.3)
    for ax in axes[:, 0]:
        ax.set_ylabel("power")
    handles, labels = axes.ravel()[0].get_legend_handles_labels()
    if handles:
        fig.legend(handles, labels, loc="lower center", ncol=2, frameon=False)
    fig.tight_layout(rect=(0, 0.1, 1, 1))
    return _save(fig, spec)


def read_null_rows(path) -> list[tuple[int, float]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"q", "prob"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: expected columns q,prob, got {reader.fieldnames}")
        for raw in reader:
            rows.append((int(raw["q"]), float(raw["prob"])))
    if not rows:
        raise SchemaError(f"{path}: empty pmf")
    return sorted(rows)


def plot_null(csv_path, spec: FigureSpec | None = None, out=None) -> Path:
    """Bar chart of a null pmf of the block-count statistic."""
    if spec is None:
        spec = FigureSpec(input_csv=csv_path, output_path=out or "null.png")
    rows = read_null_rows(csv_path)
    qs = [q for q, _ in rows]
    probs = [p for _, p in rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.bar(qs, probs, color="#1f77b4", width=0.8)
    ax.set_xlabel("Q (blocks with allocation probability above threshold)")
    ax.set_ylabel("probability")
    ax.set_xticks(qs if len(qs) <= 21 else qs[:: max(1, len(qs) // 20)])
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    return _save(fig, spec)
