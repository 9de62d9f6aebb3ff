"""Matplotlib renderings written next to the delimited reports.

Figures carry fixed metadata (no timestamps), so identical runs produce
identical PNG bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_METADATA = {"Software": "cpr-tuning"}


def _save(fig, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)


def save_loss_curve(trace: list[dict], path) -> None:
    """Per-step classification, consistency, and total loss."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    steps = [r["step"] for r in trace]
    for key, style in (("total", "-"), ("cls", "--"), ("cons", ":")):
        ax.plot(steps, [r[key] for r in trace], style, label=key)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(frameon=False)
    ax.set_title("training loss")
    fig.tight_layout()
    _save(fig, path)


def save_sweep_curve(rows: list[dict], axis: str, path) -> None:
    """Seed-averaged accuracy against the swept value, split by rectification."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    values = sorted({r["value"] for r in rows}, key=_sort_key)
    positions = np.arange(len(values), dtype=float)
    numeric = all(_is_number(v) for v in values)
    xs = np.array([float(v) for v in values]) if numeric else positions
    for use_nnr, style in ((False, "--o"), (True, "-o")):
        for metric in ("base_acc", "new_acc", "hmean"):
            ys = []
            for v in values:
                sel = [
                    r[metric]
                    for r in rows
                    if r["value"] == v and bool(r["nnr"]) == use_nnr and r[metric] is not None
                ]
                ys.append(np.mean(sel) if sel else np.nan)
            if np.all(np.isnan(ys)):
                continue
            tag = {"base_acc": "base", "new_acc": "new", "hmean": "H"}[metric]
            ax.plot(xs, ys, style, label=f"{tag} ({'nnr' if use_nnr else 'plain'})")
    if not numeric:
        ax.set_xticks(positions)
        ax.set_xticklabels([str(v) for v in values])
    ax.set_xlabel(axis)
    ax.set_ylabel("accuracy [%]")
    ax.legend(frameon=False, fontsize=8)
    ax.set_title(f"sweep over {axis}")
    fig.tight_layout()
    _save(fig, path)


def save_metrics_bar(report_dict: dict, path) -> None:
    """Grouped bars for base/new/harmonic accuracy, rectified vs plain."""
    fig, ax = plt.subplots(figsize=(6, 4))
    groups = ["zero_shot", "without_nnr", "with_nnr"]
    metrics = ["base_acc", "new_acc", "hmean"]
    width = 0.25
    xs = np.arange(len(groups), dtype=float)
    for j, metric in enumerate(metrics):
        vals = [report_dict[g].get(metric) for g in groups]
        if all(v is None for v in vals):
            continue
        ax.bar(
            xs + (j - 1) * width,
            [0.0 if v is None else v for v in vals],
            width,
            label={"base_acc": "base", "new_acc": "new", "hmean": "H"}[metric],
        )
    ax.set_xticks(xs)
    ax.set_xticklabels(["zero-shot", "no NNR", "NNR"])
    ax.set_ylabel("accuracy [%]")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def _is_number(v) -> bool:
    try:
        float(v)
        return True
    except (TypeError, ValueError):
        return False


def _sort_key(v):
    return (0, float(v)) if _is_number(v) else (1, str(v))
