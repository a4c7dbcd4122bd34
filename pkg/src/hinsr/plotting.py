"""Optional figures for the CSV reports. Uses a non-interactive backend."""

from __future__ import annotations

import csv
from pathlib import Path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _num(v):
    return float("nan") if v in ("", "NA") else float(v)


def plot_ablation(csv_path, out_path):
    plt = _pyplot()
    rows = _read(csv_path)
    modes = [r["mode"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    x = range(len(rows))
    ax.bar([i - 0.2 for i in x], [_num(r["accuracy"]) for r in rows], width=0.4, label="accuracy")
    ax.bar([i + 0.2 for i in x], [_num(r["macro_f1"]) for r in rows], width=0.4, label="macro-F1")
    ax.set_xticks(list(x), modes, rotation=20)
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def plot_sweep(csv_path, out_path):
    plt = _pyplot()
    rows = _read(csv_path)
    e = [int(r["episodes"]) for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(7, 3))
    for ax, key in zip(axes, ("accuracy", "macro_f1")):
        ax.plot(e, [_num(r[key]) for r in rows], marker="o")
        ax.set_xlabel("episodes")
        ax.set_ylabel(key)
        ax.set_xticks(e)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def plot_length_buckets(csv_path, out_path):
    plt = _pyplot()
    rows = _read(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar([r["bucket"] for r in rows], [_num(r["accuracy"]) for r in rows])
    ax.set_xlabel("length bucket (short to long)")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def plot_metrics(csv_path, out_path):
    plt = _pyplot()
    rows = _read(csv_path)
    fig, ax = plt.subplots(figsize=(6, 3))
    for split in ("train", "val"):
        sel = [r for r in rows if r["split"] == split]
        ax.plot(range(1, len(sel) + 1), [_num(r["accuracy"]) for r in sel], marker=".", label=split)
    ax.set_xlabel("epoch (across episodes)")
    ax.set_ylabel("accuracy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


RENDERERS = {
    "ablation.csv": plot_ablation,
    "sweep.csv": plot_sweep,
    "length_buckets.csv": plot_length_buckets,
    "metrics.csv": plot_metrics,
}


def render_dir(directory) -> list[Path]:
    """Render a PNG next to every known CSV report in ``directory``."""
    directory = Path(directory)
    out = []
    for name, fn in RENDERERS.items():
        src = directory / name
        if src.exists():
            out.append(fn(src, src.with_suffix(".png")))
    return out
