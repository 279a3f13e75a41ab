"""
Result Charts

Renders the CSV/JSON outputs of a run directory into one PDF: Betti
progression per layer, convergence epochs per activation, the filter score
histogram and training curves. Pages are only drawn for files that exist.
"""

import json
import logging
import os
from typing import List

import pandas as pd

logger = logging.getLogger(__name__)

PROGRESSION_CSV = "progression.csv"
CONVERGENCE_JSON = "convergence.json"
SCORES_CSV = "scores.csv"
TRAIN_LOG_CSV = "train_log.csv"


def _progression_page(plt, pdf, frame: pd.DataFrame) -> None:
    fig, ax = plt.subplots(figsize=(10, 6))
    betti_cols = [c for c in frame.columns if c.startswith("b") and c[1:].isdigit()]
    for col in betti_cols:
        ax.plot(frame["layer"], frame[col], marker="o", label=col)
    ax.plot(frame["layer"], frame["total"], marker="s", linestyle="--", color="black", label="total")
    ax.set_title("Betti Numbers per Layer", fontsize=16)
    ax.set_xlabel("Layer (0 = input)", fontsize=12)
    ax.set_ylabel("Betti number", fontsize=12)
    ax.legend()
    plt.tight_layout()
    pdf.savefig(fig)
    plt.close()


def _convergence_page(plt, pdf, report: dict) -> None:
    fig, ax = plt.subplots(figsize=(10, 6))
    aggregates = report.get("aggregates", [])
    labels = [f"{row['activation']}\nbatch {row['batch_size']}" for row in aggregates]
    medians = [row["median"] for row in aggregates]
    errors = [[row["median"] - row["min"] for row in aggregates], [row["max"] - row["median"] for row in aggregates]]
    bars = ax.bar(labels, medians, yerr=errors, color="steelblue", capsize=4)
    for bar in bars:
        height = bar.get_height()
        ax.text(bar.get_x() + bar.get_width() / 2.0, height, f"{height:.1f}", ha="center", va="bottom")
    ax.axhline(y=report.get("max_epochs", 0), color="red", linestyle="--", label="epoch cap")
    ax.set_title(f"Epochs to {report.get('threshold', 0):.2f} Train Accuracy", fontsize=16)
    ax.set_ylabel("Epochs (median, min-max)", fontsize=12)
    ax.legend()
    plt.tight_layout()
    pdf.savefig(fig)
    plt.close()


def _scores_page(plt, pdf, frame: pd.DataFrame) -> None:
    fig, ax = plt.subplots(figsize=(10, 6))
    for layer, group in frame.dropna(subset=["total"]).groupby("layer"):
        ax.hist(group["total"], bins=20, alpha=0.6, label=f"layer {layer}")
    ax.set_title("Filter Betti Totals", fontsize=16)
    ax.set_xlabel("Betti total", fontsize=12)
    ax.set_ylabel("Filters", fontsize=12)
    ax.legend()
    plt.tight_layout()
    pdf.savefig(fig)
    plt.close()


def _train_page(plt, pdf, frame: pd.DataFrame) -> None:
    fig, ax = plt.subplots(figsize=(10, 6))
    ax.plot(frame["epoch"], frame["train_acc"], label="train accuracy")
    ax.plot(frame["epoch"], frame["test_acc"], label="test accuracy")
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("Epoch", fontsize=12)
    ax.set_title("Training Curve", fontsize=16)
    ax.legend()
    plt.tight_layout()
    pdf.savefig(fig)
    plt.close()


def create_plots(input_dir: str, output_file: str) -> List[str]:
    """
    Draw every chart available in a run directory

    Args:
        input_dir: Directory written by a CLI command
        output_file: PDF path

    Returns:
        Names of the pages drawn (empty if matplotlib is missing)
    """
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        from matplotlib.backends.backend_pdf import PdfPages
    except ImportError:
        logger.error("Matplotlib is required for creating plots. Please install it using 'pip install matplotlib'.")
        return []

    drawn = []
    with PdfPages(output_file) as pdf:
        path = os.path.join(input_dir, PROGRESSION_CSV)
        if os.path.exists(path):
            _progression_page(plt, pdf, pd.read_csv(path).dropna(subset=["total"]))
            drawn.append("progression")
        path = os.path.join(input_dir, CONVERGENCE_JSON)
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as f:
                _convergence_page(plt, pdf, json.load(f))
            drawn.append("convergence")
        path = os.path.join(input_dir, SCORES_CSV)
        if os.path.exists(path):
            _scores_page(plt, pdf, pd.read_csv(path))
            drawn.append("scores")
        path = os.path.join(input_dir, TRAIN_LOG_CSV)
        if os.path.exists(path):
            _train_page(plt, pdf, pd.read_csv(path))
            drawn.append("training")
    if drawn:
        logger.info(f"Plots ({', '.join(drawn)}) saved to {output_file}")
    else:
        logger.warning(f"No plottable results found in {input_dir}")
    return drawn
