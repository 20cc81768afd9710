"""Report files and figures for the scoring and evaluation paths.

Evaluation reports are written in three synchronized forms: machine-
readable JSON, a short human-readable text summary, and a tab-separated
per-image table, plus matplotlib figures (ROC curve when defined, score
histogram).  Score overlays draw the probability map over the phase image
with a dark-to-yellow colormap; contours mark P > 0.5 (dark green) and
P > 0.8 (bright green).
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import LabeledScore, roc_points

OVERLAY_CMAP = "inferno"
CONTOUR_LEVELS = (0.5, 0.8)
CONTOUR_COLORS = ("darkgreen", "lime")


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def report_text(report: dict) -> str:
    lines = [
        f"metric:          {report['metric']}",
        f"threshold (T_h): {report['threshold']:.6g}",
        f"train images:    {report['n_train']}",
        f"test images:     {report['n_test']} ({report['n_test_anomaly']} anomalies)",
    ]
    if report["auroc"] is not None:
        lines.append(f"AUROC:           {report['auroc']:.4f}")
    else:
        lines.append(f"false positives: {report['false_positives']} (AUROC undefined, single class)")
    c = report["confusion"]
    lines.append(f"confusion @ P>0.5: TP={c['TP']} FP={c['FP']} TN={c['TN']} FN={c['FN']}")
    flagged = [i for i in report["images"] if i["flag_05"]]
    lines.append(f"flagged (P>0.5): {len(flagged)}")
    for i in flagged:
        tier = "P>0.8" if i["flag_08"] else "P>0.5"
        lines.append(f"  [{tier}] P={i['probability']:.3f} {i['path']}")
    return "\n".join(lines) + "\n"


def scores_tsv(report: dict) -> str:
    lines = ["path\tlabel\tscore\tprobability\tflag_05\tflag_08"]
    for i in report["images"]:
        lines.append(
            f"{i['path']}\t{i['label']}\t{i['score']:.9g}\t{i['probability']:.9g}"
            f"\t{int(i['flag_05'])}\t{int(i['flag_08'])}"
        )
    return "\n".join(lines) + "\n"


def save_roc_figure(report: dict, path) -> None:
    samples = [
        LabeledScore(score=i["score"], label=i["label"], id=i["path"]) for i in report["images"]
    ]
    fpr, tpr = roc_points(samples)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(fpr, tpr, color="tab:orange", lw=2, label=f"AUROC = {report['auroc']:.3f}")
    ax.plot([0, 1], [0, 1], color="gray", lw=1, ls="--")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(f"ROC ({report['metric']})")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_score_histogram(report: dict, path) -> None:
    normal = [i["score"] for i in report["images"] if i["label"] == "normal"]
    anomaly = [i["score"] for i in report["images"] if i["label"] == "anomaly"]
    fig, ax = plt.subplots(figsize=(6, 4))
    bins = np.histogram_bin_edges(normal + anomaly, bins=30)
    ax.hist(normal, bins=bins, alpha=0.6, label=f"normal (n={len(normal)})", color="tab:blue")
    if anomaly:
        ax.hist(anomaly, bins=bins, alpha=0.6, label=f"anomaly (n={len(anomaly)})", color="tab:red")
    ax.axvline(report["threshold"], color="black", ls=":", label="T_h")
    ax.set_xlabel("image score")
    ax.set_ylabel("count")
    ax.set_title(f"test score distribution ({report['metric']})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report(report: dict, out_dir) -> list:
    """Write report.json / report.txt / scores.tsv and figures; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    json_path = out_dir / "report.json"
    _atomic_write_text(json_path, json.dumps(report, indent=2, sort_keys=True) + "\n")
    written.append(json_path)

    txt_path = out_dir / "report.txt"
    _atomic_write_text(txt_path, report_text(report))
    written.append(txt_path)

    tsv_path = out_dir / "scores.tsv"
    _atomic_write_text(tsv_path, scores_tsv(report))
    written.append(tsv_path)

    if report["auroc"] is not None:
        roc_path = out_dir / "roc_curve.png"
        save_roc_figure(report, roc_path)
        written.append(roc_path)
    hist_path = out_dir / "score_histogram.png"
    save_score_histogram(report, hist_path)
    written.append(hist_path)
    return written


def save_overlay(values: np.ndarray, prob_map: np.ndarray, path, title: str | None = None) -> None:
    """Phase image with the probability map and P-contours drawn on top."""
    values = np.asarray(values, dtype=np.float64)
    prob = np.asarray(prob_map, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(values, cmap="gray", interpolation="nearest")
    im = ax.imshow(
        prob, cmap=OVERLAY_CMAP, vmin=0.0, vmax=1.0, alpha=0.55, interpolation="nearest"
    )
    if prob.min() < CONTOUR_LEVELS[0] < prob.max():
        ax.contour(prob, levels=[CONTOUR_LEVELS[0]], colors=[CONTOUR_COLORS[0]], linewidths=1.5)
    if prob.min() < CONTOUR_LEVELS[1] < prob.max():
        ax.contour(prob, levels=[CONTOUR_LEVELS[1]], colors=[CONTOUR_COLORS[1]], linewidths=1.5)
    cbar = fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    cbar.set_label("anomaly probability")
    if title:
        ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
