"""Classification metrics and feature-space aggregation metrics.

Per-SNR accuracy, confusion matrices, and quantitative replacements for a
scatter-plot look at the feature space: mean intra/inter-class cosine and
a silhouette score under cosine distance, all computable in O(N*M*d) via
per-class feature sums.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class EvalReport:
    class_names: list[str]
    overall_accuracy: float
    per_snr_accuracy: dict[int, float]
    confusion_pooled: np.ndarray
    confusion_snr: int | None
    confusion_at_snr: np.ndarray | None
    intra_class_cos: float
    inter_class_cos: float
    silhouette: float
    n_frames: int = 0
    extra: dict = field(default_factory=dict)


def accuracy_by_snr(
    preds: np.ndarray, labels: np.ndarray, snrs: np.ndarray
) -> tuple[dict[int, float], float]:
    """Accuracy per SNR bin plus the pooled accuracy over all frames."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    snrs = np.asarray(snrs)
    if len(preds) == 0:
        raise ValueError("empty input")
    if not (len(preds) == len(labels) == len(snrs)):
        raise ValueError(
            f"length mismatch: preds {len(preds)}, labels {len(labels)}, snrs {len(snrs)}"
        )
    hits = preds == labels
    per = {
        int(s): float(hits[snrs == s].mean())
        for s in np.unique(snrs)
    }
    return per, float(hits.mean())


def confusion_matrix(preds: np.ndarray, labels: np.ndarray, m: int) -> np.ndarray:
    """counts[i, j] = frames with true class i predicted as j."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if len(preds) != len(labels):
        raise ValueError(f"length mismatch: preds {len(preds)}, labels {len(labels)}")
    lo = min(preds.min(initial=0), labels.min(initial=0))
    hi = max(preds.max(initial=0), labels.max(initial=0))
    if lo < 0 or hi >= m:
        raise ValueError(f"labels/preds outside [0, {m})")
    out = np.zeros((m, m), dtype=np.int64)
    np.add.at(out, (labels, preds), 1)
    return out


def _unit_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 1e-12)


def cluster_metrics(
    features: np.ndarray, labels: np.ndarray
) -> tuple[float, float, float]:
    """(mean intra-class cosine, mean inter-class cosine, cosine silhouette).

    Cosine distance is 1 - cosine. Pairwise means are computed exactly
    through per-class sums of the unit-normalized features, never
    materializing an N x N matrix.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("cluster metrics need at least 2 classes")
    u = _unit_rows(features)
    n = len(u)

    class_sums = np.stack([u[labels == c].sum(axis=0) for c in classes])
    counts = np.array([(labels == c).sum() for c in classes], dtype=np.float64)
    sq_per_row = (u**2).sum(axis=1)
    sq_sums = np.array([sq_per_row[labels == c].sum() for c in classes])

    intra_num = float(np.sum((class_sums**2).sum(axis=1) - sq_sums))
    intra_den = float(np.sum(counts * (counts - 1)))
    if intra_den == 0:
        raise ValueError("cluster metrics need >= 2 samples in some class")
    intra = intra_num / intra_den

    total = class_sums.sum(axis=0)
    inter_num = float((total**2).sum() - (class_sums**2).sum())
    inter_den = float(n**2 - (counts**2).sum())
    inter = inter_num / inter_den

    # silhouette under d = 1 - cos, via mean cosine of each sample to each class
    dots = u @ class_sums.T  # [N, C]
    col = {c: i for i, c in enumerate(classes)}
    own = np.array([col[c] for c in labels])
    rows = np.arange(n)
    n_own = counts[own]
    sil = np.zeros(n)
    valid = n_own > 1
    a = 1.0 - (dots[rows, own] - sq_per_row) / np.maximum(n_own - 1, 1)
    mean_other = 1.0 - dots / counts  # [N, C], own column fixed below
    mean_other[rows, own] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    with np.errstate(invalid="ignore"):
        s = np.where(denom > 0, (b - a) / denom, 0.0)
    sil[valid] = s[valid]  # singleton classes contribute 0
    return float(intra), float(inter), float(sil.mean())


def evaluate(
    preds: np.ndarray,
    labels: np.ndarray,
    snrs: np.ndarray,
    features: np.ndarray,
    class_names: list[str],
    confusion_snr: int | None = 0,
) -> EvalReport:
    """Assemble the full report; confusion defaults to the 0 dB operating point."""
    per_snr, overall = accuracy_by_snr(preds, labels, snrs)
    m = len(class_names)
    pooled = confusion_matrix(preds, labels, m)
    at_snr = None
    snr_used = None
    if confusion_snr is not None:
        sel = np.asarray(snrs) == confusion_snr
        if sel.any():
            at_snr = confusion_matrix(np.asarray(preds)[sel], np.asarray(labels)[sel], m)
            snr_used = int(confusion_snr)
    intra, inter, sil = cluster_metrics(features, labels)
    return EvalReport(
        class_names=list(class_names),
        overall_accuracy=overall,
        per_snr_accuracy=per_snr,
        confusion_pooled=pooled,
        confusion_snr=snr_used,
        confusion_at_snr=at_snr,
        intra_class_cos=intra,
        inter_class_cos=inter,
        silhouette=sil,
        n_frames=len(np.asarray(preds)),
    )


def _write_confusion(path: Path, matrix: np.ndarray, class_names: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + class_names)
        for name, row in zip(class_names, matrix):
            writer.writerow([name] + [int(v) for v in row])


def export_report(
    report: EvalReport,
    features: np.ndarray,
    labels: np.ndarray,
    snrs: np.ndarray,
    out_dir: str | Path,
) -> list[Path]:
    """Write the CSV/JSON report files for external plotting; returns paths."""
    if report.n_frames == 0 or len(features) == 0:
        raise ValueError("refusing to export an empty report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    p = out / "accuracy_by_snr.csv"
    with open(p, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["snr_db", "accuracy"])
        for snr in sorted(report.per_snr_accuracy):
            writer.writerow([snr, f"{report.per_snr_accuracy[snr]:.6f}"])
        writer.writerow(["overall", f"{report.overall_accuracy:.6f}"])
    written.append(p)

    p = out / "confusion_pooled.csv"
    _write_confusion(p, report.confusion_pooled, report.class_names)
    written.append(p)
    if report.confusion_at_snr is not None:
        p = out / f"confusion_{report.confusion_snr}.csv"
        _write_confusion(p, report.confusion_at_snr, report.class_names)
        written.append(p)

    p = out / "cluster_metrics.json"
    with open(p, "w") as fh:
        json.dump(
            {
                "intra_class_cos": report.intra_class_cos,
                "inter_class_cos": report.inter_class_cos,
                "silhouette": report.silhouette,
                "overall_accuracy": report.overall_accuracy,
                "n_frames": report.n_frames,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    written.append(p)

    p = out / "features.csv"
    features = np.asarray(features)
    with open(p, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "snr_db"] + [f"f{i}" for i in range(features.shape[1])])
        for lab, snr, row in zip(labels, snrs, features):
            writer.writerow(
                [report.class_names[int(lab)], int(snr)] + [f"{v:.7g}" for v in row]
            )
    written.append(p)
    return written
