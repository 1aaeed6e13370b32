"""Multi-label evaluation: strict match, Hamming, macro P/R/F1, AUROC, curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hymad.errors import ShapeError


def _check_pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 2:
        raise ShapeError(f"pred {pred.shape} and truth {truth.shape} must be equal 2-d")
    return pred.astype(np.int64), truth.astype(np.int64)


def strict_match_accuracy(pred, truth) -> float:
    """Fraction of rows whose full label set matches exactly."""
    pred, truth = _check_pair(pred, truth)
    return float(np.mean(np.all(pred == truth, axis=1)))


def hamming_accuracy(pred, truth) -> float:
    """1 - fraction of wrong label bits over all N*L cells."""
    pred, truth = _check_pair(pred, truth)
    return float(1.0 - np.mean(pred != truth))


def macro_prf1(pred, truth) -> tuple[float, float, float]:
    """Macro-averaged precision/recall/F1; zero-division yields 0 per label."""
    pred, truth = _check_pair(pred, truth)
    ps, rs, fs = [], [], []
    for j in range(truth.shape[1]):
        tp = int(np.sum((pred[:, j] == 1) & (truth[:, j] == 1)))
        fp = int(np.sum((pred[:, j] == 1) & (truth[:, j] == 0)))
        fn = int(np.sum((pred[:, j] == 0) & (truth[:, j] == 1)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        ps.append(p)
        rs.append(r)
        fs.append(f)
    return float(np.mean(ps)), float(np.mean(rs)), float(np.mean(fs))


def _rankdata(a: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their mean rank."""
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size)
    sorted_a = a[order]
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def label_auroc(scores: np.ndarray, truth: np.ndarray) -> float | None:
    """Mann-Whitney AUROC for one label column; None if degenerate."""
    truth = np.asarray(truth).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _rankdata(scores)
    return float((ranks[truth].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auroc(scores, truth) -> float:
    """Macro AUROC over labels with at least one positive and one negative."""
    scores = np.asarray(scores, dtype=np.float64)
    _, truth = _check_pair(np.zeros_like(truth), truth)
    vals = [label_auroc(scores[:, j], truth[:, j]) for j in range(truth.shape[1])]
    vals = [v for v in vals if v is not None]
    if not vals:
        raise ValueError("all label columns are degenerate; AUROC undefined")
    return float(np.mean(vals))


def curve_points(scores: np.ndarray, truth: np.ndarray,
                 kind: str = "roc") -> list[tuple[float, float, float]]:
    """Threshold sweep for one label column: (x, y, threshold) triples.

    ROC sweeps from (0,0) to (1,1) over FPR/TPR; PR ends at recall = 1 with
    precision = prevalence.  Equal scores share a threshold step, so the
    trapezoidal ROC area reproduces the rank-statistic AUROC.
    """
    if kind not in ("roc", "pr"):
        raise ValueError(f"kind must be 'roc' or 'pr', got {kind!r}")
    truth = np.asarray(truth).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("degenerate label column: needs both classes")

    order = np.argsort(-scores, kind="mergesort")
    s_sorted = scores[order]
    y_sorted = truth[order]
    points = []
    if kind == "roc":
        points.append((0.0, 0.0, float("inf")))
    tp = fp = 0
    i = 0
    n = truth.size
    while i < n:
        j = i
        while j + 1 < n and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        tp += int(y_sorted[i:j + 1].sum())
        fp += (j - i + 1) - int(y_sorted[i:j + 1].sum())
        thr = float(s_sorted[i])
        if kind == "roc":
            points.append((fp / n_neg, tp / n_pos, thr))
        else:
            points.append((tp / n_pos, tp / (tp + fp), thr))
        i = j + 1
    return points


def trapezoid_area(points: list[tuple[float, float, float]]) -> float:
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    return float(np.trapezoid(ys, xs))


@dataclass
class MetricsReport:
    n_samples: int
    n_labels: int
    strict_match: float
    hamming: float
    precision: float
    recall: float
    f1: float
    auroc: float
    per_label: list[dict]

    def format(self, header_extra: str = "") -> str:
        lines = [f"samples = {self.n_samples}", f"labels = {self.n_labels}"]
        if header_extra:
            lines.append(header_extra)
        lines += [
            f"exact_match_acc = {self.strict_match:.6f}",
            f"hamming_acc = {self.hamming:.6f}",
            f"precision = {self.precision:.6f}",
            f"recall = {self.recall:.6f}",
            f"f1 = {self.f1:.6f}",
            f"auroc = {self.auroc:.6f}",
            "[per_label]",
        ]
        for row in self.per_label:
            lines.append("label {label}: tp={tp} fp={fp} fn={fn} tn={tn} "
                         "auroc={auroc}".format(**row))
        return "\n".join(lines) + "\n"


def compute_report(pred, truth, scores=None) -> MetricsReport:
    pred, truth = _check_pair(pred, truth)
    if scores is None:
        scores = pred.astype(np.float64)
    p, r, f = macro_prf1(pred, truth)
    per_label = []
    for j in range(truth.shape[1]):
        auc_j = label_auroc(np.asarray(scores)[:, j], truth[:, j])
        per_label.append({
            "label": j,
            "tp": int(np.sum((pred[:, j] == 1) & (truth[:, j] == 1))),
            "fp": int(np.sum((pred[:, j] == 1) & (truth[:, j] == 0))),
            "fn": int(np.sum((pred[:, j] == 0) & (truth[:, j] == 1))),
            "tn": int(np.sum((pred[:, j] == 0) & (truth[:, j] == 0))),
            "auroc": "n/a" if auc_j is None else f"{auc_j:.6f}",
        })
    return MetricsReport(
        n_samples=truth.shape[0], n_labels=truth.shape[1],
        strict_match=strict_match_accuracy(pred, truth),
        hamming=hamming_accuracy(pred, truth),
        precision=p, recall=r, f1=f,
        auroc=auroc(scores, truth), per_label=per_label)


def write_curves_csv(path, scores, truth, kind: str):
    """Per-label curve points as CSV with header label,threshold,x,y."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    lines = ["label,threshold,x,y"]
    for j in range(truth.shape[1]):
        col = truth[:, j]
        if col.sum() == 0 or col.sum() == col.size:
            continue  # degenerate label: skipped
        for x, y, thr in curve_points(scores[:, j], col, kind):
            lines.append(f"{j},{thr!r},{x!r},{y!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
