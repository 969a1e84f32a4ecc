"""Frame-level ROC-AUC / average precision and event-level TP/FA counting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import EventInterval
from .errors import DataError


@dataclass
class EvalReport:
    mode: str  # frame-auc | frame-ap | event
    value: float | None = None
    tp: int | None = None
    fa: int | None = None
    n_events: int | None = None
    n_frames: int | None = None
    points: list[tuple[float, float]] = field(default_factory=list)
    point_columns: tuple[str, str] = ("x", "y")

    def lines(self) -> list[str]:
        out = [f"mode={self.mode}"]
        if self.value is not None:
            key = "auc" if self.mode == "frame-auc" else "ap"
            out.append(f"{key}={self.value!r}")
        if self.n_frames is not None:
            out.append(f"frames={self.n_frames}")
        if self.tp is not None:
            out += [f"tp={self.tp}", f"fa={self.fa}", f"events={self.n_events}"]
        return out


def _binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores and labels must be equal-length 1-D arrays, got {s.shape} and {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary (0/1)")
    return s, y.astype(bool)


def roc_auc(scores, labels) -> tuple[float, list[tuple[float, float]]]:
    """Area under the ROC curve and its (FPR, TPR) points.

    The curve steps through every distinct score as a threshold, so tied
    positive/negative pairs contribute one half.
    """
    s, y = _binary(scores, labels)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined unless both classes are present")
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    # last index of each group of equal scores
    ends = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    tps = np.cumsum(y_sorted)[ends]
    fps = (ends + 1) - tps
    tpr = np.r_[0, tps] / n_pos
    fpr = np.r_[0, fps] / n_neg
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    return auc, list(zip(fpr.tolist(), tpr.tolist()))


def pr_ap(scores, labels) -> tuple[float, list[tuple[float, float]]]:
    """Average precision (step interpolation) and (recall, precision) points.

    Ranks by descending score; equal scores keep their input order.
    """
    s, y = _binary(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive label")
    y_sorted = y[np.argsort(-s, kind="stable")]
    tp = np.cumsum(y_sorted)
    precision = tp / np.arange(1, len(s) + 1)
    recall = tp / n_pos
    ap = float(np.sum(precision[y_sorted]) / n_pos)
    return ap, list(zip(recall.tolist(), precision.tolist()))


# --------------------------------------------------------------------------
# events
# --------------------------------------------------------------------------


def maxima_persistence(values) -> dict[int, float]:
    """Persistence of every local maximum, by sweeping upper level sets.

    Equal values are ordered by index (earlier counts as higher). When two
    components meet, the one with the lower maximum dies at the meeting value;
    the global maximum has infinite persistence.
    """
    v = np.asarray(values, dtype=np.float64)
    n = len(v)
    parent = np.full(n, -1)
    peak = {}  # root -> index of the component's maximum
    persistence: dict[int, float] = {}

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for idx in sorted(range(n), key=lambda i: (-v[i], i)):
        parent[idx] = idx
        roots = {find(j) for j in (idx - 1, idx + 1) if 0 <= j < n and parent[j] >= 0}
        if not roots:
            peak[idx] = idx
            persistence[idx] = np.inf
            continue
        # the surviving component is the one with the highest maximum
        ranked = sorted(roots, key=lambda r: (-v[peak[r]], peak[r]))
        keep = ranked[0]
        parent[idx] = keep
        for other in ranked[1:]:
            persistence[peak[other]] = float(v[peak[other]] - v[idx])
            parent[other] = keep
            del peak[other]
    return persistence


def detect_events(scores, persistence_threshold: float = 0.2, merge_distance: int = 50) -> list[int]:
    """Indices of persistent score maxima, one per group of nearby maxima.

    Local maxima are first merged: walking from the highest down, a maximum is
    dropped when a kept one lies fewer than ``merge_distance`` frames away.
    Survivors whose persistence is below ``persistence_threshold`` are then
    discarded, so raising the threshold can only remove detections.
    """
    if persistence_threshold < 0 or merge_distance < 0:
        raise ValueError("persistence_threshold and merge_distance must be non-negative")
    v = np.asarray(scores, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot detect events in an empty score sequence")
    persistence = maxima_persistence(v)
    kept: list[int] = []
    for idx in sorted(persistence, key=lambda i: (-v[i], i)):
        if all(abs(idx - k) >= merge_distance for k in kept):
            kept.append(idx)
    return sorted(i for i in kept if persistence[i] >= persistence_threshold)


def match_events(detections: Sequence[int], events: Sequence[EventInterval]) -> tuple[int, int]:
    """(true positives, false alarms) for one video.

    Each ground-truth interval counts at most once; further hits inside an
    interval are ignored; detections outside every interval are false alarms.
    """
    hit = set()
    fa = 0
    for d in detections:
        inside = [k for k, ev in enumerate(events) if d in ev]
        if inside:
            hit.update(inside)
        else:
            fa += 1
    return len(hit), fa


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


def join_labels(records, labels: dict[str, dict[int, int]], use_normalized: bool = True):
    """Pair score records with frame labels; frames without a label are skipped."""
    scores, ys = [], []
    for r in records:
        lab = labels.get(r.video_id, {}).get(r.frame_index)
        if lab is None:
            continue
        scores.append(r.score_norm if use_normalized else r.score_raw)
        ys.append(lab)
    if not scores:
        raise DataError("no scored frame has a label")
    return np.array(scores), np.array(ys)


def frame_report(records, labels, mode: str = "frame-auc") -> EvalReport:
    s, y = join_labels(records, labels)
    if mode == "frame-auc":
        value, points = roc_auc(s, y)
        cols = ("fpr", "tpr")
    elif mode == "frame-ap":
        value, points = pr_ap(s, y)
        cols = ("recall", "precision")
    else:
        raise ValueError(f"unknown frame mode {mode!r}")
    return EvalReport(mode, value=value, n_frames=len(s), points=points, point_columns=cols)


def event_report(records, events: Sequence[EventInterval], persistence_threshold=0.2, merge_distance=50) -> EvalReport:
    by_video: dict[str, list] = {}
    for r in records:
        by_video.setdefault(r.video_id, []).append(r)
    tp = fa = 0
    for video_id, recs in by_video.items():
        recs = sorted(recs, key=lambda r: r.frame_index)
        peaks = detect_events([r.score_norm for r in recs], persistence_threshold, merge_distance)
        frames = [recs[i].frame_index for i in peaks]
        t, f = match_events(frames, [ev for ev in events if ev.video_id == video_id])
        tp += t
        fa += f
    n_events = sum(1 for ev in events if ev.video_id in by_video)
    return EvalReport("event", tp=tp, fa=fa, n_events=n_events)


def write_report(path, report: EvalReport, curve_path=None, plot_path=None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(report.lines()) + "\n")
    if curve_path is not None and report.points:
        with open(curve_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(report.point_columns)
            writer.writerows(report.points)
    if plot_path is not None and report.points:
        plot_curve(plot_path, report)


def plot_curve(path, report: EvalReport) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs, ys = zip(*report.points)
    fig, ax = plt.subplots(figsize=(4, 4))
    label = report.lines()[1] if len(report.lines()) > 1 else report.mode
    ax.plot(xs, ys, drawstyle="steps-post" if report.mode == "frame-ap" else "default", label=label)
    ax.set_xlabel(report.point_columns[0])
    ax.set_ylabel(report.point_columns[1])
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
