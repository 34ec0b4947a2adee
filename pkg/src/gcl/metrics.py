"""Frame-level evaluation: ground-truth expansion, ROC-AUC, score export.

AUC uses the rank form of the Mann-Whitney statistic with half credit for
tied score pairs.  All sums are carried as exact integers (ranks are doubled
so tie midpoints stay integral), which makes the result equal to brute-force
pair counting not just approximately but bit for bit.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ScoreSeries:
    """Per-frame anomaly scores for one video."""

    video_id: str
    frame_scores: np.ndarray

    def __post_init__(self):
        self.frame_scores = np.asarray(self.frame_scores, dtype=np.float64)
        if self.frame_scores.ndim != 1:
            raise ValueError("frame_scores must be 1-D")
        if not np.isfinite(self.frame_scores).all():
            raise ValueError(f"non-finite scores for video {self.video_id!r}")


@dataclass
class AucReport:
    auc: float
    positives: int
    negatives: int
    per_video: dict | None = field(default=None)

    def to_json(self):
        payload = {
            "auc": self.auc,
            "positives": self.positives,
            "negatives": self.negatives,
        }
        if self.per_video is not None:
            payload["per_video"] = self.per_video
        return json.dumps(payload, indent=2, sort_keys=True)


def frame_labels(entry, p):
    """Binary frame labels for one manifest video entry.

    Frames inside any ``[start, end)`` ground-truth range are 1, the rest 0.
    ``entry.frames(p)`` fixes the length; ranges past it are an error.
    """
    n = entry.frame_count(p)
    labels = np.zeros(n, dtype=np.int8)
    if entry.gt_ranges is None:
        return labels
    for start, end in entry.gt_ranges:
        if not (0 <= start < end <= n):
            raise ValueError(
                f"video {entry.id!r}: ground-truth range [{start}, {end}) "
                f"outside 0..{n}"
            )
        labels[start:end] = 1
    return labels


def compute_auc(scores, labels):
    """Area under the ROC curve over pooled frames.

    Equivalent to the probability that a uniformly drawn positive frame
    scores above a uniformly drawn negative one, counting ties as half.
    O(n log n) via ranks; exact (integer numerator).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be matching 1-D arrays")
    if not np.isfinite(scores).all():
        raise ValueError("scores contain non-finite values")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    pos = int(labels.sum())
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        raise ValueError(
            f"AUC undefined: need both classes, got {pos} positives and "
            f"{neg} negatives"
        )
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    n = scores.size
    starts = np.empty(n, dtype=bool)
    starts[0] = True
    np.not_equal(sorted_scores[1:], sorted_scores[:-1], out=starts[1:])
    group_start = np.flatnonzero(starts)
    group_end = np.append(group_start[1:], n)
    # doubled midrank of a tie group spanning 1-based ranks i..j is i + j
    doubled_mid = group_start + 1 + group_end
    doubled_ranks = doubled_mid[np.cumsum(starts) - 1]
    doubled_pos_rank_sum = int(doubled_ranks[labels[order] == 1].sum())
    numerator = doubled_pos_rank_sum - pos * (pos + 1)
    return numerator / (2 * pos * neg)


def evaluate_scores(series_list, manifest, per_video=False, average_videos=False):
    """AUC of score series against manifest ground truth.

    Default pools every frame of every video; ``average_videos`` instead
    averages the per-video AUCs over videos where both classes occur.
    """
    entries = {e.id: e for e in manifest.videos}
    all_scores, all_labels = [], []
    breakdown = {} if (per_video or average_videos) else None
    for series in series_list:
        entry = entries.get(series.video_id)
        if entry is None:
            raise ValueError(f"video {series.video_id!r} not in manifest")
        if entry.gt_ranges is None:
            raise ValueError(
                f"video {series.video_id!r} has no ground-truth ranges"
            )
        labels = frame_labels(entry, manifest.p)
        if labels.size != series.frame_scores.size:
            raise ValueError(
                f"video {series.video_id!r}: {series.frame_scores.size} scores "
                f"for {labels.size} frames"
            )
        all_scores.append(series.frame_scores)
        all_labels.append(labels)
        if breakdown is not None:
            if labels.any() and not labels.all():
                breakdown[series.video_id] = compute_auc(
                    series.frame_scores, labels
                )
            else:
                breakdown[series.video_id] = None
    if not all_scores:
        raise ValueError("no score series to evaluate")
    scores = np.concatenate(all_scores)
    labels = np.concatenate(all_labels)
    pos = int(labels.sum())
    if average_videos:
        defined = [v for v in breakdown.values() if v is not None]
        if not defined:
            raise ValueError("AUC undefined for every video")
        auc = float(np.mean(defined))
    else:
        auc = compute_auc(scores, labels)
    return AucReport(
        auc=auc,
        positives=pos,
        negatives=labels.size - pos,
        per_video=breakdown if per_video else None,
    )


def export_scores(series_list, path, labels_by_video=None):
    """Write scores as CSV: video_id,frame,score[,label]; full precision."""
    with_labels = labels_by_video is not None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["video_id", "frame", "score", "label"] if with_labels
            else ["video_id", "frame", "score"]
        )
        for series in series_list:
            labels = labels_by_video[series.video_id] if with_labels else None
            for frame, score in enumerate(series.frame_scores):
                row = [series.video_id, frame, format(score, ".17g")]
                if with_labels:
                    row.append(int(labels[frame]))
                writer.writerow(row)


def import_scores(path):
    """Read a score CSV back; returns (series_list, labels_by_video or None)."""
    by_video, label_rows = {}, {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["video_id", "frame", "score"]:
            raise ValueError(f"unexpected score CSV header: {header}")
        with_labels = len(header) > 3 and header[3] == "label"
        for row in reader:
            vid, frame, score = row[0], int(row[1]), float(row[2])
            by_video.setdefault(vid, []).append((frame, score))
            if with_labels:
                label_rows.setdefault(vid, []).append((frame, int(row[3])))
    series = []
    labels = {} if label_rows else None
    for vid, rows in by_video.items():
        rows.sort()
        if [f for f, _ in rows] != list(range(len(rows))):
            raise ValueError(f"video {vid!r}: frame indices not contiguous")
        series.append(ScoreSeries(vid, np.array([s for _, s in rows])))
        if labels is not None:
            label_rows[vid].sort()
            labels[vid] = np.array([l for _, l in label_rows[vid]], dtype=np.int8)
    return series, labels
