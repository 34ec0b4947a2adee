"""Feature ingestion, manifests, batch shuffling, and pre-training cleanup.

A dataset is a JSON manifest plus one feature file per video.  Feature files
are little-endian binary: magic ``GCLF``, format version u32, feature
dimension u32, segment count u32, then count x d float32 values row-major.
A CSV alternative (video_id, segment_index, then d values per row) is
supported for interchange.
"""

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FEATURE_MAGIC = b"GCLF"
FEATURE_VERSION = 1


@dataclass
class FeatureRecord:
    """One segment's feature vector with its provenance."""

    video_id: str
    segment_index: int
    vector: np.ndarray


@dataclass
class VideoEntry:
    id: str
    file: str | None
    segments: int
    label: str | None = None
    gt_ranges: list | None = None
    frames: int | None = None

    def __post_init__(self):
        if self.segments <= 0:
            raise ValueError(f"video {self.id!r}: segments must be positive")
        if self.label not in (None, "normal", "anomalous"):
            raise ValueError(
                f"video {self.id!r}: label must be 'normal' or 'anomalous', "
                f"got {self.label!r}"
            )
        if self.gt_ranges is not None:
            self.gt_ranges = [(int(s), int(e)) for s, e in self.gt_ranges]

    def frame_count(self, p):
        """True frame count; defaults to segments * p when not recorded."""
        return self.frames if self.frames is not None else self.segments * p


@dataclass
class DatasetManifest:
    d: int
    p: int
    videos: list = field(default_factory=list)

    def __post_init__(self):
        if self.d <= 0 or self.p <= 0:
            raise ValueError("manifest d and p must be positive")
        seen = set()
        for v in self.videos:
            if v.id in seen:
                raise ValueError(f"duplicate video id {v.id!r} in manifest")
            seen.add(v.id)
            if v.frames is not None:
                # segments must cover all frames except a final partial window
                if not (
                    (v.segments - 1) * self.p < v.frames
                    <= v.segments * self.p + self.p - 1
                ):
                    raise ValueError(
                        f"video {v.id!r}: {v.frames} frames inconsistent with "
                        f"{v.segments} segments of {self.p} frames"
                    )

    def video(self, video_id):
        for v in self.videos:
            if v.id == video_id:
                return v
        raise KeyError(f"video {video_id!r} not in manifest")

    @property
    def all_labeled(self):
        return all(v.label is not None for v in self.videos)

    @property
    def has_ground_truth(self):
        return all(v.gt_ranges is not None for v in self.videos)


def read_manifest(path):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        videos = [
            VideoEntry(
                id=str(v["id"]),
                file=v.get("file"),
                segments=int(v["segments"]),
                label=v.get("label"),
                gt_ranges=v.get("gt_ranges"),
                frames=v.get("frames"),
            )
            for v in raw["videos"]
        ]
        return DatasetManifest(d=int(raw["d"]), p=int(raw["p"]), videos=videos)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed manifest {path}: {exc}") from exc


def write_manifest(manifest, path):
    payload = {"d": manifest.d, "p": manifest.p, "videos": []}
    for v in manifest.videos:
        entry = {"id": v.id, "file": v.file, "segments": v.segments}
        if v.label is not None:
            entry["label"] = v.label
        if v.gt_ranges is not None:
            entry["gt_ranges"] = [[s, e] for s, e in v.gt_ranges]
        if v.frames is not None:
            entry["frames"] = v.frames
        payload["videos"].append(entry)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_features(path, matrix):
    """Write one video's segment features as a GCLF file."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise ValueError("feature matrix must be 2-D (segments x d)")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", FEATURE_VERSION, matrix.shape[1], matrix.shape[0]))
        fh.write(matrix.tobytes(order="C"))


def load_feature_file(path):
    """Read a GCLF file; returns the segments x d float64 matrix."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 16 or data[:4] != FEATURE_MAGIC:
        raise ValueError(f"{path}: not a GCLF feature file")
    version, d, count = struct.unpack("<III", data[4:16])
    if version != FEATURE_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    expected = 16 + 4 * d * count
    if len(data) < expected:
        raise ValueError(
            f"{path}: truncated feature file ({len(data)} bytes, "
            f"expected {expected})"
        )
    if len(data) > expected:
        raise ValueError(f"{path}: trailing bytes after feature payload")
    matrix = np.frombuffer(data, dtype="<f4", offset=16).reshape(count, d)
    return matrix.astype(np.float64)


def load_features(manifest, base_dir, feature_scale=1.0):
    """Load every video's features per the manifest, in segment order."""
    base_dir = Path(base_dir)
    records = []
    for entry in manifest.videos:
        if entry.file is None:
            raise ValueError(f"video {entry.id!r}: manifest entry has no file")
        path = base_dir / entry.file
        if not path.exists():
            raise ValueError(f"video {entry.id!r}: missing feature file {path}")
        matrix = load_feature_file(path)
        if matrix.shape[1] != manifest.d:
            raise ValueError(
                f"{path}: feature dimension {matrix.shape[1]} does not match "
                f"manifest d={manifest.d}"
            )
        if matrix.shape[0] != entry.segments:
            raise ValueError(
                f"{path}: {matrix.shape[0]} segments on disk, manifest says "
                f"{entry.segments}"
            )
        if feature_scale != 1.0:
            matrix = matrix * feature_scale
        for j in range(matrix.shape[0]):
            records.append(FeatureRecord(entry.id, j, matrix[j]))
    return records


def load_dataset(manifest_path, feature_scale=1.0):
    manifest = read_manifest(manifest_path)
    records = load_features(manifest, Path(manifest_path).parent, feature_scale)
    return manifest, records


def write_features_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        d = records[0].vector.size if records else 0
        writer.writerow(["video_id", "segment_index"] + [f"f{i}" for i in range(d)])
        for r in records:
            writer.writerow(
                [r.video_id, r.segment_index]
                + [format(x, ".9g") for x in r.vector]
            )


def load_features_csv(path, feature_scale=1.0):
    """Read a CSV of segment features; header row optional."""
    groups = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                idx = int(row[1])
            except ValueError:
                continue  # header
            vec = np.array([float(x) for x in row[2:]], dtype=np.float64)
            groups.setdefault(row[0], []).append((idx, vec))
    if not groups:
        raise ValueError(f"{path}: no feature rows")
    records = []
    d = None
    for vid, rows in groups.items():
        rows.sort()
        if [i for i, _ in rows] != list(range(len(rows))):
            raise ValueError(
                f"{path}: video {vid!r} segment indices not contiguous from 0"
            )
        for idx, vec in rows:
            if d is None:
                d = vec.size
            elif vec.size != d:
                raise ValueError(
                    f"{path}: video {vid!r} row width {vec.size} != {d}"
                )
            if feature_scale != 1.0:
                vec = vec * feature_scale
            records.append(FeatureRecord(vid, idx, vec))
    return records


@dataclass
class Batch:
    """A b x d slab of feature vectors plus row-aligned provenance."""

    matrix: np.ndarray
    provenance: list  # [(video_id, segment_index), ...] per row

    def __post_init__(self):
        if self.matrix.shape[0] != len(self.provenance):
            raise ValueError("provenance must align row-for-row with matrix")

    @property
    def size(self):
        return self.matrix.shape[0]


def stack_records(records):
    """Records -> (matrix, provenance) preserving order."""
    if not records:
        raise ValueError("empty record list")
    matrix = np.ascontiguousarray(
        np.stack([r.vector for r in records]), dtype=np.float64
    )
    return matrix, [(r.video_id, r.segment_index) for r in records]


def shuffle_batches(records, batch_size, seed):
    """Uniform seeded permutation of all records, chunked into batches.

    The final short batch is kept.  The multiset of (video, segment) rows is
    exactly preserved.
    """
    if not records:
        raise ValueError("cannot shuffle an empty dataset")
    if batch_size < 2:
        raise ValueError(f"batch size must be at least 2, got {batch_size}")
    matrix, provenance = stack_records(records)
    perm = np.random.default_rng(seed).permutation(len(records))
    batches = []
    for start in range(0, len(records), batch_size):
        rows = perm[start:start + batch_size]
        batches.append(
            Batch(
                np.ascontiguousarray(matrix[rows]),
                [provenance[i] for i in rows],
            )
        )
    return batches


@dataclass
class CleanerConfig:
    """Threshold on the distance between temporally consecutive features."""

    d_th: float = 0.70

    def __post_init__(self):
        if self.d_th <= 0:
            raise ValueError("d_th must be positive")


def temporal_difference_filter(records, cfg):
    """Keep segments whose jump from their original predecessor is small.

    Within each video (records already in temporal order) the first segment
    is always kept; segment t+1 is kept iff its Euclidean distance to
    segment t in the *original* sequence is at most ``cfg.d_th``.  Eventful
    stretches produce large jumps and are dropped, which approximately
    purifies the pre-training pool.
    """
    by_video = {}
    for r in records:
        by_video.setdefault(r.video_id, []).append(r)
    retained = []
    for recs in by_video.values():
        vecs = np.stack([r.vector for r in recs])
        keep = np.ones(len(recs), dtype=bool)
        if len(recs) > 1:
            jumps = np.linalg.norm(np.diff(vecs, axis=0), axis=1)
            keep[1:] = jumps <= cfg.d_th
        retained.extend(r for r, k in zip(recs, keep) if k)
    return retained
