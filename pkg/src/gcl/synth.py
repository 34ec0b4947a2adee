"""Synthetic anomaly streams for desk-scale verification.

Normal segments follow a smooth trajectory on a low-rank linear manifold:
a per-video AR(1) latent walk mixed through a fixed orthonormal basis, plus
small isotropic noise whose scale varies per segment.  Videos differ in
activity level (a per-video latent scale) and scene identity (a per-video
latent offset), so busy or off-center yet normal videos rival anomalies in
raw magnitude and naive energy ranking mislabels them — a classifier has to
key on direction, not size.  Anomalous segments
additionally carry an additive shift along one fixed direction, with a fresh
positive magnitude per segment so consecutive anomalous features jump
around.  The shift direction points mostly along the manifold (an unusual
but representable region, which a converged autoencoder happily
reconstructs) with a small orthogonal component, so anomalies always sit
strictly farther from the manifold than normal segments while plain
reconstruction error remains a mediocre detector.  A classifier can instead
key on the shift direction itself.  Anomalies occur only inside
anomaly-flagged videos, as one contiguous run per video, and the manifest
records frame-level ground truth for them.

Feature values are quantized to float32 precision at generation time so that
in-memory records match a feature-file round trip bit for bit.
"""

from dataclasses import dataclass

import numpy as np

from .data import DatasetManifest, FeatureRecord, VideoEntry, write_features, write_manifest


@dataclass
class SynthConfig:
    seed: int = 0
    n_videos: int = 200
    segments_per_video: int = 60
    d: int = 32
    p: int = 16
    anomaly_video_fraction: float = 0.15
    anomaly_segment_fraction: float = 0.30
    latent_rank: int = 4
    mixing_scale: float = 1.0
    latent_drift: float = 0.99
    activity_spread: float = 3.5
    center_spread: float = 2.5
    noise_scale: float = 0.025
    noise_spread: float = 2.0
    shift_magnitude: float = 6.0
    anomaly_alignment: float = 0.999

    def __post_init__(self):
        if self.n_videos <= 0 or self.segments_per_video <= 0:
            raise ValueError("need at least one video and one segment")
        if self.d <= 0 or self.p <= 0:
            raise ValueError("d and p must be positive")
        if not (0.0 <= self.anomaly_video_fraction <= 1.0
                and 0.0 <= self.anomaly_segment_fraction <= 1.0):
            raise ValueError("anomaly fractions must lie in [0, 1]")
        if not 0 < self.latent_rank < self.d:
            raise ValueError("latent rank must satisfy 0 < rank < d")
        if not 0.0 <= self.latent_drift < 1.0:
            raise ValueError("latent_drift must lie in [0, 1)")
        if self.mixing_scale <= 0 or self.noise_scale < 0 or self.shift_magnitude < 0:
            raise ValueError("scales must be non-negative (mixing positive)")
        if not 0.0 <= self.anomaly_alignment < 1.0:
            raise ValueError("anomaly_alignment must lie in [0, 1)")
        if self.noise_spread < 1.0 or self.activity_spread < 1.0:
            raise ValueError("spread factors must be >= 1")
        if self.center_spread < 0:
            raise ValueError("center_spread must be >= 0")


@dataclass
class SynthDataset:
    records: list
    manifest: DatasetManifest
    segment_labels: dict            # video_id -> int8 array, 1 = anomalous
    mixing: np.ndarray              # d x rank manifold basis (scaled)
    anomaly_direction: np.ndarray   # unit shift direction (mostly in-manifold)

    @property
    def anomaly_rate(self):
        total = sum(len(v) for v in self.segment_labels.values())
        hits = sum(int(v.sum()) for v in self.segment_labels.values())
        return hits / total


def generate_synthetic(cfg):
    """Build a seeded dataset with per-segment ground truth."""
    rng = np.random.default_rng(cfg.seed)
    n, m = cfg.n_videos, cfg.segments_per_video
    n_anom = round(cfg.anomaly_video_fraction * n)
    run_len = round(cfg.anomaly_segment_fraction * m)
    if cfg.anomaly_video_fraction > 0 and n_anom == 0:
        raise ValueError(
            f"anomaly_video_fraction {cfg.anomaly_video_fraction} rounds to "
            f"zero anomalous videos out of {n}"
        )
    if n_anom > 0 and run_len == 0:
        raise ValueError(
            f"anomaly_segment_fraction {cfg.anomaly_segment_fraction} rounds "
            f"to zero anomalous segments out of {m}"
        )

    basis, _ = np.linalg.qr(rng.standard_normal((cfg.d, cfg.latent_rank + 1)))
    mixing = basis[:, : cfg.latent_rank] * cfg.mixing_scale
    off_manifold = basis[:, cfg.latent_rank]
    in_latent = rng.standard_normal(cfg.latent_rank)
    in_latent /= np.linalg.norm(in_latent)
    in_manifold = basis[:, : cfg.latent_rank] @ in_latent
    anomaly_dir = (
        np.sqrt(cfg.anomaly_alignment) * in_manifold
        + np.sqrt(1.0 - cfg.anomaly_alignment) * off_manifold
    )
    anom_ids = set(rng.permutation(n)[:n_anom])

    records, entries, labels = [], [], {}
    rho = cfg.latent_drift
    step = np.sqrt(1.0 - rho * rho)
    width = len(str(n - 1))
    log_activity = np.log(cfg.activity_spread)
    for i in range(n):
        vid = f"video{i:0{width}d}"
        z = np.empty((m, cfg.latent_rank))
        z[0] = rng.standard_normal(cfg.latent_rank)
        for t in range(1, m):
            z[t] = rho * z[t - 1] + step * rng.standard_normal(cfg.latent_rank)
        # per-video activity level: busy scenes have larger, faster latents
        z *= np.exp(rng.uniform(-log_activity, log_activity))
        # per-video scene identity: an offset on the manifold, kept clear of
        # the anomaly region (normal scenes do not live inside it)
        center = cfg.center_spread * rng.standard_normal(cfg.latent_rank)
        center -= (center @ in_latent) * in_latent
        z += center
        feats = z @ mixing.T
        # per-segment noise level in [scale/spread, scale*spread], log-uniform
        log_spread = np.log(cfg.noise_spread)
        seg_noise = cfg.noise_scale * np.exp(
            rng.uniform(-log_spread, log_spread, size=m)
        )
        feats += rng.standard_normal((m, cfg.d)) * seg_noise[:, None]
        seg_labels = np.zeros(m, dtype=np.int8)
        gt_ranges = []
        if i in anom_ids:
            start = int(rng.integers(0, m - run_len + 1))
            # one-sided magnitudes: a fresh draw per segment, never near zero
            shifts = cfg.shift_magnitude * rng.uniform(0.5, 1.5, size=run_len)
            feats[start:start + run_len] += np.outer(shifts, anomaly_dir)
            seg_labels[start:start + run_len] = 1
            gt_ranges.append((start * cfg.p, (start + run_len) * cfg.p))
        # float32 quantization keeps memory and disk representations equal
        feats = feats.astype(np.float32).astype(np.float64)
        for j in range(m):
            records.append(FeatureRecord(vid, j, feats[j]))
        labels[vid] = seg_labels
        entries.append(
            VideoEntry(
                id=vid,
                file=f"{vid}.gclf",
                segments=m,
                label="anomalous" if i in anom_ids else "normal",
                gt_ranges=gt_ranges,
            )
        )
    manifest = DatasetManifest(d=cfg.d, p=cfg.p, videos=entries)
    return SynthDataset(records, manifest, labels, mixing, anomaly_dir)


def save_synthetic(dataset, out_dir):
    """Write the dataset as GCLF feature files plus manifest.json."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_video = {}
    for r in dataset.records:
        by_video.setdefault(r.video_id, []).append(r)
    for entry in dataset.manifest.videos:
        recs = sorted(by_video[entry.id], key=lambda r: r.segment_index)
        write_features(out_dir / entry.file, np.stack([r.vector for r in recs]))
    write_manifest(dataset.manifest, out_dir / "manifest.json")
    return out_dir / "manifest.json"
