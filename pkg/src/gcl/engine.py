"""Cooperative training of the reconstruction generator and the classifier.

The generator is an autoencoder over feature vectors; the discriminator is a
small fully connected classifier emitting an anomaly probability.  Neither
network ever sees a human annotation.  Instead, per batch:

  1. the generator's per-row reconstruction errors are thresholded at
     mean + k_g * std (population std, computed on that batch) to produce
     binary pseudo-labels;
  2. the discriminator takes one optimizer step on those labels (binary
     cross entropy);
  3. the *updated* discriminator's probabilities are thresholded at
     mean + k_d * std to produce a second set of pseudo-labels;
  4. those labels drive negative learning: rows labeled anomalous have their
     reconstruction target replaced (all-ones vector by default), so the
     generator learns to reconstruct them poorly;
  5. the generator takes one optimizer step toward the modified targets.

Supervision modes: ``gcl_b`` trains from scratch; ``gcl_pt`` first pre-trains
the generator on segments that pass the temporal-difference cleaner and the
discriminator on the pre-trained generator's labels; ``gcl_occ`` pre-trains
on normal-labeled videos instead; ``gcl_ws`` additionally forces pseudo-labels
of a (seeded) fraction of normal-labeled videos to zero in steps 1 and 3.

Anomaly scores at test time are the discriminator's probabilities, expanded
to frame level (each segment's score repeats for its frames).
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import CleanerConfig, shuffle_batches, stack_records, temporal_difference_filter
from .metrics import ScoreSeries, evaluate_scores
from .nn import (
    Network,
    bce_with_logits_loss,
    init_network,
    mean_row_l2_loss,
    row_distances,
)
from .optim import RmsProp

NL_MODES = ("ones", "random_normal", "gaussian", "none")
TRAIN_MODES = ("gcl_b", "gcl_pt", "gcl_occ", "gcl_ws")

# Hidden widths relative to the feature dimension; at d=2048 these yield the
# reference architectures FC[2048,1024,512,256,512,1024,2048] and
# FC[2048,512,32,1].
_GEN_FRACTIONS = (0.5, 0.25, 0.125, 0.25, 0.5)
_DISC_FRACTIONS = (0.25, 0.015625)
_MIN_HIDDEN = 4


def default_gen_dims(d):
    hidden = [max(_MIN_HIDDEN, round(d * f)) for f in _GEN_FRACTIONS]
    return [d] + hidden + [d]


def default_disc_dims(d):
    hidden = [max(_MIN_HIDDEN, round(d * f)) for f in _DISC_FRACTIONS]
    return [d] + hidden + [1]


@dataclass
class GclConfig:
    """Hyperparameters and mode switches for one training run."""

    gen_dims: list | None = None
    disc_dims: list | None = None
    lr: float = 2e-5
    momentum: float = 0.60
    epochs: int = 15
    pretrain_epochs: int = 15
    batch_size: int = 8192
    k_g: float = 1.0
    k_d: float = 0.1
    nl_mode: str = "ones"
    gaussian_sigma: float = 1.5
    mode: str = "gcl_b"
    ws_fraction: float = 1.0
    d_th: float = 0.70
    seed: int = 0
    soft_labels: bool = False
    self_labels: bool = False
    squared_error: bool = False

    def __post_init__(self):
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        if self.nl_mode not in NL_MODES:
            raise ValueError(
                f"nl_mode must be one of {NL_MODES}, got {self.nl_mode!r}"
            )
        if self.k_g < 0 or self.k_d < 0:
            raise ValueError("threshold coefficients k_g and k_d must be >= 0")
        if not 0.0 <= self.ws_fraction <= 1.0:
            raise ValueError("ws_fraction must lie in [0, 1]")
        if self.lr <= 0 or not 0.0 <= self.momentum < 1.0:
            raise ValueError("need lr > 0 and momentum in [0, 1)")
        if self.epochs < 0 or self.pretrain_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.gaussian_sigma < 0:
            raise ValueError("gaussian_sigma must be >= 0")
        if self.d_th <= 0:
            raise ValueError("d_th must be positive")

    def resolved_gen_dims(self, d):
        dims = self.gen_dims if self.gen_dims is not None else default_gen_dims(d)
        if dims[0] != d or dims[-1] != d:
            raise ValueError(
                f"generator dims {dims} must start and end at the feature "
                f"dimension {d}"
            )
        return list(dims)

    def resolved_disc_dims(self, d):
        dims = self.disc_dims if self.disc_dims is not None else default_disc_dims(d)
        if dims[0] != d or dims[-1] != 1:
            raise ValueError(
                f"discriminator dims {dims} must map the feature dimension "
                f"{d} to a single output"
            )
        return list(dims)


def build_generator(cfg, d, seed):
    dims = cfg.resolved_gen_dims(d)
    return init_network(dims, ["relu"] * (len(dims) - 2) + ["identity"], seed)


def build_discriminator(cfg, d, seed):
    dims = cfg.resolved_disc_dims(d)
    return init_network(dims, ["relu"] * (len(dims) - 2) + ["sigmoid"], seed)


@dataclass
class GenBatchStats:
    """Per-row reconstruction errors of one batch with threshold statistics."""

    per_row_error: np.ndarray
    mean: float
    std: float
    threshold: float
    reconstruction: np.ndarray


@dataclass
class DiscBatchStats:
    """Per-row anomaly probabilities of one batch with threshold statistics."""

    per_row_prob: np.ndarray
    mean: float
    std: float
    threshold: float


@dataclass
class PseudoLabelSet:
    labels: np.ndarray
    source: str
    stats: object = None


@dataclass
class NlTargetBatch:
    """Reconstruction targets after negative learning.

    Rows labeled normal keep their input verbatim; rows labeled anomalous
    carry the substituted target, or are masked out of the loss entirely
    under nl_mode 'none'.
    """

    targets: np.ndarray
    include: np.ndarray


def _threshold_stats(values, k):
    # population std: well defined even for a single-row batch
    mean = float(np.mean(values))
    std = float(np.std(values))
    return mean, std, mean + k * std


def reconstruction_errors(gen, batch, k_g=1.0):
    """Forward the batch through the generator and summarize its errors.

    The generator's forward cache is left in place so a following training
    step on the same batch can reuse it.
    """
    recon = gen.forward(batch.matrix)
    errors = row_distances(batch.matrix, recon)
    mean, std, threshold = _threshold_stats(errors, k_g)
    return GenBatchStats(errors, mean, std, threshold, recon)


def generator_pseudo_labels(stats):
    """Rows whose reconstruction error reaches the batch threshold get 1."""
    labels = (stats.per_row_error >= stats.threshold).astype(np.float64)
    return PseudoLabelSet(labels, "generator", stats)


def soft_generator_targets(stats):
    """Soft variant: error over threshold, clamped to [0, 1].

    A non-positive threshold (all-zero errors) degenerates to all ones,
    matching the hard labeler's inclusive comparison.
    """
    if stats.threshold <= 0.0:
        return np.ones_like(stats.per_row_error)
    return np.minimum(1.0, stats.per_row_error / stats.threshold)


def discriminator_pseudo_labels(disc, batch, k_d=0.1):
    """Threshold the discriminator's probabilities at mean + k_d * std."""
    probs = disc.forward(batch.matrix)[:, 0]
    mean, std, threshold = _threshold_stats(probs, k_d)
    stats = DiscBatchStats(probs, mean, std, threshold)
    labels = (probs >= threshold).astype(np.float64)
    return stats, PseudoLabelSet(labels, "discriminator", stats)


def force_normal_video_labels(labels, batch, forced_videos):
    """Zero the pseudo-labels of rows from weakly labeled normal videos."""
    if not forced_videos:
        return labels
    mask = np.fromiter(
        (vid in forced_videos for vid, _ in batch.provenance),
        dtype=bool,
        count=batch.size,
    )
    labels = labels.copy()
    labels[mask] = 0.0
    return labels


def make_nl_targets(batch, labels, nl_mode, rng, gaussian_sigma=1.5):
    """Build reconstruction targets for the negative-learning step.

    ``ones`` replaces anomalous rows' targets with the all-ones vector;
    ``random_normal`` with a uniformly chosen normal-labeled row of the same
    batch (falling back to ones when the batch has no normal rows);
    ``gaussian`` perturbs the row with fresh N(0, sigma^2) noise; ``none``
    excludes anomalous rows from the loss instead of retargeting them.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValueError("negative learning requires hard 0/1 labels")
    if nl_mode not in NL_MODES:
        raise ValueError(f"unknown nl_mode {nl_mode!r}")
    rng = np.random.default_rng(rng)
    targets = batch.matrix.copy()
    include = np.ones(batch.size, dtype=bool)
    anom = labels == 1.0
    if not anom.any():
        return NlTargetBatch(targets, include)
    if nl_mode == "none":
        include[anom] = False
    elif nl_mode == "gaussian":
        targets[anom] += rng.normal(
            0.0, gaussian_sigma, size=(int(anom.sum()), batch.matrix.shape[1])
        )
    elif nl_mode == "random_normal":
        normal_rows = np.flatnonzero(~anom)
        if normal_rows.size == 0:
            targets[anom] = 1.0  # documented fallback: no normal row to copy
        else:
            picks = normal_rows[rng.integers(0, normal_rows.size, int(anom.sum()))]
            targets[anom] = batch.matrix[picks]
    else:
        targets[anom] = 1.0
    return NlTargetBatch(targets, include)


def train_discriminator_step(disc, batch, targets, opt):
    """One cross-entropy step of the discriminator toward ``targets``."""
    disc.forward(batch.matrix)
    loss, grad = bce_with_logits_loss(disc.last_logits, targets)
    if not math.isfinite(loss):
        raise RuntimeError("discriminator loss diverged (non-finite)")
    opt.step(disc.backward(grad, from_logits=True))
    return loss


def train_generator_step(gen, batch, nl, opt, squared=False, reconstruction=None):
    """One reconstruction step of the generator toward the NL targets.

    ``reconstruction`` may pass along the output of a forward pass already
    run on this exact batch (the generator must not have been updated in
    between); otherwise a fresh forward pass is taken.  Returns the loss, or
    None when every row was excluded and the step was skipped.
    """
    if reconstruction is None:
        reconstruction = gen.forward(batch.matrix)
    include = None if nl.include.all() else nl.include
    if include is not None and not include.any():
        return None
    loss, grad = mean_row_l2_loss(
        reconstruction, nl.targets, include=include, squared=squared
    )
    if not math.isfinite(loss):
        raise RuntimeError("generator loss diverged (non-finite)")
    opt.step(gen.backward(grad))
    return loss


@dataclass
class EpochMetrics:
    phase: str
    epoch: int
    recon_loss: float = float("nan")
    disc_loss: float = float("nan")
    gen_pos_rate: float = float("nan")
    disc_pos_rate: float = float("nan")
    auc: float | None = None
    skipped_gen_steps: int = 0


def select_pretraining_pool(records, manifest, cfg):
    """Records to warm the generator up on, or None when the mode skips it.

    ``gcl_pt`` keeps segments passing the temporal-difference cleaner;
    ``gcl_occ`` keeps segments of normal-labeled videos (no cleaning);
    ``gcl_b`` and ``gcl_ws`` do not pre-train.
    """
    if cfg.mode == "gcl_pt":
        pool = temporal_difference_filter(records, CleanerConfig(cfg.d_th))
        if not pool:
            raise ValueError(
                "temporal-difference filter retained nothing; increase --dth"
            )
        return pool
    if cfg.mode == "gcl_occ":
        if not manifest.all_labeled:
            raise ValueError("mode gcl_occ requires video labels in the manifest")
        normal_ids = {v.id for v in manifest.videos if v.label == "normal"}
        pool = [r for r in records if r.video_id in normal_ids]
        if not pool:
            raise ValueError("no normal-labeled videos to pre-train on")
        return pool
    return None


def pretrain_generator(gen, gen_opt, pool, cfg, shuffle_rng, log_fn=None):
    """Plain reconstruction training of the generator on the cleaned pool."""
    history = []
    for epoch in range(cfg.pretrain_epochs):
        losses = []
        for batch in shuffle_batches(pool, cfg.batch_size, shuffle_rng):
            recon = gen.forward(batch.matrix)
            loss, grad = mean_row_l2_loss(
                recon, batch.matrix, squared=cfg.squared_error
            )
            gen_opt.step(gen.backward(grad))
            losses.append(loss)
        metrics = EpochMetrics("pretrain_gen", epoch, recon_loss=float(np.mean(losses)))
        history.append(metrics)
        if log_fn is not None:
            log_fn(metrics)
    return history


def pretrain_discriminator(gen, disc, disc_opt, records, cfg, shuffle_rng, log_fn=None):
    """Warm the discriminator up on the (frozen) generator's pseudo-labels."""
    history = []
    for epoch in range(cfg.pretrain_epochs):
        losses, rates = [], []
        for batch in shuffle_batches(records, cfg.batch_size, shuffle_rng):
            stats = reconstruction_errors(gen, batch, cfg.k_g)
            labels = generator_pseudo_labels(stats)
            losses.append(
                train_discriminator_step(disc, batch, labels.labels, disc_opt)
            )
            rates.append(float(labels.labels.mean()))
        metrics = EpochMetrics(
            "pretrain_disc",
            epoch,
            disc_loss=float(np.mean(losses)),
            gen_pos_rate=float(np.mean(rates)),
        )
        history.append(metrics)
        if log_fn is not None:
            log_fn(metrics)
    return history


def cooperative_epoch(gen, disc, batches, cfg, gen_opt, disc_opt, nl_rng,
                      forced_videos=None):
    """One pass over the shuffled batches of the cross-supervision loop."""
    recon_losses, disc_losses, gen_rates, disc_rates = [], [], [], []
    skipped = 0
    for batch in batches:
        gen_stats = reconstruction_errors(gen, batch, cfg.k_g)
        gen_labels = generator_pseudo_labels(gen_stats)
        gen_labels.labels = force_normal_video_labels(
            gen_labels.labels, batch, forced_videos
        )
        if cfg.soft_labels:
            disc_targets = force_normal_video_labels(
                soft_generator_targets(gen_stats), batch, forced_videos
            )
        else:
            disc_targets = gen_labels.labels
        disc_loss = train_discriminator_step(disc, batch, disc_targets, disc_opt)
        disc_stats, disc_labels = discriminator_pseudo_labels(disc, batch, cfg.k_d)
        disc_labels.labels = force_normal_video_labels(
            disc_labels.labels, batch, forced_videos
        )
        nl_source = gen_labels if cfg.self_labels else disc_labels
        nl = make_nl_targets(
            batch, nl_source.labels, cfg.nl_mode, nl_rng, cfg.gaussian_sigma
        )
        gen_loss = train_generator_step(
            gen, batch, nl, gen_opt,
            squared=cfg.squared_error,
            reconstruction=gen_stats.reconstruction,
        )
        if gen_loss is None:
            skipped += 1
        recon_losses.append(gen_stats.mean)
        disc_losses.append(disc_loss)
        gen_rates.append(float(gen_labels.labels.mean()))
        disc_rates.append(float(disc_labels.labels.mean()))
    return EpochMetrics(
        phase="cooperative",
        epoch=-1,
        recon_loss=float(np.mean(recon_losses)),
        disc_loss=float(np.mean(disc_losses)),
        gen_pos_rate=float(np.mean(gen_rates)),
        disc_pos_rate=float(np.mean(disc_rates)),
        skipped_gen_steps=skipped,
    )


def score_segments(disc, records, manifest):
    """Frame-level anomaly scores per video from discriminator predictions.

    Each segment's probability covers its frames; the final segment's score
    extends over any remaining frames so the series length equals the
    video's true frame count.
    """
    by_video = {}
    for r in records:
        by_video.setdefault(r.video_id, []).append(r)
    series = []
    for entry in manifest.videos:
        recs = by_video.get(entry.id)
        if recs is None:
            continue
        recs = sorted(recs, key=lambda r: r.segment_index)
        if len(recs) != entry.segments:
            raise ValueError(
                f"video {entry.id!r}: {len(recs)} records for "
                f"{entry.segments} manifest segments"
            )
        matrix, _ = stack_records(recs)
        seg_scores = disc.forward(matrix)[:, 0]
        frames = entry.frame_count(manifest.p)
        idx = np.minimum(np.arange(frames) // manifest.p, len(recs) - 1)
        series.append(ScoreSeries(entry.id, seg_scores[idx]))
    return series


def generator_error_scores(gen, records, manifest):
    """Frame-level scores from generator reconstruction error (baseline)."""
    by_video = {}
    for r in records:
        by_video.setdefault(r.video_id, []).append(r)
    series = []
    for entry in manifest.videos:
        recs = by_video.get(entry.id)
        if recs is None:
            continue
        recs = sorted(recs, key=lambda r: r.segment_index)
        matrix, _ = stack_records(recs)
        errors = row_distances(matrix, gen.forward(matrix))
        frames = entry.frame_count(manifest.p)
        idx = np.minimum(np.arange(frames) // manifest.p, len(recs) - 1)
        series.append(ScoreSeries(entry.id, errors[idx]))
    return series


class Trainer:
    """Owns the networks, optimizer state, and seeded RNG streams of a run."""

    def __init__(self, records, manifest, cfg):
        if not records:
            raise ValueError("no training records")
        self.records = records
        self.manifest = manifest
        self.cfg = cfg
        self.d = manifest.d
        for r in records:
            if r.vector.size != self.d:
                raise ValueError(
                    f"record for video {r.video_id!r} has dimension "
                    f"{r.vector.size}, manifest says {self.d}"
                )
        seeds = np.random.SeedSequence(cfg.seed).spawn(5)
        self.gen = build_generator(cfg, self.d, seeds[0])
        self.disc = build_discriminator(cfg, self.d, seeds[1])
        self.shuffle_rng = np.random.default_rng(seeds[2])
        self.nl_rng = np.random.default_rng(seeds[3])
        self.ws_rng = np.random.default_rng(seeds[4])
        self.gen_opt = RmsProp(self.gen.parameters(), cfg.lr, cfg.momentum)
        self.disc_opt = RmsProp(self.disc.parameters(), cfg.lr, cfg.momentum)
        self.history = []
        self.epoch = 0
        self.forced_videos = self._select_forced_videos()

    def _select_forced_videos(self):
        if self.cfg.mode != "gcl_ws":
            return frozenset()
        if not self.manifest.all_labeled:
            raise ValueError("mode gcl_ws requires video labels in the manifest")
        ids = [v.id for v in self.manifest.videos]
        k = round(self.cfg.ws_fraction * len(ids))
        chosen = list(self.ws_rng.permutation(ids)[:k])
        return frozenset(
            vid for vid in chosen if self.manifest.video(vid).label == "normal"
        )

    def pretrain(self, log_fn=None):
        """Generator warm-up plus discriminator warm-up, mode permitting."""
        pool = select_pretraining_pool(self.records, self.manifest, self.cfg)
        if pool is None:
            return
        self.history.extend(
            pretrain_generator(
                self.gen, self.gen_opt, pool, self.cfg, self.shuffle_rng, log_fn
            )
        )
        self.history.extend(
            pretrain_discriminator(
                self.gen, self.disc, self.disc_opt, self.records, self.cfg,
                self.shuffle_rng, log_fn,
            )
        )

    def run(self, log_fn=None, epoch_callback=None, track_auc=False):
        """Pre-train (mode permitting) then run the cooperative epochs."""
        self.pretrain(log_fn)
        for epoch in range(self.cfg.epochs):
            metrics = cooperative_epoch(
                self.gen,
                self.disc,
                self._shuffle(self.records),
                self.cfg,
                self.gen_opt,
                self.disc_opt,
                self.nl_rng,
                self.forced_videos,
            )
            metrics.epoch = epoch
            if track_auc and self.manifest.has_ground_truth:
                metrics.auc = self.current_auc()
            self._record(metrics, log_fn)
            self.epoch = epoch + 1
            if epoch_callback is not None:
                epoch_callback(self, metrics)
        return TrainResult(self.gen, self.disc, self.history, self.cfg, self.d)

    def current_auc(self):
        series = score_segments(self.disc, self.records, self.manifest)
        return evaluate_scores(series, self.manifest).auc

    def _shuffle(self, records):
        return shuffle_batches(records, self.cfg.batch_size, self.shuffle_rng)

    def _record(self, metrics, log_fn):
        self.history.append(metrics)
        if log_fn is not None:
            log_fn(metrics)


@dataclass
class TrainResult:
    gen: Network
    disc: Network
    history: list
    cfg: GclConfig
    d: int


def train(records, manifest, cfg, log_fn=None, epoch_callback=None, track_auc=False):
    """End-to-end training per the configured supervision mode."""
    trainer = Trainer(records, manifest, cfg)
    return trainer.run(log_fn=log_fn, epoch_callback=epoch_callback, track_auc=track_auc)
