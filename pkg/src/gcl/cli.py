"""Command-line interface: train, eval, score, synth, inspect.

Option precedence is CLI flag > config file > built-in default.  The config
file is TOML with the same key names as the long flags (underscores for
dashes).  Every command exits nonzero with a single ``error: ...`` line on
stderr when something is wrong, and enumerates config problems before any
real work starts.
"""

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import data as gdata
from . import metrics, synth
from .checkpoint import load_checkpoint, save_checkpoint
from .engine import GclConfig, Trainer, score_segments

log = logging.getLogger("gcl")

_GCL_KEYS = {f.name for f in fields(GclConfig)}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gcl",
        description="Unsupervised anomaly detection on video feature streams",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_dataset_flags(p):
        p.add_argument("--features", help="dataset directory (or CSV file)")
        p.add_argument("--manifest", help="manifest path (default <features>/manifest.json)")
        p.add_argument("--format", choices=["gclf", "csv"], default=None)
        p.add_argument("--feature-scale", type=float, default=None)

    p_train = sub.add_parser("train", help="train a model on unlabelled features")
    add_dataset_flags(p_train)
    p_train.add_argument("--config", help="TOML config file")
    p_train.add_argument("--mode", choices=["gcl_b", "gcl_pt", "gcl_occ", "gcl_ws"])
    p_train.add_argument("--ws-fraction", type=float, dest="ws_fraction")
    p_train.add_argument("--nl", choices=["ones", "random_normal", "gaussian", "none"],
                         dest="nl_mode")
    p_train.add_argument("--gaussian-sigma", type=float, dest="gaussian_sigma")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--pretrain-epochs", type=int, dest="pretrain_epochs")
    p_train.add_argument("--batch-size", type=int, dest="batch_size")
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--momentum", type=float)
    p_train.add_argument("--kg", type=float, dest="k_g")
    p_train.add_argument("--kd", type=float, dest="k_d")
    p_train.add_argument("--dth", type=float, dest="d_th")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--soft-labels", action="store_const", const=True,
                         default=None, dest="soft_labels")
    p_train.add_argument("--self-labels", action="store_const", const=True,
                         default=None, dest="self_labels")
    p_train.add_argument("--out", default="runs/gcl")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="score features and report frame AUC")
    add_dataset_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--out", default=".")
    p_eval.add_argument("--per-video", action="store_true")
    p_eval.add_argument("--average-videos", action="store_true",
                        help="average per-video AUCs instead of pooling frames")
    p_eval.set_defaults(func=cmd_eval)

    p_score = sub.add_parser("score", help="score features without ground truth")
    add_dataset_flags(p_score)
    p_score.add_argument("--checkpoint", required=True)
    p_score.add_argument("--out", default=".")
    p_score.set_defaults(func=cmd_score)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    for f in fields(synth.SynthConfig):
        flag = "--" + f.name.replace("_", "-")
        p_synth.add_argument(flag, type=type(f.default), default=f.default,
                             dest=f.name)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=cmd_synth)

    p_inspect = sub.add_parser("inspect", help="summarize a dataset manifest")
    p_inspect.add_argument("manifest")
    p_inspect.set_defaults(func=cmd_inspect)
    return parser


def load_run_config(args):
    """Merge defaults, config file, and CLI flags into a GclConfig."""
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ValueError(f"config file not found: {path}")
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        unknown = set(doc) - _GCL_KEYS - {"features", "manifest", "format",
                                          "feature_scale", "out"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update({k: v for k, v in doc.items() if k in _GCL_KEYS})
        for k in ("features", "manifest", "format", "feature_scale", "out"):
            if k in doc and getattr(args, k, None) in (None, "runs/gcl"):
                setattr(args, k, doc[k])
    for key in _GCL_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return GclConfig(**values)


def load_dataset_args(args):
    if not args.features:
        raise ValueError("--features is required")
    fmt = args.format or "gclf"
    scale = args.feature_scale if args.feature_scale is not None else 1.0
    if fmt == "csv":
        records = gdata.load_features_csv(args.features, feature_scale=scale)
        if args.manifest:
            manifest = gdata.read_manifest(args.manifest)
        else:
            # minimal manifest derived from the CSV contents
            by_video = {}
            for r in records:
                by_video[r.video_id] = max(by_video.get(r.video_id, 0), r.segment_index + 1)
            manifest = gdata.DatasetManifest(
                d=records[0].vector.size,
                p=16,
                videos=[gdata.VideoEntry(id=v, file=None, segments=m)
                        for v, m in by_video.items()],
            )
        return manifest, records
    manifest_path = Path(args.manifest) if args.manifest else Path(args.features) / "manifest.json"
    if not manifest_path.exists():
        raise ValueError(f"manifest not found: {manifest_path}")
    return gdata.load_dataset(manifest_path, feature_scale=scale)


def validate_train_setup(cfg, manifest):
    problems = []
    if cfg.mode in ("gcl_occ", "gcl_ws") and not manifest.all_labeled:
        problems.append(f"mode {cfg.mode} requires video labels in the manifest")
    if cfg.batch_size > sum(v.segments for v in manifest.videos):
        log.warning("batch size exceeds dataset size; every epoch is one batch")
    return problems


def _format_metrics(m):
    parts = [f"phase={m.phase}", f"epoch={m.epoch}"]
    for key in ("recon_loss", "disc_loss", "gen_pos_rate", "disc_pos_rate"):
        parts.append(f"{key}={getattr(m, key):.6f}")
    if m.auc is not None:
        parts.append(f"auc={m.auc:.6f}")
    if m.skipped_gen_steps:
        parts.append(f"skipped_gen_steps={m.skipped_gen_steps}")
    return " ".join(parts)


def cmd_train(args):
    cfg = load_run_config(args)
    manifest, records = load_dataset_args(args)
    problems = validate_train_setup(cfg, manifest)
    if problems:
        raise ValueError("; ".join(problems))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.txt"
    trainer = Trainer(records, manifest, cfg)
    with open(log_path, "w", encoding="utf-8") as log_fh:
        def log_fn(m):
            line = _format_metrics(m)
            log_fh.write(line + "\n")
            log.info(line)

        def checkpoint_cb(tr, m):
            save_checkpoint(tr, out_dir / f"checkpoint_ep{tr.epoch:03d}.gclc")

        trainer.run(
            log_fn=log_fn,
            epoch_callback=checkpoint_cb,
            track_auc=manifest.has_ground_truth,
        )
    save_checkpoint(trainer, out_dir / "model.gclc")
    log.info("saved final checkpoint to %s", out_dir / "model.gclc")
    print(out_dir / "model.gclc")
    return 0


def _load_and_score(args):
    state = load_checkpoint(args.checkpoint)
    manifest, records = load_dataset_args(args)
    if manifest.d != state.d:
        raise ValueError(
            f"checkpoint was trained on d={state.d}, dataset has d={manifest.d}"
        )
    series = score_segments(state.disc, records, manifest)
    return state, manifest, series


def cmd_eval(args):
    state, manifest, series = _load_and_score(args)
    missing = [s.video_id for s in series
               if manifest.video(s.video_id).gt_ranges is None]
    if missing:
        raise ValueError(
            f"missing ground truth for videos: {', '.join(sorted(missing)[:5])}"
        )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = {
        s.video_id: metrics.frame_labels(manifest.video(s.video_id), manifest.p)
        for s in series
    }
    metrics.export_scores(series, out_dir / "scores.csv", labels_by_video=labels)
    report = metrics.evaluate_scores(
        series, manifest,
        per_video=args.per_video,
        average_videos=args.average_videos,
    )
    (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    print(f"auc={report.auc:.6f} positives={report.positives} "
          f"negatives={report.negatives}")
    return 0


def cmd_score(args):
    _, manifest, series = _load_and_score(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics.export_scores(series, out_dir / "scores.csv")
    print(out_dir / "scores.csv")
    return 0


def cmd_synth(args):
    cfg = synth.SynthConfig(
        **{f.name: getattr(args, f.name) for f in fields(synth.SynthConfig)}
    )
    dataset = synth.generate_synthetic(cfg)
    manifest_path = synth.save_synthetic(dataset, args.out)
    print(manifest_path)
    return 0


def cmd_inspect(args):
    manifest = gdata.read_manifest(args.manifest)
    n_videos = len(manifest.videos)
    n_segments = sum(v.segments for v in manifest.videos)
    labeled = sum(1 for v in manifest.videos if v.label is not None)
    anomalous = sum(1 for v in manifest.videos if v.label == "anomalous")
    with_gt = sum(1 for v in manifest.videos if v.gt_ranges is not None)
    gt_frames = sum(
        e - s for v in manifest.videos for s, e in (v.gt_ranges or [])
    )
    total_frames = sum(v.frame_count(manifest.p) for v in manifest.videos)
    print(f"d={manifest.d} p={manifest.p} videos={n_videos} "
          f"segments={n_segments} frames={total_frames}")
    print(f"labeled_videos={labeled} anomalous_videos={anomalous} "
          f"videos_with_gt={with_gt} anomalous_frames={gt_frames}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else
        logging.INFO if args.verbose else logging.WARNING,
        format="%(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
