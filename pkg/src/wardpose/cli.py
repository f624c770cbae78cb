"""Command-line entry point.

Subcommands: ``prepare`` (dataset chain), ``eval`` (metrics from
interchange CSVs), ``run`` (offline/online pipeline), ``blur``
(face-blur a clip), ``curves`` (plot-data emission).

Every config key has a matching ``--<section>-<key>`` flag; flags
override the config file, which overrides defaults. The config path
comes from ``--config`` or the ``WARDPOSE_CONFIG`` environment
variable.

Exit codes: 0 ok, 2 bad config, 3 bad data, 4 backend failure,
5 source stall.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import dataset_prep, metrics
from .backend import BackendError, BackendUnavailable, BadEndpoint, BadScript, open_backend
from .clips import ClipManifest, EmptyClip, ManifestError, read_clip, write_clip
from .config import SCHEMA, Config, ConfigError, default_config, load_config, parse_value, run_config_from, split_spec_from
from .dataset_prep import EmptyDataset, InvalidTarget, WrongLength, coco_json
from .labels import UnknownLabel
from .metrics import MalformedRecord, NoGroundTruth
from .pipeline import (
    ArraySource,
    BackpressureOverflow,
    ClipSource,
    ClipTooShort,
    SourceStalled,
    run_offline,
    run_online,
    synthetic_frames,
)
from .privacy import blur_faces

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_BAD_DATA = 3
EXIT_BACKEND = 4
EXIT_STALLED = 5

ENV_CONFIG = "WARDPOSE_CONFIG"


def _flag_name(section: str, key: str) -> str:
    return f"--{section}-{key}".replace("_", "-")


def _dest_name(section: str, key: str) -> str:
    return f"{section}__{key}"


def _add_schema_flags(parser: argparse.ArgumentParser) -> None:
    for section, options in SCHEMA.items():
        group = parser.add_argument_group(f"[{section}] overrides")
        for key, opt in options.items():
            group.add_argument(
                _flag_name(section, key),
                dest=_dest_name(section, key),
                metavar="VALUE",
                default=None,
                help=opt.help or f"{opt.kind} (default: {opt.default})",
            )


def _resolve_config(args: argparse.Namespace) -> Config:
    path = args.config or os.environ.get(ENV_CONFIG)
    config = load_config(path) if path else default_config()
    for section, options in SCHEMA.items():
        for key, opt in options.items():
            raw = getattr(args, _dest_name(section, key), None)
            if raw is not None:
                config.set(section, key, parse_value(opt, raw, _flag_name(section, key)))
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wardpose",
        description="Ward-video action recognition pipelines, dataset tooling, and metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", "-c", default=None,
                       help=f"config file path (or ${ENV_CONFIG})")
        _add_schema_flags(p)

    p_prepare = sub.add_parser("prepare", help="preprocess clips and export annotations")
    p_prepare.add_argument("input_dir", nargs="?", default=None,
                           help="directory of raw clip directories (overrides [dataset] input_dir)")
    common(p_prepare)
    p_prepare.set_defaults(func=cmd_prepare)

    p_eval = sub.add_parser("eval", help="evaluate predictions against ground truth")
    p_eval.add_argument("gt", help="ground-truth CSV (image_id,x1,y1,x2,y2,label)")
    p_eval.add_argument("pred", help="prediction CSV (image_id,x1,y1,x2,y2,label,score)")
    p_eval.add_argument("--iou", type=float, default=None,
                        help="IoU threshold (overrides [eval] iou_threshold)")
    common(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_run = sub.add_parser("run", help="run the offline or online pipeline")
    p_run.add_argument("--blur-faces", dest=_dest_name("run", "blur_faces"),
                       action="store_const", const="true",
                       help="shorthand for --run-blur-faces true")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_blur = sub.add_parser("blur", help="face-blur a clip using the pose backend")
    p_blur.add_argument("input_dir", nargs="?", default=None, help="clip directory")
    p_blur.add_argument("--out", default=None, help="output clip directory")
    common(p_blur)
    p_blur.set_defaults(func=cmd_blur)

    p_curves = sub.add_parser("curves", help="emit plot-data CSVs from scalar series records")
    p_curves.add_argument("records", help="records CSV (series,iteration,value)")
    p_curves.add_argument("--out-dir", default="curves", help="output directory")
    common(p_curves)
    p_curves.set_defaults(func=cmd_curves)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _resolve_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        return args.func(args, config)
    except (ConfigError, BadEndpoint) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (MalformedRecord, ManifestError, EmptyClip, EmptyDataset, UnknownLabel,
            WrongLength, InvalidTarget, ClipTooShort, NoGroundTruth) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_DATA
    except (BackendUnavailable, BackendError, BadScript, BackpressureOverflow) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except SourceStalled as exc:
        print(f"source stalled: {exc}", file=sys.stderr)
        return EXIT_STALLED


def _open_detector(config: Config):
    endpoint = config.get("backend", "detector")
    if not endpoint:
        raise ConfigError("no [backend] detector endpoint configured")
    return open_backend(endpoint, config.get("backend", "handshake_timeout"),
                        config.get("backend", "request_timeout"))


def _open_recognizer(config: Config):
    endpoint = config.get("backend", "recognizer")
    if not endpoint:
        raise ConfigError("no [backend] recognizer endpoint configured")
    return open_backend(endpoint, config.get("backend", "handshake_timeout"),
                        config.get("backend", "request_timeout"))


def cmd_prepare(args: argparse.Namespace, config: Config) -> int:
    input_dir = args.input_dir or config.get("dataset", "input_dir")
    if not input_dir:
        raise ConfigError("no dataset input directory given")
    input_path = Path(input_dir)
    clip_dirs = sorted(
        d for d in input_path.iterdir() if (d / "manifest.txt").exists()
    ) if input_path.is_dir() else []
    if not clip_dirs:
        print(f"error: no clips found under {input_dir}", file=sys.stderr)
        return EXIT_BAD_DATA

    out_dir = Path(config.get("dataset", "output_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    target_res = (config.get("dataset", "target_width"), config.get("dataset", "target_height"))
    target_fps = config.get("dataset", "target_fps")

    detector = _open_detector(config)
    run_cfg = run_config_from(config)
    prepared: list[ClipManifest] = []
    skips: list[dataset_prep.SkipEntry] = []
    n_segments = 0
    try:
        for clip_dir in clip_dirs:
            clip = read_clip(clip_dir)
            processed = dataset_prep.resample_clip(
                dataset_prep.extend_clip(clip), target_res, target_fps,
            )
            try:
                segments = dataset_prep.segment_clip(processed)
            except WrongLength as exc:
                skips.append(dataset_prep.SkipEntry(clip.clip_id, str(exc)))
                continue
            for segment in segments:
                write_clip(segment, out_dir / "segments" / segment.clip_id)
                n_segments += 1
            prepared.append(processed)

        records, detect_skips = dataset_prep.build_annotations(
            prepared, detector,
            min_confidence=run_cfg.min_keypoint_confidence,
            margin=run_cfg.box_margin,
        )
        skips.extend(detect_skips)
    finally:
        detector.close()

    dataset_prep.write_annotation_csv(records, out_dir / "annotations.csv")
    with open(out_dir / "skip_report.csv", "w", encoding="utf-8") as fh:
        fh.write("clip_id,reason\n")
        for skip in skips:
            fh.write(f"{skip.clip_id},{skip.reason}\n")

    split = split_spec_from(config)
    train_doc, val_doc = dataset_prep.export_coco(records, split)
    (out_dir / "train.json").write_text(coco_json(train_doc), encoding="utf-8")
    (out_dir / "val.json").write_text(coco_json(val_doc), encoding="utf-8")

    print(f"clips: {len(clip_dirs)}  segments: {n_segments}  "
          f"records: {len(records)}  skipped: {len(skips)}")
    print(f"train annotations: {len(train_doc['annotations'])}  "
          f"val annotations: {len(val_doc['annotations'])}")
    print(f"outputs in {out_dir}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: Config) -> int:
    iou_threshold = args.iou if args.iou is not None else config.get("eval", "iou_threshold")
    gt = metrics.read_gt_csv(args.gt)
    preds = metrics.read_pred_csv(args.pred)
    report = metrics.evaluate(gt, preds, iou_threshold)

    out_dir = Path(config.get("eval", "output_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics.write_report_json(report, out_dir / "report.json")
    metrics.write_per_class_csv(report, out_dir / "per_class.csv")
    metrics.write_confusion_csv(report.confusion, out_dir / "confusion.csv")

    print(f"mAP {report.map:.4f}")
    print(f"macro-F1 {report.macro_f1:.4f}")
    print(f"reports in {out_dir}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace, config: Config) -> int:
    run_cfg = run_config_from(config)
    input_spec = config.get("run", "input")
    if not input_spec:
        raise ConfigError("no [run] input configured")
    out_dir = Path(config.get("run", "output_dir"))

    detector = _open_detector(config)
    recognizer = _open_recognizer(config)
    interrupted = False
    try:
        if run_cfg.mode == "offline":
            clip = read_clip(input_spec)
            try:
                report, rows = run_offline(clip, run_cfg, detector, recognizer, out_dir)
            except KeyboardInterrupt:
                interrupted = True
                report = None
        else:
            source = _open_source(input_spec, run_cfg)
            report, rows = run_online(source, run_cfg, detector, recognizer, out_dir)
    finally:
        detector.close()
        recognizer.close()

    if interrupted or report is None:
        print("interrupted", file=sys.stderr)
        return EXIT_OK
    print(f"frames: {report.frames_processed}  windows: {report.windows_recognized}  "
          f"dropped: {report.windows_dropped}")
    print(f"outputs in {out_dir}")
    return EXIT_OK


def _open_source(input_spec: str, run_cfg):
    if input_spec.startswith("synthetic:"):
        count = int(input_spec.partition(":")[2])
        return ArraySource(
            synthetic_frames(count, run_cfg.resolution), run_cfg.fps, run_cfg.resolution,
        )
    return ClipSource(read_clip(input_spec))


def cmd_blur(args: argparse.Namespace, config: Config) -> int:
    input_dir = args.input_dir or config.get("run", "input")
    if not input_dir:
        raise ConfigError("no input clip directory given")
    clip = read_clip(input_dir)
    out = Path(args.out) if args.out else Path(config.get("run", "output_dir")) / "blurred"
    out.mkdir(parents=True, exist_ok=True)
    run_cfg = run_config_from(config)

    detector = _open_detector(config)
    try:
        from .clips import load_frame, write_manifest_file, write_ppm

        blurred = 0
        for i in range(clip.frame_count):
            image = load_frame(clip, i)
            subjects = detector.detect(clip.frames[i], i, clip.resolution)
            result = blur_faces(image, subjects, run_cfg.face_margin, run_cfg.blur_block)
            if not (result == image).all():
                blurred += 1
            write_ppm(out / f"frame_{i:06d}.ppm", result)
        write_manifest_file(clip, out)
    finally:
        detector.close()
    print(f"frames: {clip.frame_count}  blurred: {blurred}")
    print(f"blurred clip in {out}")
    return EXIT_OK


def cmd_curves(args: argparse.Namespace, config: Config) -> int:
    records = metrics.read_curve_records_csv(args.records)
    emission = metrics.emit_curves(records, args.out_dir)
    for warning in emission.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if emission.errors:
        for error in emission.errors:
            print(f"error: {error}", file=sys.stderr)
        return EXIT_BAD_DATA
    print(f"wrote {len(emission.files)} file(s) to {args.out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
