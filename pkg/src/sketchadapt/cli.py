"""Operator surface: prepare-data, train, eval, predict.

Every command takes a flat JSON config file plus flag overrides (flags
win) and echoes the effective configuration into its output directory.
Exit codes: 0 ok, 2 input/configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from .backbone import load_pretrained, make_zero_shot_scorer
from .checkpoint import load_checkpoint, read_header
from .common import (AbstractionLevel, DivergenceError, SketchAdaptError)
from .config import RunConfig, load_run_config
from .datasets import (DatasetSplit, build_split, filter_edgemaps,
                       ingest_edgemap_dir, ingest_stroke_dataset, load_manifest,
                       source_counts, write_manifest)
from .decoder import sequence_to_stroke5_json
from .evaluator import evaluate
from .model import predict as model_predict
from .rasterize import MIN_SIDE, render_raster
from .reports import plot_accuracy_vs_abstraction, plot_membership_histogram
from .strokes import stroke3_to_stroke5, stroke5_rows_to_sketch

INPUT_ERROR, NUMERIC_ERROR = 2, 3


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NUMERIC_ERROR
    except (SketchAdaptError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchadapt",
        description="few-shot / zero-shot sketch classification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    prep = sub.add_parser("prepare-data", help="ingest sources, filter edge maps, build the split")
    _add_config_flags(prep)
    prep.add_argument("--source-high", help="NDJSON of doodle-style strokes")
    prep.add_argument("--source-medium", help="NDJSON of freehand-sketch strokes")
    prep.add_argument("--source-low-dir", help="directory of edge-map images per category")
    prep.add_argument("--seen", help="comma-separated seen category names")
    prep.add_argument("--unseen", help="comma-separated unseen category names")
    prep.add_argument("--shots", type=int)
    prep.add_argument("--em-keep-fraction", type=float, dest="em_keep_fraction")
    prep.set_defaults(handler=cmd_prepare_data)

    tr = sub.add_parser("train", help="run few-shot training")
    _add_config_flags(tr)
    tr.add_argument("--manifest", help="dataset manifest from prepare-data")
    tr.add_argument("--split", help="split file from prepare-data")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--batch-size", type=int, dest="batch_size")
    tr.add_argument("--learning-rate", type=float, dest="learning_rate")
    tr.add_argument("--prompt-depth", type=int, dest="prompt_depth")
    tr.add_argument("--context-tokens", type=int, dest="context_tokens")
    tr.add_argument("--no-meta-net", action="store_false", dest="meta_net", default=None)
    tr.add_argument("--no-layer-norm", action="store_false", dest="layer_norm", default=None)
    tr.add_argument("--no-codebook", action="store_false", dest="codebook", default=None)
    tr.add_argument("--no-mixup", action="store_false", dest="mixup", default=None)
    tr.add_argument("--no-sketch2vec", action="store_false", dest="sketch2vec", default=None)
    tr.set_defaults(handler=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint and emit reports/plots")
    _add_config_flags(ev)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--manifest")
    ev.add_argument("--split")
    ev.add_argument("--which", choices=("seen", "unseen"), default="seen")
    ev.set_defaults(handler=cmd_eval)

    pr = sub.add_parser("predict", help="classify one sketch (image or stroke file)")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--input", required=True, help="image file or stroke JSON/NDJSON")
    pr.add_argument("--categories", required=True,
                    help="comma-separated names, or @file with one name per line")
    pr.add_argument("--weights-path", dest="weights_path")
    pr.add_argument("--top-k", type=int, default=5, dest="top_k")
    pr.add_argument("--decode", action="store_true",
                    help="also emit the decoded stroke-5 sequence")
    pr.set_defaults(handler=cmd_predict)
    return parser


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat JSON run config")
    sub.add_argument("--out-dir", dest="out_dir")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--adapter")
    sub.add_argument("--adapter-seed", type=int, dest="adapter_seed")
    sub.add_argument("--weights-path", dest="weights_path")


_CONFIG_KEYS = (
    "out_dir", "seed", "adapter", "adapter_seed", "weights_path",
    "source_high", "source_medium", "source_low_dir", "seen", "unseen", "shots",
    "em_keep_fraction", "manifest", "split", "epochs", "batch_size",
    "learning_rate", "prompt_depth", "context_tokens",
    "meta_net", "layer_norm", "codebook", "mixup", "sketch2vec",
)


def _run_config(args) -> RunConfig:
    overrides = {}
    for key in _CONFIG_KEYS:
        if hasattr(args, key) and getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    for key in ("seen", "unseen"):
        if isinstance(overrides.get(key), str):
            overrides[key] = [s for s in overrides[key].split(",") if s]
    return load_run_config(args.config, overrides)


def _echo_config(cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(out_dir / "config.json")


def _render_side(cfg: RunConfig) -> int:
    if cfg.render_side is not None:
        return cfg.render_side
    from .backbone import ADAPTER_SPECS
    spec = ADAPTER_SPECS.get(cfg.adapter)
    return max(spec.resolution, MIN_SIDE) if spec else MIN_SIDE


def _load_backbone(cfg: RunConfig):
    kwargs = {"seed": cfg.adapter_seed} if cfg.adapter == "toy" else {}
    return load_pretrained(cfg.adapter, cfg.weights_path, **kwargs)


def cmd_prepare_data(args) -> int:
    cfg = _run_config(args)
    if not cfg.seen:
        raise ValueError("prepare-data needs a non-empty 'seen' category list")
    categories = list(cfg.seen) + list(cfg.unseen)
    side = _render_side(cfg)
    out_dir = Path(cfg.out_dir)
    _echo_config(cfg, out_dir)

    samples = []
    reports = []
    if cfg.source_high:
        res = ingest_stroke_dataset(cfg.source_high, cfg.stroke_format, categories,
                                    AbstractionLevel.HIGH, side=side,
                                    stroke_width=cfg.stroke_width,
                                    max_points=cfg.train.max_points)
        samples.extend(res.samples)
        reports.append(("high", res))
    if cfg.source_medium:
        res = ingest_stroke_dataset(cfg.source_medium, cfg.stroke_format, categories,
                                    AbstractionLevel.MEDIUM, side=side,
                                    stroke_width=cfg.stroke_width,
                                    max_points=cfg.train.max_points)
        samples.extend(res.samples)
        reports.append(("medium", res))
    if cfg.source_low_dir:
        res = ingest_edgemap_dir(cfg.source_low_dir, categories, side=side)
        low = filter_edgemaps(res.samples, categories,
                              make_zero_shot_scorer(_load_backbone(cfg)),
                              cfg.em_keep_fraction)
        samples.extend(low)
        reports.append(("low", res))
    if not samples:
        raise ValueError("no input sources configured "
                         "(source_high / source_medium / source_low_dir)")

    for name, res in reports:
        for err in res.record_errors:
            print(f"warning: {name} record {err.index}: {err.reason}", file=sys.stderr)
        if res.unknown_category_count:
            print(f"warning: {name}: rejected {res.unknown_category_count} "
                  f"records with unknown categories", file=sys.stderr)

    manifest_path = write_manifest(samples, out_dir)
    split = build_split(samples, cfg.seen, cfg.unseen, cfg.shots, cfg.train.seed)
    split_path = out_dir / "split.json"
    split.save(split_path)

    for source, count in sorted(source_counts(samples).items()):
        print(f"{source}: {count} samples")
    print(f"manifest: {manifest_path}")
    print(f"split: {split_path}")
    return 0


def cmd_train(args) -> int:
    from .trainer import train

    cfg = _run_config(args)
    if not cfg.manifest or not cfg.split:
        raise ValueError("train needs 'manifest' and 'split' (config keys or flags)")
    out_dir = Path(cfg.out_dir)
    _echo_config(cfg, out_dir)
    samples = load_manifest(cfg.manifest)
    split = DatasetSplit.load(cfg.split)
    backbone = _load_backbone(cfg)
    result = train(samples, split, cfg.train, backbone, out_dir)
    last = result.history[-1]
    print(f"epoch {last['epoch']}: total={last['total']:.6f} "
          f"train_accuracy={last['train_accuracy']:.2f}%")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    if not cfg.manifest or not cfg.split:
        raise ValueError("eval needs 'manifest' and 'split' (config keys or flags)")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    header = read_header(args.checkpoint)
    backbone = load_pretrained(header["adapter"], cfg.weights_path,
                               **header.get("adapter_args", {}))
    model, _epoch, _rng = load_checkpoint(args.checkpoint, backbone)

    samples = load_manifest(cfg.manifest)
    split = DatasetSplit.load(cfg.split)
    if args.which == "seen":
        ids = set(split.eval_seen_samples)
        names = split.seen_categories
    else:
        ids = set(split.eval_unseen_samples)
        names = split.unseen_categories
        if not names or not ids:
            raise ValueError("this split has no unseen categories/samples")
        if model.config.joint_eval_space:
            names = split.seen_categories + split.unseen_categories
    subset = [s for s in samples if s.source_id in ids]
    if not subset:
        raise ValueError(f"no '{args.which}' eval samples found in the manifest")

    report = evaluate(model, subset, names, which=args.which)
    paths = report.save(out_dir)
    paths["membership"] = plot_membership_histogram(
        report, out_dir / f"membership_histogram_{args.which}.png")
    paths["curve"] = plot_accuracy_vs_abstraction(
        report, out_dir / f"accuracy_vs_abstraction_{args.which}.png")
    if model.config.codebook:
        from .evaluator import abstraction_report_rows, write_abstraction_report
        from .model import encode_batch, make_batch
        ordered = sorted(subset, key=lambda s: s.source_id)
        with torch.no_grad():
            rows = []
            for start in range(0, len(ordered), model.config.batch_size):
                chunk = ordered[start:start + model.config.batch_size]
                batch = make_batch(chunk, backbone, names)
                dist = model.codebook.predict(encode_batch(model, batch.images))
                rows.extend(abstraction_report_rows(chunk, dist))
        paths["abstraction"] = out_dir / f"abstraction_{args.which}.csv"
        write_abstraction_report(paths["abstraction"], rows)

    print(f"top1: {report.top1:.2f}% on {report.n_samples} samples")
    print(f"abstraction accuracy: {report.abstraction_accuracy:.2f}%")
    for key, path in sorted(paths.items()):
        print(f"{key}: {path}")
    return 0


def cmd_predict(args) -> int:
    categories = _read_categories(args.categories)
    header = read_header(args.checkpoint)
    backbone = load_pretrained(header["adapter"], args.weights_path,
                               **header.get("adapter_args", {}))
    model, _epoch, _rng = load_checkpoint(args.checkpoint, backbone)

    side = max(backbone.spec.resolution, MIN_SIDE)
    raster, vector = _load_input(Path(args.input), side, model.config.max_points)
    words = backbone.text.embeddings_for(categories)
    images = backbone.preprocess(raster).unsqueeze(0)
    with torch.no_grad():
        probs, dist = model_predict(model, images, words)
        probs = probs.squeeze(0)
        k = min(args.top_k, len(categories))
        top = torch.topk(probs, k)
        payload = {
            "top_categories": [
                {"category": categories[int(i)], "probability": float(p)}
                for p, i in zip(top.values, top.indices)],
            "abstraction": None if dist is None else {
                "low": float(dist[0, 0]),
                "medium": float(dist[0, 1]),
                "high": float(dist[0, 2]),
            },
        }
        if args.decode:
            features = model.backbone.vision.encode(images, model.prompts.vision_prompts)
            steps = len(vector) if vector is not None else model.config.max_points
            decoded = model.decoder.decode(features, steps)
            payload["decoded_stroke5"] = sequence_to_stroke5_json(decoded.squeeze(0))
    print(json.dumps(payload, indent=2))
    return 0


def _read_categories(spec: str) -> list[str]:
    if spec.startswith("@"):
        lines = Path(spec[1:]).read_text().splitlines()
        names = [line.strip() for line in lines if line.strip()]
    else:
        names = [s for s in spec.split(",") if s]
    if not names:
        raise ValueError("empty category list")
    return names


def _load_input(path: Path, side: int, max_points: int):
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    if path.suffix.lower() in (".json", ".ndjson"):
        line = path.read_text().strip().splitlines()[0]
        record = json.loads(line)
        if "points" in record:
            vector = stroke5_rows_to_sketch(np.asarray(record["points"], dtype=np.float64),
                                            max_points=max_points)
        else:
            rows = np.asarray(record["strokes"], dtype=np.float64).T
            vector = stroke3_to_stroke5(rows, max_points=max_points)
        return render_raster(vector, side=side), vector
    from .datasets import load_raster_image
    return load_raster_image(path, side), None


if __name__ == "__main__":
    sys.exit(main())
