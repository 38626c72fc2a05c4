"""Command-line entry point: ``inspyre {synth,train,infer,eval,plot}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np
import torch

from . import __version__
from .blending import ResizePolicy, blend, predict_plain
from .config import RunConfig, dump_config, load_config
from .data import SHAPES, SaliencyDataset, SynthSpec, generate, load_image, load_map, save_map, to_tensor_images
from .errors import InvalidArgument
from .metrics import ALL_METRICS, evaluate_pairs, match_stems, mba_radii
from .model import CheckpointError, InSPyReNet, load_checkpoint
from .supervision import train

log = logging.getLogger("inspyre")

EXIT_OK, EXIT_FAIL = 0, 1


def provenance(cfg: RunConfig | None, argv: list, **extra) -> dict:
    rec = {"tool": "inspyre", "version": __version__, "argv": list(argv), "created": time.strftime("%Y-%m-%dT%H:%M:%S")}
    if cfg is not None:
        rec["config"] = json.loads(json.dumps(cfg.to_dict()))
        rec["seed"] = cfg.seed
    rec.update(extra)
    return rec


def write_json(path: str, obj) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2)
    os.replace(tmp, path)


def write_csv(path: str, rows: list, columns: list) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({c: r[c] for c in columns})
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_images=args.n,
        size=args.size,
        seed=args.seed,
        textured=not args.plain,
        shapes=tuple(args.shapes.split(",")) if args.shapes else SHAPES,
        supersample=args.supersample,
    )
    path = generate(spec, args.out)
    print(path)
    return EXIT_OK


TRAIN_OVERRIDES = {
    "seed": "seed",
    "iters": "schedule.max_iters",
    "batch_size": "schedule.batch_size",
    "lr": "schedule.base_lr",
    "warmup": "schedule.warmup_iters",
    "eval_every": "schedule.eval_every",
}


def _train_config(args) -> RunConfig:
    cfg = load_config(args.config)
    ov = {v: getattr(args, k) for k, v in TRAIN_OVERRIDES.items()}
    if args.train_size is not None:
        ov["model.train_h"] = ov["model.train_w"] = args.train_size
    if args.no_stop_grad:
        ov["model.stop_grad"] = False
    if args.no_pred_pyramid:
        ov["model.pred_pyramid"] = False
    if args.no_pc_loss:
        ov["loss.use_pc"] = False
    if args.gt_resize_not_reduce:
        ov["loss.gt_pyramid"] = False
    if args.no_augment:
        ov["use_augment"] = False
    cfg = cfg.with_overrides(ov)
    cfg.schedule = replace(cfg.schedule, seed=cfg.seed)
    return cfg


def cmd_train(args) -> int:
    if not os.path.isdir(args.data):
        raise FileNotFoundError(f"data directory {args.data} does not exist")
    cfg = _train_config(args)
    ds = SaliencyDataset.from_dir(args.data)
    size = ds.images[0].shape[:2]
    if size != (cfg.model.train_h, cfg.model.train_w):
        raise InvalidArgument(
            f"training images are {size[0]}x{size[1]} but the model trains at "
            f"{cfg.model.train_h}x{cfg.model.train_w}; set --train-size"
        )
    os.makedirs(args.out, exist_ok=True)
    prov = provenance(cfg, args.argv, data=os.path.abspath(args.data))
    write_json(os.path.join(args.out, "provenance.json"), prov)
    with open(os.path.join(args.out, "config.yaml"), "w") as fh:
        fh.write(dump_config(cfg))
    torch.manual_seed(cfg.seed)
    model = InSPyReNet(cfg.model)
    res = train(
        model,
        ds,
        cfg.schedule,
        cfg.loss,
        out_dir=args.out,
        augment_cfg=cfg.augment if cfg.use_augment else None,
        provenance=prov,
    )
    print(json.dumps({"iters": res.iters, "best_train_mae": res.best_mae, "best": res.best_path, "last": res.last_path}))
    return EXIT_OK


def _input_files(path: str) -> list:
    if os.path.isdir(path):
        exts = (".png", ".jpg", ".jpeg", ".bmp")
        files = [os.path.join(path, f) for f in sorted(os.listdir(path)) if f.lower().endswith(exts)]
        if not files:
            raise FileNotFoundError(f"no images in {path}")
        return files
    if not os.path.exists(path):
        raise FileNotFoundError(f"input {path} does not exist")
    return [path]


def cmd_infer(args) -> int:
    model, meta = load_checkpoint(args.ckpt)
    train_shape = (model.cfg.train_h, model.cfg.train_w)
    policy = ResizePolicy(L=args.L, skip_below=args.skip_below, train_shape=train_shape)
    files = _input_files(args.input)
    os.makedirs(args.output, exist_ok=True)
    log_path = os.path.join(args.output, "infer_log.ndjson")
    records = []
    for f in files:
        img = load_image(f)
        x = to_tensor_images(img)
        if args.blend:
            s, plan = blend(x, model, policy)
            path, detail = plan.path, plan.describe()
        else:
            s = predict_plain(x, model, train_shape)
            path, detail = "lr", f"lr path: {img.shape[:2]} -> {train_shape} -> upsample"
        stem = os.path.splitext(os.path.basename(f))[0]
        save_map(os.path.join(args.output, stem + ".png"), s[0, 0].numpy())
        log.info("%s: %s", stem, detail)
        records.append({"stem": stem, "path": path, "detail": detail, "size": list(img.shape[:2])})
    with open(log_path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
    write_json(
        os.path.join(args.output, "provenance.json"),
        provenance(
            None,
            args.argv,
            checkpoint=os.path.abspath(args.ckpt),
            checkpoint_meta=meta,
            resize_policy={"L": policy.L, "skip_below": policy.skip_below, "train_shape": list(train_shape)},
            blend=args.blend,
        ),
    )
    return EXIT_OK


def _parse_metrics(text: str) -> tuple:
    ms = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in ms if m not in ALL_METRICS]
    if bad or not ms:
        raise InvalidArgument(f"--metrics takes a comma list drawn from {','.join(ALL_METRICS)}, got {text!r}")
    return ms


def cmd_eval(args) -> int:
    from .plotting import plot_f_curve, plot_metric_rows

    metrics = _parse_metrics(args.metrics)
    for d in (args.pred_dir, args.gt_dir):
        if not os.path.isdir(d):
            raise FileNotFoundError(f"{d} is not a directory")
    matched, unmatched = match_stems(args.pred_dir, args.gt_dir)
    for stem in unmatched:
        log.warning("no counterpart for %s; skipped", stem)
    if not matched:
        raise InvalidArgument("no prediction/ground-truth stems matched")

    def pairs():
        for stem, p, g in matched:
            s, gt = load_map(p), load_map(g)
            if s.shape != gt.shape:
                raise InvalidArgument(f"{stem}: prediction {s.shape} and ground truth {gt.shape} differ")
            yield stem, s, (gt >= 0.5).astype(np.float64)

    report = evaluate_pairs(pairs(), metrics, with_curve=args.fcurve)
    base = os.path.splitext(args.report)[0]
    h, w = load_map(matched[0][2]).shape
    out = {
        "summary": report.summary,
        "n_images": len(report.rows),
        "metrics": list(metrics),
        "unmatched": unmatched,
        "mba_fallback": report.fallback_stems,
        "mba_radii_first_image": mba_radii(h, w).tolist() if "mba" in metrics else None,
        "mba_schedule": "5 radii linearly spaced from 1 px to 2% of the image diagonal",
        "f_beta2": 0.3,
        "rows": report.rows,
        "provenance": provenance(None, args.argv, pred_dir=os.path.abspath(args.pred_dir), gt_dir=os.path.abspath(args.gt_dir)),
    }
    write_json(args.report, out)
    cols = ["stem"] + [k for k in ("s_measure", "f_max", "mae", "mba") if k in report.rows[0]]
    write_csv(base + ".csv", report.rows, cols)
    figures = []
    if not args.no_figures:
        figures.append(plot_metric_rows(report.rows, base + "_metrics.png"))
    if report.f_curve is not None:
        curve_rows = [
            {"threshold": t, "precision": p, "recall": r, "f": f}
            for t, p, r, f in zip(*(report.f_curve[k] for k in ("threshold", "precision", "recall", "f")))
        ]
        write_csv(base + "_fcurve.csv", curve_rows, ["threshold", "precision", "recall", "f"])
        if not args.no_figures:
            figures.append(plot_f_curve(report.f_curve, base + "_fcurve.png"))
    print(json.dumps({"summary": report.summary, "report": args.report, "figures": figures}))
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_f_curve, plot_training_log, read_ndjson

    if not args.train_log and not args.fcurve:
        raise InvalidArgument("plot needs --train-log and/or --fcurve")
    written = []
    if args.train_log:
        written.append(plot_training_log(read_ndjson(args.train_log), os.path.join(args.out, "training.png")))
    if args.fcurve:
        with open(args.fcurve, newline="") as fh:
            rows = list(csv.DictReader(fh))
        curve = {k: [float(r[k]) for r in rows] for k in ("threshold", "precision", "recall", "f")}
        written.append(plot_f_curve(curve, os.path.join(args.out, "fcurve.png")))
    for p in written:
        print(p)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="inspyre", description="Saliency pyramid training, HR inference and evaluation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="render a synthetic image/mask dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--shapes", help="comma list from disk,rounded_rect,star,blob")
    s.add_argument("--plain", action="store_true", help="flat colours instead of textures")
    s.add_argument("--supersample", type=int, default=4)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a model on an images/ + masks/ directory")
    t.add_argument("--config", help="YAML run configuration")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--iters", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--warmup", type=int)
    t.add_argument("--eval-every", type=int)
    t.add_argument("--train-size", type=int, help="square training resolution")
    t.add_argument("--no-augment", action="store_true")
    t.add_argument("--no-stop-grad", action="store_true")
    t.add_argument("--no-pc-loss", action="store_true")
    t.add_argument("--no-pred-pyramid", action="store_true")
    t.add_argument("--gt-resize-not-reduce", action="store_true")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="write saliency maps for an image or a directory")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--input", required=True)
    i.add_argument("--output", required=True)
    i.add_argument("--blend", action="store_true", help="LR/HR pyramid blending when the image is large enough")
    i.add_argument("--L", type=int, default=1280, help="shorter side of the HR pass")
    i.add_argument("--skip-below", type=int, default=512)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="score predictions against ground truth, paired by file stem")
    e.add_argument("--pred-dir", required=True)
    e.add_argument("--gt-dir", required=True)
    e.add_argument("--report", required=True, help="JSON report path; CSV and figures are written beside it")
    e.add_argument("--metrics", default=",".join(ALL_METRICS))
    e.add_argument("--fcurve", action="store_true", help="also write the 256-threshold F-curve table")
    e.add_argument("--no-figures", action="store_true")
    e.set_defaults(func=cmd_eval)

    q = sub.add_parser("plot", help="render figures from a training log or an F-curve table")
    q.add_argument("--train-log")
    q.add_argument("--fcurve")
    q.add_argument("--out", required=True, help="output directory")
    q.set_defaults(func=cmd_plot)
    return p


def main(argv: list | None = None) -> int:
    args = build_parser().parse_args(argv)
    args.argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose or args.command == "infer" else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (InvalidArgument, OSError, CheckpointError, FloatingPointError) as e:
        print(f"inspyre {args.command}: error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
