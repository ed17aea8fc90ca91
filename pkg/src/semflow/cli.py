"""Command-line interface: ``semflow {match,train,eval,synth,sweep}``.

Settings are layered: built-in defaults < ``--config`` JSON < flags
(``train --resume`` inserts the checkpoint's stored settings after the defaults).
Exit codes: 0 ok, 2 format/IO error, 3 shape error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .evaluation import EvalConfig, KeypointSet, mask_transfer_scores, pck, transfer_keypoints
from .features import ToyExtractor, load_feature_map
from .geometry import upsample_flow, warp_scalar
from .losses import LossWeights
from .matching import MODES, MatchConfig, match_features
from .model import FlowModel
from .synth import AffineRanges, boxes_to_masks, generate_pair, procedural_corpus, sample_keypoints
from .training import TrainerConfig, TrainingDiverged, load_checkpoint, save_checkpoint, train

logger = logging.getLogger("semflow")

EXIT_OK, EXIT_FORMAT, EXIT_SHAPE, EXIT_NUMERIC = 0, 2, 3, 4

MATCH_DEFAULTS = {"beta": 50.0, "sigma": 5.0, "mode": "kernel_soft"}
MODEL_DEFAULTS = {"grid": 20, "channels": 16, "extractor_seed": 0, "init_scale": 0.1}
LOSS_DEFAULTS = {"lambda_mask": 3.0, "lambda_flow": 16.0, "lambda_smooth": 0.5}
TRAIN_DEFAULTS = {
    "batch_size": 16,
    "epochs": 40,
    "lr": 3e-5,
    "lr_drop_epoch": 30,
    "lr_drop_factor": 5.0,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "seed": 0,
    "flip": True,
}
EVAL_DEFAULTS = {"alpha": 0.1, "normalization": "bbox"}

COMMAND_DEFAULTS = {
    "match": {**MATCH_DEFAULTS, **MODEL_DEFAULTS},
    "train": {**MATCH_DEFAULTS, **MODEL_DEFAULTS, **LOSS_DEFAULTS, **TRAIN_DEFAULTS, "affine_ranges": None},
    "eval": {**MATCH_DEFAULTS, **MODEL_DEFAULTS, **EVAL_DEFAULTS},
    "synth": {"seed": 0, "grid": 20, "affine_ranges": None},
    "sweep": {**MODEL_DEFAULTS, **EVAL_DEFAULTS, "mode": "kernel_soft"},
}


SETTING_HELP = {
    "beta": "softmax temperature",
    "sigma": "Gaussian kernel width in grid cells",
    "mode": "argmax variant",
    "grid": "working grid size",
    "channels": "toy extractor channels",
    "extractor_seed": "seed of the frozen toy extractor",
    "init_scale": "scale of the random adaptation-layer init",
    "lambda_mask": "mask consistency weight",
    "lambda_flow": "flow consistency weight",
    "lambda_smooth": "smoothness weight",
    "batch_size": "pairs per Adam step",
    "epochs": "training epochs",
    "lr": "initial learning rate",
    "lr_drop_epoch": "epoch at which the learning rate drops",
    "lr_drop_factor": "learning-rate divisor after the drop",
    "adam_beta1": "Adam first-moment decay",
    "adam_beta2": "Adam second-moment decay",
    "seed": "random seed",
    "flip": "random horizontal flips",
    "alpha": "PCK tolerance",
    "normalization": "PCK threshold reference",
}


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _require_files(*paths):
    """Fail fast, before any work, on inputs that do not exist."""
    for p in paths:
        if p and not Path(p).is_file():
            raise CLIError(f"{p}: no such file", EXIT_FORMAT)


def _str2bool(s):
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


_TYPES = {bool: _str2bool, int: int, float: float, str: str}


def _add_settings(p, command):
    """One flag per setting; the flag default is None so layering can tell it was unset."""
    for key, default in COMMAND_DEFAULTS[command].items():
        if key == "affine_ranges":
            continue
        flag = "--" + key.replace("_", "-")
        kwargs = {"dest": key, "default": None, "help": f"{SETTING_HELP[key]} (default: {default})"}
        if key == "mode":
            kwargs["choices"] = MODES
        elif key == "normalization":
            kwargs["choices"] = ("img", "bbox")
        kwargs["type"] = _TYPES[type(default)]
        p.add_argument(flag, **kwargs)
    p.add_argument("--config", help="JSON file with settings (default: none)")


def _settings(args, command, base=None):
    merged = dict(COMMAND_DEFAULTS[command])
    merged.update({k: v for k, v in (base or {}).items() if k in merged})
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise CLIError(f"{args.config}: cannot read config ({exc.strerror})", EXIT_FORMAT) from exc
        except json.JSONDecodeError as exc:
            raise CLIError(f"{args.config}: invalid JSON ({exc.msg})", EXIT_FORMAT) from exc
        if not isinstance(cfg, dict):
            raise CLIError(f"{args.config}: config must be a JSON object", EXIT_FORMAT)
        unknown = set(cfg) - set(merged)
        if unknown:
            raise CLIError(f"{args.config}: unknown config keys {sorted(unknown)}", EXIT_FORMAT)
        merged.update(cfg)
    for key in COMMAND_DEFAULTS[command]:
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    return merged


def _ranges(s):
    return AffineRanges.from_dict(s["affine_ranges"]) if s.get("affine_ranges") else AffineRanges()


def _match_cfg(s):
    try:
        return MatchConfig(float(s["beta"]), float(s["sigma"]), s["mode"])
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_SHAPE) from exc


def _load_model(args, s):
    if getattr(args, "checkpoint", None):
        try:
            model, _, _ = load_checkpoint(args.checkpoint)
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise CLIError(f"{args.checkpoint}: cannot load checkpoint ({exc})", EXIT_FORMAT) from exc
        return model
    extractor = ToyExtractor(int(s["grid"]), int(s["channels"]), int(s["extractor_seed"]))
    return FlowModel(extractor, seed=None)


def _read_input(path):
    """An image (PGM/PPM) or SFNF feature map, by magic bytes."""
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
    except OSError as exc:
        raise io.FormatError(f"{path}: cannot read ({exc.strerror})") from exc
    if magic == b"SFNF":
        return "features", load_feature_map(path)
    return "image", io.read_pnm(path)


def _ensure_output(path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return path


def cmd_match(args):
    _require_files(args.src, args.tgt, *args.src_extra, *args.tgt_extra, args.src_mask, args.config)
    s = _settings(args, "match")
    cfg = _match_cfg(s)
    kinds, data = zip(*(_read_input(p) for p in (args.src, args.tgt)))
    if kinds[0] != kinds[1]:
        raise CLIError("source and target must both be images or both feature maps", EXIT_SHAPE)
    if kinds[0] == "features":
        src_levels = [data[0]] + [load_feature_map(p) for p in args.src_extra]
        tgt_levels = [data[1]] + [load_feature_map(p) for p in args.tgt_extra]
        fs, ft = match_features(src_levels, tgt_levels, cfg)
    else:
        model = _load_model(args, s)
        fs, ft = model.flows(data[0], data[1], cfg)
    io.save_flow(_ensure_output(args.out_src_flow), fs)
    io.save_flow(_ensure_output(args.out_tgt_flow), ft)
    if args.warp and kinds[0] == "image":
        # resample the source into the target frame along the target-to-source flow
        th, tw = data[1].shape[:2]
        dense = upsample_flow(ft, th, tw)
        src = data[0].astype(np.float64)
        if src.shape[:2] != (th, tw):
            raise CLIError("--warp needs source and target images of equal size", EXIT_SHAPE)
        if src.ndim == 2:
            out = warp_scalar(src, dense)
        else:
            out = np.stack([warp_scalar(src[..., c], dense) for c in range(src.shape[2])], axis=-1)
        io.write_pnm(_ensure_output(args.warp), out)
        if args.src_mask and args.warp_mask:
            m = io.read_mask(args.src_mask)
            io.write_mask(_ensure_output(args.warp_mask), warp_scalar(m, dense) > 0.5)
    logger.info("wrote %s and %s", args.out_src_flow, args.out_tgt_flow)
    return EXIT_OK


def _load_corpus(args):
    if args.procedural:
        return procedural_corpus(args.procedural, seed=args.procedural_seed, size=args.procedural_size)
    if not args.manifest:
        raise CLIError("train needs --manifest or --procedural", EXIT_FORMAT)
    corpus = []
    for e in io.read_manifest(args.manifest):
        img = io.read_pnm(e["image"])
        if "mask" in e:
            mask = io.read_mask(e["mask"])
        elif "boxes" in e:
            mask = boxes_to_masks(io.read_boxes_csv(e["boxes"]), *img.shape[:2]).values
        else:
            raise CLIError(f"{args.manifest}: entry for {e['image']} has neither mask nor boxes", EXIT_FORMAT)
        if mask.shape != img.shape[:2]:
            raise CLIError(f"{e.get('mask', e.get('boxes'))}: mask shape {mask.shape} != image {img.shape[:2]}", EXIT_SHAPE)
        corpus.append((img, mask))
    if not corpus:
        raise CLIError(f"{args.manifest}: empty manifest", EXIT_FORMAT)
    return corpus


def cmd_train(args):
    _require_files(args.manifest, args.config)
    if args.resume and not (Path(args.resume) / "index.json").is_file():
        raise CLIError(f"{args.resume}: not a checkpoint directory", EXIT_FORMAT)
    # a resumed run keeps the settings stored with its checkpoint unless overridden
    base = json.loads((Path(args.resume) / "index.json").read_text()).get("config") if args.resume else None
    s = _settings(args, "train", base)
    corpus = _load_corpus(args)
    tcfg = TrainerConfig(
        batch_size=int(s["batch_size"]),
        epochs=int(s["epochs"]),
        lr=float(s["lr"]),
        lr_drop_epoch=int(s["lr_drop_epoch"]),
        lr_drop_factor=float(s["lr_drop_factor"]),
        adam_beta1=float(s["adam_beta1"]),
        adam_beta2=float(s["adam_beta2"]),
        seed=int(s["seed"]),
        flip=bool(s["flip"]),
        affine_ranges=_ranges(s),
    )
    weights = LossWeights(float(s["lambda_mask"]), float(s["lambda_flow"]), float(s["lambda_smooth"]))
    start, adam, history = 0, None, []
    if args.resume:
        model, adam, index = load_checkpoint(args.resume)
        start = (-1 if index.get("epoch") is None else index["epoch"]) + 1
        history = index.get("history", [])
    else:
        extractor = ToyExtractor(int(s["grid"]), int(s["channels"]), int(s["extractor_seed"]))
        model = FlowModel(extractor, seed=tcfg.seed, init_scale=float(s["init_scale"]))
    try:
        result = train(corpus, tcfg, weights, _match_cfg(s), model=model, adam=adam, start_epoch=start)
    except TrainingDiverged as exc:
        dump = Path(args.out) / "diverged.json"
        dump.parent.mkdir(parents=True, exist_ok=True)
        state = {k: (v if k != "weights" else {n: w.tolist() for n, w in v.items()}) for k, v in exc.state.items()}
        dump.write_text(json.dumps(state))
        raise CLIError(f"{exc} (state dumped to {dump})", EXIT_NUMERIC) from exc
    history = history + result.history
    last = history[-1]["epoch"] if history else start - 1
    save_checkpoint(args.out, result.model, result.adam, epoch=last, extra={"history": history, "config": s})
    hist_path = args.history or str(Path(args.out) / "history.csv")
    with open(_ensure_output(hist_path), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["epoch", "loss", "mask", "flow", "smooth", "lr"])
        for r in history:
            wr.writerow([r["epoch"], repr(r["loss"]), repr(r["mask"]), repr(r["flow"]), repr(r["smooth"]), repr(r["lr"])])
    return EXIT_OK


def _eval_pair(entry, model, cfg, ecfg, flow_cache=None):
    """Metrics for one pair-list row; raises on malformed inputs."""
    src = io.read_pnm(entry["source"])
    tgt = io.read_pnm(entry["target"])
    if entry.get("flow"):
        fs = io.load_flow(entry["flow"])
    else:
        fs, _ = model.flows(src, tgt, cfg)
    out = {"source": entry["source"], "target": entry["target"]}
    if entry.get("source_kps") and entry.get("target_kps"):
        bbox = None
        if entry.get("target_bbox"):
            boxes = io.read_boxes_csv(entry["target_bbox"])
            if len(boxes) != 1:
                raise io.FormatError(f"{entry['target_bbox']}: expected exactly one box")
            bbox = boxes[0]
        kps = KeypointSet(io.read_keypoints_csv(entry["source_kps"]), *src.shape[:2])
        gt = KeypointSet(io.read_keypoints_csv(entry["target_kps"]), *tgt.shape[:2], bbox=bbox)
        pred = transfer_keypoints(kps, fs, src.shape[:2], tgt.shape[:2])
        out["pck"] = pck(pred, gt, ecfg)
    if entry.get("source_mask") and entry.get("target_mask"):
        ms, mt = io.read_mask(entry["source_mask"]), io.read_mask(entry["target_mask"])
        dense = upsample_flow(fs, *ms.shape)
        lt, iou = mask_transfer_scores(ms, warp_scalar(mt, dense) > 0.5)
        out["lt_acc"], out["iou"] = lt, iou
    return out


def _evaluate(pairs, model, cfg, ecfg):
    rows, codes = [], []
    for entry in pairs:
        try:
            row = _eval_pair(entry, model, cfg, ecfg)
            row["status"] = "ok"
        except io.FormatError as exc:
            row, code = {"status": "failed", "error": str(exc)}, EXIT_FORMAT
            codes.append(code)
        except ValueError as exc:
            row, code = {"status": "failed", "error": str(exc)}, EXIT_SHAPE
            codes.append(code)
        row.setdefault("source", entry.get("source"))
        row.setdefault("target", entry.get("target"))
        rows.append(row)
    means = {}
    for key in ("pck", "lt_acc", "iou"):
        vals = [r[key] for r in rows if key in r]
        means[key] = float(np.mean(vals)) if vals else None
    return rows, means, max(codes, default=EXIT_OK)


def cmd_eval(args):
    _require_files(args.pairs, args.config)
    s = _settings(args, "eval")
    cfg = _match_cfg(s)
    ecfg = EvalConfig(float(s["alpha"]), s["normalization"])
    pairs = io.read_pairs_csv(args.pairs)
    model = _load_model(args, s)
    rows, means, code = _evaluate(pairs, model, cfg, ecfg)
    report = {
        "config": {"match": vars_of(cfg), "eval": vars_of(ecfg)},
        "pairs": rows,
        "mean": means,
        "n_pairs": len(rows),
        "n_failed": sum(r["status"] != "ok" for r in rows),
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(_ensure_output(args.out)).write_text(text + "\n")
    else:
        print(text)
    return code


def vars_of(dc):
    return {k: getattr(dc, k) for k in dc.__dataclass_fields__}


def cmd_synth(args):
    _require_files(args.image, args.mask, args.config)
    s = _settings(args, "synth")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.procedural:
        manifest = []
        for i, (img, mask) in enumerate(procedural_corpus(args.procedural, seed=int(s["seed"]), size=args.size)):
            io.write_pnm(out / f"image_{i:03d}.ppm", img)
            io.write_mask(out / f"mask_{i:03d}.pgm", mask)
            manifest.append({"image": f"image_{i:03d}.ppm", "mask": f"mask_{i:03d}.pgm"})
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return EXIT_OK
    if not (args.image and args.mask):
        raise CLIError("synth needs --image and --mask, or --procedural N", EXIT_FORMAT)
    img, mask = io.read_pnm(args.image), io.read_mask(args.mask)
    if img.shape[:2] != mask.shape:
        raise CLIError(f"{args.mask}: mask shape {mask.shape} != image {img.shape[:2]}", EXIT_SHAPE)
    pair = generate_pair(img, mask, int(s["seed"]), _ranges(s), int(s["grid"]))
    ext = ".pgm" if img.ndim == 2 else ".ppm"
    io.write_pnm(out / f"source{ext}", pair.src)
    io.write_pnm(out / f"target{ext}", pair.tgt)
    io.write_mask(out / "source_mask.pgm", pair.src_mask)
    io.write_mask(out / "target_mask.pgm", pair.tgt_mask)
    io.save_flow(out / "gt_flow.sffl", pair.gt_flow)
    # keypoints on the source foreground whose images stay inside the target frame
    h, w = mask.shape
    xy = sample_keypoints(mask, 4 * args.keypoints, np.random.default_rng(int(s["seed"])))
    moved = pair.transform.apply(xy)
    keep = (moved[:, 0] >= 0) & (moved[:, 0] <= w - 1) & (moved[:, 1] >= 0) & (moved[:, 1] <= h - 1)
    names = [f"kp{i}" for i in range(int(keep.sum()))][: args.keypoints]
    io.write_keypoints_csv(out / "source_kps.csv", list(zip(names, *xy[keep][: len(names)].T)))
    io.write_keypoints_csv(out / "target_kps.csv", list(zip(names, *moved[keep][: len(names)].T)))
    ys, xs = np.nonzero(pair.tgt_mask)
    (out / "target_bbox.csv").write_text(f"{xs.min()},{ys.min()},{xs.max() + 1},{ys.max() + 1}\n")
    (out / "pairs.csv").write_text(
        "source,target,source_kps,target_kps,target_bbox,source_mask,target_mask\n"
        f"source{ext},target{ext},source_kps.csv,target_kps.csv,target_bbox.csv,source_mask.pgm,target_mask.pgm\n"
    )
    t = pair.transform
    (out / "transform.json").write_text(
        json.dumps({k: getattr(t, k) for k in ("a11", "a12", "a21", "a22", "tx", "ty")}, indent=2) + "\n"
    )
    return EXIT_OK


def _parse_range(text):
    """``a,b,c`` list or ``start:stop:step`` inclusive range."""
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        if step <= 0:
            raise CLIError(f"range step must be positive: {text}", EXIT_SHAPE)
        vals = list(np.arange(start, stop + step / 2, step))
    else:
        vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals or min(vals) <= 0:
        raise CLIError(f"range values must be positive: {text}", EXIT_SHAPE)
    return [round(float(v), 10) for v in vals]


def cmd_sweep(args):
    _require_files(args.pairs, args.config)
    s = _settings(args, "sweep")
    ecfg = EvalConfig(float(s["alpha"]), s["normalization"])
    betas, sigmas = _parse_range(args.betas), _parse_range(args.sigmas)
    pairs = io.read_pairs_csv(args.pairs)
    if not pairs:
        raise CLIError(f"{args.pairs}: no validation pairs", EXIT_FORMAT)
    model = _load_model(args, s)
    grid = []
    for b in betas:
        for sg in sigmas:
            _, means, code = _evaluate(pairs, model, MatchConfig(b, sg, s["mode"]), ecfg)
            if code:
                raise CLIError(f"{args.pairs}: a validation pair failed to evaluate", code)
            grid.append((b, sg, means["pck"]))
    best = max(range(len(grid)), key=lambda i: (grid[i][2], -i))
    with open(_ensure_output(args.out), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["beta", "sigma", "mean_pck", "best"])
        for i, (b, sg, v) in enumerate(grid):
            wr.writerow([repr(b), repr(sg), repr(v), int(i == best)])
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="semflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress (default: False)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="compute bidirectional flows for one pair")
    p.add_argument("src", help="source image (PGM/PPM) or SFNF feature map")
    p.add_argument("tgt", help="target image (PGM/PPM) or SFNF feature map")
    p.add_argument("--src-extra", action="append", default=[], help="extra source feature level (SFNF) (default: none)")
    p.add_argument("--tgt-extra", action="append", default=[], help="extra target feature level (SFNF) (default: none)")
    p.add_argument("--out-src-flow", required=True, help="SFFL output for the source-to-target flow")
    p.add_argument("--out-tgt-flow", required=True, help="SFFL output for the target-to-source flow")
    p.add_argument("--checkpoint", help="trained checkpoint directory (default: untrained layers)")
    p.add_argument("--warp", help="write the source image warped into the target frame (default: none)")
    p.add_argument("--src-mask", help="source mask to warp alongside --warp (default: none)")
    p.add_argument("--warp-mask", help="output path for the warped source mask (default: none)")
    _add_settings(p, "match")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("train", help="train adaptation layers on synthetic pairs")
    p.add_argument("--manifest", help="JSON list of {image, mask|boxes} (default: none)")
    p.add_argument("--procedural", type=int, default=0, help="use N procedural examples instead (default: 0)")
    p.add_argument("--procedural-seed", type=int, default=0, help="(default: 0)")
    p.add_argument("--procedural-size", type=int, default=160, help="(default: 160)")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--history", help="loss history CSV (default: <out>/history.csv)")
    p.add_argument("--resume", help="checkpoint directory to resume from (default: none)")
    _add_settings(p, "train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PCK / LT-ACC / IoU over a pair list")
    p.add_argument("pairs", help="CSV with source,target[,source_kps,target_kps,target_bbox,source_mask,target_mask,flow]")
    p.add_argument("--checkpoint", help="trained checkpoint directory (default: untrained layers)")
    p.add_argument("--out", help="JSON report path (default: stdout)")
    _add_settings(p, "eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic pair or a procedural corpus")
    p.add_argument("--image", help="source image (default: none)")
    p.add_argument("--mask", help="source mask (default: none)")
    p.add_argument("--procedural", type=int, default=0, help="write N procedural examples and a manifest (default: 0)")
    p.add_argument("--size", type=int, default=160, help="procedural image size (default: 160)")
    p.add_argument("--keypoints", type=int, default=10, help="keypoints written for a single pair (default: 10)")
    p.add_argument("--out-dir", required=True, help="output directory")
    _add_settings(p, "synth")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="grid search over (beta, sigma)")
    p.add_argument("pairs", help="validation pair-list CSV (as for eval)")
    p.add_argument("--betas", default="10:100:10", help="list a,b,c or range start:stop:step (default: 10:100:10)")
    p.add_argument("--sigmas", default="1:10:1", help="list or range (default: 1:10:1)")
    p.add_argument("--checkpoint", help="trained checkpoint directory (default: untrained layers)")
    p.add_argument("--out", required=True, help="CSV output path")
    _add_settings(p, "sweep")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except io.FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE


if __name__ == "__main__":
    sys.exit(main())
