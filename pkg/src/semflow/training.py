"""Adam, the desk-scale trainer and checkpointing."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .evaluation import EvalConfig, KeypointSet, pck, transfer_keypoints
from .io import load_sfnf, save_sfnf
from .losses import LossWeights, total_loss
from .matching import MatchConfig
from .model import FlowModel
from .synth import AffineRanges, augment_flip, generate_pair, mask_to_grid, sample_keypoints

__all__ = [
    "AdamState",
    "adam_step",
    "TrainerConfig",
    "TrainingDiverged",
    "TrainResult",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "synthetic_eval_set",
    "evaluate_pck",
]

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params, grads, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Returns ``(new_params, state)``."""
    if set(params) != set(grads):
        raise ValueError("params and grads have different keys")
    state.step += 1
    t = state.step
    new = {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        if g.shape != np.shape(p):
            raise ValueError(f"gradient for {k!r} has shape {g.shape}, parameter {np.shape(p)}")
        m = state.m.get(k, np.zeros_like(g))
        v = state.v.get(k, np.zeros_like(g))
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        state.m[k], state.v[k] = m, v
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        new[k] = p - lr * mhat / (np.sqrt(vhat) + eps)
    return new, state


@dataclass
class TrainerConfig:
    batch_size: int = 16
    epochs: int = 40
    lr: float = 3e-5
    lr_drop_epoch: int = 30
    lr_drop_factor: float = 5.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    seed: int = 0
    flip: bool = True
    affine_ranges: AffineRanges = field(default_factory=AffineRanges)

    def __post_init__(self):
        if isinstance(self.affine_ranges, dict):
            self.affine_ranges = AffineRanges.from_dict(self.affine_ranges)
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown trainer config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["affine_ranges"]["scale"] = list(d["affine_ranges"]["scale"])
        return d

    def lr_at(self, epoch):
        return self.lr / self.lr_drop_factor if epoch >= self.lr_drop_epoch else self.lr


class TrainingDiverged(RuntimeError):
    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


@dataclass
class TrainResult:
    model: FlowModel
    history: list  # per-epoch dicts
    adam: AdamState


def _pair_seed(seed, epoch, index):
    return int(np.random.SeedSequence([seed, epoch, index]).generate_state(1)[0])


def train(
    corpus,
    cfg: TrainerConfig = TrainerConfig(),
    weights: LossWeights = LossWeights(),
    match_cfg: MatchConfig = MatchConfig(),
    model: FlowModel | None = None,
    adam: AdamState | None = None,
    start_epoch=0,
    callback=None,
):
    """Train the adaptation layers on synthetic pairs drawn from ``corpus``.

    corpus : sequence of (image, mask) full-resolution examples.
    callback : optional ``callback(epoch, record, model)`` after every epoch.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    if match_cfg.mode == "discrete":
        logger.warning("discrete argmax carries no gradient; training will not change the weights")
    model = model or FlowModel(seed=cfg.seed)
    adam = adam or AdamState()
    grid = model.grid
    src_cache = {}
    history = []
    for epoch in range(start_epoch, cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(corpus))
        lr = cfg.lr_at(epoch)
        sums = np.zeros(4)
        count = 0
        for b in range(0, len(order), cfg.batch_size):
            batch = order[b : b + cfg.batch_size]
            model.zero_grad()
            batch_loss = None
            terms = np.zeros(4)
            for idx in batch:
                img, mask = corpus[idx]
                pseed = _pair_seed(cfg.seed, epoch, int(idx))
                pair = generate_pair(img, mask, pseed, cfg.affine_ranges, grid)
                flipped = cfg.flip and np.random.default_rng(pseed).random() < 0.5
                if flipped:
                    pair = augment_flip(pair)
                key = (int(idx), flipped)
                if key not in src_cache:
                    src_cache[key] = (model.raw_levels(pair.src), mask_to_grid(pair.src_mask, grid))
                src_raw, ms = src_cache[key]
                tgt_raw = model.raw_levels(pair.tgt)
                mt = mask_to_grid(pair.tgt_mask, grid)
                fs, ft = model.flow_nodes(src_raw, tgt_raw, match_cfg)
                rep = total_loss(fs, ft, ms, mt, weights)
                terms += [rep.total, rep.mask_term, rep.flow_term, rep.smooth_term]
                batch_loss = rep.node if batch_loss is None else ad.add(batch_loss, rep.node)
            batch_loss = ad.mul(batch_loss, 1.0 / len(batch))
            if not np.isfinite(batch_loss.value):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch starting {b}",
                    {"epoch": epoch, "batch": batch.tolist(), "weights": model.get_weights()},
                )
            batch_loss.backward()
            params = model.parameters()
            grads = {k: p.grad for k, p in params.items()}
            new, adam = adam_step(
                {k: p.value for k, p in params.items()}, grads, adam, lr, cfg.adam_beta1, cfg.adam_beta2
            )
            for k, p in params.items():
                p.value = new[k]
            sums += terms
            count += len(batch)
        mean = sums / count
        record = {"epoch": epoch, "loss": float(mean[0]), "mask": float(mean[1]), "flow": float(mean[2]), "smooth": float(mean[3]), "lr": lr}
        history.append(record)
        logger.info("epoch %d loss %.5f (mask %.4f flow %.4f smooth %.4f)", epoch, *mean)
        if callback is not None:
            callback(epoch, record, model)
    return TrainResult(model, history, adam)


def save_checkpoint(directory, model: FlowModel, adam: AdamState | None = None, epoch=None, extra=None):
    """Write one SFNF blob per weight (and Adam moment) plus ``index.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    index = {
        "epoch": epoch,
        "grid": model.grid,
        "channels": model.extractor.channels,
        "extractor_seed": model.extractor.seed,
        "levels": model.levels,
        "weights": {},
        "adam": None,
    }
    for name, value in model.get_weights().items():
        fn = f"{name}.sfnf"
        save_sfnf(d / fn, value.reshape(1, 1, -1))
        index["weights"][name] = {"file": fn, "shape": list(value.shape)}
    if adam is not None:
        index["adam"] = {"step": adam.step, "m": {}, "v": {}}
        for kind in ("m", "v"):
            for name, value in getattr(adam, kind).items():
                fn = f"adam.{kind}.{name}.sfnf"
                save_sfnf(d / fn, value.reshape(1, 1, -1))
                index["adam"][kind][name] = {"file": fn, "shape": list(value.shape)}
    if extra:
        index.update(extra)
    (d / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True))


def _load_blob(d, entry):
    # weights are stored in single precision
    return load_sfnf(d / entry["file"]).reshape(entry["shape"])


def load_checkpoint(directory):
    """Return ``(model, adam_state_or_None, index)``."""
    from .features import ToyExtractor

    d = Path(directory)
    index = json.loads((d / "index.json").read_text())
    extractor = ToyExtractor(index["grid"], index["channels"], index["extractor_seed"])
    model = FlowModel(extractor, seed=None, levels=index["levels"])
    model.set_weights({k: _load_blob(d, e) for k, e in index["weights"].items()})
    adam = None
    if index.get("adam"):
        a = index["adam"]
        adam = AdamState(
            {k: _load_blob(d, e) for k, e in a["m"].items()},
            {k: _load_blob(d, e) for k, e in a["v"].items()},
            a["step"],
        )
    return model, adam, index


def synthetic_eval_set(corpus, n_pairs, seed, ranges: AffineRanges = AffineRanges(), grid=20, n_keypoints=10):
    """Held-out synthetic pairs with keypoints and ground-truth target positions.

    Returns a list of dicts with ``pair``, ``src_kps`` and ``tgt_kps``; the
    target bbox is the bounding box of the warped mask.
    """
    out = []
    for i in range(n_pairs):
        img, mask = corpus[i % len(corpus)]
        pseed = _pair_seed(seed, 10_000, i)
        pair = generate_pair(img, mask, pseed, ranges, grid)
        h, w = mask.shape
        rng = np.random.default_rng(pseed)
        xy = sample_keypoints(mask, 4 * n_keypoints, rng)
        moved = pair.transform.apply(xy)
        inside = (moved[:, 0] >= 0) & (moved[:, 0] <= w - 1) & (moved[:, 1] >= 0) & (moved[:, 1] <= h - 1)
        xy, moved = xy[inside][:n_keypoints], moved[inside][:n_keypoints]
        ys, xs = np.nonzero(pair.tgt_mask)
        bbox = (float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))
        out.append(
            {
                "pair": pair,
                "src_kps": KeypointSet.from_array(xy, h, w),
                "tgt_kps": KeypointSet.from_array(moved, h, w, bbox),
            }
        )
    return out


def evaluate_pck(flow_fn, eval_set, eval_cfg: EvalConfig = EvalConfig()):
    """Mean PCK of keypoints transferred with ``flow_fn(src, tgt)`` flows."""
    scores = []
    for item in eval_set:
        pair = item["pair"]
        flow = flow_fn(pair.src, pair.tgt)
        dims = pair.src.shape[:2]
        pred = transfer_keypoints(item["src_kps"], flow, dims, pair.tgt.shape[:2])
        scores.append(pck(pred, item["tgt_kps"], eval_cfg))
    return float(np.mean(scores))
