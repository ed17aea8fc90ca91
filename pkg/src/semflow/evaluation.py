"""Correspondence metrics and downstream uses of predicted flow."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import check_flow, warp_scalar
from .losses import Mask, as_mask

__all__ = [
    "KeypointSet",
    "EvalConfig",
    "pixel_to_grid",
    "grid_to_pixel",
    "sample_flow",
    "transfer_keypoints",
    "pck",
    "mask_transfer_scores",
    "propagate_keypoints",
    "cosegment",
]


@dataclass(frozen=True)
class KeypointSet:
    """Named keypoints in pixel coordinates of one image."""

    points: tuple  # of (name, x, y)
    image_h: int
    image_w: int
    bbox: tuple | None = None  # (x0, y0, x1, y1)

    def __post_init__(self):
        pts = tuple((str(n), float(x), float(y)) for n, x, y in self.points)
        names = [p[0] for p in pts]
        if len(set(names)) != len(names):
            raise ValueError("keypoint names must be unique")
        for n, x, y in pts:
            if not (0 <= x <= self.image_w - 1 and 0 <= y <= self.image_h - 1):
                raise ValueError(f"keypoint {n!r} at ({x:g}, {y:g}) outside {self.image_w}x{self.image_h} image")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_array(cls, xy, image_h, image_w, bbox=None, names=None):
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        names = names or [str(i) for i in range(len(xy))]
        return cls(tuple(zip(names, xy[:, 0], xy[:, 1])), image_h, image_w, bbox)

    @property
    def names(self):
        return [p[0] for p in self.points]

    @property
    def xy(self):
        return np.array([[p[1], p[2]] for p in self.points]).reshape(-1, 2)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class EvalConfig:
    alpha: float = 0.1
    normalization: str = "bbox"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.normalization not in ("img", "bbox"):
            raise ValueError(f"normalization must be 'img' or 'bbox', got {self.normalization!r}")


def pixel_to_grid(xy, image_hw, grid_hw):
    """Cell-center aligned map from pixel to grid coordinates."""
    xy = np.asarray(xy, dtype=np.float64)
    s = np.array([grid_hw[1] / image_hw[1], grid_hw[0] / image_hw[0]])
    return (xy + 0.5) * s - 0.5


def grid_to_pixel(g, image_hw, grid_hw):
    g = np.asarray(g, dtype=np.float64)
    s = np.array([image_hw[1] / grid_hw[1], image_hw[0] / grid_hw[0]])
    return (g + 0.5) * s - 0.5


def sample_flow(flow, g):
    """Bilinear flow at continuous grid points (n, 2), clamped to the grid."""
    flow = check_flow(flow)
    h, w = flow.shape[:2]
    g = np.asarray(g, dtype=np.float64).reshape(-1, 2)
    x = np.clip(g[:, 0], 0, w - 1)
    y = np.clip(g[:, 1], 0, h - 1)
    x0 = np.minimum(np.floor(x).astype(int), w - 1)
    y0 = np.minimum(np.floor(y).astype(int), h - 1)
    x1, y1 = np.minimum(x0 + 1, w - 1), np.minimum(y0 + 1, h - 1)
    fx, fy = (x - x0)[:, None], (y - y0)[:, None]
    return (
        flow[y0, x0] * (1 - fx) * (1 - fy)
        + flow[y0, x1] * fx * (1 - fy)
        + flow[y1, x0] * (1 - fx) * fy
        + flow[y1, x1] * fx * fy
    )


def transfer_keypoints(kps: KeypointSet, flow, src_dims=None, tgt_dims=None, tgt_bbox=None):
    """Move keypoints along a working-resolution flow into the target image.

    Results are clamped to the target frame.
    """
    flow = check_flow(flow)
    grid_hw = flow.shape[:2]
    src_dims = src_dims or (kps.image_h, kps.image_w)
    tgt_dims = tgt_dims or src_dims
    if (kps.image_h, kps.image_w) != tuple(src_dims):
        raise ValueError("keypoint image dims do not match src_dims")
    g = pixel_to_grid(kps.xy, src_dims, grid_hw)
    moved = grid_to_pixel(g + sample_flow(flow, g), tgt_dims, grid_hw)
    moved[:, 0] = np.clip(moved[:, 0], 0, tgt_dims[1] - 1)
    moved[:, 1] = np.clip(moved[:, 1], 0, tgt_dims[0] - 1)
    return KeypointSet.from_array(moved, tgt_dims[0], tgt_dims[1], tgt_bbox, kps.names)


def pck(pred: KeypointSet, gt: KeypointSet, cfg: EvalConfig = EvalConfig()):
    """Fraction of predicted keypoints within ``alpha * max(h, w)`` of ground truth.

    With ``normalization='img'`` coordinates are divided by the image size
    first, so the threshold is ``alpha`` itself.
    """
    if len(gt) == 0:
        raise ValueError("pck needs at least one keypoint")
    if sorted(pred.names) != sorted(gt.names):
        raise ValueError("predicted and ground-truth keypoint names differ")
    order = {n: i for i, n in enumerate(pred.names)}
    p = pred.xy[[order[n] for n in gt.names]]
    g = gt.xy
    if cfg.normalization == "img":
        scale = np.array([gt.image_w, gt.image_h], dtype=np.float64)
        p, g = p / scale, g / scale
        thr = cfg.alpha
    else:
        if gt.bbox is None:
            raise ValueError("bbox normalization requires a ground-truth bbox")
        x0, y0, x1, y1 = gt.bbox
        thr = cfg.alpha * max(y1 - y0, x1 - x0)
    dist = np.hypot(p[:, 0] - g[:, 0], p[:, 1] - g[:, 1])
    return float(np.count_nonzero(dist <= thr)) / len(gt)


def mask_transfer_scores(gt, transferred):
    """Label-transfer accuracy and foreground IoU of binarized masks."""
    a = as_mask(gt).binary > 0
    b = as_mask(transferred).binary > 0
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    lt_acc = np.count_nonzero(a == b) / a.size
    union = np.count_nonzero(a | b)
    iou = 1.0 if union == 0 else np.count_nonzero(a & b) / union
    return float(lt_acc), float(iou)


def propagate_keypoints(frames, kps0: KeypointSet, flow_fn):
    """Chain keypoint transfers through consecutive frames.

    ``flow_fn(src_frame, tgt_frame)`` returns the source-to-target flow on
    the working grid. Returns one KeypointSet per frame, the first being
    ``kps0``.
    """
    if len(frames) < 2:
        raise ValueError("propagation needs at least two frames")
    out = [kps0]
    for a, b in zip(frames[:-1], frames[1:]):
        flow = flow_fn(a, b)
        dims_a, dims_b = np.shape(a)[:2], np.shape(b)[:2]
        out.append(transfer_keypoints(out[-1], flow, dims_a, dims_b, kps0.bbox))
    return out


def cosegment(pred_src, pred_tgt, Fs, Ft):
    """Keep predicted foreground that agrees with the other image's warped prediction."""
    ms, mt = as_mask(pred_src).binary, as_mask(pred_tgt).binary
    if ms.shape != mt.shape:
        raise ValueError(f"mask shapes differ: {ms.shape} vs {mt.shape}")
    Fs, Ft = check_flow(Fs, ms.shape), check_flow(Ft, mt.shape)
    src = ms * (warp_scalar(mt, Fs) > 0.5)
    tgt = mt * (warp_scalar(ms, Ft) > 0.5)
    return Mask(src), Mask(tgt)

