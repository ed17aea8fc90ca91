"""Synthetic training pairs from single image/mask examples.

A random affine transform is applied to an image and its mask; the
ground-truth flow on the working grid follows from the transform. Also
hosts the procedural blob corpus used for tests and desk-scale training.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import cv2
import numpy as np

from . import autodiff as ad
from .geometry import AffineTransform, affine_to_flow
from .losses import Mask

__all__ = [
    "AffineRanges",
    "SynthPair",
    "sample_transform",
    "render_affine",
    "generate_pair",
    "augment_flip",
    "boxes_to_masks",
    "mask_to_grid",
    "interior_region",
    "blob_example",
    "procedural_corpus",
    "sample_keypoints",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AffineRanges:
    """Bounds for random affine sampling.

    rotation in degrees, scale as a multiplicative interval, translation
    as a fraction of the frame size, shear as the off-diagonal factor.
    """

    rotation: float = 15.0
    scale: tuple = (0.85, 1.15)
    translation: float = 0.10
    shear: float = 0.10

    @classmethod
    def identity(cls):
        return cls(rotation=0.0, scale=(1.0, 1.0), translation=0.0, shear=0.0)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "scale" in d:
            d["scale"] = tuple(d["scale"])
        return cls(**d)


@dataclass
class SynthPair:
    src: np.ndarray
    tgt: np.ndarray
    src_mask: np.ndarray
    tgt_mask: np.ndarray
    gt_flow: np.ndarray
    transform: AffineTransform  # pixel units, source -> target
    grid: int = 20

    def grid_masks(self):
        return mask_to_grid(self.src_mask, self.grid), mask_to_grid(self.tgt_mask, self.grid)

    def gt_backward_flow(self):
        h, w = self.src.shape[:2]
        t = self.transform.inverse().rescale(self.grid / w, self.grid / h)
        return affine_to_flow(t, self.grid, self.grid)


def sample_transform(rng, shape, ranges: AffineRanges = AffineRanges()):
    h, w = shape[:2]
    theta = np.deg2rad(rng.uniform(-ranges.rotation, ranges.rotation))
    s = rng.uniform(*ranges.scale)
    k = rng.uniform(-ranges.shear, ranges.shear)
    t = rng.uniform(-ranges.translation, ranges.translation, 2) * np.array([w, h])
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    A = s * R @ np.array([[1.0, k], [0.0, 1.0]])
    return AffineTransform.about_center(A, ((w - 1) / 2, (h - 1) / 2), t)


def render_affine(img, t: AffineTransform):
    """Resample ``img`` so that output(t(u)) = img(u); zero outside the frame."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    v = np.stack([xs, ys], axis=-1)
    flow = t.inverse().apply(v) - v
    out = ad.bilinear_warp(img.astype(np.float64), flow).value
    if img.dtype == np.uint8:
        out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out


def _visible_fraction(mask, t):
    ys, xs = np.nonzero(mask > 0.5)
    if xs.size == 0:
        return 0.0
    h, w = mask.shape
    p = t.apply(np.stack([xs, ys], axis=1).astype(np.float64))
    inside = (p[:, 0] >= 0) & (p[:, 0] <= w - 1) & (p[:, 1] >= 0) & (p[:, 1] <= h - 1)
    return float(inside.mean())


def generate_pair(img, mask, rng_seed, ranges: AffineRanges = AffineRanges(), grid=20, attempts=10):
    """Warp ``img``/``mask`` by a random affine transform.

    Transforms that keep less than half the foreground inside the frame
    are resampled up to ``attempts`` times.
    """
    img = np.asarray(img)
    mask = np.asarray(mask, dtype=np.float64)
    if img.shape[:2] != mask.shape:
        raise ValueError(f"mask shape {mask.shape} does not match image {img.shape[:2]}")
    if not np.any(mask > 0.5):
        raise ValueError("mask has no foreground")
    rng = np.random.default_rng(rng_seed)
    for _ in range(attempts):
        t = sample_transform(rng, img.shape, ranges)
        if _visible_fraction(mask, t) >= 0.5:
            break
    else:
        raise ValueError(f"no transform kept half of the foreground in {attempts} attempts")
    tgt = render_affine(img, t)
    tgt_mask = (render_affine(mask, t) > 0.5).astype(np.float64)
    if not np.any(tgt_mask):
        raise ValueError("foreground lost after warping")
    h, w = mask.shape
    gt = affine_to_flow(t.rescale(grid / w, grid / h), grid, grid)
    return SynthPair(img.copy(), tgt, (mask > 0.5).astype(np.float64), tgt_mask, gt, t, grid)


def augment_flip(pair: SynthPair):
    """Mirror both images horizontally and carry the flow along."""
    h, w = pair.src.shape[:2]
    mirror = AffineTransform(-1.0, 0.0, 0.0, 1.0, w - 1.0, 0.0)
    t = mirror.compose(pair.transform.compose(mirror))
    flow = pair.gt_flow[:, ::-1].copy()
    flow[..., 0] *= -1
    return replace(
        pair,
        src=pair.src[:, ::-1].copy(),
        tgt=pair.tgt[:, ::-1].copy(),
        src_mask=pair.src_mask[:, ::-1].copy(),
        tgt_mask=pair.tgt_mask[:, ::-1].copy(),
        gt_flow=flow,
        transform=t,
    )


def boxes_to_masks(boxes, h, w):
    """Union of half-open pixel rectangles ``[x0, x1) x [y0, y1)``."""
    m = np.zeros((h, w))
    if not boxes:
        logger.warning("boxes_to_masks: empty box list gives an empty mask")
    for x0, y0, x1, y1 in boxes:
        if not (0 <= x0 <= x1 <= w and 0 <= y0 <= y1 <= h):
            raise ValueError(f"box {(x0, y0, x1, y1)} outside {w}x{h} frame")
        m[int(y0) : int(y1), int(x0) : int(x1)] = 1.0
    return Mask(m)


def mask_to_grid(mask, grid):
    """Area-average a full-resolution mask onto the working grid and binarize."""
    m = np.asarray(mask, dtype=np.float64)
    if m.shape == (grid, grid):
        return (m > 0.5).astype(np.float64)
    small = cv2.resize(m, (grid, grid), interpolation=cv2.INTER_AREA)
    return (small > 0.5).astype(np.float64)


def interior_region(pair: SynthPair, margin=2):
    """Per-direction cell weights where the ground truth is exactly checkable.

    A cell counts when its grid mask is constant over a ``2*margin+1``
    window and its ground-truth correspondence lands inside the other grid
    on four cells whose mask equals its own. Elsewhere the area-binarized
    masks and the zero-padded warp disagree with the continuous transform.
    """
    ms, mt = pair.grid_masks()
    g = pair.grid
    out = []
    for M, other, F in ((ms, mt, pair.gt_flow), (mt, ms, pair.gt_backward_flow())):
        padded = np.pad(M, margin, mode="edge")
        win = np.lib.stride_tricks.sliding_window_view(padded, (2 * margin + 1,) * 2)
        const = win.min(axis=(2, 3)) == win.max(axis=(2, 3))
        ys, xs = np.mgrid[0:g, 0:g]
        tx, ty = xs + F[..., 0], ys + F[..., 1]
        inside = (tx >= 0) & (tx <= g - 1) & (ty >= 0) & (ty <= g - 1)
        x0 = np.clip(np.floor(tx), 0, g - 1).astype(int)
        y0 = np.clip(np.floor(ty), 0, g - 1).astype(int)
        x1, y1 = np.minimum(x0 + 1, g - 1), np.minimum(y0 + 1, g - 1)
        agree = np.ones_like(const)
        for yy, xx in ((y0, x0), (y0, x1), (y1, x0), (y1, x1)):
            agree &= other[yy, xx] == M
        out.append((const & inside & agree).astype(np.float64))
    return tuple(out)


def _smooth_noise(rng, size, cells, channels):
    coarse = rng.uniform(0, 1, (cells, cells, channels)).astype(np.float32)
    return cv2.resize(coarse, (size, size), interpolation=cv2.INTER_CUBIC).reshape(size, size, channels)


def blob_example(seed, size=160):
    """Procedural textured blob on a cluttered background.

    Returns ``(image uint8 (size, size, 3), mask float {0,1})``.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = 0.35 + 0.3 * _smooth_noise(rng, size, 6, 3).astype(np.float64)
    # clutter: random ellipses with flat colors
    for _ in range(rng.integers(6, 11)):
        cx, cy = rng.uniform(0, size, 2)
        ax, ay = rng.uniform(0.04, 0.12, 2) * size
        ang = rng.uniform(0, np.pi)
        u = (xx - cx) * np.cos(ang) + (yy - cy) * np.sin(ang)
        v = -(xx - cx) * np.sin(ang) + (yy - cy) * np.cos(ang)
        img[(u / ax) ** 2 + (v / ay) ** 2 <= 1] = rng.uniform(0.1, 0.9, 3)
    # star-shaped foreground object near the center
    cx, cy = size / 2 + rng.uniform(-0.1, 0.1, 2) * size
    r0 = rng.uniform(0.22, 0.32) * size
    ang = np.arctan2(yy - cy, xx - cx)
    rad = np.hypot(xx - cx, yy - cy)
    harm = sum(rng.uniform(-0.18, 0.18) * np.cos(k * ang + rng.uniform(0, 2 * np.pi)) for k in range(2, 5))
    mask = (rad <= r0 * (1 + harm)).astype(np.float64)
    f1, f2 = rng.uniform(0.04, 0.12, 2) * 2 * np.pi
    th1, th2 = rng.uniform(0, np.pi, 2)
    g1 = np.sin(f1 * (xx * np.cos(th1) + yy * np.sin(th1)))
    g2 = np.sin(f2 * (xx * np.cos(th2) + yy * np.sin(th2)))
    base, c1, c2 = rng.uniform(0.2, 0.8, (3, 3))
    texture = base + 0.25 * g1[..., None] * (c1 - 0.5) * 2 + 0.2 * g2[..., None] * (c2 - 0.5) * 2
    texture += 0.15 * (_smooth_noise(rng, size, 10, 3) - 0.5)
    img = np.where(mask[..., None] > 0, texture, img)
    img = np.clip(img, 0, 1)
    return (img * 255).round().astype(np.uint8), mask


def procedural_corpus(n, seed=0, size=160):
    """``n`` deterministic (image, mask) examples."""
    return [blob_example(seed * 100_003 + i, size) for i in range(n)]


def sample_keypoints(mask, n, rng, margin=2):
    """Pick ``n`` distinct foreground pixels at least ``margin`` px from the border."""
    m = np.asarray(mask) > 0.5
    if margin:
        m[:margin], m[-margin:], m[:, :margin], m[:, -margin:] = False, False, False, False
    ys, xs = np.nonzero(m)
    if xs.size == 0:
        raise ValueError("no foreground pixels to sample keypoints from")
    pick = rng.choice(xs.size, size=min(n, xs.size), replace=False)
    return np.stack([xs[pick], ys[pick]], axis=1).astype(np.float64)
