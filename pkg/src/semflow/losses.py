"""Mask consistency, flow consistency and smoothness losses.

Every loss takes flows as arrays or autodiff nodes of shape ``(h, w, 2)``
and returns a scalar node, so the same code evaluates and trains.

The optional ``region`` argument is a pair of per-cell weights (source,
target) that restricts which cells contribute to the sums, e.g. to
evaluate on interior cells only. Normalizers always use the full mask
counts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

__all__ = [
    "Mask",
    "as_mask",
    "LossWeights",
    "LossReport",
    "mask_consistency",
    "flow_consistency",
    "smoothness",
    "total_loss",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Mask:
    """Foreground map with values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError(f"mask must be a non-empty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0 or v.max() > 1:
            raise ValueError("mask values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    @property
    def pixel_count(self):
        return self.values.size

    @property
    def binary(self):
        return (self.values > 0.5).astype(np.float64)

    @property
    def foreground_count(self):
        return int(np.count_nonzero(self.values > 0.5))


def as_mask(m):
    return m if isinstance(m, Mask) else Mask(m)


@dataclass(frozen=True)
class LossWeights:
    lambda_mask: float = 3.0
    lambda_flow: float = 16.0
    lambda_smooth: float = 0.5

    def __post_init__(self):
        if min(self.lambda_mask, self.lambda_flow, self.lambda_smooth) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossReport:
    total: float
    mask_term: float
    flow_term: float
    smooth_term: float
    node: ad.Node | None = field(default=None, repr=False)

    def as_dict(self):
        return {
            "total": self.total,
            "mask": self.mask_term,
            "flow": self.flow_term,
            "smooth": self.smooth_term,
        }


def _prepare(Ms, Mt, Fs, Ft, region):
    Ms, Mt = as_mask(Ms), as_mask(Mt)
    Fs, Ft = ad.as_node(Fs), ad.as_node(Ft)
    h, w = Ms.shape
    for name, shape in (("target mask", Mt.shape), ("source flow", Fs.shape[:2]), ("target flow", Ft.shape[:2])):
        if shape != (h, w):
            raise ValueError(f"{name} shape {shape} does not match source mask {(h, w)}")
    if Fs.shape != (h, w, 2) or Ft.shape != (h, w, 2):
        raise ValueError(f"flows must have shape {(h, w, 2)}")
    if region is None:
        region = (np.ones((h, w)), np.ones((h, w)))
    region = tuple(np.asarray(r, dtype=np.float64) for r in region)
    if any(r.shape != (h, w) for r in region):
        raise ValueError("region weights must match the mask shape")
    return Ms, Mt, Fs, Ft, region


def _both(x):
    return np.repeat(np.asarray(x)[..., None], 2, axis=-1)


def mask_consistency(Ms, Mt, Fs, Ft, region=None):
    """Mean squared difference between each mask and the other mask warped onto it."""
    Ms, Mt, Fs, Ft, region = _prepare(Ms, Mt, Fs, Ft, region)
    total = ad.Node(0.0)
    for M, other, F, r in ((Ms, Mt, Fs, region[0]), (Mt, Ms, Ft, region[1])):
        est = ad.bilinear_warp(other.values, F)
        err = ad.square(ad.sub(M.values, est))
        total = ad.add(total, ad.mul(ad.sum_(ad.mul(err, r)), 1.0 / M.pixel_count))
    return total


def flow_consistency(Fs, Ft, Ms, Mt, region=None):
    """Forward flow plus warped backward flow should cancel on the foreground."""
    Ms, Mt, Fs, Ft, region = _prepare(Ms, Mt, Fs, Ft, region)
    total = ad.Node(0.0)
    for F, other, M, r in ((Fs, Ft, Ms, region[0]), (Ft, Fs, Mt, region[1])):
        nf = M.foreground_count
        if nf == 0:
            logger.warning("flow_consistency: mask has no foreground; term set to 0")
            continue
        residual = ad.add(F, ad.bilinear_warp(other, F))
        gated = ad.mul(residual, _both(M.binary * r))
        total = ad.add(total, ad.mul(ad.sum_(ad.square(gated)), 1.0 / nf))
    return total


def smoothness(Fs, Ft, Ms, Mt, region=None):
    """L1 norm of forward differences of both flow components on the foreground.

    Differences whose forward neighbor falls outside the grid contribute 0.
    """
    Ms, Mt, Fs, Ft, region = _prepare(Ms, Mt, Fs, Ft, region)
    total = ad.Node(0.0)
    for F, M, r in ((Fs, Ms, region[0]), (Ft, Mt, region[1])):
        nf = M.foreground_count
        if nf == 0:
            logger.warning("smoothness: mask has no foreground; term set to 0")
            continue
        gate = M.binary * r
        ddx = ad.sub(F[:, 1:, :], F[:, :-1, :])
        ddy = ad.sub(F[1:, :, :], F[:-1, :, :])
        sx = ad.sum_(ad.abs_(ad.mul(ddx, _both(gate[:, :-1]))))
        sy = ad.sum_(ad.abs_(ad.mul(ddy, _both(gate[:-1, :]))))
        total = ad.add(total, ad.mul(ad.add(sx, sy), 1.0 / nf))
    return total


def total_loss(Fs, Ft, Ms, Mt, weights: LossWeights = LossWeights(), region=None):
    """Weighted sum of the three terms; ``report.node`` supports backward."""
    lm = mask_consistency(Ms, Mt, Fs, Ft, region)
    lf = flow_consistency(Fs, Ft, Ms, Mt, region)
    ls = smoothness(Fs, Ft, Ms, Mt, region)
    node = ad.add(
        ad.add(ad.mul(lm, weights.lambda_mask), ad.mul(lf, weights.lambda_flow)),
        ad.mul(ls, weights.lambda_smooth),
    )
    return LossReport(float(node.value), float(lm.value), float(lf.value), float(ls.value), node)
