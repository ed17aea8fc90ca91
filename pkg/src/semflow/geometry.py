"""Grid coordinates, affine transforms, flow fields and bilinear warping.

Conventions used throughout the package:

* points are ``(x, y)`` with ``x`` the column and ``y`` the row, 0-based,
  cell-centered (integer coordinates address cell centers);
* a flow field is a float64 array of shape ``(h, w, 2)`` holding
  ``(dx, dy)`` in cell units of the grid it lives on;
* sampling outside the grid contributes zero (zero padding).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad

__all__ = [
    "GridPoint",
    "AffineTransform",
    "bilinear_sample",
    "bilinear_sample_grad",
    "warp_scalar",
    "warp_flow",
    "affine_to_flow",
    "upsample_flow",
    "zero_flow",
    "check_flow",
    "resize_matrix",
]


class GridPoint(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class AffineTransform:
    """``t(p) = A @ p + (tx, ty)`` with ``A = [[a11, a12], [a21, a22]]``."""

    a11: float = 1.0
    a12: float = 0.0
    a21: float = 0.0
    a22: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        vals = (self.a11, self.a12, self.a21, self.a22, self.tx, self.ty)
        if not np.all(np.isfinite(vals)):
            raise ValueError("affine transform entries must be finite")
        if abs(self.determinant) < 1e-12:
            raise ValueError(f"affine transform is not invertible (det={self.determinant:g})")

    @property
    def determinant(self):
        return self.a11 * self.a22 - self.a12 * self.a21

    @property
    def matrix(self):
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def translation(self):
        return np.array([self.tx, self.ty])

    @classmethod
    def from_matrix(cls, A, t=(0.0, 0.0)):
        A = np.asarray(A, dtype=np.float64)
        return cls(*(float(v) for v in A.ravel()), float(t[0]), float(t[1]))

    @classmethod
    def about_center(cls, A, center, shift=(0.0, 0.0)):
        """Apply ``A`` around ``center`` and then translate by ``shift``."""
        A = np.asarray(A, dtype=np.float64)
        c = np.asarray(center, dtype=np.float64)
        return cls.from_matrix(A, c - A @ c + np.asarray(shift, dtype=np.float64))

    def apply(self, xy):
        """Map points of shape (..., 2)."""
        xy = np.asarray(xy, dtype=np.float64)
        return xy @ self.matrix.T + self.translation

    def inverse(self):
        Ainv = np.linalg.inv(self.matrix)
        return AffineTransform.from_matrix(Ainv, -Ainv @ self.translation)

    def compose(self, other):
        """Return ``self(other(p))``."""
        A = self.matrix @ other.matrix
        return AffineTransform.from_matrix(A, self.matrix @ other.translation + self.translation)

    def rescale(self, sx, sy=None):
        """Express the transform on a grid scaled by ``(sx, sy)`` with
        cell-center alignment, i.e. ``g = (u + 0.5) * s - 0.5``."""
        sy = sx if sy is None else sy
        S = np.diag([sx, sy])
        c = 0.5 * np.array([sx, sy]) - 0.5
        # g = S u + c  =>  u = S^-1 (g - c)
        to_px = AffineTransform.from_matrix(np.linalg.inv(S), -np.linalg.inv(S) @ c)
        to_grid = AffineTransform.from_matrix(S, c)
        return to_grid.compose(self.compose(to_px))


def check_flow(flow, shape=None):
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow field must have shape (h, w, 2), got {flow.shape}")
    if shape is not None and flow.shape[:2] != tuple(shape):
        raise ValueError(f"flow field shape {flow.shape[:2]} does not match grid {tuple(shape)}")
    if not np.all(np.isfinite(flow)):
        raise ValueError("flow field contains non-finite values")
    return flow


def zero_flow(h, w):
    return np.zeros((h, w, 2))


def bilinear_sample(grid, at):
    """Bilinear value of ``grid`` at a continuous point, zero outside."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.size == 0:
        raise ValueError(f"bilinear_sample needs a non-empty 2-D grid, got shape {grid.shape}")
    x, y = float(at[0]), float(at[1])
    h, w = grid.shape
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    total = 0.0
    for qy in (y0, y0 + 1):
        for qx in (x0, x0 + 1):
            if 0 <= qx < w and 0 <= qy < h:
                total += grid[qy, qx] * max(0.0, 1 - abs(x - qx)) * max(0.0, 1 - abs(y - qy))
    return total


def bilinear_sample_grad(grid, at):
    """Gradient of :func:`bilinear_sample` with respect to ``at``.

    Uses the right-continuous subgradient on lattice lines.
    """
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape
    rows, cols, _, dwx, dwy = ad._bilinear_taps(np.float64(at[0]), np.float64(at[1]), h, w)
    vals = grid[rows, cols]
    return np.array([(dwx * vals).sum(), (dwy * vals).sum()])


def warp_scalar(grid, flow):
    """``out(p) = bilinear_sample(grid, p + flow(p))`` for every cell ``p``."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"warp_scalar expects a 2-D grid, got shape {grid.shape}")
    flow = check_flow(flow, grid.shape)
    return ad.bilinear_warp(grid, flow).value


def warp_flow(target_flow, source_flow):
    """Warp both components of ``target_flow`` along ``source_flow``."""
    target_flow = check_flow(target_flow)
    source_flow = check_flow(source_flow, target_flow.shape[:2])
    return ad.bilinear_warp(target_flow, source_flow).value


def affine_to_flow(t: AffineTransform, h: int, w: int):
    """Flow ``t(p) - p`` sampled on every cell of an ``h`` x ``w`` grid."""
    if h < 1 or w < 1:
        raise ValueError(f"grid dims must be positive, got {h}x{w}")
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    p = np.stack([xs, ys], axis=-1)
    return t.apply(p) - p


def resize_matrix(n_in, n_out):
    """(n_out, n_in) linear interpolation matrix with cell-center alignment.

    Source coordinates are clamped to the input range, so border cells of
    the output copy the input border rather than fading to zero.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError(f"resize dims must be positive, got {n_in} -> {n_out}")
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    M = np.zeros((n_out, n_in))
    np.add.at(M, (np.arange(n_out), lo), 1.0 - frac)
    np.add.at(M, (np.arange(n_out), hi), frac)
    return M


def upsample_flow(flow, out_h: int, out_w: int):
    """Bilinearly upsample a flow field and rescale its vectors to the finer grid."""
    flow = check_flow(flow)
    h, w = flow.shape[:2]
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output dims must be positive, got {out_h}x{out_w}")
    if out_h < h or out_w < w:
        raise ValueError(f"upsample_flow cannot shrink {h}x{w} to {out_h}x{out_w}")
    R, C = resize_matrix(h, out_h), resize_matrix(w, out_w)
    out = np.einsum("ia,jb,abc->ijc", R, C, flow)
    out[..., 0] *= out_w / w
    out[..., 1] *= out_h / h
    return out
