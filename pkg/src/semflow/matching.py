"""Correlation volumes, matching probabilities and the argmax variants.

Correlation volumes are stored as ``(h*w, h2*w2)`` matrices (one row per
source cell, row-major target cells) wrapped in :class:`CorrelationMap`;
``CorrelationMap.scores`` exposes the 4-D view.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .features import normalize_features

__all__ = [
    "MODES",
    "MatchConfig",
    "CorrelationMap",
    "MatchProbability",
    "correlate",
    "normalize_correlation",
    "combine_correlations",
    "transpose_correlation",
    "kernel_weights",
    "matching_probability",
    "kernel_soft_argmax",
    "discrete_argmax",
    "flow_from_correlation",
    "match_features",
    "cell_coordinates",
]

MODES = ("discrete", "soft", "kernel_soft")


@dataclass(frozen=True)
class MatchConfig:
    """Softmax temperature, Gaussian width (grid cells) and argmax variant."""

    beta: float = 50.0
    sigma: float = 5.0
    mode: str = "kernel_soft"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class CorrelationMap:
    matrix: ad.Node
    src_shape: tuple
    tgt_shape: tuple
    normalized: bool = False

    @property
    def scores(self):
        return self.matrix.value.reshape(*self.src_shape, *self.tgt_shape)

    @property
    def shape(self):
        return (*self.src_shape, *self.tgt_shape)


@dataclass
class MatchProbability:
    probs: ad.Node  # (h*w, h2*w2), rows sum to one
    src_shape: tuple
    tgt_shape: tuple
    beta: float
    sigma: float
    kernel_centers: np.ndarray  # (h*w, 2) as (x, y)
    # leaf holding the kernel centers; stays at zero gradient by construction
    center_probe: ad.Node | None = field(default=None, repr=False)

    def distribution(self, x, y):
        """m_p for source cell ``(x, y)`` as an (h2, w2) array."""
        return self.probs.value[y * self.src_shape[1] + x].reshape(self.tgt_shape)


def cell_coordinates(h, w):
    """(h*w, 2) array of (x, y) cell coordinates in row-major order."""
    ys, xs = np.mgrid[0:h, 0:w]
    return np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)


def correlate(src, tgt):
    """Dot products between every source and every target feature vector."""
    src, tgt = ad.as_node(src), ad.as_node(tgt)
    if src.ndim != 3 or tgt.ndim != 3:
        raise ValueError(f"correlate expects (h, w, d) maps, got {src.shape} and {tgt.shape}")
    if src.shape[2] != tgt.shape[2]:
        raise ValueError(f"correlate: channel mismatch {src.shape[2]} vs {tgt.shape[2]}")
    h, w, d = src.shape
    h2, w2, _ = tgt.shape
    m = ad.matmul(ad.reshape(src, (h * w, d)), ad.transpose(ad.reshape(tgt, (h2 * w2, d))))
    return CorrelationMap(m, (h, w), (h2, w2))


def normalize_correlation(c: CorrelationMap):
    """Divide every per-source slice by its Frobenius norm (zero slices stay zero)."""
    return CorrelationMap(ad.l2_normalize_rows(c.matrix), c.src_shape, c.tgt_shape, normalized=True)


def combine_correlations(c1: CorrelationMap, c2: CorrelationMap):
    if c1.shape != c2.shape:
        raise ValueError(f"combine_correlations: shape mismatch {c1.shape} vs {c2.shape}")
    return CorrelationMap(ad.mul(c1.matrix, c2.matrix), c1.src_shape, c1.tgt_shape)


def transpose_correlation(c: CorrelationMap):
    """Target-to-source view of the same volume (needs renormalizing)."""
    return CorrelationMap(ad.transpose(c.matrix), c.tgt_shape, c.src_shape)


def kernel_weights(centers, tgt_shape, sigma):
    """Peak-one Gaussian over the target grid for each row of ``centers``.

    centers : node of shape (n, 2) holding (x, y); returns an (n, h2*w2) node.
    """
    centers = ad.as_node(centers)
    n = centers.shape[0]
    q = cell_coordinates(*tgt_shape)
    ones = np.ones((1, q.shape[0]))
    # broadcast each center across the target cells via an outer product
    cx = ad.matmul(centers[:, 0:1], ones)
    cy = ad.matmul(centers[:, 1:2], ones)
    dx = ad.sub(np.tile(q[:, 0], (n, 1)), cx)
    dy = ad.sub(np.tile(q[:, 1], (n, 1)), cy)
    d2 = ad.add(ad.square(dx), ad.square(dy))
    return ad.exp(ad.mul(d2, -0.5 / (sigma * sigma)))


def matching_probability(c: CorrelationMap, cfg: MatchConfig):
    """Softmax of ``beta * k_p * n_p`` over the target cells of every row."""
    if not c.normalized:
        raise ValueError("matching_probability needs a normalized correlation map")
    n = c.matrix
    idx = np.argmax(n.value, axis=1)
    w2 = c.tgt_shape[1]
    centers = np.stack([idx % w2, idx // w2], axis=1).astype(np.float64)
    probe = ad.parameter(centers, "kernel_centers")
    if cfg.mode == "discrete":
        probs = np.zeros(n.shape)
        probs[np.arange(n.shape[0]), idx] = 1.0
        m = ad.Node(probs)
    else:
        if cfg.mode == "kernel_soft":
            k = kernel_weights(ad.stop_gradient(probe), c.tgt_shape, cfg.sigma)
            logits = ad.mul(ad.mul(k, n), cfg.beta)
        else:
            logits = ad.mul(n, cfg.beta)
        m = ad.softmax_over_cells(logits)
    return MatchProbability(m, c.src_shape, c.tgt_shape, cfg.beta, cfg.sigma, idx_to_xy(idx, w2), probe)


def idx_to_xy(idx, w):
    return np.stack([idx % w, idx // w], axis=1)


def kernel_soft_argmax(m: MatchProbability):
    """Expected target coordinate minus source coordinate, as an (h, w, 2) flow node."""
    q = cell_coordinates(*m.tgt_shape)
    p = cell_coordinates(*m.src_shape)
    phi = ad.matmul(m.probs, q)
    return ad.reshape(ad.sub(phi, p), (*m.src_shape, 2))


def discrete_argmax(c: CorrelationMap):
    """Integer flow to the best-scoring target cell (first in row-major order on ties)."""
    scores = c.matrix.value
    idx = np.argmax(scores, axis=1)
    xy = idx_to_xy(idx, c.tgt_shape[1]).astype(np.float64)
    return (xy - cell_coordinates(*c.src_shape)).reshape(*c.src_shape, 2)


def flow_from_correlation(c: CorrelationMap, cfg: MatchConfig):
    """Flow node for one direction of a (combined, unnormalized) volume."""
    if cfg.mode == "discrete":
        return ad.Node(discrete_argmax(c))
    n = c if c.normalized else normalize_correlation(c)
    return kernel_soft_argmax(matching_probability(n, cfg))


def match_features(src_levels, tgt_levels, cfg: MatchConfig = MatchConfig()):
    """Bidirectional flows from one or more feature levels.

    Each level is L2-normalized and correlated; level volumes are combined
    by element-wise product. Returns ``(flow_src_to_tgt, flow_tgt_to_src)``
    as nodes when any input is a node, else as arrays.
    """
    if isinstance(src_levels, (np.ndarray, ad.Node)):
        src_levels, tgt_levels = [src_levels], [tgt_levels]
    if len(src_levels) != len(tgt_levels) or not src_levels:
        raise ValueError("source and target need the same, non-zero number of feature levels")
    track = any(isinstance(f, ad.Node) for f in (*src_levels, *tgt_levels))
    corr = None
    for fs, ft in zip(src_levels, tgt_levels):
        c = correlate(normalize_features(ad.as_node(fs)), normalize_features(ad.as_node(ft)))
        corr = c if corr is None else combine_correlations(corr, c)
    fwd = flow_from_correlation(corr, cfg)
    bwd = flow_from_correlation(transpose_correlation(corr), cfg)
    return (fwd, bwd) if track else (fwd.value, bwd.value)
