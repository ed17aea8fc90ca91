"""Feature sources: file-backed maps, a frozen toy extractor, and the
trainable residual adaptation layers applied on top of it."""

from __future__ import annotations

import logging

import cv2
import numpy as np

from . import autodiff as ad
from .geometry import resize_matrix
from .io import load_sfnf, save_sfnf

__all__ = [
    "load_feature_map",
    "save_feature_map",
    "normalize_features",
    "zero_vector_count",
    "AdaptationLayer",
    "adapt",
    "ToyExtractor",
    "extract_toy",
    "upsample_features",
]

logger = logging.getLogger(__name__)


def load_feature_map(path):
    """Read an SFNF feature file as an (h, w, d) float64 array."""
    return load_sfnf(path)


def save_feature_map(path, features):
    f = np.asarray(features)
    if f.ndim != 3:
        raise ValueError(f"feature maps are (h, w, d), got shape {f.shape}")
    save_sfnf(path, f)


def zero_vector_count(features):
    f = np.asarray(features)
    return int(np.count_nonzero(~np.any(f != 0, axis=-1)))


def normalize_features(features):
    """L2-normalize every d-vector; zero vectors stay zero.

    Accepts an array or an autodiff node and returns the same kind.
    """
    if isinstance(features, ad.Node):
        return ad.l2_normalize_rows(features)
    f = np.asarray(features, dtype=np.float64)
    nz = zero_vector_count(f)
    if nz:
        logger.debug("normalize_features: %d zero feature vectors left unnormalized", nz)
    return ad.l2_normalize_rows(f).value


def upsample_features(features, out_h, out_w):
    """Bilinear (cell-center aligned) resize of an (h, w, d) map or node."""
    h, w = features.shape[:2]
    node = ad.linear_resize(features, resize_matrix(h, out_h), resize_matrix(w, out_w))
    return node if isinstance(features, ad.Node) else node.value


class AdaptationLayer:
    """Residual block pair ``f + conv2(relu(conv1(f)))`` with same padding.

    Parameters
    ----------
    channels : int
        Input and output channel count.
    kernel_size : int, default=5
        Odd convolution size (5 for the fine level, 3 for the coarse one).
    seed : int or None
        Seed for the random initialization. ``None`` gives zero weights,
        which makes the layer an exact identity.
    init_scale : float, default=1.0
        Multiplier on the He-normal initialization.
    """

    def __init__(self, channels, kernel_size=5, seed=0, init_scale=1.0):
        if kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")
        self.channels = channels
        self.kernel_size = kernel_size
        shape = (kernel_size, kernel_size, channels, channels)
        if seed is None:
            w1, w2 = np.zeros(shape), np.zeros(shape)
        else:
            rng = np.random.default_rng(seed)
            std = init_scale * np.sqrt(2.0 / (kernel_size * kernel_size * channels))
            w1 = rng.normal(0.0, std, shape)
            w2 = rng.normal(0.0, std, shape)
        self.params = {
            "w1": ad.parameter(w1, "w1"),
            "b1": ad.parameter(np.zeros(channels), "b1"),
            "w2": ad.parameter(w2, "w2"),
            "b2": ad.parameter(np.zeros(channels), "b2"),
        }

    def __call__(self, features):
        return adapt(features, self)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def get_weights(self):
        return {k: p.value.copy() for k, p in self.params.items()}

    def set_weights(self, weights):
        for k, p in self.params.items():
            v = np.asarray(weights[k], dtype=np.float64)
            if v.shape != p.shape:
                raise ValueError(f"weight {k!r}: shape {v.shape} != {p.shape}")
            p.value = v.copy()
            p.zero_grad()


def adapt(features, layer: AdaptationLayer):
    """Apply an adaptation layer; returns a node if given a node."""
    is_node = isinstance(features, ad.Node)
    f = ad.as_node(features)
    if f.ndim != 3 or f.shape[2] != layer.channels:
        raise ValueError(f"adapt: expected (h, w, {layer.channels}) features, got {f.shape}")
    p = layer.params
    hidden = ad.relu(ad.conv2d(f, p["w1"], p["b1"]))
    out = ad.add(f, ad.conv2d(hidden, p["w2"], p["b2"]))
    return out if is_node else out.value


def _to_float_image(img):
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"images must be (h, w) or (h, w, 3), got {img.shape}")
    return img.astype(np.float64) / 255.0 if img.dtype == np.uint8 else img.astype(np.float64)


class ToyExtractor:
    """Frozen random convolution stack producing a two-level feature pyramid.

    The image is area-resized to ``2 * grid`` pixels per side, passed
    through a random 3x3 conv + ReLU and 2x2 average pooling (fine level,
    ``grid`` x ``grid``), then through a second conv + ReLU + pooling
    (coarse level, ``grid/2`` x ``grid/2``).

    Parameters
    ----------
    grid : int, default=20
    channels : int, default=16
    seed : int, default=0
    """

    def __init__(self, grid=20, channels=16, seed=0):
        if grid < 2 or grid % 2:
            raise ValueError("grid must be an even integer >= 2")
        self.grid = grid
        self.channels = channels
        self.seed = seed
        rng = np.random.default_rng(seed)
        self._w = {}
        for cin in (1, 3):
            self._w[cin] = rng.normal(0.0, np.sqrt(2.0 / (9 * cin)), (3, 3, cin, channels))
        self._b1 = rng.normal(0.0, 0.1, channels)
        self._w2 = rng.normal(0.0, np.sqrt(2.0 / (9 * channels)), (3, 3, channels, channels))
        self._b2 = rng.normal(0.0, 0.1, channels)

    @property
    def min_size(self):
        return 2 * self.grid

    def levels(self, img):
        """Return ``(fine, coarse)`` raw feature maps."""
        x = _to_float_image(img)
        h, w = x.shape[:2]
        if h < self.min_size or w < self.min_size:
            raise ValueError(f"image {h}x{w} is smaller than the extractor minimum {self.min_size}")
        s = 2 * self.grid
        x = cv2.resize(x, (s, s), interpolation=cv2.INTER_AREA).reshape(s, s, -1)
        x = x - 0.5
        fine = _pool2(np.maximum(ad.conv2d(x, self._w[x.shape[2]], self._b1).value, 0.0))
        coarse = _pool2(np.maximum(ad.conv2d(fine, self._w2, self._b2).value, 0.0))
        return fine, coarse


def _pool2(x):
    h, w, c = x.shape
    return x.reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3))


def extract_toy(img, extractor: ToyExtractor):
    """Both feature levels at the working resolution (coarse level upsampled)."""
    fine, coarse = extractor.levels(img)
    return fine, upsample_features(coarse, extractor.grid, extractor.grid)
