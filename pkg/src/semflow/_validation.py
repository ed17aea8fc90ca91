"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np


def check_image(img, min_size=1, name="image"):
    img = np.asarray(img)
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] not in (1, 3)):
        raise ValueError(f"{name} must be (h, w) or (h, w, 3), got shape {img.shape}")
    if min(img.shape[:2]) < min_size:
        raise ValueError(f"{name} is {img.shape[0]}x{img.shape[1]}, smaller than the minimum {min_size}")
    if img.dtype != np.uint8:
        if not np.all(np.isfinite(img)):
            raise ValueError(f"{name} contains non-finite values")
        if img.min() < 0 or img.max() > 255:
            raise ValueError(f"{name} values must lie in [0, 255]")
        img = img.astype(np.uint8) if np.all(img == np.round(img)) else img
    return img


def check_mask(mask, shape=None, name="mask"):
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if shape is not None and m.shape != tuple(shape[:2]):
        raise ValueError(f"{name} shape {m.shape} does not match image {tuple(shape[:2])}")
    return (m > 0.5).astype(np.float64)


def check_images_masks(X, y, min_size=1):
    if y is None:
        raise ValueError("training needs foreground masks (y)")
    if len(X) != len(y):
        raise ValueError(f"got {len(X)} images but {len(y)} masks")
    if len(X) == 0:
        raise ValueError("no training examples")
    out = []
    for i, (img, m) in enumerate(zip(X, y)):
        img = check_image(img, min_size, f"image {i}")
        out.append((img, check_mask(m, img.shape, f"mask {i}")))
    return out


def check_pairs(X, min_size=1):
    """Accept a sequence of (source, target) image pairs."""
    pairs = []
    for i, pair in enumerate(X):
        if len(pair) != 2:
            raise ValueError(f"pair {i} must hold exactly two images")
        pairs.append(
            (check_image(pair[0], min_size, f"pair {i} source"), check_image(pair[1], min_size, f"pair {i} target"))
        )
    if not pairs:
        raise ValueError("no image pairs given")
    return pairs
