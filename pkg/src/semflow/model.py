"""Feature extractor plus adaptation layers, wired into the matcher."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .features import AdaptationLayer, ToyExtractor, adapt, upsample_features
from .matching import MatchConfig, match_features


class FlowModel:
    """Frozen two-level extractor with one trainable adaptation layer per level.

    The fine level uses a 5x5 adaptation kernel; the coarse level a 3x3
    one, applied before upsampling the coarse map to the working grid.
    """

    kernel_sizes = (5, 3)

    def __init__(self, extractor: ToyExtractor | None = None, layers=None, seed=0, init_scale=0.1, levels=2):
        self.extractor = extractor or ToyExtractor()
        if levels not in (1, 2):
            raise ValueError("levels must be 1 or 2")
        if layers is None:
            layers = [
                AdaptationLayer(self.extractor.channels, k, seed=None if seed is None else seed + i, init_scale=init_scale)
                for i, k in enumerate(self.kernel_sizes[:levels])
            ]
        self.layers = list(layers)
        self.levels = len(self.layers)

    @property
    def grid(self):
        return self.extractor.grid

    def parameters(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, p in layer.params.items():
                out[f"layer{i}.{k}"] = p
        return out

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def get_weights(self):
        return {k: p.value.copy() for k, p in self.parameters().items()}

    def set_weights(self, weights):
        params = self.parameters()
        if set(weights) != set(params):
            raise ValueError("weight names do not match the model")
        for k, p in params.items():
            v = np.asarray(weights[k], dtype=np.float64)
            if v.shape != p.shape:
                raise ValueError(f"weight {k!r}: shape {v.shape} != {p.shape}")
            p.value = v.copy()
            p.zero_grad()

    def raw_levels(self, img):
        return self.extractor.levels(img)[: self.levels]

    def adapted(self, raw):
        """Adapted feature nodes at the working resolution."""
        out = []
        for f, layer in zip(raw, self.layers):
            a = adapt(ad.Node(f), layer)
            if a.shape[:2] != (self.grid, self.grid):
                a = upsample_features(a, self.grid, self.grid)
            out.append(a)
        return out

    def flow_nodes(self, src_raw, tgt_raw, cfg: MatchConfig):
        return match_features(self.adapted(src_raw), self.adapted(tgt_raw), cfg)

    def flows(self, src_img, tgt_img, cfg: MatchConfig = MatchConfig()):
        """Source-to-target and target-to-source flows as arrays."""
        fs, ft = self.flow_nodes(self.raw_levels(src_img), self.raw_levels(tgt_img), cfg)
        return fs.value, ft.value
