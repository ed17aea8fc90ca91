"""scikit-learn style front end for training and applying the matcher."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_images_masks, check_pairs
from .evaluation import EvalConfig, pck, transfer_keypoints
from .features import ToyExtractor
from .geometry import upsample_flow
from .losses import LossWeights
from .matching import MatchConfig
from .model import FlowModel
from .synth import AffineRanges
from .training import TrainerConfig, train


class SemanticFlowMatcher(BaseEstimator):
    """Dense flow between image pairs from adapted feature correlations.

    ``fit`` trains the adaptation layers on synthetic affine pairs built
    from single images and their foreground masks; ``predict`` returns
    source-to-target flows on the working grid.

    Parameters
    ----------
    beta : float, default=50
        Softmax temperature.
    sigma : float, default=5
        Gaussian kernel width in grid cells.
    mode : {'kernel_soft', 'soft', 'discrete'}, default='kernel_soft'
    grid : int, default=20
        Working resolution of features and flows.
    channels : int, default=16
    lambda_mask, lambda_flow, lambda_smooth : float, default=3, 16, 0.5
    batch_size : int, default=16
    epochs : int, default=40
    lr : float, default=3e-5
    lr_drop_epoch : int, default=30
    lr_drop_factor : float, default=5
    flip : bool, default=True
        Random horizontal flips of training pairs.
    affine_ranges : AffineRanges or None
        Random transform bounds; ``None`` uses the package defaults.
    init_scale : float, default=0.1
        Scale of the random adaptation-layer initialization.
    extractor_seed : int, default=0
    random_state : int, default=0
    """

    def __init__(
        self,
        beta=50.0,
        sigma=5.0,
        mode="kernel_soft",
        grid=20,
        channels=16,
        lambda_mask=3.0,
        lambda_flow=16.0,
        lambda_smooth=0.5,
        batch_size=16,
        epochs=40,
        lr=3e-5,
        lr_drop_epoch=30,
        lr_drop_factor=5.0,
        flip=True,
        affine_ranges=None,
        init_scale=0.1,
        extractor_seed=0,
        random_state=0,
    ):
        self.beta = beta
        self.sigma = sigma
        self.mode = mode
        self.grid = grid
        self.channels = channels
        self.lambda_mask = lambda_mask
        self.lambda_flow = lambda_flow
        self.lambda_smooth = lambda_smooth
        self.batch_size = batch_size
        self.epochs = epochs
        self.lr = lr
        self.lr_drop_epoch = lr_drop_epoch
        self.lr_drop_factor = lr_drop_factor
        self.flip = flip
        self.affine_ranges = affine_ranges
        self.init_scale = init_scale
        self.extractor_seed = extractor_seed
        self.random_state = random_state

    def _match_config(self):
        return MatchConfig(self.beta, self.sigma, self.mode)

    def _new_model(self):
        return FlowModel(ToyExtractor(self.grid, self.channels, self.extractor_seed), seed=self.random_state, init_scale=self.init_scale)

    def fit(self, X, y=None):
        """Train on images ``X`` with foreground masks ``y``."""
        corpus = check_images_masks(X, y, min_size=2 * self.grid)
        cfg = TrainerConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            lr=self.lr,
            lr_drop_epoch=self.lr_drop_epoch,
            lr_drop_factor=self.lr_drop_factor,
            seed=self.random_state,
            flip=self.flip,
            affine_ranges=self.affine_ranges or AffineRanges(),
        )
        weights = LossWeights(self.lambda_mask, self.lambda_flow, self.lambda_smooth)
        result = train(corpus, cfg, weights, self._match_config(), model=self._new_model())
        self.model_ = result.model
        self.history_ = result.history
        return self

    def untrained(self):
        """A fitted-looking copy with freshly initialized adaptation layers."""
        est = self.__class__(**self.get_params())
        est.model_ = est._new_model()
        est.history_ = []
        return est

    def predict_bidirectional(self, X):
        """``(flows_src_to_tgt, flows_tgt_to_src)``, each (n, grid, grid, 2)."""
        check_is_fitted(self, "model_")
        pairs = check_pairs(X, min_size=2 * self.grid)
        cfg = self._match_config()
        out = [self.model_.flows(s, t, cfg) for s, t in pairs]
        return np.stack([o[0] for o in out]), np.stack([o[1] for o in out])

    def predict(self, X):
        """Source-to-target flows for a sequence of (source, target) pairs."""
        return self.predict_bidirectional(X)[0]

    def predict_dense(self, X):
        """Flows upsampled to each source image's pixel grid."""
        flows = self.predict(X)
        return [upsample_flow(f, *np.shape(s)[:2]) for f, (s, _) in zip(flows, X)]

    def score(self, X, y, alpha=0.1, normalization="bbox"):
        """Mean PCK; ``y`` holds (source KeypointSet, target KeypointSet) per pair."""
        flows = self.predict(X)
        cfg = EvalConfig(alpha, normalization)
        scores = []
        for flow, (src, tgt), (kps, gt) in zip(flows, X, y):
            pred = transfer_keypoints(kps, flow, np.shape(src)[:2], np.shape(tgt)[:2])
            scores.append(pck(pred, gt, cfg))
        return float(np.mean(scores))
