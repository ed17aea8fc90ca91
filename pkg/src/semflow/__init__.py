"""Dense semantic flow from feature correlations with a kernel soft argmax."""

__version__ = "0.1.0"

from .estimator import SemanticFlowMatcher
from .evaluation import EvalConfig, KeypointSet
from .losses import LossWeights
from .matching import MatchConfig, match_features
from .model import FlowModel

__all__ = ["EvalConfig", "FlowModel", "KeypointSet", "LossWeights", "MatchConfig", "SemanticFlowMatcher", "match_features"]
