"""Bayesian nonparametric segmentation of sequential data with a robust HDP-HSMM."""

from .core import Hyperparams, ModelState, ObservationSequence, SegmentSequence
from .distributions import (
    DurationParams,
    DurationPrior,
    GaussianParams1D,
    GaussianParamsMV,
    MVEmissionPrior,
    ScalarEmissionPrior,
)
from .estimator import HDPHSMMSegmenter
from .gibbs import PointEstimate, PosteriorChain, run_chain
from .merge import MergeOutcome, merge_redundant_states
from .simulate import GroundTruth, default_truth, generate_sequence, run_replication_study

__version__ = "0.1.0"

__all__ = [
    "DurationParams",
    "DurationPrior",
    "GaussianParams1D",
    "GaussianParamsMV",
    "GroundTruth",
    "HDPHSMMSegmenter",
    "Hyperparams",
    "MergeOutcome",
    "ModelState",
    "MVEmissionPrior",
    "ObservationSequence",
    "PointEstimate",
    "PosteriorChain",
    "ScalarEmissionPrior",
    "SegmentSequence",
    "default_truth",
    "generate_sequence",
    "merge_redundant_states",
    "run_chain",
    "run_replication_study",
    "__version__",
]
