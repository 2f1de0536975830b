"""Multilevel Monte Carlo with path branching for digital options."""

from ._accel import backend
from .branching import (BranchIndex, BranchSchedule, LeafOutcome, WorkCounter, compute_depth,
                        pair_meet_census, segment_times, simulate_tree, tree_work)
from .digital_sets import DigitalSet, get_set
from .estimators import (EstimatorConfig, LevelSample, branching_sample, delta_p_antithetic,
                         delta_p_plain, make_config)
from .mlmc import LevelConfig, MlmcResult, MomentAccumulator, allocate_samples, kurtosis, run_mlmc
from .rng import StreamKey, child_key, standard_normal
from .sde_models import GbmParams, ModelSpec, gbm_digital_closed_form, get_model, make_clark_cameron, make_gbm

__all__ = [
    "BranchIndex", "BranchSchedule", "DigitalSet", "EstimatorConfig", "GbmParams", "LeafOutcome", "LevelConfig",
    "LevelSample", "MlmcResult", "ModelSpec", "MomentAccumulator", "StreamKey", "WorkCounter", "allocate_samples",
    "backend", "branching_sample", "child_key", "compute_depth", "delta_p_antithetic", "delta_p_plain",
    "gbm_digital_closed_form", "get_model", "get_set", "kurtosis", "make_clark_cameron", "make_config", "make_gbm",
    "pair_meet_census", "run_mlmc", "segment_times", "simulate_tree", "standard_normal", "tree_work",
]
