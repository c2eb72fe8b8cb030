"""Reliability analysis for stochastic simulators.

Emulates the conditional response distribution of a stochastic limit-state
function with generalized lambda models or stochastic polynomial chaos
expansions, derives the conditional failure probability function
semi-analytically, and estimates failure probabilities with characterized
estimator variance.
"""

from . import basis, benchmarks, data, glam, gld, inputs, reliability, spce, study
from .data import Dataset, load_dataset_csv, save_dataset_csv
from .glam import GlamFitConfig, GlamModel
from .gld import GldParams
from .inputs import MarginalSpec, RandomVector, lognormal_from_moments
from .modelio import load_model, save_model
from .reliability import (
    PfEstimate,
    estimate_pf_double_loop,
    estimate_pf_expected_s,
    estimate_pf_single_loop,
    estimate_pf_trajectories,
    repetition_study,
    variance_decomposition,
)
from .spce import SpceFitConfig, SpceModel

__version__ = "0.1.0"
