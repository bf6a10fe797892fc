"""Data-driven predictive control from recorded input-output trajectories.

The package builds Hankel-matrix predictors from measured data, plans with a
condensed receding-horizon QP, picks the recorded dataset that best matches
the current operating condition, and ships a simulated cable-driven arm with
a harness for the experiments.
"""

from .dsa import DatasetBank, SampleWindow, score_dataset, select_dataset
from .errors import DdmpcError
from .planner import PlannerConfig, ReferenceSet, control_step, run_closed_loop
from .predictor import GMatrix, InitWindow, compute_g_matrix, predict
from .trajectory import (SystemDims, Trajectory, build_hankel, min_data_length,
                         partition_hankel, record_episode)

__all__ = [
    "DatasetBank", "DdmpcError", "GMatrix", "InitWindow", "PlannerConfig", "ReferenceSet",
    "SampleWindow", "SystemDims", "Trajectory", "build_hankel", "compute_g_matrix",
    "control_step", "min_data_length", "partition_hankel", "predict", "record_episode",
    "run_closed_loop", "score_dataset", "select_dataset",
]
