"""Multi-cue pose-graph localization for agricultural field robots."""

from .dem import DemGrid, OutOfBounds, dem_densify, dem_query, read_dem, write_dem
from .evaluation import RunStats, ablation_table, compute_stats, parse_mask, parse_masks
from .factors import ALL_KINDS, Factor, FactorKind, WeightParams
from .geometry import Pose6D, interp_pose, phi, retract, so3_exp, so3_log
from .graph import PoseGraph, mrf_neighbors, read_graph, total_cost, write_graph
from .kernels import BACKEND
from .pipeline import (PipelineConfig, run_batch, run_online, synchronize, trigger_nodes,
                       window_extent)
from .sensorlog import SensorLog, Stream, read_log, write_log
from .sim import FieldConfig, NoiseConfig, SteeringMode, generate_truth, simulate, simulate_sensors
from .solver import LinearSolveFailure, SolveReport, SolverConfig, linearize, lm_optimize
from .trajectory import Trajectory, read_trajectory, write_trajectory

__version__ = "0.1.0"
