"""Localizability-aware point-to-plane ICP with constrained updates."""

from .geometry import PointCloud, PoseUpdate, RigidTransform, apply_transform, compose, inverse
from .correspondence import CorrespondenceSet, estimate_normals, match, to_lidar_frame
from .registration import LinearizedProblem, linearize, solve_unconstrained
from .localizability import Category, LocalizabilityParams, LocalizabilityReport, detect
from .constraints import ConstraintSet, build_constraints, solve_kkt
from .baselines import RemapMode, RemappingConfig, solution_remap
from .icp import Handler, IcpConfig, IcpResult, run_icp
from .metrics import Trajectory, ape, map_p2p_error, rpe_per_distance

__version__ = "0.1.0"
