"""Iterative point-to-plane ICP with pluggable degeneracy handling.

Each iteration linearizes in a map-aligned frame centred on the current
sensor position, so rotation updates pivot about the sensor and a
translational constraint pins the sensor position itself. Localizability
analysis runs on the same pairs expressed in the sensor frame; eigenvectors
are rotated back to the map frame with the current rotation estimate.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from .baselines import RemapMode, RemappingConfig, solution_remap
from .constraints import ConstraintSet, build_constraints, solve_kkt
from .correspondence import ReferenceIndex, match, to_lidar_frame
from .errors import NonFiniteUpdate
from .geometry import PointCloud, PoseUpdate, RigidTransform, exp_rotvec
from .localizability import (
    Category,
    LocalizabilityParams,
    LocalizabilityReport,
    detect,
    eigen_analyze,
)
from .registration import linearize, solve_unconstrained

log = logging.getLogger(__name__)


class Handler(enum.Enum):
    NONE = "none"
    XICP = "xicp"
    XSICP = "xs-icp"
    REMAP = "remap"
    REMAP_ADAPTIVE = "remap-adaptive"


@dataclass(frozen=True)
class IcpConfig:
    max_iterations: int = 40
    trans_tol: float = 1e-4
    rot_tol: float = 1e-4
    max_match_dist: float = 0.5
    degeneracy_handler: Handler = Handler.NONE
    localizability: LocalizabilityParams = field(default_factory=LocalizabilityParams)
    remapping: RemappingConfig = field(default_factory=RemappingConfig)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if min(self.trans_tol, self.rot_tol, self.max_match_dist) <= 0:
            raise ValueError("tolerances and max_match_dist must be positive")
        if isinstance(self.degeneracy_handler, str):
            object.__setattr__(self, "degeneracy_handler", Handler(self.degeneracy_handler))


@dataclass
class IterationRecord:
    """Per-iteration diagnostics; the source of the localizability CSV rows."""

    iteration: int
    matches: int
    cost: float
    update: np.ndarray
    eigenvalues: np.ndarray
    L_combined: Optional[np.ndarray] = None
    L_strong: Optional[np.ndarray] = None
    categories: Optional[tuple] = None
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    violation: float = 0.0


@dataclass
class IcpResult:
    pose: RigidTransform
    iterations: int
    final_cost: float
    per_iteration_reports: List[LocalizabilityReport]
    converged: bool
    records: List[IterationRecord] = field(default_factory=list)


def apply_update(T: RigidTransform, x: PoseUpdate) -> RigidTransform:
    """Rotate about the current sensor position, then translate."""
    return RigidTransform(exp_rotvec(x.rotvec) @ T.rotation, T.translation + x.trans)


def run_icp(reading: PointCloud, reference: Union[PointCloud, ReferenceIndex], T_init: RigidTransform,
            cfg: IcpConfig = IcpConfig()) -> IcpResult:
    index = reference if isinstance(reference, ReferenceIndex) else ReferenceIndex(reference)
    handler = cfg.degeneracy_handler
    params = cfg.localizability
    T = T_init
    reports: List[LocalizabilityReport] = []
    records: List[IterationRecord] = []
    frozen_report = None
    converged = False
    cost = 0.0

    for it in range(1, cfg.max_iterations + 1):
        matches = match(reading, index, T, cfg.max_match_dist)
        centred = matches.transformed(RigidTransform(np.eye(3), -T.translation), matches.frame)
        problem = linearize(centred)
        cost = problem.cost()
        rec = IterationRecord(it, len(matches), cost, np.zeros(6), np.zeros(6))

        if handler in (Handler.XICP, Handler.XSICP):
            if handler is Handler.XSICP and frozen_report is not None:
                report = frozen_report
                lidar = None
            else:
                lidar = to_lidar_frame(matches, T)
                report = detect(lidar, linearize(lidar), params, binary=handler is Handler.XSICP)
                if handler is Handler.XSICP:
                    frozen_report = report
            constraints = build_constraints(report, lidar, T.rotation)
            x, _ = solve_kkt(problem, constraints)
            reports.append(report)
            rec.eigenvalues = report.basis.eigenvalues
            rec.L_combined = report.tables.L_combined
            rec.L_strong = report.tables.L_strong
            rec.categories = report.eta
            rec.constraints = constraints
            rec.violation = constraints.violation(x.as_vector())
        elif handler in (Handler.REMAP, Handler.REMAP_ADAPTIVE):
            rcfg = cfg.remapping
            want = RemapMode.FIXED_THRESHOLD if handler is Handler.REMAP else RemapMode.RELATIVE_CONDITION
            if rcfg.mode is not want:
                rcfg = RemappingConfig(rcfg.eigenvalue_threshold, rcfg.condition_ratio, want)
            x, mask = solution_remap(problem, rcfg)
            rec.eigenvalues = np.maximum(np.linalg.eigvalsh(problem.hessian), 0.0)
            rec.categories = tuple(Category.NONE if m else Category.FULL for m in mask)
        else:
            x = solve_unconstrained(problem)
            rec.eigenvalues = eigen_analyze(problem).eigenvalues

        if not x.is_finite():
            raise NonFiniteUpdate(f"iteration {it}: non-finite update {x.as_vector()}")
        rec.update = x.as_vector()
        records.append(rec)
        T = apply_update(T, x)
        if np.linalg.norm(x.trans) < cfg.trans_tol and np.linalg.norm(x.rotvec) < cfg.rot_tol:
            converged = True
            break

    return IcpResult(T, len(records), cost, reports, converged, records)
