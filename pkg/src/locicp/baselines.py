"""Eigenvalue-based degeneracy baselines plugged into the same ICP loop.

Both decompose the full 6x6 Hessian (rotation and translation mixed) and
project the unconstrained step onto the retained eigenvectors:

* fixed threshold: eigenvalue below a constant is degenerate;
* relative condition: ``lambda_max / lambda_i`` above a ratio is degenerate.

The relative-condition mode is an approximation of the adaptive detector it
stands in for; its default ratio is a tuning choice, not a published value.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .geometry import PoseUpdate
from .registration import LinearizedProblem, solve_unconstrained


class RemapMode(enum.Enum):
    FIXED_THRESHOLD = "fixed"
    RELATIVE_CONDITION = "relative"


@dataclass(frozen=True)
class RemappingConfig:
    eigenvalue_threshold: float = 120.0
    condition_ratio: float = 60.0
    mode: RemapMode = RemapMode.FIXED_THRESHOLD

    def __post_init__(self):
        if self.eigenvalue_threshold < 0:
            raise ValueError("eigenvalue_threshold must be >= 0")
        if self.condition_ratio <= 1:
            raise ValueError("condition_ratio must be > 1")


def degenerate_mask(eigenvalues, cfg: RemappingConfig) -> np.ndarray:
    lam = np.maximum(np.asarray(eigenvalues, dtype=float), 0.0)
    if cfg.mode is RemapMode.FIXED_THRESHOLD:
        return lam < cfg.eigenvalue_threshold
    lam_max = lam.max()
    with np.errstate(divide="ignore"):
        ratio = np.where(lam > 0, lam_max / np.where(lam > 0, lam, 1.0), np.inf)
    return ratio > cfg.condition_ratio


def solution_remap(problem: LinearizedProblem, cfg: RemappingConfig = RemappingConfig()
                   ) -> Tuple[PoseUpdate, np.ndarray]:
    """Unconstrained step with its components along degenerate eigenvectors removed.

    ``mask[i]`` refers to the i-th eigenvalue of the Hessian in ascending order.
    """
    x_unc = solve_unconstrained(problem)
    lam, V = np.linalg.eigh(0.5 * (problem.hessian + problem.hessian.T))
    mask = degenerate_mask(lam, cfg)
    if not mask.any():
        return x_unc, mask
    keep = V[:, ~mask]
    x = keep @ (keep.T @ x_unc.as_vector())
    return PoseUpdate.from_vector(x), mask
