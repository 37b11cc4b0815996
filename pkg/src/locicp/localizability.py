"""Eigenspace localizability detection.

The Hessian's rotational and translational 3x3 blocks are decomposed
separately. Every information pair (point, normal) is projected onto the
resulting eigenvectors: the normal acts as a force on the translational
directions and the torque ``p x n`` on the rotational ones. Contributions are
filtered twice (noise floor ``kappa_f``, strong cut ``cos 45°``), summed per
direction and pushed through a three-level decision tree.

Column order everywhere is ``[r1, r2, r3, t1, t2, t3]`` with eigenvalues
ascending inside each block, so ``t1`` is the weakest translational direction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .correspondence import CorrespondenceSet
from .errors import FrameMismatch
from .registration import LinearizedProblem

STRONG_CUT = math.cos(math.radians(45.0))
KAPPA_F_SPARSE = math.cos(math.radians(80.0))
KAPPA_F_DENSE = math.cos(math.radians(60.0))
DIRECTION_NAMES = ("r1", "r2", "r3", "t1", "t2", "t3")


class Category(enum.IntEnum):
    NONE = 0
    PARTIAL = 1
    FULL = 2

    def __str__(self) -> str:
        return self.name.lower()


class Branch(enum.Enum):
    """Which decision-tree comparison fired for a direction."""

    LC_KAPPA1 = "Lc>=k1"
    LS_KAPPA2 = "Ls>=k2"
    LC_KAPPA2 = "Lc>=k2"
    LS_KAPPA3 = "Ls>=k3"
    NONE = "none"


@dataclass(frozen=True)
class LocalizabilityParams:
    kappa1: float = 250.0
    kappa2: float = 180.0
    kappa3: float = 35.0
    kappa_f: float = KAPPA_F_SPARSE
    strong_cut: float = STRONG_CUT
    torque_eps: float = 1e-6

    def __post_init__(self):
        if not (self.kappa1 >= self.kappa2 > self.kappa3 > 0):
            raise ValueError("need kappa1 >= kappa2 > kappa3 > 0")
        if not (0 <= self.kappa_f < self.strong_cut):
            raise ValueError("need 0 <= kappa_f < strong_cut")
        if self.torque_eps <= 0:
            raise ValueError("torque_eps must be positive")


@dataclass(frozen=True)
class EigenBasis:
    """Eigenvectors (columns) and ascending eigenvalues of the two Hessian blocks."""

    V_t: np.ndarray
    V_r: np.ndarray
    Sigma_t: np.ndarray
    Sigma_r: np.ndarray
    frame: str = "L"

    def direction(self, j: int) -> np.ndarray:
        """Eigenvector for column ``j`` of the ``[r1..t3]`` layout."""
        return self.V_r[:, j] if j < 3 else self.V_t[:, j - 3]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.concatenate([self.Sigma_r, self.Sigma_t])


@dataclass(frozen=True)
class ContributionTables:
    I: np.ndarray
    I_filtered: np.ndarray
    I_strong: np.ndarray
    L_combined: np.ndarray
    L_strong: np.ndarray
    dropped_pairs: np.ndarray


@dataclass(frozen=True)
class LocalizabilityReport:
    basis: EigenBasis
    tables: ContributionTables
    eta: Tuple[Category, ...]
    triggering_branch: Tuple[Branch, ...]

    def non_full(self, block: str = "all") -> list:
        cols = {"all": range(6), "r": range(3), "t": range(3, 6)}[block]
        return [j for j in cols if self.eta[j] != Category.FULL]


def _sym_eig(A):
    A = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(A)
    w = np.maximum(w, 0.0)
    # sign convention: largest-magnitude component of each eigenvector is non-negative
    pivot = np.argmax(np.abs(V), axis=0)
    signs = np.where(V[pivot, np.arange(3)] < 0, -1.0, 1.0)
    return w, V * signs


def eigen_analyze(problem: LinearizedProblem) -> EigenBasis:
    """Separate symmetric eigen-decompositions of the rotation and translation blocks."""
    H = problem.hessian
    Sr, Vr = _sym_eig(H[:3, :3])
    St, Vt = _sym_eig(H[3:, 3:])
    return EigenBasis(Vt, Vr, St, Sr, problem.frame)


def compute_contributions(matches: CorrespondenceSet, basis: EigenBasis,
                          params: LocalizabilityParams = LocalizabilityParams()) -> ContributionTables:
    if matches.frame != basis.frame:
        raise FrameMismatch(basis.frame, matches.frame)
    n = matches.n
    torque = np.cross(matches.p, n)
    tnorm = np.linalg.norm(torque, axis=1)
    dropped = tnorm < params.torque_eps

    # moment normalization only for |tau| >= 1; sub-unit torques are used raw
    scale = np.where(tnorm >= 1.0, tnorm, 1.0)
    F_r = torque / scale[:, None]
    F_r[dropped] = 0.0

    I = np.empty((len(matches), 6))
    I[:, :3] = np.abs(F_r @ basis.V_r)
    I[:, 3:] = np.abs(n @ basis.V_t)
    np.clip(I, 0.0, 1.0, out=I)

    I_f = np.where(I >= params.kappa_f, I, 0.0)
    I_s = np.where(I_f >= params.strong_cut, I_f, 0.0)
    return ContributionTables(
        I=I, I_filtered=I_f, I_strong=I_s,
        L_combined=I_f.sum(axis=0), L_strong=I_s.sum(axis=0),
        dropped_pairs=np.flatnonzero(dropped),
    )


def categorize_direction(lc: float, ls: float, params: LocalizabilityParams):
    if lc >= params.kappa1:
        return Category.FULL, Branch.LC_KAPPA1
    if ls >= params.kappa2:
        return Category.FULL, Branch.LS_KAPPA2
    # L_c takes precedence when both partial tests hold
    if lc >= params.kappa2:
        return Category.PARTIAL, Branch.LC_KAPPA2
    if ls >= params.kappa3:
        return Category.PARTIAL, Branch.LS_KAPPA3
    return Category.NONE, Branch.NONE


def categorize(tables: ContributionTables, params: LocalizabilityParams = LocalizabilityParams(),
               basis: EigenBasis = None) -> LocalizabilityReport:
    out = [categorize_direction(tables.L_combined[j], tables.L_strong[j], params) for j in range(6)]
    return LocalizabilityReport(basis, tables, tuple(c for c, _ in out), tuple(b for _, b in out))


def categorize_binary(tables: ContributionTables, params: LocalizabilityParams = LocalizabilityParams(),
                      basis: EigenBasis = None) -> LocalizabilityReport:
    """Two-level variant without a partial tier (strong threshold equals ``kappa2``)."""
    eta, branches = [], []
    for lc, ls in zip(tables.L_combined, tables.L_strong):
        if lc >= params.kappa1:
            eta.append(Category.FULL), branches.append(Branch.LC_KAPPA1)
        elif ls >= params.kappa2:
            eta.append(Category.FULL), branches.append(Branch.LS_KAPPA2)
        else:
            eta.append(Category.NONE), branches.append(Branch.NONE)
    return LocalizabilityReport(basis, tables, tuple(eta), tuple(branches))


def detect(matches_lidar: CorrespondenceSet, problem_lidar: LinearizedProblem,
           params: LocalizabilityParams = LocalizabilityParams(), binary: bool = False) -> LocalizabilityReport:
    """Eigen-analysis, contributions and categorization in one call."""
    basis = eigen_analyze(problem_lidar)
    tables = compute_contributions(matches_lidar, basis, params)
    if binary:
        return categorize_binary(tables, params, basis)
    return categorize(tables, params, basis)
