"""Constraint construction for weakly localizable directions and the KKT solve.

Non-full directions become equality rows ``v . t = v . t0`` (or the
rotational analogue) on the 6-D update. ``none`` directions pin the update to
zero; ``partial`` directions take their value from a small least-squares fit
over the pairs that contribute most to that direction.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .correspondence import CorrespondenceSet
from .errors import EmptySelection, IllConditioned, SingularKKT
from .geometry import PoseUpdate
from .localizability import Branch, Category, ContributionTables, LocalizabilityReport
from .registration import LinearizedProblem, solve_unconstrained

log = logging.getLogger(__name__)

MIN_PARTIAL_PAIRS = 3
REGULARIZE_ABOVE = 1e8
FAIL_ABOVE = 1e12
KKT_RANK_TOL = 1e-12


class Subspace(enum.Enum):
    ROTATION = "rotation"
    TRANSLATION = "translation"


@dataclass(frozen=True)
class ConstraintRow:
    direction: np.ndarray
    subspace: Subspace
    value: float
    column: int = -1
    category: Category = Category.NONE


@dataclass(frozen=True)
class ConstraintSet:
    rows: Tuple[ConstraintRow, ...] = ()
    demoted: Tuple[int, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def C(self) -> np.ndarray:
        C = np.zeros((len(self.rows), 6))
        for k, row in enumerate(self.rows):
            off = 0 if row.subspace is Subspace.ROTATION else 3
            C[k, off:off + 3] = row.direction
        return C

    @property
    def d(self) -> np.ndarray:
        return np.array([row.value for row in self.rows], dtype=float)

    def violation(self, x) -> float:
        if not self.rows:
            return 0.0
        return float(np.max(np.abs(self.C @ np.asarray(x) - self.d)))


def resample_pairs(matches: CorrespondenceSet, tables: ContributionTables, column: int,
                   branch: Branch) -> CorrespondenceSet:
    """Pairs backing a partial direction, by contribution descending then index.

    ``column`` indexes the ``[r1, r2, r3, t1, t2, t3]`` layout (0-based).
    """
    if branch is Branch.LC_KAPPA2:
        values = tables.I_filtered[:, column]
    elif branch is Branch.LS_KAPPA3:
        values = tables.I_strong[:, column]
    else:
        raise ValueError(f"branch {branch} does not describe a partial direction")
    idx = np.flatnonzero(values > 0)
    if idx.size == 0:
        raise EmptySelection(f"no pairs contribute to direction {column}")
    order = np.lexsort((idx, -values[idx]))
    return matches.subset(idx[order])


def _solve_small_spd(A, b):
    """Diagonally scaled, pivoted-LU solve with conditional Tikhonov damping."""
    diag = np.diag(A).copy()
    diag[diag <= 0] = 1.0
    s = 1.0 / np.sqrt(diag)
    As = A * s[:, None] * s[None, :]
    bs = b * s
    cond = np.linalg.cond(As)
    if not np.isfinite(cond) or cond > REGULARIZE_ABOVE:
        As = As + 1e-6 * np.trace(As) / 3.0 * np.eye(3)
        cond = np.linalg.cond(As)
        if not np.isfinite(cond) or cond > FAIL_ABOVE:
            raise IllConditioned(f"re-sampled system condition {cond:.3e}", cond)
    y = lu_solve(lu_factor(As), bs)
    return y * s


def solve_partial_constraint(selected: CorrespondenceSet, subspace: Subspace) -> np.ndarray:
    """Least-squares motion estimate ``t0`` or ``r0`` from re-sampled pairs."""
    if len(selected) < MIN_PARTIAL_PAIRS:
        raise IllConditioned(f"only {len(selected)} re-sampled pairs")
    if subspace is Subspace.TRANSLATION:
        rows = selected.n
    else:
        rows = np.cross(selected.p, selected.n)
    res = np.einsum("ij,ij->i", selected.n, selected.q - selected.p)
    A = rows.T @ rows
    b = rows.T @ res
    return _solve_small_spd(A, b)


def build_constraints(report: LocalizabilityReport, matches: CorrespondenceSet,
                      R_map_lidar=None) -> ConstraintSet:
    """One row per non-full direction; rotation rows first, directions in the map frame.

    ``matches`` must be in the same frame as ``report`` (the sensor frame);
    projections ``v . t0`` are frame-independent so values are computed there
    and only the direction is rotated.
    """
    R = np.eye(3) if R_map_lidar is None else np.asarray(R_map_lidar, dtype=float)
    rows: List[ConstraintRow] = []
    demoted = []
    for j in range(6):
        cat = report.eta[j]
        if cat == Category.FULL:
            continue
        sub = Subspace.ROTATION if j < 3 else Subspace.TRANSLATION
        v = report.basis.direction(j)
        value = 0.0
        if cat == Category.PARTIAL:
            try:
                sel = resample_pairs(matches, report.tables, j, report.triggering_branch[j])
                value = float(v @ solve_partial_constraint(sel, sub))
            except (EmptySelection, IllConditioned) as exc:
                log.debug("direction %d demoted to none: %s", j, exc)
                demoted.append(j)
                value = 0.0
        rows.append(ConstraintRow(R @ v, sub, value, j, cat))
    return ConstraintSet(tuple(rows), tuple(demoted))


def _unconstrained_min_eig(H, C):
    if C.shape[0] == 0:
        return float(np.linalg.eigvalsh(H)[0])
    _, s, Vt = np.linalg.svd(C)
    rank = int(np.sum(s > 1e-12))
    N = Vt[rank:].T
    if N.shape[1] == 0:
        return float("nan")
    return float(np.linalg.eigvalsh(N.T @ H @ N)[0])


def solve_kkt(problem: LinearizedProblem, constraints: ConstraintSet) -> Tuple[PoseUpdate, np.ndarray]:
    """Equality-constrained least squares through the Lagrangian-augmented system.

    Solves ``[[2 J^T J, C^T], [C, 0]] [x; lam] = [2 J^T r; d]`` with an SVD.
    With no constraints this reduces to :func:`solve_unconstrained`.
    """
    c = len(constraints)
    if c == 0:
        return solve_unconstrained(problem), np.zeros(0)
    C, d = constraints.C, constraints.d
    H = problem.hessian
    K = np.zeros((6 + c, 6 + c))
    K[:6, :6] = 2.0 * H
    K[:6, 6:] = C.T
    K[6:, :6] = C
    rhs = np.concatenate([2.0 * problem.rhs, d])
    U, s, Vt = np.linalg.svd(K)
    rank = int(np.sum(s > KKT_RANK_TOL * s[0]))
    if rank < 6 + c:
        raise SingularKKT(_unconstrained_min_eig(H, C), rank, 6 + c)
    sol = Vt.T @ ((U.T @ rhs) / s)
    return PoseUpdate.from_vector(sol[:6]), sol[6:]
