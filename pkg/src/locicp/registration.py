"""Point-to-plane linearization and the unconstrained least-squares step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correspondence import MIN_MATCHES, CorrespondenceSet
from .errors import TooFewMatches
from .geometry import PoseUpdate

SVD_RCOND = 1e-10


@dataclass(frozen=True)
class LinearizedProblem:
    """Stacked point-to-plane system ``J x ≈ r`` with ``x = [r; t]``.

    Row i of ``jacobian`` is ``[(p_i x n_i)^T, n_i^T]`` and
    ``residuals[i] = n_i^T (q_i - p_i)``.
    """

    jacobian: np.ndarray
    residuals: np.ndarray
    hessian: np.ndarray
    rhs: np.ndarray
    frame: str = "M"

    @property
    def size(self) -> int:
        return self.jacobian.shape[0]

    def cost(self, x=None) -> float:
        """Sum of squared point-to-plane residuals after the linear update ``x``."""
        e = self.residuals if x is None else self.jacobian @ np.asarray(x) - self.residuals
        return float(e @ e)


def linearize(matches: CorrespondenceSet) -> LinearizedProblem:
    if len(matches) < MIN_MATCHES:
        raise TooFewMatches(len(matches))
    J = np.hstack([np.cross(matches.p, matches.n), matches.n])
    r = np.einsum("ij,ij->i", matches.n, matches.q - matches.p)
    H = J.T @ J
    H = 0.5 * (H + H.T)
    return LinearizedProblem(J, r, H, J.T @ r, matches.frame)


def solve_unconstrained(problem: LinearizedProblem) -> PoseUpdate:
    """Minimum-norm least-squares step via a truncated SVD of the Jacobian."""
    U, s, Vt = np.linalg.svd(problem.jacobian, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return PoseUpdate.zero()
    keep = s > SVD_RCOND * s[0]
    coef = (U[:, keep].T @ problem.residuals) / s[keep]
    return PoseUpdate.from_vector(Vt[keep].T @ coef)
