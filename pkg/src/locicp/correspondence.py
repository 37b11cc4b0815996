"""Normal estimation and nearest-neighbour data association."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateNeighborhood, TooFewMatches
from .geometry import PointCloud, RigidTransform, inverse

log = logging.getLogger(__name__)

MIN_MATCHES = 6


@dataclass(frozen=True)
class CorrespondenceSet:
    """Matched information pairs ``(p, q, n)``, one row per pair.

    ``p`` is the (transformed) reading point, ``q`` its nearest reference
    point and ``n`` the reference surface normal at ``q``.
    """

    p: np.ndarray
    q: np.ndarray
    n: np.ndarray
    index_reading: np.ndarray
    index_reference: np.ndarray
    distance: np.ndarray
    frame: str = "M"

    def __len__(self) -> int:
        return self.p.shape[0]

    def subset(self, index) -> "CorrespondenceSet":
        return CorrespondenceSet(
            self.p[index], self.q[index], self.n[index],
            self.index_reading[index], self.index_reference[index],
            self.distance[index], self.frame,
        )

    def transformed(self, T: RigidTransform, frame: str) -> "CorrespondenceSet":
        return CorrespondenceSet(
            T.apply(self.p), T.apply(self.q), T.rotate(self.n),
            self.index_reading, self.index_reference, self.distance, frame,
        )


def estimate_normals(cloud: PointCloud, k: int = 10, viewpoint=None,
                     max_variation: Optional[float] = None) -> PointCloud:
    """PCA normals from the k-nearest-neighbour covariance of every point.

    Each neighbourhood holds the point itself plus its ``k`` nearest
    neighbours. Normals are flipped to face ``viewpoint`` (default: origin of
    the cloud's frame). Neighbourhoods of rank < 2 are flagged invalid, and so
    are neighbourhoods whose surface variation ``l0 / (l0 + l1 + l2)`` exceeds
    ``max_variation`` when given (edges and corners).
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    pts = cloud.points
    if len(pts) < k + 1:
        raise ValueError(f"need at least {k + 1} points, got {len(pts)}")
    vp = np.zeros(3) if viewpoint is None else np.asarray(viewpoint, dtype=float)

    _, idx = cKDTree(pts).query(pts, k=k + 1)
    nbrs = pts[idx]
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / (k + 1)
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0]

    scale = np.maximum(evals[:, 2], np.finfo(float).tiny)
    valid = (evals[:, 2] > 0) & (evals[:, 1] > 1e-12 * scale)
    if max_variation is not None:
        variation = evals[:, 0] / np.maximum(evals.sum(axis=1), np.finfo(float).tiny)
        valid &= variation <= max_variation
    flip = np.einsum("ij,ij->i", normals, vp - pts) < 0
    normals[flip] *= -1.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    normals[~valid] = 0.0
    if not valid.any():
        raise DegenerateNeighborhood("every neighbourhood is collinear")
    if not valid.all():
        log.debug("%d of %d normals flagged invalid", int((~valid).sum()), len(pts))
    return PointCloud(pts, normals, cloud.frame, valid)


class ReferenceIndex:
    """Exact kd-tree over the valid points of a reference cloud with normals."""

    def __init__(self, reference: PointCloud):
        if not reference.has_normals:
            raise ValueError("reference cloud needs normals")
        self.reference = reference
        self.ids = np.flatnonzero(reference.valid_mask())
        self.points = reference.points[self.ids]
        self.tree = cKDTree(self.points)

    def nearest(self, queries, max_dist):
        """Nearest valid reference index per query (-1 when none within ``max_dist``).

        Exact ties resolve to the lowest reference index.
        """
        k = min(2, len(self.points))
        dist, loc = self.tree.query(queries, k=k, distance_upper_bound=max_dist)
        if k == 1:
            dist, loc = dist[:, None], loc[:, None]
        d0, i0 = dist[:, 0], loc[:, 0]
        found = np.isfinite(d0)
        ref = np.full(len(queries), -1)
        ref[found] = self.ids[i0[found]]
        if k == 2:
            tied = np.flatnonzero(found & (dist[:, 1] <= d0 * (1 + 1e-12) + 1e-15))
            for j in tied:
                cand = self.tree.query_ball_point(queries[j], d0[j] * (1 + 1e-12) + 1e-15)
                cand = np.asarray(cand, dtype=int)
                dd = np.linalg.norm(self.points[cand] - queries[j], axis=1)
                cand = cand[dd <= dd.min() * (1 + 1e-12) + 1e-15]
                ref[j] = self.ids[cand].min()
        return ref


def match(reading: PointCloud, reference, T_init: RigidTransform, max_dist: float = 0.5) -> CorrespondenceSet:
    """Associate every transformed reading point with its nearest reference point.

    ``reference`` may be a :class:`PointCloud` or a prebuilt
    :class:`ReferenceIndex` (reuse across ICP iterations).
    """
    if max_dist <= 0:
        raise ValueError("max_dist must be positive")
    index = reference if isinstance(reference, ReferenceIndex) else ReferenceIndex(reference)
    ref = index.reference
    p = T_init.apply(reading.points)
    nearest = index.nearest(p, max_dist)
    keep = np.flatnonzero(nearest >= 0)
    if keep.size < MIN_MATCHES:
        raise TooFewMatches(int(keep.size))
    qi = nearest[keep]
    p = p[keep]
    q = ref.points[qi]
    return CorrespondenceSet(
        p=p, q=q, n=ref.normals[qi],
        index_reading=keep, index_reference=qi,
        distance=np.linalg.norm(p - q, axis=1),
        frame=ref.frame,
    )


def to_lidar_frame(matches: CorrespondenceSet, T_ML: RigidTransform) -> CorrespondenceSet:
    """Express map-frame pairs in the sensor frame via ``inverse(T_ML)``."""
    return matches.transformed(inverse(T_ML), "L")
