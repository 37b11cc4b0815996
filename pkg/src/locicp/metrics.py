"""Trajectory (APE/RPE) and map error metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyAssociation
from .geometry import PointCloud, RigidTransform, compose, inverse, rotation_angle


@dataclass(frozen=True)
class Trajectory:
    stamps: np.ndarray
    poses: Tuple[RigidTransform, ...]

    def __post_init__(self):
        stamps = np.asarray(self.stamps, dtype=float)
        if len(stamps) != len(self.poses):
            raise ValueError("stamps and poses differ in length")
        if np.any(np.diff(stamps) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "stamps", stamps)
        object.__setattr__(self, "poses", tuple(self.poses))

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def positions(self) -> np.ndarray:
        return np.array([T.translation for T in self.poses]).reshape(-1, 3)

    def traveled(self) -> np.ndarray:
        steps = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(steps)])

    def transformed(self, T: RigidTransform) -> "Trajectory":
        return Trajectory(self.stamps, tuple(compose(T, P) for P in self.poses))


@dataclass(frozen=True)
class PrefixMeters:
    meters: float


Alignment = Union[str, PrefixMeters]
ORIGIN = "origin"


@dataclass(frozen=True)
class ApeResult:
    trans_mean: float
    trans_std: float
    rot_mean_deg: float
    rot_std_deg: float
    last_position_error: float
    trans_errors: np.ndarray
    rot_errors_deg: np.ndarray


@dataclass(frozen=True)
class RpeResult:
    trans_mean: float
    trans_std: float
    rot_mean_deg: float
    rot_std_deg: float
    pairs: int


def associate(estimate: Trajectory, reference: Trajectory, max_dt: float = None):
    """Nearest-timestamp association; returns index arrays ``(est, ref)``."""
    if len(estimate) == 0 or len(reference) == 0:
        raise EmptyAssociation("empty trajectory")
    if max_dt is None:
        period = np.median(np.diff(reference.stamps)) if len(reference) > 1 else 1.0
        max_dt = 0.5 * period
    pos = np.searchsorted(estimate.stamps, reference.stamps)
    lo = np.clip(pos - 1, 0, len(estimate) - 1)
    hi = np.clip(pos, 0, len(estimate) - 1)
    pick = np.where(np.abs(estimate.stamps[lo] - reference.stamps) <= np.abs(estimate.stamps[hi] - reference.stamps), lo, hi)
    ok = np.abs(estimate.stamps[pick] - reference.stamps) <= max_dt + 1e-12
    if not ok.any():
        raise EmptyAssociation("no poses within the association window")
    return pick[ok], np.flatnonzero(ok)


def umeyama_rigid(src, dst) -> RigidTransform:
    """Least-squares rotation+translation mapping ``src`` points onto ``dst``."""
    src, dst = np.asarray(src, float), np.asarray(dst, float)
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    cov = (dst - mu_d).T @ (src - mu_s) / len(src)
    U, _, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    return RigidTransform(R, mu_d - R @ mu_s)


def _stats(values):
    return float(np.mean(values)), float(np.std(values))


def ape(estimate: Trajectory, reference: Trajectory, alignment: Alignment = ORIGIN) -> ApeResult:
    ei, ri = associate(estimate, reference)
    est = [estimate.poses[i] for i in ei]
    ref = [reference.poses[i] for i in ri]
    if isinstance(alignment, PrefixMeters):
        dist = reference.traveled()[ri]
        sel = np.flatnonzero(dist - dist[0] <= alignment.meters)
        if len(sel) < 3:
            sel = np.arange(min(3, len(est)))
        if len(sel) < 3:
            # too few poses for a point fit; fall back to first-pose alignment
            align = compose(ref[0], inverse(est[0]))
        else:
            align = umeyama_rigid([est[i].translation for i in sel], [ref[i].translation for i in sel])
    elif alignment == ORIGIN:
        align = compose(ref[0], inverse(est[0]))
    else:
        raise ValueError(f"unknown alignment {alignment!r}")
    te, re = [], []
    for E, G in zip(est, ref):
        A = compose(align, E)
        te.append(np.linalg.norm(A.translation - G.translation))
        re.append(np.degrees(rotation_angle(G.rotation.T @ A.rotation)))
    te, re = np.array(te), np.array(re)
    tm, ts = _stats(te)
    rm, rs = _stats(re)
    return ApeResult(tm, ts, rm, rs, float(te[-1]), te, re)


def rpe_per_distance(estimate: Trajectory, reference: Trajectory, segment_m: float = 10.0) -> RpeResult:
    """Relative pose error over segments of ``segment_m`` traveled reference distance."""
    ei, ri = associate(estimate, reference)
    ref = [reference.poses[i] for i in ri]
    est = [estimate.poses[i] for i in ei]
    dist = reference.traveled()[ri]
    te, re = [], []
    for a in range(len(ref)):
        b = int(np.searchsorted(dist, dist[a] + segment_m - 1e-9))
        if b >= len(ref):
            break
        d_ref = compose(inverse(ref[a]), ref[b])
        d_est = compose(inverse(est[a]), est[b])
        err = compose(inverse(d_ref), d_est)
        te.append(np.linalg.norm(err.translation))
        re.append(np.degrees(rotation_angle(err.rotation)))
    if not te:
        raise EmptyAssociation(f"trajectory shorter than {segment_m} m")
    tm, ts = _stats(te)
    rm, rs = _stats(re)
    return RpeResult(tm, ts, rm, rs, len(te))


@dataclass(frozen=True)
class MapError:
    mean: float
    rmse: float
    per_point: np.ndarray


def map_p2p_error(built_map: Union[PointCloud, np.ndarray], ground_truth: Union[PointCloud, np.ndarray]) -> MapError:
    """Distance from every built-map point to its nearest ground-truth point."""
    built = built_map.points if isinstance(built_map, PointCloud) else np.asarray(built_map, float)
    truth = ground_truth.points if isinstance(ground_truth, PointCloud) else np.asarray(ground_truth, float)
    if len(truth) == 0:
        raise ValueError("ground truth is empty")
    if len(built) == 0:
        return MapError(0.0, 0.0, np.zeros(0))
    d, _ = cKDTree(truth).query(built)
    return MapError(float(d.mean()), float(np.sqrt(np.mean(d**2))), d)
