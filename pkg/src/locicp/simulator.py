"""Synthetic degenerate worlds, scan simulation and noisy odometry priors.

Worlds are sampled on regular grids with analytic inward-facing normals:

* ``TUNNEL`` - semi-circular shell over a flat floor, open at both ends
  (translation along the axis is unobservable);
* ``CYLINDER_ROOM`` - closed cylinder with floor and ceiling (yaw about the
  axis is unobservable near the centre);
* ``PLANE`` - a single horizontal square;
* ``COMBINED`` - a two-walled corridor opening into a large floor disc;
* ``BOX_ROOM`` - a closed rectangular room, the fully constrained control.

Tunnel and combined worlds are rotated about z so the degenerate direction
is not aligned with a map axis.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import EmptyScan
from .geometry import PointCloud, RigidTransform, compose, exp_rotvec, inverse, rotz

SENSOR_HEIGHT = 1.0
MISALIGNMENT_DEG = 20.0
REFERENCE_LINEAR_SPEED = 0.5
REFERENCE_ANGULAR_SPEED = 0.2


class WorldKind(enum.Enum):
    TUNNEL = "tunnel"
    CYLINDER_ROOM = "cylinder"
    PLANE = "plane"
    COMBINED = "combined"
    BOX_ROOM = "box"


DEFAULT_DIMENSIONS: Dict[WorldKind, Dict[str, float]] = {
    WorldKind.TUNNEL: {"radius": 3.0, "length": 60.0},
    WorldKind.CYLINDER_ROOM: {"radius": 8.0, "height": 4.0},
    WorldKind.PLANE: {"size": 20.0},
    WorldKind.COMBINED: {"corridor_width": 4.0, "corridor_length": 40.0,
                         "wall_height": 3.0, "open_radius": 20.0},
    WorldKind.BOX_ROOM: {"length": 14.0, "width": 10.0, "height": 3.0},
}
MISALIGNED = (WorldKind.TUNNEL, WorldKind.COMBINED)


@dataclass(frozen=True)
class WorldSpec:
    kind: WorldKind
    dimensions: Dict[str, float] = field(default_factory=dict)
    surface_point_spacing: float = 0.1
    seed: int = 0
    misalignment_deg: float = MISALIGNMENT_DEG

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", WorldKind(self.kind))
        dims = dict(DEFAULT_DIMENSIONS[self.kind])
        unknown = set(self.dimensions) - set(dims)
        if unknown:
            raise ValueError(f"unknown dimensions for {self.kind.value}: {sorted(unknown)}")
        dims.update({k: float(v) for k, v in self.dimensions.items()})
        if any(v <= 0 for v in dims.values()):
            raise ValueError("world dimensions must be positive")
        if self.surface_point_spacing <= 0:
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "dimensions", dims)

    @property
    def frame_rotation(self) -> np.ndarray:
        """Rotation from the geometry-aligned local frame to the map frame."""
        if self.kind in MISALIGNED:
            return rotz(math.radians(self.misalignment_deg))
        return np.eye(3)


@dataclass(frozen=True)
class TrajectorySpec:
    """Waypoints ``(x, y, z, yaw)`` traversed at constant speeds.

    Consecutive waypoints with equal position and different yaw turn in place.
    """

    waypoints: Tuple[Tuple[float, float, float, float], ...]
    linear_speed: float = 0.5
    angular_speed: float = 0.2
    scan_rate: float = 1.0

    def __post_init__(self):
        if self.linear_speed < 0 or self.angular_speed < 0:
            raise ValueError("speeds must be non-negative")
        if self.scan_rate <= 0:
            raise ValueError("scan_rate must be positive")
        if len(self.waypoints) < 1:
            raise ValueError("need at least one waypoint")
        object.__setattr__(self, "waypoints", tuple(tuple(float(c) for c in w) for w in self.waypoints))


@dataclass(frozen=True)
class NoiseSpec:
    sigma_t_per_speed: float = 0.0125
    sigma_r_per_speed: float = 0.005
    range_noise: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if min(self.sigma_t_per_speed, self.sigma_r_per_speed, self.range_noise) < 0:
            raise ValueError("noise parameters must be non-negative")


@dataclass(frozen=True)
class SensorSpec:
    max_range: float = 15.0
    max_points: int = 8192


def _grid(lo, hi, spacing):
    n = int(round((hi - lo) / spacing)) + 1
    return np.linspace(lo, hi, max(n, 2))


def _rect(x_range, y_range, z, spacing, normal):
    X, Y = np.meshgrid(_grid(*x_range, spacing), _grid(*y_range, spacing), indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, float(z))])
    return pts, np.tile(normal, (len(pts), 1))


def _disc(center, radius, z, spacing, normal):
    cx, cy = center
    pts, nrm = _rect((cx - radius, cx + radius), (cy - radius, cy + radius), z, spacing, normal)
    keep = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) <= radius + 1e-9
    return pts[keep], nrm[keep]


def _vertical_wall(start, end, height, spacing, normal):
    start, end = np.asarray(start, float), np.asarray(end, float)
    length = np.linalg.norm(end - start)
    s = _grid(0.0, length, spacing)
    z = _grid(0.0, height, spacing)
    S, Z = np.meshgrid(s, z, indexing="ij")
    xy = start + np.outer(S.ravel() / length, end - start)
    pts = np.column_stack([xy, Z.ravel()])
    return pts, np.tile(normal, (len(pts), 1))


def _tunnel(d, h):
    r, L = d["radius"], d["length"]
    floor = _rect((0.0, L), (-r, r), 0.0, h, (0.0, 0.0, 1.0))
    x = _grid(0.0, L, h)
    phi = _grid(0.0, math.pi, h / r)
    X, P = np.meshgrid(x, phi, indexing="ij")
    X, P = X.ravel(), P.ravel()
    arc = np.column_stack([X, r * np.cos(P), r * np.sin(P)])
    arc_n = -np.column_stack([np.zeros_like(P), np.cos(P), np.sin(P)])
    return [floor, (arc, arc_n)]


def _cylinder(d, h):
    R, H = d["radius"], d["height"]
    th = np.linspace(0.0, 2 * math.pi, int(round(2 * math.pi * R / h)), endpoint=False)
    z = _grid(0.0, H, h)
    T, Z = np.meshgrid(th, z, indexing="ij")
    T, Z = T.ravel(), Z.ravel()
    wall = np.column_stack([R * np.cos(T), R * np.sin(T), Z])
    wall_n = -np.column_stack([np.cos(T), np.sin(T), np.zeros_like(T)])
    return [
        (wall, wall_n),
        _disc((0.0, 0.0), R, 0.0, h, (0.0, 0.0, 1.0)),
        _disc((0.0, 0.0), R, H, h, (0.0, 0.0, -1.0)),
    ]


def _plane(d, h):
    s = d["size"] / 2.0
    return [_rect((-s, s), (-s, s), 0.0, h, (0.0, 0.0, 1.0))]


def _combined(d, h):
    w, L, H, Ro = d["corridor_width"], d["corridor_length"], d["wall_height"], d["open_radius"]
    half = w / 2.0
    return [
        _rect((0.0, L), (-half, half), 0.0, h, (0.0, 0.0, 1.0)),
        _vertical_wall((0.0, half), (L, half), H, h, (0.0, -1.0, 0.0)),
        _vertical_wall((0.0, -half), (L, -half), H, h, (0.0, 1.0, 0.0)),
        _disc((L + Ro, 0.0), Ro, 0.0, h, (0.0, 0.0, 1.0)),
    ]


def _box(d, h):
    a, b, H = d["length"] / 2.0, d["width"] / 2.0, d["height"]
    return [
        _rect((-a, a), (-b, b), 0.0, h, (0.0, 0.0, 1.0)),
        _rect((-a, a), (-b, b), H, h, (0.0, 0.0, -1.0)),
        _vertical_wall((-a, -b), (a, -b), H, h, (0.0, 1.0, 0.0)),
        _vertical_wall((-a, b), (a, b), H, h, (0.0, -1.0, 0.0)),
        _vertical_wall((-a, -b), (-a, b), H, h, (1.0, 0.0, 0.0)),
        _vertical_wall((a, -b), (a, b), H, h, (-1.0, 0.0, 0.0)),
    ]


_BUILDERS = {
    WorldKind.TUNNEL: _tunnel,
    WorldKind.CYLINDER_ROOM: _cylinder,
    WorldKind.PLANE: _plane,
    WorldKind.COMBINED: _combined,
    WorldKind.BOX_ROOM: _box,
}


def build_world(spec: WorldSpec, jitter: float = 0.0) -> PointCloud:
    """Ground-truth cloud with analytic normals, in the map frame.

    ``jitter`` (fraction of the spacing) shifts samples in-surface with a
    seeded RNG; the default regular grid is fully deterministic.
    """
    parts = _BUILDERS[spec.kind](spec.dimensions, spec.surface_point_spacing)
    pts = np.vstack([p for p, _ in parts])
    nrm = np.vstack([n for _, n in parts]).astype(float)
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    if jitter > 0:
        rng = np.random.default_rng(spec.seed)
        step = rng.uniform(-0.5, 0.5, pts.shape) * jitter * spec.surface_point_spacing
        step -= np.einsum("ij,ij->i", step, nrm)[:, None] * nrm
        pts = pts + step
    R = spec.frame_rotation
    return PointCloud(pts @ R.T, nrm @ R.T, "M")


def simulate_scan(world: PointCloud, sensor_pose: RigidTransform, max_range: float,
                  noise: NoiseSpec = NoiseSpec(), max_points: int = 8192, seed=None) -> PointCloud:
    """Visible world points in the sensor frame, subsampled and range-perturbed.

    A point is visible when it lies within ``max_range`` and its normal faces
    the sensor. ``seed`` overrides ``noise.seed`` for per-frame streams.
    """
    if len(world) == 0:
        raise EmptyScan("empty world")
    s = sensor_pose.translation
    offset = world.points - s
    dist = np.linalg.norm(offset, axis=1)
    visible = (dist <= max_range) & (dist > 0)
    if world.normals is not None:
        visible &= np.einsum("ij,ij->i", world.normals, -offset) > 0
    idx = np.flatnonzero(visible)
    if idx.size == 0:
        raise EmptyScan(f"no world points visible within {max_range} m")
    rng = np.random.default_rng(noise.seed if seed is None else seed)
    if idx.size > max_points:
        idx = np.sort(rng.choice(idx, size=max_points, replace=False))
    to_sensor = inverse(sensor_pose)
    local = to_sensor.apply(world.points[idx])
    normals = None if world.normals is None else to_sensor.rotate(world.normals[idx])
    if noise.range_noise > 0:
        ranges = np.linalg.norm(local, axis=1)
        local = local + (rng.normal(0.0, noise.range_noise, len(local)) / ranges)[:, None] * local
    return PointCloud(local, normals, "L")


def perturb_prior(true_delta: RigidTransform, speeds: Tuple[float, float], noise: NoiseSpec,
                  seed) -> RigidTransform:
    """Odometry increment corrupted by velocity-scaled zero-mean Gaussian noise.

    Per-axis sigmas scale linearly with speed from the reference values at
    0.5 m/s and 0.2 rad/s. The noise transform is right-composed (body frame).
    """
    v, w = speeds
    if v < 0 or w < 0:
        raise ValueError("speeds must be non-negative")
    sigma_t = noise.sigma_t_per_speed * v / REFERENCE_LINEAR_SPEED
    sigma_r = noise.sigma_r_per_speed * w / REFERENCE_ANGULAR_SPEED
    draw = np.random.default_rng(seed).standard_normal(6)
    dt = draw[:3] * sigma_t
    dr = draw[3:] * sigma_r
    return compose(true_delta, RigidTransform(exp_rotvec(dr), dt))


def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


def sample_trajectory(spec: TrajectorySpec) -> Tuple[np.ndarray, List[RigidTransform]]:
    """Poses at ``scan_rate`` along the waypoint path (yaw-only orientation)."""
    wps = np.array(spec.waypoints, dtype=float)
    seg_start = [0.0]
    for a, b in zip(wps[:-1], wps[1:]):
        d = np.linalg.norm(b[:3] - a[:3])
        dyaw = abs(_wrap(b[3] - a[3]))
        dur = 0.0
        if d > 0:
            dur = max(dur, d / spec.linear_speed if spec.linear_speed > 0 else math.inf)
        if dyaw > 0:
            dur = max(dur, dyaw / spec.angular_speed if spec.angular_speed > 0 else math.inf)
        seg_start.append(seg_start[-1] + dur)
    total = seg_start[-1]
    if not math.isfinite(total):
        raise ValueError("trajectory needs positive speeds to move")
    times = np.arange(0.0, total + 1e-9, 1.0 / spec.scan_rate)
    poses = []
    for t in times:
        k = min(int(np.searchsorted(seg_start, t, side="right")) - 1, len(wps) - 2)
        k = max(k, 0)
        if len(wps) == 1:
            a = b = wps[0]
            u = 0.0
        else:
            a, b = wps[k], wps[k + 1]
            dur = seg_start[k + 1] - seg_start[k]
            u = 0.0 if dur == 0 else min(max((t - seg_start[k]) / dur, 0.0), 1.0)
        pos = a[:3] + u * (b[:3] - a[:3])
        yaw = a[3] + u * _wrap(b[3] - a[3])
        poses.append(RigidTransform(rotz(yaw), pos))
    return times, poses


def relative_speeds(T_prev: RigidTransform, T_next: RigidTransform, dt: float) -> Tuple[float, float]:
    delta = compose(inverse(T_prev), T_next)
    return (float(np.linalg.norm(delta.translation)) / dt,
            float(np.linalg.norm(delta.rotvec())) / dt)


def _path_with_headings(points: Sequence[Tuple[float, float]], z: float):
    """Waypoints that face along each straight segment, turning in place at corners."""
    wps = []
    for a, b in zip(points[:-1], points[1:]):
        yaw = math.atan2(b[1] - a[1], b[0] - a[0])
        if wps and abs(_wrap(wps[-1][3] - yaw)) > 0:
            wps.append((a[0], a[1], z, wps[-1][3] + _wrap(yaw - wps[-1][3])))
        if not wps:
            wps.append((a[0], a[1], z, yaw))
        yaw = wps[-1][3]
        wps.append((b[0], b[1], z, yaw))
    return wps


def default_trajectory(spec: WorldSpec, linear_speed=0.5, angular_speed=0.2, scan_rate=1.0) -> TrajectorySpec:
    """Representative path per world, in the map frame."""
    d = spec.dimensions
    if spec.kind is WorldKind.TUNNEL:
        path = [(1.0, 0.0), (d["length"] - 1.0, 0.0)]
    elif spec.kind is WorldKind.CYLINDER_ROOM:
        # out-and-back spokes through the axis, three headings 120 degrees apart
        r = d["radius"] - 2.0
        path = [(0.0, 0.0)]
        for th in (0.0, 2 * math.pi / 3, 4 * math.pi / 3):
            path += [(r * math.cos(th), r * math.sin(th)), (0.0, 0.0)]
    elif spec.kind is WorldKind.PLANE:
        s = d["size"] / 4.0
        path = [(-s, -s), (s, -s), (s, s), (-s, s), (-s, -s)]
    elif spec.kind is WorldKind.BOX_ROOM:
        a, b = d["length"] / 2.0 - 2.0, d["width"] / 2.0 - 2.5
        path = [(-a, -b), (a, -b), (a, b), (-a, b), (-a, -b)]
    else:
        L, Ro = d["corridor_length"], d["open_radius"]
        cx, rl = L + Ro, 3.0
        loop = [(cx + rl * math.cos(th), rl * math.sin(th))
                for th in np.linspace(math.pi, -math.pi, 9)]
        path = [(4.0, 0.0), (cx - rl, 0.0)] + loop[1:] + [(4.0, 0.0)]
    wps = _path_with_headings(path, SENSOR_HEIGHT)
    R = spec.frame_rotation
    yaw0 = math.atan2(R[1, 0], R[0, 0])
    out = []
    for x, y, z, yaw in wps:
        p = R @ np.array([x, y, z])
        out.append((p[0], p[1], p[2], yaw + yaw0))
    return TrajectorySpec(tuple(out), linear_speed, angular_speed, scan_rate)


def section_labels(spec: WorldSpec, positions, max_range: float, center_radius: float = 2.0) -> List[str]:
    """Ground-truth region of every sensor position.

    tunnel: ``tunnel`` inside the shell; cylinder: ``center`` within
    ``center_radius`` of the axis, else ``wall``; combined: ``corridor``,
    ``open`` (corridor walls out of range) or ``transition``.
    """
    local = np.asarray(positions, dtype=float) @ spec.frame_rotation
    d = spec.dimensions
    labels = []
    for x, y, _ in local:
        if spec.kind is WorldKind.TUNNEL:
            labels.append("tunnel" if 0 <= x <= d["length"] and abs(y) < d["radius"] else "outside")
        elif spec.kind is WorldKind.CYLINDER_ROOM:
            labels.append("center" if math.hypot(x, y) <= center_radius else "wall")
        elif spec.kind is WorldKind.COMBINED:
            L, half = d["corridor_length"], d["corridor_width"] / 2.0
            mouth = min(math.hypot(x - L, y - half), math.hypot(x - L, y + half))
            if x <= L:
                labels.append("corridor")
            elif mouth > max_range:
                labels.append("open")
            else:
                labels.append("transition")
        elif spec.kind is WorldKind.PLANE:
            labels.append("plane")
        else:
            labels.append("room")
    return labels
