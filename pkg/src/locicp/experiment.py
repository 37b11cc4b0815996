"""Scan-to-map experiments over simulated worlds.

A run simulates the ground-truth trajectory and scans, feeds each scan to ICP
with a (noisy) odometry prior chained from the previous estimate, and grows a
voxel map from the registered scans. Everything is seeded, so identical
configurations reproduce identical outputs.
"""

from __future__ import annotations

import configparser
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import io
from .baselines import RemappingConfig
from .correspondence import ReferenceIndex, estimate_normals
from .geometry import PointCloud, RigidTransform, apply_transform, compose, inverse
from .icp import Handler, IcpConfig, IterationRecord, run_icp
from .localizability import LocalizabilityParams
from .metrics import PrefixMeters, Trajectory, ape, map_p2p_error, rpe_per_distance
from .errors import EmptyAssociation, LocIcpError
from .simulator import (
    NoiseSpec,
    SensorSpec,
    TrajectorySpec,
    WorldKind,
    WorldSpec,
    build_world,
    default_trajectory,
    perturb_prior,
    relative_speeds,
    sample_trajectory,
    section_labels,
    simulate_scan,
)

log = logging.getLogger(__name__)

OUTPUT_ENV = "LOCICP_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldSpec
    trajectory: TrajectorySpec
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    icp: IcpConfig = field(default_factory=IcpConfig)
    localizability: LocalizabilityParams = field(default_factory=LocalizabilityParams)
    baseline: RemappingConfig = field(default_factory=RemappingConfig)
    output_dir: Path = Path("runs")
    map_voxel: float = 0.1
    sensor: SensorSpec = field(default_factory=SensorSpec)
    normal_k: int = 10
    normal_max_variation: Optional[float] = 0.02
    prior: str = "noisy"

    def __post_init__(self):
        if self.map_voxel <= 0:
            raise ConfigError("map_voxel must be positive")
        if self.prior not in ("noisy", "perfect"):
            raise ConfigError("prior must be 'noisy' or 'perfect'")

    @classmethod
    def for_world(cls, kind, **overrides) -> "ExperimentConfig":
        world = WorldSpec(WorldKind(kind) if isinstance(kind, str) else kind)
        return cls(world=world, trajectory=default_trajectory(world), **overrides)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, noise=replace(self.noise, seed=int(seed)))

    def icp_config(self, handler) -> IcpConfig:
        return replace(self.icp, degeneracy_handler=Handler(handler),
                       localizability=self.localizability, remapping=self.baseline)


_SECTIONS = {"world", "trajectory", "sensor", "noise", "icp", "localizability", "baseline", "experiment"}


def _floats(section, names):
    out = {}
    for name in names:
        if name in section:
            try:
                out[name] = float(section[name])
            except ValueError as exc:
                raise ConfigError(f"[{section.name}] {name}: {exc}") from None
    return out


def _check_keys(section, allowed):
    extra = set(section) - set(allowed)
    if extra:
        raise ConfigError(f"[{section.name}] unknown keys: {sorted(extra)}")


def _variation(text: str) -> Optional[float]:
    # "none" disables the edge/corner filter on map normals
    return None if text.strip().lower() == "none" else float(text)


def parse_waypoints(text: str):
    wps = []
    for chunk in text.replace("\n", ";").split(";"):
        if chunk.strip():
            vals = [float(v) for v in chunk.replace(",", " ").split()]
            if len(vals) != 4:
                raise ConfigError(f"waypoint needs x y z yaw, got {chunk.strip()!r}")
            wps.append(tuple(vals))
    return tuple(wps)


def load_config(path) -> ExperimentConfig:
    """Read a sectioned key-value (INI) experiment file."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not cp.read(path):
        raise ConfigError(f"cannot read config {path}")
    return config_from_parser(cp)


def config_from_parser(cp: configparser.ConfigParser) -> ExperimentConfig:
    unknown = set(cp.sections()) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    get = lambda name: cp[name] if cp.has_section(name) else {}
    try:
        w = get("world")
        if "kind" not in w:
            raise ConfigError("[world] kind is required")
        kind = WorldKind(w["kind"])
        dim_keys = [k for k in w if k not in ("kind", "spacing", "seed", "misalignment_deg")]
        world = WorldSpec(
            kind,
            {k: float(w[k]) for k in dim_keys},
            float(w.get("spacing", 0.1)),
            int(w.get("seed", 0)),
            float(w.get("misalignment_deg", 20.0)),
        )

        t = get("trajectory")
        if t:
            _check_keys(t, ["linear_speed", "angular_speed", "scan_rate", "waypoints"])
        speeds = _floats(t, ["linear_speed", "angular_speed", "scan_rate"]) if t else {}
        traj = default_trajectory(world, **speeds)
        if t and "waypoints" in t:
            traj = replace(traj, waypoints=parse_waypoints(t["waypoints"]))

        s = get("sensor")
        if s:
            _check_keys(s, ["max_range", "max_points"])
        sensor = SensorSpec(float(s.get("max_range", 15.0)), int(s.get("max_points", 8192)))

        n = get("noise")
        if n:
            _check_keys(n, ["sigma_t_per_speed", "sigma_r_per_speed", "range_noise", "seed"])
        noise = NoiseSpec(**_floats(n, ["sigma_t_per_speed", "sigma_r_per_speed", "range_noise"]) if n else {},
                          seed=int(n.get("seed", 0)) if n else 0)

        i = get("icp")
        if i:
            _check_keys(i, ["max_iterations", "trans_tol", "rot_tol", "max_match_dist", "handler"])
        icp_kw = _floats(i, ["trans_tol", "rot_tol", "max_match_dist"]) if i else {}
        if i and "max_iterations" in i:
            icp_kw["max_iterations"] = int(i["max_iterations"])
        if i and "handler" in i:
            icp_kw["degeneracy_handler"] = Handler(i["handler"])
        icp = IcpConfig(**icp_kw)

        lz = get("localizability")
        if lz:
            _check_keys(lz, ["kappa1", "kappa2", "kappa3", "kappa_f", "torque_eps"])
        loc = LocalizabilityParams(**(_floats(lz, ["kappa1", "kappa2", "kappa3", "kappa_f", "torque_eps"]) if lz else {}))

        b = get("baseline")
        if b:
            _check_keys(b, ["eigenvalue_threshold", "condition_ratio"])
        base = RemappingConfig(**(_floats(b, ["eigenvalue_threshold", "condition_ratio"]) if b else {}))

        e = get("experiment")
        if e:
            _check_keys(e, ["output_dir", "map_voxel", "normal_k", "normal_max_variation", "prior"])
        return ExperimentConfig(
            world=world, trajectory=traj, noise=noise, icp=icp, localizability=loc, baseline=base,
            output_dir=Path(e.get("output_dir", "runs")) if e else Path("runs"),
            map_voxel=float(e.get("map_voxel", 0.1)) if e else 0.1,
            sensor=sensor,
            normal_k=int(e.get("normal_k", 10)) if e else 10,
            normal_max_variation=_variation(e.get("normal_max_variation", "0.02")) if e else 0.02,
            prior=e.get("prior", "noisy") if e else "noisy",
        )
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def resolve_output_dir(cfg: ExperimentConfig, override: Optional[str] = None) -> Path:
    if override:
        return Path(override)
    if os.environ.get(OUTPUT_ENV):
        return Path(os.environ[OUTPUT_ENV])
    return Path(cfg.output_dir)


class VoxelMap:
    """Accumulated map keeping the first point (and its normal) per voxel."""

    def __init__(self, voxel: float):
        self.voxel = float(voxel)
        self._keys = np.zeros(0, dtype=np.int64)
        self._points = np.zeros((0, 3))
        self._normals = np.zeros((0, 3))
        self._index: Optional[ReferenceIndex] = None

    def __len__(self) -> int:
        return len(self._points)

    def _encode(self, pts):
        v = np.floor(pts / self.voxel).astype(np.int64) + (1 << 20)
        return (v[:, 0] << 42) | (v[:, 1] << 21) | v[:, 2]

    def insert(self, cloud: PointCloud) -> int:
        mask = cloud.valid_mask()
        pts, nrm = cloud.points[mask], cloud.normals[mask]
        keys = self._encode(pts)
        _, first = np.unique(keys, return_index=True)
        first = np.sort(first)
        keys, pts, nrm = keys[first], pts[first], nrm[first]
        fresh = ~np.isin(keys, self._keys)
        if fresh.any():
            self._keys = np.concatenate([self._keys, keys[fresh]])
            self._points = np.vstack([self._points, pts[fresh]])
            self._normals = np.vstack([self._normals, nrm[fresh]])
            self._index = None
        return int(fresh.sum())

    def cloud(self) -> PointCloud:
        return PointCloud(self._points, self._normals, "M")

    def index(self) -> ReferenceIndex:
        if self._index is None:
            self._index = ReferenceIndex(self.cloud())
        return self._index


@dataclass
class Simulation:
    world: PointCloud
    times: np.ndarray
    poses: List[RigidTransform]
    labels: List[str]

    def trajectory(self) -> Trajectory:
        return Trajectory(self.times, tuple(self.poses))


def simulate(cfg: ExperimentConfig) -> Simulation:
    world = build_world(cfg.world)
    times, poses = sample_trajectory(cfg.trajectory)
    labels = section_labels(cfg.world, [T.translation for T in poses], cfg.sensor.max_range)
    return Simulation(world, times, poses, labels)


def scan_at(cfg: ExperimentConfig, sim: Simulation, k: int) -> PointCloud:
    return simulate_scan(sim.world, sim.poses[k], cfg.sensor.max_range, cfg.noise,
                         cfg.sensor.max_points, seed=(cfg.noise.seed, k, 0))


@dataclass
class FrameResult:
    index: int
    stamp: float
    section: str
    prior: RigidTransform
    pose: RigidTransform
    failed: bool = False
    error: str = ""
    converged: bool = True
    iterations: int = 0
    records: List[IterationRecord] = field(default_factory=list)

    @property
    def max_violation(self) -> float:
        return max((r.violation for r in self.records), default=0.0)


@dataclass
class RunResult:
    handler: Handler
    frames: List[FrameResult]
    map: PointCloud
    simulation: Simulation

    def trajectory(self) -> Trajectory:
        return Trajectory(np.array([f.stamp for f in self.frames]), tuple(f.pose for f in self.frames))


def _insert_scan(cfg, vmap: VoxelMap, scan: PointCloud, pose: RigidTransform):
    with_normals = estimate_normals(PointCloud(scan.points, None, "L"), cfg.normal_k,
                                    max_variation=cfg.normal_max_variation)
    vmap.insert(apply_transform(pose, with_normals, "M"))


def register(cfg: ExperimentConfig, handler, sim: Optional[Simulation] = None) -> RunResult:
    """Scan-to-map registration over the simulated sequence with one handler."""
    handler = Handler(handler)
    sim = sim or simulate(cfg)
    icp_cfg = cfg.icp_config(handler)
    vmap = VoxelMap(cfg.map_voxel)
    frames: List[FrameResult] = []

    start = sim.poses[0]
    _insert_scan(cfg, vmap, scan_at(cfg, sim, 0), start)
    frames.append(FrameResult(0, float(sim.times[0]), sim.labels[0], start, start))
    dt = 1.0 / cfg.trajectory.scan_rate

    for k in range(1, len(sim.poses)):
        true_delta = compose(inverse(sim.poses[k - 1]), sim.poses[k])
        if cfg.prior == "noisy":
            speeds = relative_speeds(sim.poses[k - 1], sim.poses[k], dt)
            true_delta = perturb_prior(true_delta, speeds, cfg.noise, seed=(cfg.noise.seed, k, 1))
        prior = compose(frames[-1].pose, true_delta)
        scan = scan_at(cfg, sim, k)
        fr = FrameResult(k, float(sim.times[k]), sim.labels[k], prior, prior)
        try:
            res = run_icp(scan, vmap.index(), prior, icp_cfg)
            fr.pose, fr.converged, fr.iterations, fr.records = res.pose, res.converged, res.iterations, res.records
        except LocIcpError as exc:
            log.warning("frame %d: registration failed (%s); keeping prior", k, exc)
            fr.failed, fr.error = True, f"{type(exc).__name__}: {exc}"
        frames.append(fr)
        _insert_scan(cfg, vmap, scan, fr.pose)

    return RunResult(handler, frames, vmap.cloud(), sim)


FRAME_COLUMNS = (["frame", "t", "section", "failed", "converged", "iterations", "max_violation"]
                 + [f"prior_{c}" for c in ("tx", "ty", "tz", "rx", "ry", "rz")] + ["error"])


def write_simulation(cfg: ExperimentConfig, sim: Simulation, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    io.write_ply(out / "world.ply", sim.world)
    io.write_trajectory(out / "ground_truth.csv", sim.trajectory())
    io.write_rows(out / "sections.csv", ["frame", "t", "section"],
                  ([str(k), io._fmt(t), lab] for k, (t, lab) in enumerate(zip(sim.times, sim.labels))))
    scans = out / "scans"
    scans.mkdir(exist_ok=True)
    for k in range(len(sim.poses)):
        io.write_ply(scans / f"scan_{k:04d}.ply", scan_at(cfg, sim, k))


def write_run(cfg: ExperimentConfig, run: RunResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    io.write_trajectory(out / "trajectory.csv", run.trajectory())
    io.write_ply(out / "map.ply", run.map)
    rows = []
    for fr in run.frames:
        rows.extend(io.localizability_rows(fr.index, fr.records))
    io.write_rows(out / "localizability.csv", io.LOCALIZABILITY_COLUMNS, rows)
    io.write_rows(out / "frames.csv", FRAME_COLUMNS, (
        [str(f.index), io._fmt(f.stamp), f.section, str(int(f.failed)), str(int(f.converged)),
         str(f.iterations), f"{f.max_violation:.3e}"]
        + [io._fmt(v) for v in f.prior.translation] + [io._fmt(v) for v in f.prior.rotvec()]
        + [f.error]
        for f in run.frames
    ))
    io.write_rows(out / "run.csv", ["key", "value"], [
        ["handler", run.handler.value],
        ["world", cfg.world.kind.value],
        ["seed", str(cfg.noise.seed)],
        ["frames", str(len(run.frames))],
        ["failed_frames", str(sum(f.failed for f in run.frames))],
    ])


SUMMARY_COLUMNS = [
    "method", "world", "seed", "frames", "failed_frames",
    "ape_trans_mean", "ape_trans_std", "ape_rot_mean_deg", "ape_rot_std_deg", "end_position_error",
    "rpe_trans_mean", "rpe_trans_std", "rpe_rot_mean_deg", "rpe_rot_std_deg",
    "map_mean", "map_rmse",
]


def evaluate(run_dir, truth_dir, align_prefix: Optional[float] = None, segment_m: float = 10.0) -> Dict[str, str]:
    """APE/RPE/map error of a run against simulated ground truth; writes CSVs into ``run_dir``."""
    run_dir, truth_dir = Path(run_dir), Path(truth_dir)
    info = {r["key"]: r["value"] for r in io.read_rows(run_dir / "run.csv")}
    est = io.read_trajectory(run_dir / "trajectory.csv")
    ref = io.read_trajectory(truth_dir / "ground_truth.csv")
    alignment = PrefixMeters(align_prefix) if align_prefix else "origin"
    a = ape(est, ref, alignment)
    try:
        r = rpe_per_distance(est, ref, segment_m)
        rpe_vals = [r.trans_mean, r.trans_std, r.rot_mean_deg, r.rot_std_deg]
    except EmptyAssociation:
        rpe_vals = [None] * 4
    built = io.read_ply(run_dir / "map.ply")
    truth = io.read_ply(truth_dir / "world.ply")
    m = map_p2p_error(built, truth)
    io.write_rows(run_dir / "map_errors.csv", ["x", "y", "z", "error"], (
        [f"{p[0]:.6f}", f"{p[1]:.6f}", f"{p[2]:.6f}", f"{e:.6f}"] for p, e in zip(built.points, m.per_point)
    ))
    vals = [a.trans_mean, a.trans_std, a.rot_mean_deg, a.rot_std_deg, a.last_position_error] + rpe_vals + [m.mean, m.rmse]
    summary = dict(zip(SUMMARY_COLUMNS, [info.get("handler", ""), info.get("world", ""), info.get("seed", ""),
                                         info.get("frames", ""), info.get("failed_frames", "")]
                       + ["" if v is None else io._fmt(v) for v in vals]))
    io.write_rows(run_dir / "metrics.csv", SUMMARY_COLUMNS, [[summary[c] for c in SUMMARY_COLUMNS]])
    return summary


def compare(run_dirs: Sequence, out_path) -> List[Dict[str, str]]:
    """Stack per-run metric rows (methods as rows, metrics as columns)."""
    rows = []
    for d in run_dirs:
        path = Path(d) / "metrics.csv"
        if not path.exists():
            raise FileNotFoundError(f"{path} missing; run 'evaluate' first")
        for row in io.read_rows(path):
            row = {"run": Path(d).name, **row}
            rows.append(row)
    header = ["run"] + SUMMARY_COLUMNS
    io.write_rows(out_path, header, ([r.get(c, "") for c in header] for r in rows))
    return rows
