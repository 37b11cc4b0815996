import math

import numpy as np
import pytest

from locicp.correspondence import match, to_lidar_frame
from locicp.errors import EmptyScan
from locicp.geometry import RigidTransform, exp_rotvec, inverse
from locicp.localizability import eigen_analyze
from locicp.registration import linearize
from locicp.simulator import (
    DEFAULT_DIMENSIONS,
    NoiseSpec,
    SENSOR_HEIGHT,
    TrajectorySpec,
    WorldKind,
    WorldSpec,
    build_world,
    default_trajectory,
    perturb_prior,
    sample_trajectory,
    section_labels,
    simulate_scan,
)

QUIET = NoiseSpec(range_noise=0.0)


def test_plane_grid():
    w = build_world(WorldSpec(WorldKind.PLANE))
    assert len(w) == 201 * 201
    np.testing.assert_array_equal(w.normals, np.tile([0, 0, 1.0], (len(w), 1)))


def test_tunnel_normals_orthogonal_to_axis():
    spec = WorldSpec(WorldKind.TUNNEL)
    w = build_world(spec)
    axis = spec.frame_rotation[:, 0]
    assert np.max(np.abs(w.normals @ axis)) < 1e-9
    assert abs(axis[0] - math.cos(math.radians(20))) < 1e-12


def test_cylinder_normals():
    spec = WorldSpec(WorldKind.CYLINDER_ROOM)
    w = build_world(spec)
    r = np.hypot(w.points[:, 0], w.points[:, 1])
    z = w.points[:, 2]
    # rim points on the floor and ceiling circles carry the horizontal normal
    wall = (np.abs(r - 8.0) < 1e-9) & (z > 1e-9) & (z < 4.0 - 1e-9)
    radial_in = -np.c_[w.points[wall, :2] / r[wall, None], np.zeros(wall.sum())]
    np.testing.assert_allclose(w.normals[wall], radial_in, atol=1e-12)
    floor = (np.abs(z) < 1e-12) & (r < 8.0 - 1e-9)
    np.testing.assert_array_equal(w.normals[floor], np.tile([0, 0, 1.0], (floor.sum(), 1)))


def test_world_is_deterministic():
    a = build_world(WorldSpec(WorldKind.COMBINED, seed=3), jitter=0.01)
    b = build_world(WorldSpec(WorldKind.COMBINED, seed=3), jitter=0.01)
    np.testing.assert_array_equal(a.points, b.points)


def test_invalid_specs():
    with pytest.raises(ValueError):
        WorldSpec(WorldKind.TUNNEL, {"radius": -1.0})
    with pytest.raises(ValueError):
        WorldSpec(WorldKind.TUNNEL, surface_point_spacing=0.0)
    with pytest.raises(ValueError):
        TrajectorySpec(((0, 0, 0, 0),), scan_rate=0.0)
    with pytest.raises(ValueError):
        NoiseSpec(range_noise=-1.0)


def test_scan_on_plane_is_in_range_set():
    w = build_world(WorldSpec(WorldKind.PLANE))
    T = RigidTransform(np.eye(3), [0, 0, 1.0])
    scan = simulate_scan(w, T, 10.0, QUIET, max_points=10**6, seed=0)
    d = np.linalg.norm(w.points - T.translation, axis=1)
    expected = inverse(T).apply(w.points[d <= 10.0])
    got = {tuple(np.round(p, 9)) for p in scan.points}
    assert got == {tuple(np.round(p, 9)) for p in expected}
    assert scan.frame == "L"


def test_scan_facing_and_capped():
    w = build_world(WorldSpec(WorldKind.BOX_ROOM))
    T = RigidTransform(exp_rotvec([0, 0, 0.4]), [1.0, 0.5, SENSOR_HEIGHT])
    scan = simulate_scan(w, T, 15.0, NoiseSpec(), max_points=8192, seed=1)
    assert len(scan) == 8192
    # front facing: normal points back toward the sensor (origin of the lidar frame)
    assert np.all(np.einsum("ij,ij->i", scan.normals, -scan.points) > 0)


def test_empty_scan():
    w = build_world(WorldSpec(WorldKind.PLANE))
    with pytest.raises(EmptyScan):
        simulate_scan(w, RigidTransform(np.eye(3), [0, 0, 1.0]), 0.0, QUIET)


def test_scan_seeded():
    w = build_world(WorldSpec(WorldKind.BOX_ROOM))
    T = RigidTransform(np.eye(3), [0, 0, SENSOR_HEIGHT])
    a = simulate_scan(w, T, 15.0, NoiseSpec(), seed=(4, 2))
    b = simulate_scan(w, T, 15.0, NoiseSpec(), seed=(4, 2))
    np.testing.assert_array_equal(a.points, b.points)


def test_prior_zero_speed_exact():
    delta = RigidTransform(exp_rotvec([0, 0, 0.1]), [0.5, 0, 0])
    out = perturb_prior(delta, (0.0, 0.0), NoiseSpec(), seed=1)
    np.testing.assert_array_equal(out.as_matrix(), delta.as_matrix())


def test_prior_noise_statistics():
    noise = NoiseSpec()
    samples_t, samples_r = [], []
    for k in range(10_000):
        out = perturb_prior(RigidTransform.identity(), (0.5, 0.2), noise, seed=(7, k))
        samples_t.append(out.translation)
        samples_r.append(out.rotvec())
    std_t = np.std(samples_t, axis=0)
    std_r = np.std(samples_r, axis=0)
    np.testing.assert_allclose(std_t, 0.0125, rtol=0.05)
    np.testing.assert_allclose(std_r, 0.005, rtol=0.05)


def test_prior_seeded():
    d = RigidTransform(np.eye(3), [0.5, 0, 0])
    a = perturb_prior(d, (0.5, 0.2), NoiseSpec(), seed=3)
    b = perturb_prior(d, (0.5, 0.2), NoiseSpec(), seed=3)
    np.testing.assert_array_equal(a.as_matrix(), b.as_matrix())


def self_matched_eigs(kind, pose_local):
    spec = WorldSpec(kind)
    w = build_world(spec)
    R = spec.frame_rotation
    T = RigidTransform(R, R @ np.asarray(pose_local, float))
    scan = simulate_scan(w, T, 15.0, QUIET, seed=0)
    lid = to_lidar_frame(match(scan, w, T, 0.5), T)
    return eigen_analyze(linearize(lid)), R.T @ T.rotation


def test_tunnel_axis_translation_degenerate():
    b, _ = self_matched_eigs(WorldKind.TUNNEL, [30, 0, 0])
    assert b.Sigma_t[0] < 0.01 * b.Sigma_t[1]
    np.testing.assert_allclose(np.abs(b.V_t[:, 0]), [1, 0, 0], atol=1e-6)


def test_cylinder_center_yaw_degenerate():
    b, _ = self_matched_eigs(WorldKind.CYLINDER_ROOM, [0, 0, SENSOR_HEIGHT])
    assert b.Sigma_r[0] < 0.01 * b.Sigma_r[1]
    np.testing.assert_allclose(np.abs(b.V_r[:, 0]), [0, 0, 1], atol=1e-6)


def test_box_room_fully_constrained():
    b, _ = self_matched_eigs(WorldKind.BOX_ROOM, [1.0, 0.5, SENSOR_HEIGHT])
    lam = b.eigenvalues
    assert lam.max() / lam.min() < 100


def test_trajectory_sampling():
    spec = TrajectorySpec(((0, 0, 0, 0), (5, 0, 0, 0)), linear_speed=0.5, scan_rate=2.0)
    t, poses = sample_trajectory(spec)
    assert len(t) == 21
    np.testing.assert_allclose(poses[-1].translation, [5, 0, 0])
    np.testing.assert_allclose(np.diff(t), 0.5)


def test_default_trajectories_and_sections():
    for kind in WorldKind:
        spec = WorldSpec(kind)
        traj = default_trajectory(spec)
        _, poses = sample_trajectory(traj)
        labels = section_labels(spec, [p.translation for p in poses], 15.0)
        assert len(labels) == len(poses)
        if kind is WorldKind.TUNNEL:
            assert set(labels) == {"tunnel"}
        if kind is WorldKind.COMBINED:
            assert {"corridor", "open", "transition"} <= set(labels)
        if kind is WorldKind.CYLINDER_ROOM:
            assert {"center", "wall"} == set(labels)


def test_default_dimensions_declared():
    assert DEFAULT_DIMENSIONS[WorldKind.TUNNEL] == {"radius": 3.0, "length": 60.0}
    assert DEFAULT_DIMENSIONS[WorldKind.CYLINDER_ROOM] == {"radius": 8.0, "height": 4.0}
