"""Plain-text file formats: ASCII PLY clouds and CSV tables."""

from __future__ import annotations

import csv
from typing import Iterable, List, Sequence

import numpy as np

from .geometry import PointCloud, RigidTransform, exp_rotvec
from .icp import IterationRecord
from .localizability import DIRECTION_NAMES
from .metrics import Trajectory

TRAJECTORY_COLUMNS = ["t", "tx", "ty", "tz", "rx", "ry", "rz"]
LOCALIZABILITY_COLUMNS = (
    ["frame", "iteration"]
    + [f"eig_{d}" for d in DIRECTION_NAMES]
    + [f"Lc_{d}" for d in DIRECTION_NAMES]
    + [f"Ls_{d}" for d in DIRECTION_NAMES]
    + [f"eta_{d}" for d in DIRECTION_NAMES]
)


def _fmt(x) -> str:
    return f"{float(x):.9f}"


def write_ply(path, cloud: PointCloud) -> None:
    pts = cloud.points
    nrm = cloud.normals if cloud.normals is not None else np.zeros_like(pts)
    header = "\n".join([
        "ply",
        "format ascii 1.0",
        f"comment frame {cloud.frame}",
        f"element vertex {len(pts)}",
        "property double x", "property double y", "property double z",
        "property double nx", "property double ny", "property double nz",
        "end_header",
    ])
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, np.hstack([pts, nrm]), fmt="%.6f")


def read_ply(path) -> PointCloud:
    frame = "M"
    with open(path, "r", encoding="ascii") as fh:
        if fh.readline().strip() != "ply":
            raise ValueError(f"{path}: not a PLY file")
        count = None
        props: List[str] = []
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "format" and tok[1] != "ascii":
                raise ValueError(f"{path}: only ASCII PLY is supported")
            if tok[0] == "comment" and len(tok) >= 3 and tok[1] == "frame":
                frame = tok[2]
            elif tok[0] == "element" and tok[1] == "vertex":
                count = int(tok[2])
            elif tok[0] == "property":
                props.append(tok[-1])
            elif tok[0] == "end_header":
                break
        data = np.loadtxt(fh, ndmin=2) if count else np.zeros((0, len(props)))
    if count is None or data.shape[0] != count:
        raise ValueError(f"{path}: vertex count mismatch")
    col = {name: i for i, name in enumerate(props)}
    pts = data[:, [col["x"], col["y"], col["z"]]]
    normals = valid = None
    if all(k in col for k in ("nx", "ny", "nz")):
        normals = data[:, [col["nx"], col["ny"], col["nz"]]]
        lengths = np.linalg.norm(normals, axis=1)
        valid = lengths > 0.5
        normals[valid] /= lengths[valid, None]
        normals[~valid] = 0.0
        if valid.all():
            valid = None
    return PointCloud(pts, normals, frame, valid)


def write_trajectory(path, traj: Trajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for t, T in zip(traj.stamps, traj.poses):
            w.writerow([_fmt(t)] + [_fmt(v) for v in T.translation] + [_fmt(v) for v in T.rotvec()])


def read_trajectory(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    stamps = [float(r["t"]) for r in rows]
    poses = [
        RigidTransform(exp_rotvec([float(r["rx"]), float(r["ry"]), float(r["rz"])]),
                       [float(r["tx"]), float(r["ty"]), float(r["tz"])])
        for r in rows
    ]
    return Trajectory(np.array(stamps), tuple(poses))


def localizability_rows(frame: int, records: Sequence[IterationRecord]) -> Iterable[list]:
    """One CSV row per ICP iteration; fields that do not apply are left empty."""
    for rec in records:
        row = [str(frame), str(rec.iteration)]
        row += [_fmt(v) for v in rec.eigenvalues]
        row += [_fmt(v) for v in rec.L_combined] if rec.L_combined is not None else [""] * 6
        row += [_fmt(v) for v in rec.L_strong] if rec.L_strong is not None else [""] * 6
        row += [str(int(c)) for c in rec.categories] if rec.categories is not None else [""] * 6
        yield row


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def read_rows(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
