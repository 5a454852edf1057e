"""File formats: ASCII PLY clouds, 4x4 pose text files, distribution CSV."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError
from .geometry import PointCloud, RigidTransform

_PLY_PROPS = ("x", "y", "z", "nx", "ny", "nz")


def write_ply(path, cloud: PointCloud) -> None:
    """Write an ASCII PLY with x y z nx ny nz vertex properties."""
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {cloud.n}",
    ]
    lines += [f"property float {p}" for p in _PLY_PROPS]
    lines.append("end_header")
    data = np.hstack([cloud.positions, cloud.normals])
    body = "\n".join(" ".join(f"{v:.8g}" for v in row) for row in data)
    Path(path).write_text("\n".join(lines) + "\n" + body + "\n")


def read_ply(path) -> PointCloud:
    """Read an ASCII PLY carrying x y z nx ny nz vertex properties."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise DataError(f"cannot read PLY file {path}: {e}") from e
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise DataError(f"{path}: not a PLY file")
    n_vertices = 0
    props = []
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise DataError(f"{path}: only ASCII PLY is supported")
        if tok[0] == "element" and tok[1] == "vertex":
            n_vertices = int(tok[2])
        elif tok[0] == "property" and len(tok) == 3:
            props.append(tok[2])
        elif tok[0] == "end_header":
            body_start = i + 1
            break
    if body_start is None:
        raise DataError(f"{path}: missing end_header")
    missing = [p for p in _PLY_PROPS if p not in props]
    if missing:
        raise DataError(f"{path}: PLY lacks required properties {missing}")
    cols = [props.index(p) for p in _PLY_PROPS]
    rows = []
    for line in lines[body_start : body_start + n_vertices]:
        rows.append([float(v) for v in line.split()])
    if len(rows) != n_vertices:
        raise DataError(f"{path}: expected {n_vertices} vertices, got {len(rows)}")
    data = np.asarray(rows, dtype=np.float64)[:, cols]
    try:
        return PointCloud(data[:, :3], data[:, 3:6])
    except ValueError as e:
        raise DataError(f"{path}: invalid cloud data ({e})") from e


def write_pose(path, transform: RigidTransform) -> None:
    """Write a pose as 16 whitespace-separated numbers (4x4 row-major)."""
    m = transform.matrix()
    Path(path).write_text(
        "\n".join(" ".join(f"{v:.17g}" for v in row) for row in m) + "\n"
    )


def read_pose(path) -> RigidTransform:
    try:
        values = [float(v) for v in Path(path).read_text().split()]
    except OSError as e:
        raise DataError(f"cannot read pose file {path}: {e}") from e
    except ValueError as e:
        raise DataError(f"{path}: malformed pose file ({e})") from e
    if len(values) != 16:
        raise DataError(f"{path}: pose file must hold 16 numbers, got {len(values)}")
    try:
        return RigidTransform.from_matrix(np.array(values).reshape(4, 4))
    except ValueError as e:
        raise DataError(f"{path}: invalid pose ({e})") from e


def write_distribution_csv(path, reflections, angles_deg, probs) -> None:
    """Write the per-bin distribution as reflection,angle_deg,prob rows."""
    with open(path, "w") as f:
        f.write("reflection,angle_deg,prob\n")
        for r, a, p in zip(reflections, angles_deg, probs):
            f.write(f"{int(r)},{a:g},{p:.9g}\n")


def read_distribution_csv(path):
    """Read a distribution CSV; returns (reflections, angles_deg, probs)."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise DataError(f"cannot read distribution CSV {path}: {e}") from e
    if not lines or lines[0].strip() != "reflection,angle_deg,prob":
        raise DataError(f"{path}: missing distribution CSV header")
    refl, ang, prob = [], [], []
    for line in lines[1:]:
        if not line.strip():
            continue
        r, a, p = line.split(",")
        refl.append(int(r))
        ang.append(float(a))
        prob.append(float(p))
    return np.array(refl), np.array(ang), np.array(prob)
