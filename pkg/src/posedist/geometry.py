"""Rigid-body math, the reflection/revolution sample grid, and cloud utilities.

Pose convention used throughout the package: a RigidTransform maps scene
(world or camera) coordinates into the object's canonical frame,

    p_obj = R @ p_scene + t.

The canonical frame has the object's revolution axis along +z and the object
center at the origin. Under this convention, left-composing a rotation onto a
pose acts about the object's own axes, which is what makes the sample grid a
true sweep over the object's reflection and revolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCropError
from .validation import as_float_array, check_finite, check_rotation, check_unit_normals


@dataclass(frozen=True)
class RigidTransform:
    """A 6-DoF pose: 3x3 rotation plus translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = check_rotation(self.rotation).copy()
        t = as_float_array(self.translation, "translation", (3,)).copy()
        check_finite(t, "translation")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m) -> "RigidTransform":
        m = as_float_array(m, "matrix", (4, 4))
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("bottom row of a rigid 4x4 must be 0 0 0 1")
        return RigidTransform(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self ∘ other (apply `other` first)."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points through the transform; accepts (3,) or (..., 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return (p - self.translation) @ self.rotation

    def center(self) -> np.ndarray:
        """Scene-frame point that maps to the object-frame origin."""
        return -self.rotation.T @ self.translation

    def allclose(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return np.allclose(self.rotation, other.rotation, atol=atol) and np.allclose(
            self.translation, other.translation, atol=atol
        )


def rotation_x(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle_rotation(axis: np.ndarray, deg: float) -> np.ndarray:
    """Rodrigues rotation about an arbitrary (normalized internally) axis."""
    a = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(a)
    if n < 1e-15:
        return np.eye(3)
    a = a / n
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    ang = math.radians(deg)
    return np.eye(3) + math.sin(ang) * k + (1.0 - math.cos(ang)) * (k @ k)


def geodesic_angle_deg(ra: np.ndarray, rb: np.ndarray) -> float:
    """Geodesic distance on SO(3) between two rotations, in degrees."""
    tr = float(np.trace(ra.T @ rb))
    c = min(1.0, max(-1.0, (tr - 1.0) / 2.0))
    return math.degrees(math.acos(c))


def circular_angle_distance(a: float, b: float) -> float:
    """Shortest angular distance between two angles in degrees, in [0, 180]."""
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def compose_sample_transform(
    theta_ref: float, theta_revo: float, t_init: RigidTransform
) -> RigidTransform:
    """Candidate transform for one reflection/revolution hypothesis.

    Computes R_y(theta_ref) @ R_z(theta_revo) @ T_init. With poses mapping
    scene coordinates into the object frame, the left-composed rotations act
    about the object-frame y (reflection) and z (revolution/symmetry) axes.
    """
    if theta_ref not in (0, 180, 0.0, 180.0):
        raise ValueError(f"theta_ref must be 0 or 180 degrees, got {theta_ref!r}")
    r = rotation_y(theta_ref) @ rotation_z(theta_revo)
    return RigidTransform(r @ t_init.rotation, r @ t_init.translation)


@dataclass(frozen=True)
class SampleGrid:
    """Ordered candidate transforms over reflection x revolution.

    Entries are reflection-major with revolution ascending; entry 0 is the
    untouched initial pose. `rotations`/`translations` are stacked so the
    whole grid can be used in vectorized queries.
    """

    n_revolution: int
    rotations: np.ndarray      # (2*n_revolution, 3, 3)
    translations: np.ndarray   # (2*n_revolution, 3)
    reflections: np.ndarray    # (2*n_revolution,) in {0, 1}
    revolution_deg: np.ndarray  # (2*n_revolution,)

    def __len__(self) -> int:
        return 2 * self.n_revolution

    def transform(self, i: int) -> RigidTransform:
        return RigidTransform(self.rotations[i], self.translations[i])

    def entry(self, i: int):
        return int(self.reflections[i]), float(self.revolution_deg[i]), self.transform(i)

    def entries(self):
        for i in range(len(self)):
            yield self.entry(i)

    def bin_index(self, reflection: int, revolution_deg: float) -> int:
        """Index of the grid bin nearest to the given reflection/angle."""
        step = 360.0 / self.n_revolution
        j = int(round(revolution_deg / step)) % self.n_revolution
        return reflection * self.n_revolution + j


def build_sample_grid(t_init: RigidTransform, n_revolution: int = 360) -> SampleGrid:
    """Build the 2 x n_revolution candidate grid around an initial pose."""
    if n_revolution < 1:
        raise ValueError("n_revolution must be >= 1")
    step = 360.0 / n_revolution
    angles = np.arange(n_revolution) * step
    rad = np.radians(angles)
    c, s = np.cos(rad), np.sin(rad)
    zero = np.zeros(n_revolution)
    one = np.ones(n_revolution)
    # R_z(theta) for all revolution steps: (n, 3, 3)
    rz = np.stack(
        [
            np.stack([c, -s, zero], axis=-1),
            np.stack([s, c, zero], axis=-1),
            np.stack([zero, zero, one], axis=-1),
        ],
        axis=1,
    )
    ry180 = rotation_y(180.0)
    rots0 = rz @ t_init.rotation
    trans0 = rz @ t_init.translation
    rots1 = ry180 @ rots0
    trans1 = trans0 @ ry180.T
    return SampleGrid(
        n_revolution=n_revolution,
        rotations=np.concatenate([rots0, rots1], axis=0),
        translations=np.concatenate([trans0, trans1], axis=0),
        reflections=np.repeat(np.array([0, 1], dtype=np.int64), n_revolution),
        revolution_deg=np.tile(angles, 2),
    )


def nearest_grid_bin(grid: SampleGrid, rotation: np.ndarray) -> int:
    """Grid bin whose rotation is geodesically closest to `rotation`.

    Ties break toward the lowest index.
    """
    tr = np.einsum("nij,ij->n", grid.rotations, rotation)
    # maximizing the trace of R_grid^T R minimizes the geodesic angle
    return int(np.argmax(tr))


def normalize_sample_grid(grid: SampleGrid, center: np.ndarray, radius: float) -> SampleGrid:
    """Re-express grid transforms in the normalized cloud frame.

    The normalized frame subtracts `center` and divides by `radius`
    (matching normalize_and_crop); rotations are unchanged and the new
    translations are (R @ center + t) / radius. For a grid built from the
    t_init whose own center defines the crop, these are exactly zero.
    """
    center = as_float_array(center, "center", (3,))
    if radius <= 0:
        raise ValueError("radius must be positive")
    t = (np.einsum("nij,j->ni", grid.rotations, center) + grid.translations) / radius
    return SampleGrid(
        n_revolution=grid.n_revolution,
        rotations=grid.rotations,
        translations=t,
        reflections=grid.reflections,
        revolution_deg=grid.revolution_deg,
    )


@dataclass(frozen=True)
class PointCloud:
    """n points with positions (meters) and unit normals."""

    positions: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        p = as_float_array(self.positions, "positions", (None, 3))
        n = as_float_array(self.normals, "normals", (None, 3))
        if p.shape[0] != n.shape[0]:
            raise ValueError("positions and normals must have the same length")
        if p.shape[0] == 0:
            raise ValueError("point cloud must be non-empty")
        check_finite(p, "positions")
        check_unit_normals(n)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "normals", n)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def subset(self, indices) -> "PointCloud":
        return PointCloud(self.positions[indices], self.normals[indices])


@dataclass(frozen=True)
class KeypointSet:
    """Object-frame keypoints selected by farthest point sampling."""

    points: np.ndarray      # (k, 3)
    vertex_indices: np.ndarray  # (k,)
    seed: int

    @property
    def k(self) -> int:
        return self.points.shape[0]


def farthest_point_sample(mesh_vertices, k: int, seed: int = 0) -> KeypointSet:
    """Greedy farthest point sampling over mesh vertices.

    seed 0 starts at the vertex nearest the vertex centroid; other seeds
    start at a seeded random vertex. Each following pick maximizes the
    minimum distance to the already-chosen set, ties broken by lowest
    vertex index. Deterministic given (vertices, k, seed).
    """
    v = as_float_array(mesh_vertices, "mesh_vertices", (None, 3))
    m = v.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > m:
        raise ValueError(f"cannot sample {k} keypoints from {m} vertices")
    if seed == 0:
        centroid = v.mean(axis=0)
        start = int(np.argmin(np.linalg.norm(v - centroid, axis=1)))
    else:
        start = int(np.random.default_rng(seed).integers(0, m))
    chosen = [start]
    dist = np.linalg.norm(v - v[start], axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(dist))  # argmax takes the lowest index on ties
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(v - v[nxt], axis=1))
    idx = np.array(chosen, dtype=np.int64)
    return KeypointSet(points=v[idx].copy(), vertex_indices=idx, seed=seed)


class NNIndex:
    """Euclidean nearest-neighbor index over a point cloud.

    Backed by a k-d tree. Exact duplicate positions are canonicalized to the
    lowest index so results match an exhaustive linear scan with
    lowest-index tie-breaking (duplicates arise routinely from resampling).
    """

    def __init__(self, positions: np.ndarray):
        p = as_float_array(positions, "positions", (None, 3))
        if p.shape[0] == 0:
            raise ValueError("cannot index an empty cloud")
        self.positions = p
        self._tree = cKDTree(p)
        _, inverse = np.unique(p, axis=0, return_inverse=True)
        canonical = np.full(inverse.max() + 1, p.shape[0], dtype=np.int64)
        np.minimum.at(canonical, inverse, np.arange(p.shape[0]))
        self._canonical = canonical[inverse]

    def query(self, q: np.ndarray):
        """Nearest point to a single query; returns (index, distance)."""
        d, i = self._tree.query(np.asarray(q, dtype=np.float64))
        return int(self._canonical[int(i)]), float(d)

    def query_batch(self, q: np.ndarray):
        """Vectorized nearest-point query; returns (indices, distances)."""
        q = np.asarray(q, dtype=np.float64)
        d, i = self._tree.query(q)
        return self._canonical[i], d


def build_nn_index(cloud: PointCloud) -> NNIndex:
    return NNIndex(cloud.positions)


def query_nearest(index: NNIndex, q: np.ndarray):
    return index.query(q)


def _resample_indices(n_in: int, n_out: int, rng: np.random.Generator) -> np.ndarray:
    if n_in == n_out:
        return np.arange(n_in)
    if n_in > n_out:
        return np.sort(rng.choice(n_in, size=n_out, replace=False))
    extra = rng.choice(n_in, size=n_out - n_in, replace=True)
    return np.concatenate([np.arange(n_in), extra])


def normalize_and_crop(
    cloud: PointCloud,
    center: np.ndarray,
    radius: float,
    crop_factor: float = 1.2,
    n_points: int = 4096,
    rng=0,
) -> PointCloud:
    """Crop around `center`, shift/scale into normalized units, resample.

    Keeps points within crop_factor * radius of the center, subtracts the
    center and divides positions by the radius (normals untouched), then
    resamples to exactly `n_points` (seeded random subsampling if larger,
    seeded random duplication if smaller).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    c = as_float_array(center, "center", (3,))
    offsets = cloud.positions - c
    keep = np.linalg.norm(offsets, axis=1) <= crop_factor * radius
    n_kept = int(keep.sum())
    if n_kept == 0:
        raise EmptyCropError(
            "no points inside the crop sphere; the initial pose does not "
            "match the observed cloud"
        )
    pos = offsets[keep] / radius
    nrm = cloud.normals[keep]
    idx = _resample_indices(n_kept, n_points, rng)
    return PointCloud(pos[idx], nrm[idx])
