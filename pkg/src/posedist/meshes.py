"""Parametric test objects and triangle-mesh utilities.

Objects are cylinders with the symmetry axis along z and the center at the
origin. The single symmetry-breaking feature is a rectangular patch on the
side wall, either sunk into the wall (recess) or raised out of it (indent).
Without the feature the surface is invariant under any rotation about z and
under the 180-degree flip about y.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray        # (m, 3) float64
    faces: np.ndarray           # (t, 3) int64
    feature_faces: np.ndarray   # (q,) face indices forming the asymmetric feature

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def face_normals(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        n = np.cross(b - a, c - a)
        lengths = np.linalg.norm(n, axis=1, keepdims=True)
        lengths[lengths == 0] = 1.0
        return n / lengths

    def face_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.vertices, axis=1).max())


@dataclass(frozen=True)
class ObjectSpec:
    """Parametric ambiguous object description.

    kind: "cylinder_with_recess" or "cylinder_with_indent".
    feature_size: edge length of the square feature patch (meters);
        0 yields a plain, fully symmetric cylinder.
    feature_position: axial location of the patch center in [0, 1]
        (0 = bottom end, 1 = top end); off-center values break reflection.
    """

    kind: str = "cylinder_with_recess"
    radius: float = 0.016
    height: float = 0.048
    feature_size: float = 0.004
    feature_position: float = 0.74

    def __post_init__(self):
        if self.kind not in ("cylinder_with_recess", "cylinder_with_indent"):
            raise ValueError(f"unknown object kind {self.kind!r}")
        if self.radius <= 0 or self.height <= 0:
            raise ValueError("radius and height must be positive")
        if not 0 <= self.feature_size < self.radius:
            raise ValueError("feature_size must satisfy 0 <= feature_size < radius")
        if not 0.0 <= self.feature_position <= 1.0:
            raise ValueError("feature_position must lie in [0, 1]")


def _orient_consistently(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Flip faces so windings agree across shared edges and volume is positive."""
    faces = faces.copy()
    edge_to_faces = defaultdict(list)
    for fi, (a, b, c) in enumerate(faces):
        for u, v in ((a, b), (b, c), (c, a)):
            edge_to_faces[frozenset((int(u), int(v)))].append(fi)
    visited = np.zeros(len(faces), dtype=bool)
    for seed in range(len(faces)):
        if visited[seed]:
            continue
        stack = [seed]
        visited[seed] = True
        while stack:
            fi = stack.pop()
            a, b, c = faces[fi]
            for u, v in ((a, b), (b, c), (c, a)):
                for fj in edge_to_faces[frozenset((int(u), int(v)))]:
                    if visited[fj]:
                        continue
                    # consistent orientation: neighbor traverses the shared
                    # edge in the opposite direction
                    fa, fb, fc = faces[fj]
                    directed = ((fa, fb), (fb, fc), (fc, fa))
                    if any(int(x) == int(u) and int(y) == int(v) for x, y in directed):
                        faces[fj] = faces[fj][::-1]
                    visited[fj] = True
                    stack.append(fj)
    if _signed_volume(vertices, faces) < 0:
        faces = faces[:, ::-1]
    return np.ascontiguousarray(faces)


def _signed_volume(vertices: np.ndarray, faces: np.ndarray) -> float:
    a, b, c = (vertices[faces[:, i]] for i in range(3))
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def mesh_volume(mesh: TriangleMesh) -> float:
    """Enclosed volume via the divergence theorem (consistent winding)."""
    return abs(_signed_volume(mesh.vertices, mesh.faces))


def is_watertight(mesh: TriangleMesh) -> bool:
    """True when every undirected edge is shared by exactly two faces."""
    counts = defaultdict(int)
    for a, b, c in mesh.faces:
        for u, v in ((a, b), (b, c), (c, a)):
            counts[frozenset((int(u), int(v)))] += 1
    return all(v == 2 for v in counts.values())


def make_object_mesh(spec: ObjectSpec, n_segments: int = 48, n_rows: int = 7) -> TriangleMesh:
    """Triangulate the parametric cylinder, carving or raising the feature.

    The side wall is a (rows x segments) grid; feature edges are snapped to
    grid lines so the displaced patch with its four side walls stays
    watertight. Feature faces (patch floor plus side walls) are recorded so
    renders can report feature visibility.
    """
    r, h = spec.radius, spec.height
    seg_angle = 2.0 * math.pi / n_segments

    has_feature = spec.feature_size > 0
    if has_feature:
        n_feat_seg = max(2, round(spec.feature_size / (r * seg_angle)))
        if n_feat_seg > n_segments // 3:
            raise ValueError("feature too wide for the cylinder circumference")
        margin = 0.05 * h
        half = spec.feature_size / 2.0
        zc = -h / 2 + spec.feature_position * h
        zc = min(max(zc, -h / 2 + margin + half), h / 2 - margin - half)
        z0, z1 = zc - half, zc + half
        # a patch displaced by its own edge length reads clearly in depth
        # images even at coarse pixel pitch
        depth = min(spec.feature_size, 0.7 * r)
        r2 = r - depth if spec.kind == "cylinder_with_recess" else r + depth
        # center the patch on azimuth 0
        j_feat = [(-(n_feat_seg // 2) + i) % n_segments for i in range(n_feat_seg)]
    else:
        z0 = z1 = None
        r2 = r
        j_feat = []

    rows = list(np.linspace(-h / 2, h / 2, n_rows))
    if has_feature:
        rows = [z for z in rows if abs(z - z0) > 0.2 * spec.feature_size or z in (-h / 2, h / 2)]
        rows = [z for z in rows if abs(z - z1) > 0.2 * spec.feature_size or z in (-h / 2, h / 2)]
        rows += [z0, z1]
    rows = sorted(set(rows))
    n_r = len(rows)

    verts: list[tuple[float, float, float]] = []
    vid: dict[tuple, int] = {}

    def vertex(key, xyz) -> int:
        if key not in vid:
            vid[key] = len(verts)
            verts.append(xyz)
        return vid[key]

    def rim(b, j) -> int:
        j = j % n_segments
        ang = j * seg_angle
        return vertex(("rim", b, j), (r * math.cos(ang), r * math.sin(ang), rows[b]))

    def floor_v(b, j) -> int:
        j = j % n_segments
        ang = j * seg_angle
        return vertex(("floor", b, j), (r2 * math.cos(ang), r2 * math.sin(ang), rows[b]))

    faces: list[tuple[int, int, int]] = []
    feature: list[int] = []

    def quad(a, b, c, d, is_feature=False):
        faces.append((a, b, c))
        faces.append((a, c, d))
        if is_feature:
            feature.extend([len(faces) - 2, len(faces) - 1])

    if has_feature:
        b0 = rows.index(z0)
        b1 = rows.index(z1)
    displaced = set()
    if has_feature:
        for b in range(b0, b1):
            for j in j_feat:
                displaced.add((b, j))

    # side wall (displaced cells use the floor radius)
    for b in range(n_r - 1):
        for j in range(n_segments):
            if (b, j) in displaced:
                quad(floor_v(b, j), floor_v(b, j + 1), floor_v(b + 1, j + 1), floor_v(b + 1, j), True)
            else:
                quad(rim(b, j), rim(b, j + 1), rim(b + 1, j + 1), rim(b + 1, j))

    # patch side walls wherever a displaced cell borders an untouched one
    for b, j in sorted(displaced):
        if (b - 1, j) not in displaced:  # bottom ledge
            quad(rim(b, j), rim(b, j + 1), floor_v(b, j + 1), floor_v(b, j), True)
        if (b + 1, j) not in displaced:  # top ledge
            quad(rim(b + 1, j), floor_v(b + 1, j), floor_v(b + 1, j + 1), rim(b + 1, j + 1), True)
        if (b, (j - 1) % n_segments) not in displaced:
            quad(rim(b, j), floor_v(b, j), floor_v(b + 1, j), rim(b + 1, j), True)
        if (b, (j + 1) % n_segments) not in displaced:
            quad(rim(b, j + 1), rim(b + 1, j + 1), floor_v(b + 1, j + 1), floor_v(b, j + 1), True)

    # caps
    top = vertex(("cap", 1), (0.0, 0.0, h / 2))
    bot = vertex(("cap", 0), (0.0, 0.0, -h / 2))
    for j in range(n_segments):
        faces.append((top, rim(n_r - 1, j), rim(n_r - 1, j + 1)))
        faces.append((bot, rim(0, j + 1), rim(0, j)))

    vertices = np.asarray(verts, dtype=np.float64)
    face_arr = _orient_consistently(vertices, np.asarray(faces, dtype=np.int64))
    return TriangleMesh(vertices, face_arr, np.asarray(sorted(feature), dtype=np.int64))


def make_plane(size: float, z: float = 0.0) -> TriangleMesh:
    """Axis-aligned square plane (two triangles), for tests and backgrounds."""
    s = size / 2.0
    v = np.array([[-s, -s, z], [s, -s, z], [s, s, z], [-s, s, z]])
    f = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int64)
    return TriangleMesh(v, f, np.empty(0, dtype=np.int64))


def make_uv_sphere(radius: float, n_lat: int = 12, n_lon: int = 24) -> TriangleMesh:
    verts = [(0.0, 0.0, radius)]
    for i in range(1, n_lat):
        phi = math.pi * i / n_lat
        for j in range(n_lon):
            th = 2 * math.pi * j / n_lon
            verts.append(
                (
                    radius * math.sin(phi) * math.cos(th),
                    radius * math.sin(phi) * math.sin(th),
                    radius * math.cos(phi),
                )
            )
    verts.append((0.0, 0.0, -radius))
    last = len(verts) - 1

    def ring(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)

    faces = []
    for j in range(n_lon):
        faces.append((0, ring(1, j), ring(1, j + 1)))
        faces.append((last, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j + 1), ring(i + 1, j)
            faces.append((a, b, c))
            faces.append((a, c, d))
    v = np.asarray(verts, dtype=np.float64)
    f = _orient_consistently(v, np.asarray(faces, dtype=np.int64))
    return TriangleMesh(v, f, np.empty(0, dtype=np.int64))


def make_open_box(size_x: float, size_y: float, wall_height: float) -> TriangleMesh:
    """Open-top bin: floor at z=0 plus four walls. Not watertight by design."""
    hx, hy, h = size_x / 2.0, size_y / 2.0, wall_height
    v = np.array(
        [
            [-hx, -hy, 0], [hx, -hy, 0], [hx, hy, 0], [-hx, hy, 0],
            [-hx, -hy, h], [hx, -hy, h], [hx, hy, h], [-hx, hy, h],
        ],
        dtype=np.float64,
    )
    quads = [(0, 1, 2, 3), (0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7)]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return TriangleMesh(v, np.asarray(faces, dtype=np.int64), np.empty(0, dtype=np.int64))


def sample_surface(mesh: TriangleMesh, n: int, rng) -> np.ndarray:
    """Uniform area-weighted random points on the mesh surface."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    areas = mesh.face_areas()
    fi = rng.choice(mesh.n_faces, size=n, p=areas / areas.sum())
    u, v = rng.random(n), rng.random(n)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    a = mesh.vertices[mesh.faces[fi, 0]]
    b = mesh.vertices[mesh.faces[fi, 1]]
    c = mesh.vertices[mesh.faces[fi, 2]]
    return a + u[:, None] * (b - a) + v[:, None] * (c - a)


def point_to_mesh_distance(points: np.ndarray, mesh: TriangleMesh) -> np.ndarray:
    """Exact distance from each query point to the nearest mesh triangle."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    out = np.empty(points.shape[0])
    for i, p in enumerate(points):
        out[i] = math.sqrt(_point_triangles_sqdist(p, a, b, c).min())
    return out


def _point_triangles_sqdist(p, a, b, c):
    """Squared distance from one point to many triangles (Ericson regions)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    closest = np.empty_like(a)
    done = np.zeros(len(a), dtype=bool)

    def assign(mask, pts):
        m = mask & ~done
        closest[m] = pts[m]
        done[m] = True

    assign((d1 <= 0) & (d2 <= 0), a)                            # vertex a
    assign((d3 >= 0) & (d4 <= d3), b)                           # vertex b
    vc = d1 * d4 - d3 * d2
    v_ab = d1 / (d1 - d3 + 1e-300)
    assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v_ab[:, None] * ab)  # edge ab
    assign((d6 >= 0) & (d5 <= d6), c)                           # vertex c
    vb = d5 * d2 - d1 * d6
    w_ac = d2 / (d2 - d6 + 1e-300)
    assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w_ac[:, None] * ac)  # edge ac
    va = d3 * d6 - d5 * d4
    w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6) + 1e-300)
    assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + w_bc[:, None] * (c - b))
    denom = va + vb + vc
    v = vb / np.where(denom != 0, denom, 1.0)
    w = vc / np.where(denom != 0, denom, 1.0)
    assign(~done, a + v[:, None] * ab + w[:, None] * ac)        # face interior

    diff = p - closest
    return np.einsum("ij,ij->i", diff, diff)
