"""Depth rendering of triangle-mesh scenes by exact ray casting.

Produces organized depth maps plus per-pixel instance and face ids, from
which point clouds with surface normals are assembled. Poses follow the
package convention: a pose maps scene coordinates into the local (object or
camera) frame, so the camera center is ``pose.center()``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import PointCloud, RigidTransform
from .meshes import TriangleMesh

_EPS = 1e-12


@dataclass(frozen=True)
class PinholeCamera:
    width: int = 256
    height: int = 256
    fx: float = 1100.0
    fy: float = 1100.0
    cx: float = 128.0
    cy: float = 128.0

    def pixel_rays(self) -> np.ndarray:
        """Unnormalized camera-frame ray directions, one per pixel (h*w, 3).

        Directions have unit z so the ray parameter equals z-depth.
        """
        u = (np.arange(self.width) + 0.5 - self.cx) / self.fx
        v = (np.arange(self.height) + 0.5 - self.cy) / self.fy
        uu, vv = np.meshgrid(u, v)
        return np.stack([uu.ravel(), vv.ravel(), np.ones(uu.size)], axis=1)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Camera pose (scene to camera frame) looking from eye toward target.

    Camera axes: +z forward, +x right, +y down. ``up`` is the scene-frame
    up hint; a fallback is used when the view direction is parallel to it.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    z = target - eye
    nz = np.linalg.norm(z)
    if nz < _EPS:
        raise ValueError("eye and target coincide")
    z = z / nz
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-8:
        x = np.cross(z, np.array([1.0, 0.0, 0.0]))
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    r = np.stack([x, y, z], axis=0)
    return RigidTransform(r, -r @ eye)


@dataclass
class InstanceRender:
    """Per-object render statistics used for labeling and filtering."""

    pose: RigidTransform
    n_pixels: int = 0
    n_solo_pixels: int = 0
    n_feature_pixels: int = 0
    n_solo_feature_pixels: int = 0

    @property
    def visibility(self) -> float:
        return self.n_pixels / self.n_solo_pixels if self.n_solo_pixels else 0.0

    @property
    def feature_visibility(self) -> float:
        if self.n_solo_feature_pixels == 0:
            return 0.0
        return self.n_feature_pixels / self.n_solo_feature_pixels


@dataclass
class RenderResult:
    camera: PinholeCamera
    camera_pose: RigidTransform
    depth: np.ndarray          # (h, w) z-depth, inf where no hit
    instance_map: np.ndarray   # (h, w) int32, -1 where no hit
    positions: np.ndarray      # (n, 3) scene-frame hit points
    normals: np.ndarray        # (n, 3) unit normals facing the camera
    point_instance: np.ndarray  # (n,) instance id per point
    instances: list = field(default_factory=list)

    def cloud(self) -> PointCloud:
        return PointCloud(self.positions, self.normals)

    def instance_cloud(self, i: int) -> PointCloud:
        mask = self.point_instance == i
        return PointCloud(self.positions[mask], self.normals[mask])


def _ray_bbox(camera: PinholeCamera, pose: RigidTransform, camera_pose: RigidTransform,
              bound_radius: float):
    """Pixel-index window covering the object's projected bounding sphere."""
    c_cam = camera_pose.apply(pose.center())
    z = c_cam[2]
    if z <= bound_radius:
        return 0, camera.width, 0, camera.height  # camera inside/behind: full frame
    margin = 1.3
    ru = camera.fx * bound_radius / z * margin
    rv = camera.fy * bound_radius / z * margin
    u = camera.fx * c_cam[0] / z + camera.cx
    v = camera.fy * c_cam[1] / z + camera.cy
    u0 = max(0, int(math.floor(u - ru)))
    u1 = min(camera.width, int(math.ceil(u + ru)) + 1)
    v0 = max(0, int(math.floor(v - rv)))
    v1 = min(camera.height, int(math.ceil(v + rv)) + 1)
    return u0, u1, v0, v1


def _intersect(origin: np.ndarray, dirs: np.ndarray, mesh: TriangleMesh,
               chunk: int = 2048):
    """Nearest-hit ray casting against one mesh (shared ray origin).

    Returns (t, face) arrays; t is inf and face is -1 where a ray misses.
    """
    a = mesh.vertices[mesh.faces[:, 0]]
    e1 = mesh.vertices[mesh.faces[:, 1]] - a
    e2 = mesh.vertices[mesh.faces[:, 2]] - a
    tvec = origin - a                       # (T, 3), origin shared by all rays
    qvec = np.cross(tvec, e1)               # (T, 3)
    t_base = np.einsum("ij,ij->i", e2, qvec)

    n = dirs.shape[0]
    t_out = np.full(n, np.inf)
    f_out = np.full(n, -1, dtype=np.int64)
    for s in range(0, n, chunk):
        d = dirs[s:s + chunk]
        pvec = np.cross(d[:, None, :], e2[None, :, :])      # (m, T, 3)
        det = np.einsum("tj,mtj->mt", e1, pvec)
        ok = np.abs(det) > _EPS
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        u = np.einsum("tj,mtj->mt", tvec, pvec) * inv
        v = np.einsum("mj,tj->mt", d, qvec) * inv
        t = t_base[None, :] * inv
        hit = ok & (u >= -1e-10) & (v >= -1e-10) & (u + v <= 1 + 1e-10) & (t > 1e-9)
        t = np.where(hit, t, np.inf)
        idx = np.argmin(t, axis=1)
        rows = np.arange(t.shape[0])
        best_t = t[rows, idx]
        found = np.isfinite(best_t)
        t_out[s:s + chunk][found] = best_t[found]
        f_out[s:s + chunk][found] = idx[found]
    return t_out, f_out


def render_scene(meshes, poses, camera: PinholeCamera,
                 camera_pose: RigidTransform) -> RenderResult:
    """Render instances (mesh, pose) into a merged depth map and point cloud.

    For every instance the solo pixel counts (as if rendered alone on the
    cropped ray window) and the after-merge counts are recorded, giving the
    occlusion-aware visibility fraction.
    """
    meshes = list(meshes)
    poses = list(poses)
    if len(meshes) != len(poses):
        raise ValueError("meshes and poses must have equal length")
    h, w = camera.height, camera.width
    rays_cam = camera.pixel_rays()
    eye = camera_pose.center()
    dirs_scene = rays_cam @ camera_pose.rotation  # camera-frame dirs into scene

    depth = np.full(h * w, np.inf)
    inst_map = np.full(h * w, -1, dtype=np.int32)
    face_map = np.full(h * w, -1, dtype=np.int64)
    solo_hits = []

    for i, (mesh, pose) in enumerate(zip(meshes, poses)):
        u0, u1, v0, v1 = _ray_bbox(camera, pose, camera_pose, mesh.bounding_radius())
        if u0 >= u1 or v0 >= v1:
            solo_hits.append((np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)))
            continue
        cols, rws = np.meshgrid(np.arange(u0, u1), np.arange(v0, v1))
        pix = (rws * w + cols).ravel()
        # cast in the object frame: rotate rays, transform the shared origin
        o_obj = pose.apply(eye)
        d_obj = dirs_scene[pix] @ pose.rotation.T
        t, f = _intersect(o_obj, d_obj, mesh)
        hit = np.isfinite(t)
        solo_hits.append((pix[hit], f[hit]))
        better = hit & (t < depth[pix])
        sel = pix[better]
        depth[sel] = t[better]
        inst_map[sel] = i
        face_map[sel] = f[better]

    instances = []
    for i, (mesh, pose) in enumerate(zip(meshes, poses)):
        pix_solo, faces_solo = solo_hits[i]
        won = inst_map[pix_solo] == i
        feat = np.zeros(mesh.n_faces, dtype=bool)
        feat[mesh.feature_faces] = True
        inst = InstanceRender(
            pose=pose,
            n_pixels=int(won.sum()),
            n_solo_pixels=int(pix_solo.size),
            n_feature_pixels=int((feat[faces_solo] & won).sum()),
            n_solo_feature_pixels=int(feat[faces_solo].sum()),
        )
        instances.append(inst)

    hit_idx = np.flatnonzero(np.isfinite(depth))
    pts = eye[None, :] + depth[hit_idx, None] * dirs_scene[hit_idx]
    normals = np.zeros((hit_idx.size, 3))
    for i, (mesh, pose) in enumerate(zip(meshes, poses)):
        m = inst_map[hit_idx] == i
        if not m.any():
            continue
        fn_obj = mesh.face_normals()[face_map[hit_idx[m]]]
        normals[m] = fn_obj @ pose.rotation  # R^T applied to rows
    flip = np.einsum("ij,ij->i", normals, eye[None, :] - pts) < 0
    normals[flip] = -normals[flip]

    return RenderResult(
        camera=camera,
        camera_pose=camera_pose,
        depth=depth.reshape(h, w),
        instance_map=inst_map.reshape(h, w),
        positions=pts,
        normals=normals,
        point_instance=inst_map[hit_idx].astype(np.int64),
        instances=instances,
    )
