"""Synthetic dataset generation: scene packing, pose jitter, depth augmentation.

A dataset is a directory with a ``manifest.json`` plus, per retained object
instance, an ASCII PLY crop of the scene cloud around the instance, the
ground-truth pose, and one pre-drawn jittered initialization pose. Crops are
stored in the scene frame with a margin (``store_crop_factor``) beyond the
inference crop radius so fresh jitters during training stay inside the data.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import io as pio
from .errors import DataError
from .geometry import (
    PointCloud,
    RigidTransform,
    _resample_indices,
    build_sample_grid,
    nearest_grid_bin,
)
from .meshes import ObjectSpec, TriangleMesh, make_object_mesh, make_open_box
from .render import PinholeCamera, RenderResult, look_at, render_scene


# ---------------------------------------------------------------------------
# pose jitter


@dataclass(frozen=True)
class JitterParams:
    """Initial-pose error model: 1 mm translation noise per axis and
    axis-angle rotation noise with std 3 deg about x/y and 0.5 deg about
    the revolution axis z."""

    translation_std: float = 1e-3
    rot_std_deg: tuple = (3.0, 3.0, 0.5)


def _axis_angle_matrix(w: np.ndarray) -> np.ndarray:
    angle = np.linalg.norm(w)
    if angle < 1e-12:
        return np.eye(3)
    k = w / angle
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * kx + (1 - math.cos(angle)) * (kx @ kx)


def jitter_pose(gt: RigidTransform, rng, params: JitterParams = JitterParams()):
    """Perturb a ground-truth pose into an initialization pose.

    Returns ``(t_init, (reflection_index, revolution_deg))`` where the
    residual bin is the grid entry whose transform, composed with t_init,
    is nearest to the ground truth in geodesic rotation distance.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    w = np.radians(np.asarray(params.rot_std_deg, dtype=np.float64)) * rng.standard_normal(3)
    r_delta = _axis_angle_matrix(w)
    center = gt.center() + params.translation_std * rng.standard_normal(3)
    r_init = r_delta @ gt.rotation
    t_init = RigidTransform(r_init, -r_init @ center)
    grid = build_sample_grid(t_init)
    bin_idx = nearest_grid_bin(grid, gt.rotation)
    refl, revo, _ = grid.entry(bin_idx)
    return t_init, (refl, revo)


# ---------------------------------------------------------------------------
# depth augmentation


@dataclass(frozen=True)
class AugmentParams:
    """Depth-noise model applied to training crops.

    noise_std: Gaussian position noise along the view ray, meters.
    dropout: independent per-point removal probability.
    max_patches: up to this many elliptical regions removed per crop.
    patch_scale: ellipsoid semi-axis range as a fraction of the crop extent.
    n_points: output size after resampling.
    """

    noise_std: float = 3e-4
    dropout: float = 0.1
    max_patches: int = 2
    patch_scale: tuple = (0.15, 0.35)
    n_points: int = 4096


def augment_depth(cloud: PointCloud, rng, params: AugmentParams = AugmentParams(),
                  eye=None) -> PointCloud:
    """Apply sensor-style corruption: ray noise, point dropout, missing patches.

    ``eye`` is the camera center in the cloud's frame; when omitted the
    origin is used. Output is resampled to exactly ``params.n_points``.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    pos = cloud.positions.copy()
    nrm = cloud.normals.copy()
    eye = np.zeros(3) if eye is None else np.asarray(eye, dtype=np.float64)

    if params.noise_std > 0:
        rays = pos - eye
        lens = np.linalg.norm(rays, axis=1, keepdims=True)
        lens[lens == 0] = 1.0
        pos = pos + (params.noise_std * rng.standard_normal((len(pos), 1))) * (rays / lens)

    keep = np.ones(len(pos), dtype=bool)
    if params.dropout > 0:
        keep &= rng.random(len(pos)) >= params.dropout

    if params.max_patches > 0:
        extent = np.linalg.norm(pos - pos.mean(axis=0), axis=1).max()
        n_patches = int(rng.integers(0, params.max_patches + 1))
        for _ in range(n_patches):
            center = pos[int(rng.integers(0, len(pos)))]
            lo, hi = params.patch_scale
            semi = extent * (lo + (hi - lo) * rng.random(3))
            q = rng.standard_normal(4)
            q /= np.linalg.norm(q)
            w, x, y, z = q
            rot = np.array(
                [
                    [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                    [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                    [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
                ]
            )
            local = (pos - center) @ rot.T
            inside = (local / semi) ** 2 @ np.ones(3) <= 1.0
            if keep.sum() - (inside & keep).sum() >= 50:
                keep &= ~inside

    pos, nrm = pos[keep], nrm[keep]
    if len(pos) == 0:
        raise DataError("augmentation removed every point")
    idx = _resample_indices(len(pos), params.n_points, rng)
    return PointCloud(pos[idx], nrm[idx])


# ---------------------------------------------------------------------------
# scene synthesis


@dataclass(frozen=True)
class SceneConfig:
    bin_size: float = 0.15          # inner width of the open bin, meters
    bin_wall_height: float = 0.04
    objects_per_scene: int = 4
    camera_height: float = 0.62
    camera_sway: float = 0.02       # random eye offset radius, meters
    z_range: tuple = (0.018, 0.05)  # object center heights above the floor
    min_visibility: float = 0.5
    overlap_factor: float = 0.70    # pairwise bounding-sphere separation scale
    max_place_tries: int = 80


def _random_rotation(rng) -> np.ndarray:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _place_objects(cfg: SceneConfig, bound_radius: float, rng):
    """Rejection-sample non-overlapping object poses inside the bin."""
    half = cfg.bin_size / 2 - bound_radius * 0.7
    centers: list[np.ndarray] = []
    poses: list[RigidTransform] = []
    for _ in range(cfg.objects_per_scene):
        placed = False
        for _ in range(cfg.max_place_tries):
            c = np.array(
                [
                    rng.uniform(-half, half),
                    rng.uniform(-half, half),
                    rng.uniform(*cfg.z_range),
                ]
            )
            min_sep = cfg.overlap_factor * 2 * bound_radius
            if all(np.linalg.norm(c - c2) >= min_sep for c2 in centers):
                r = _random_rotation(rng)
                centers.append(c)
                poses.append(RigidTransform(r, -r @ c))
                placed = True
                break
        if not placed:
            return None
    return poses


def synthesize_scene(mesh: TriangleMesh, cfg: SceneConfig, camera: PinholeCamera,
                     rng) -> RenderResult | None:
    """Pack one bin scene and render it; None when packing fails."""
    poses = _place_objects(cfg, mesh.bounding_radius(), rng)
    if poses is None:
        return None
    sway = cfg.camera_sway * (rng.random(2) * 2 - 1)
    eye = np.array([sway[0], sway[1], cfg.camera_height])
    target = np.array([0.0, 0.0, 0.02])
    cam_pose = look_at(eye, target)
    bin_mesh = make_open_box(cfg.bin_size, cfg.bin_size, cfg.bin_wall_height)
    meshes = [mesh] * len(poses) + [bin_mesh]
    all_poses = poses + [RigidTransform.identity()]
    return render_scene(meshes, all_poses, camera, cam_pose)


# ---------------------------------------------------------------------------
# dataset generation and loading


@dataclass(frozen=True)
class DatasetConfig:
    object_spec: ObjectSpec = field(default_factory=ObjectSpec)
    n_scenes: int = 200
    n_test_scenes: int = 20
    seed: int = 0
    scene: SceneConfig = field(default_factory=SceneConfig)
    camera: PinholeCamera = field(default_factory=PinholeCamera)
    store_crop_factor: float = 1.35
    jitter: JitterParams = field(default_factory=JitterParams)

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "DatasetConfig":
        d = dict(d)
        d["object_spec"] = ObjectSpec(**d["object_spec"])
        d["scene"] = SceneConfig(
            **{k: tuple(v) if isinstance(v, list) else v for k, v in d["scene"].items()}
        )
        d["camera"] = PinholeCamera(**d["camera"])
        jp = dict(d["jitter"])
        jp["rot_std_deg"] = tuple(jp["rot_std_deg"])
        d["jitter"] = JitterParams(**jp)
        return DatasetConfig(**d)


@dataclass
class InstanceRecord:
    scene: int
    index: int
    split: str
    visibility: float
    feature_visibility: float
    cloud_path: str
    gt_pose_path: str
    init_pose_path: str
    residual_reflection: int
    residual_revolution: float
    camera_eye: tuple

    root: Path = None

    def load_cloud(self) -> PointCloud:
        return pio.read_ply(self.root / self.cloud_path)

    def load_gt_pose(self) -> RigidTransform:
        return pio.read_pose(self.root / self.gt_pose_path)

    def load_init_pose(self) -> RigidTransform:
        return pio.read_pose(self.root / self.init_pose_path)


@dataclass
class DatasetIndex:
    root: Path
    config: DatasetConfig
    object_radius: float
    records: list

    def split(self, name: str) -> list:
        return [r for r in self.records if r.split == name]


def generate_dataset(config: DatasetConfig, out_dir) -> Path:
    """Render scenes, filter by visibility, write crops + poses + manifest.

    Deterministic per seed: repeated runs produce byte-identical manifests.
    Returns the manifest path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mesh = make_object_mesh(config.object_spec)
    bound = mesh.bounding_radius()
    crop_radius = config.store_crop_factor * 1.2 * bound
    entries = []
    n_skipped = 0

    for scene_id in range(config.n_scenes):
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, scene_id)))
        result = synthesize_scene(mesh, config.scene, config.camera, rng)
        if result is None:
            n_skipped += 1
            warnings.warn(f"scene {scene_id}: packing failed, skipped")
            continue
        split = "test" if scene_id >= config.n_scenes - config.n_test_scenes else "train"
        scene_dir = out / f"scene_{scene_id:05d}"
        eye = result.camera_pose.center()
        wrote_any = False
        for j, inst in enumerate(result.instances[: config.scene.objects_per_scene]):
            if inst.visibility < config.scene.min_visibility:
                continue
            center = inst.pose.center()
            near = np.linalg.norm(result.positions - center, axis=1) <= crop_radius
            if near.sum() < 16:
                continue
            if not wrote_any:
                scene_dir.mkdir(exist_ok=True)
                wrote_any = True
            crop = PointCloud(result.positions[near], result.normals[near])
            t_init, (refl, revo) = jitter_pose(inst.pose, rng, config.jitter)
            cloud_rel = f"scene_{scene_id:05d}/cloud_{j}.ply"
            gt_rel = f"scene_{scene_id:05d}/gt_pose_{j}.txt"
            init_rel = f"scene_{scene_id:05d}/init_pose_{j}.txt"
            pio.write_ply(out / cloud_rel, crop)
            pio.write_pose(out / gt_rel, inst.pose)
            pio.write_pose(out / init_rel, t_init)
            entries.append(
                {
                    "scene": scene_id,
                    "index": j,
                    "split": split,
                    "visibility": round(inst.visibility, 6),
                    "feature_visibility": round(inst.feature_visibility, 6),
                    "cloud_path": cloud_rel,
                    "gt_pose_path": gt_rel,
                    "init_pose_path": init_rel,
                    "residual_reflection": int(refl),
                    "residual_revolution": float(revo),
                    "camera_eye": [round(float(v), 9) for v in eye],
                }
            )

    manifest = {
        "format": "posedist-dataset-v1",
        "config": config.to_dict(),
        "object_radius": bound,
        "n_scenes_skipped": n_skipped,
        "instances": entries,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def load_manifest(root) -> DatasetIndex:
    root = Path(root)
    path = root / "manifest.json"
    if not path.exists():
        raise DataError(f"no manifest.json under {root}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"malformed manifest: {e}") from e
    if manifest.get("format") != "posedist-dataset-v1":
        raise DataError("unrecognized dataset format tag")
    records = []
    for e in manifest["instances"]:
        records.append(
            InstanceRecord(
                scene=e["scene"],
                index=e["index"],
                split=e["split"],
                visibility=e["visibility"],
                feature_visibility=e["feature_visibility"],
                cloud_path=e["cloud_path"],
                gt_pose_path=e["gt_pose_path"],
                init_pose_path=e["init_pose_path"],
                residual_reflection=e["residual_reflection"],
                residual_revolution=e["residual_revolution"],
                camera_eye=tuple(e["camera_eye"]),
                root=root,
            )
        )
    return DatasetIndex(
        root=root,
        config=DatasetConfig.from_dict(manifest["config"]),
        object_radius=manifest["object_radius"],
        records=records,
    )
