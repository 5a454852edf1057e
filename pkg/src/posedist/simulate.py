"""Bin-picking decision-loop simulation driven by the acceptance policies.

Each step renders the current bin, estimates a pose distribution for every
sufficiently visible object from a jittered initial pose, and acts on the
first accepted pose: insert it (correct when the accepted window actually
contains the ground truth), or, when the simulated grasp is unusable,
re-orient the object to a canonical pose. When nothing is accepted, a
random object is flipped to a new random pose to change the view. The loop
runs until the insertion target or the step budget is reached.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import (
    JitterParams,
    SceneConfig,
    _axis_angle_matrix,
    _place_objects,
    _random_rotation,
    jitter_pose,
)
from .geometry import (
    RigidTransform,
    build_sample_grid,
    circular_angle_distance,
    nearest_grid_bin,
    rotation_z,
)
from .meshes import ObjectSpec, make_object_mesh, make_open_box
from .policies import policy_pose
from .render import PinholeCamera, look_at, render_scene


@dataclass(frozen=True)
class SimConfig:
    objects_in_bin: int = 5
    respawn: bool = True            # keep the bin stocked after insertions
    grasp_unusable_prob: float = 0.3
    max_steps: int = 250
    min_visibility: float = 0.5
    cutoff: float = 0.99
    window_deg: float = 15.0
    scene: SceneConfig = field(default_factory=SceneConfig)
    camera: PinholeCamera = field(default_factory=PinholeCamera)
    jitter: JitterParams = field(default_factory=JitterParams)


@dataclass
class BinPickState:
    """Counters and per-step log; grasps always equal flips + alignments
    + insertions (insertions counts every attempt, correct or not)."""

    target_insertions: int
    grasps: int = 0
    flips: int = 0
    alignments: int = 0
    insertions: int = 0
    incorrect_insertions: int = 0
    steps: int = 0
    finished: bool = False
    log: list = field(default_factory=list)

    def save_log(self, path) -> None:
        payload = {
            "target_insertions": self.target_insertions,
            "grasps": self.grasps,
            "flips": self.flips,
            "alignments": self.alignments,
            "insertions": self.insertions,
            "incorrect_insertions": self.incorrect_insertions,
            "steps": self.steps,
            "finished": self.finished,
            "events": self.log,
        }
        Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def _sample_position(cfg: SceneConfig, bound: float, others, rng) -> np.ndarray:
    half = cfg.bin_size / 2 - bound * 0.7
    best = None
    for _ in range(cfg.max_place_tries):
        c = np.array(
            [rng.uniform(-half, half), rng.uniform(-half, half), rng.uniform(*cfg.z_range)]
        )
        best = c
        if all(np.linalg.norm(c - o) >= cfg.overlap_factor * 2 * bound for o in others):
            return c
    return best  # crowded bin: accept the last candidate


def _random_pose(cfg: SceneConfig, bound: float, others, rng) -> RigidTransform:
    c = _sample_position(cfg, bound, others, rng)
    r = _random_rotation(rng)
    return RigidTransform(r, -r @ c)


def _canonical_pose(cfg: SceneConfig, bound: float, others, rng) -> RigidTransform:
    """Upright orientation with random revolution and a small tilt."""
    c = _sample_position(cfg, bound, others, rng)
    tilt = _axis_angle_matrix(np.radians(3.0) * rng.standard_normal(3))
    r = tilt @ rotation_z(rng.uniform(0.0, 360.0))
    return RigidTransform(r, -r @ c)


def simulate_bin_picking(estimator, object_spec: ObjectSpec,
                         target_insertions: int = 10, seed: int = 0,
                         config: SimConfig = SimConfig()) -> BinPickState:
    """Run the pick-flip-align loop until `target_insertions` or budget."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x51A)))
    mesh = make_object_mesh(object_spec)
    bound = mesh.bounding_radius()
    cfg = config.scene
    poses = _place_objects(cfg, bound, rng)
    if poses is None:
        poses = [_random_pose(cfg, bound, [], rng) for _ in range(config.objects_in_bin)]
    bin_mesh = make_open_box(cfg.bin_size, cfg.bin_size, cfg.bin_wall_height)
    state = BinPickState(target_insertions=target_insertions)

    while state.insertions < target_insertions and state.steps < config.max_steps:
        state.steps += 1
        if not poses:
            break
        sway = cfg.camera_sway * (rng.random(2) * 2 - 1)
        cam_pose = look_at(np.array([sway[0], sway[1], cfg.camera_height]),
                           np.array([0.0, 0.0, 0.02]))
        result = render_scene(
            [mesh] * len(poses) + [bin_mesh],
            poses + [RigidTransform.identity()],
            config.camera,
            cam_pose,
        )
        scene_cloud = result.cloud()

        accepted = None  # (object index, decision, gt bin)
        for i, inst in enumerate(result.instances[: len(poses)]):
            if inst.visibility < config.min_visibility:
                continue
            t_init, _ = jitter_pose(poses[i], rng, config.jitter)
            dist = estimator.predict_distribution(scene_cloud, t_init)
            decision = policy_pose(dist, config.cutoff, config.window_deg)
            if decision.accepted:
                grid = build_sample_grid(t_init, estimator.n_revolution)
                gt_refl, gt_revo, _ = grid.entry(nearest_grid_bin(grid, poses[i].rotation))
                accepted = (i, decision, gt_refl, gt_revo)
                break

        others = lambda skip: [p.center() for j, p in enumerate(poses) if j != skip]
        if accepted is None:
            # nothing certain: flip a random object to change the view
            state.grasps += 1
            state.flips += 1
            i = int(rng.integers(0, len(poses)))
            poses[i] = _random_pose(cfg, bound, others(i), rng)
            state.log.append({"step": state.steps, "action": "flip", "object": i})
            continue

        i, decision, gt_refl, gt_revo = accepted
        state.grasps += 1
        if rng.random() < config.grasp_unusable_prob:
            state.alignments += 1
            poses[i] = _canonical_pose(cfg, bound, others(i), rng)
            state.log.append({"step": state.steps, "action": "align", "object": i})
            continue

        state.insertions += 1
        correct = (
            decision.reflection_index == gt_refl
            and circular_angle_distance(decision.window_center_deg, gt_revo)
            <= config.window_deg / 2.0 + 1e-9
        )
        if not correct:
            state.incorrect_insertions += 1
        state.log.append(
            {
                "step": state.steps,
                "action": "insert",
                "object": i,
                "correct": bool(correct),
                "confidence": decision.confidence,
            }
        )
        poses.pop(i)
        if config.respawn and len(poses) < config.objects_in_bin:
            poses.append(_random_pose(cfg, bound, others(None), rng))

    state.finished = state.insertions >= target_insertions
    return state
