"""Probability distributions over object reflection and revolution.

Estimates, from a 3D point cloud and an initial pose, how likely each
member of a discrete grid of pose candidates (2 reflections x 360
revolution steps) is to be the object's true pose, and applies
confidence-based policies for accepting, re-orienting, or rejecting
predictions in automated bin picking.
"""

from .errors import DataError, EmptyCropError, NumericalError
from .geometry import (
    KeypointSet,
    NNIndex,
    PointCloud,
    RigidTransform,
    SampleGrid,
    axis_angle_rotation,
    build_nn_index,
    build_sample_grid,
    circular_angle_distance,
    compose_sample_transform,
    farthest_point_sample,
    geodesic_angle_deg,
    nearest_grid_bin,
    normalize_and_crop,
    normalize_sample_grid,
    query_nearest,
    rotation_x,
    rotation_y,
    rotation_z,
)
from .meshes import (
    ObjectSpec,
    TriangleMesh,
    is_watertight,
    make_object_mesh,
    make_open_box,
    make_plane,
    make_uv_sphere,
    mesh_volume,
    point_to_mesh_distance,
    sample_surface,
)
from .render import InstanceRender, PinholeCamera, RenderResult, look_at, render_scene
from .dataset import (
    AugmentParams,
    DatasetConfig,
    DatasetIndex,
    InstanceRecord,
    JitterParams,
    SceneConfig,
    augment_depth,
    generate_dataset,
    jitter_pose,
    load_manifest,
    synthesize_scene,
)
from .autodiff import Tensor, numeric_gradient
from .nn import (
    AdamState,
    ModelConfig,
    adam_step,
    dropout,
    init_params,
    load_weights,
    save_weights,
)
from .encoder import build_knn_graph, encode_points
from .scoring import (
    KeypointFeaturePack,
    PoseDistribution,
    aggregate_and_score,
    entropy,
    extract_keypoint_features,
    infonce_loss,
    normalize,
)
from .policies import (
    ACCEPT_POSE,
    ACCEPT_REFLECTION,
    REJECT,
    PolicyDecision,
    policy_pose,
    policy_reflection,
    window_masses,
)
from .estimator import PoseDistributionEstimator
from .evaluation import EvalReport, EvalRow, InstanceEval, evaluate
from .benchmark import BenchReport, runtime_bench
from .simulate import BinPickState, SimConfig, simulate_bin_picking
from .io import (
    read_distribution_csv,
    read_ply,
    read_pose,
    write_distribution_csv,
    write_ply,
    write_pose,
)

__version__ = "0.1.0"

__all__ = [
    "ACCEPT_POSE",
    "ACCEPT_REFLECTION",
    "REJECT",
    "AdamState",
    "AugmentParams",
    "BenchReport",
    "BinPickState",
    "DataError",
    "DatasetConfig",
    "DatasetIndex",
    "EmptyCropError",
    "EvalReport",
    "EvalRow",
    "InstanceEval",
    "InstanceRecord",
    "InstanceRender",
    "JitterParams",
    "KeypointFeaturePack",
    "KeypointSet",
    "ModelConfig",
    "NNIndex",
    "NumericalError",
    "ObjectSpec",
    "PinholeCamera",
    "PointCloud",
    "PolicyDecision",
    "PoseDistribution",
    "PoseDistributionEstimator",
    "RenderResult",
    "RigidTransform",
    "SampleGrid",
    "SceneConfig",
    "SimConfig",
    "Tensor",
    "TriangleMesh",
    "adam_step",
    "aggregate_and_score",
    "augment_depth",
    "axis_angle_rotation",
    "build_knn_graph",
    "build_nn_index",
    "build_sample_grid",
    "circular_angle_distance",
    "compose_sample_transform",
    "dropout",
    "encode_points",
    "entropy",
    "evaluate",
    "extract_keypoint_features",
    "farthest_point_sample",
    "generate_dataset",
    "geodesic_angle_deg",
    "infonce_loss",
    "init_params",
    "is_watertight",
    "jitter_pose",
    "load_manifest",
    "load_weights",
    "look_at",
    "make_object_mesh",
    "make_open_box",
    "make_plane",
    "make_uv_sphere",
    "mesh_volume",
    "nearest_grid_bin",
    "normalize",
    "normalize_and_crop",
    "normalize_sample_grid",
    "numeric_gradient",
    "point_to_mesh_distance",
    "policy_pose",
    "policy_reflection",
    "query_nearest",
    "read_distribution_csv",
    "read_ply",
    "read_pose",
    "render_scene",
    "rotation_x",
    "rotation_y",
    "rotation_z",
    "runtime_bench",
    "sample_surface",
    "save_weights",
    "simulate_bin_picking",
    "synthesize_scene",
    "window_masses",
    "write_distribution_csv",
    "write_ply",
    "write_pose",
]
