"""Differentiable point-cloud feature encoder.

A light edge-convolution network: per point, gather k nearest neighbors in
position space, build edge features (center features next to neighbor
differences), run a shared two-layer perceptron and max-pool over the
neighborhood; then a shared per-point perceptron whose output is
concatenated with a global max-pooled context vector. The result is one
feature row per input point, permutation-equivariant over the cloud.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .autodiff import Tensor, concat
from .geometry import PointCloud
from .nn import ModelConfig


def build_knn_graph(positions: np.ndarray, k: int) -> np.ndarray:
    """Indices (n, k) of each point's k nearest neighbors, self excluded."""
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    if k >= n:
        raise ValueError(f"need more than k={k} points, got {n}")
    tree = cKDTree(positions)
    _, idx = tree.query(positions, k=k + 1)
    rows = np.arange(n)[:, None]
    not_self = idx != rows
    # exactly one self match per row is dropped; with duplicate points the
    # self column may sit anywhere, so mask then re-pack to k columns
    extra = not_self.sum(axis=1) - k
    if np.any(extra):
        for i in np.flatnonzero(extra):
            hits = np.flatnonzero(not_self[i])
            not_self[i, hits[k:]] = False
    out = idx[not_self].reshape(n, k)
    return out


def encode_points(params: dict, cloud: PointCloud, config: ModelConfig,
                  neighbors: np.ndarray | None = None) -> Tensor:
    """Per-point feature rows (n, feature_dim); deterministic given inputs.

    ``neighbors`` may be precomputed with build_knn_graph to skip the
    kd-tree query; otherwise it is built from the cloud positions.
    """
    n = cloud.n
    if n != config.n_points:
        raise ValueError(f"encoder expects {config.n_points} points, got {n}")
    x = np.concatenate([cloud.positions, cloud.normals], axis=1).astype(np.float32)
    if x.shape[1] != config.in_dims:
        raise ValueError(f"expected {config.in_dims} input dims, got {x.shape[1]}")
    if neighbors is None:
        neighbors = build_knn_graph(cloud.positions, config.k_neighbors)
    k = config.k_neighbors

    center = np.repeat(x[:, None, :], k, axis=1)
    edge = np.concatenate([center, x[neighbors] - center], axis=2)
    edge = Tensor(edge.reshape(n * k, 2 * config.in_dims))

    h = edge.linear(params["enc_edge1_w"], params["enc_edge1_b"]).relu()
    h = h.linear(params["enc_edge2_w"], params["enc_edge2_b"]).relu()
    h = h.reshape(n, k, config.feature_dim).max(axis=1)

    h = h.linear(params["enc_point1_w"], params["enc_point1_b"]).relu()
    local = h.linear(params["enc_point2_w"], params["enc_point2_b"]).relu()

    context = local.max(axis=0).reshape(1, config.feature_dim // 2)
    ones = Tensor(np.ones((n, 1), dtype=np.float32))
    return concat([local, ones @ context], axis=1)
