"""Per-sample scoring: keypoint feature extraction, aggregation, softmax.

Given a normalized crop, its encoder features, and the candidate grid,
every candidate transform places the model keypoints into the cloud frame,
looks up each keypoint's nearest scene point, and aggregates (spatial
offset, point embedding) pairs into one un-normalized log-likelihood per
candidate. Softmax over the grid yields the pose distribution; training
uses the InfoNCE loss against the ground-truth bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat
from .errors import NumericalError
from .geometry import NNIndex, PointCloud, SampleGrid
from .nn import ModelConfig, dropout


@dataclass
class KeypointFeaturePack:
    """Aligned per-(sample, keypoint) inputs for the aggregator.

    spatial_deltas[i, j] is keypoint j under sample transform i minus its
    nearest scene point; source_ids names that point; embeddings is the
    differentiable gather of the encoder rows, flattened to (r*k, f).
    """

    spatial_deltas: np.ndarray   # (r, k, 3) float32
    source_ids: np.ndarray       # (r, k) int64
    nn_distances: np.ndarray     # (r, k) float64
    embeddings: Tensor           # (r*k, f)

    @property
    def n_samples(self) -> int:
        return self.spatial_deltas.shape[0]

    @property
    def n_keypoints(self) -> int:
        return self.spatial_deltas.shape[1]


def extract_keypoint_features(cloud: PointCloud, encoder_out: Tensor,
                              keypoints: np.ndarray, grid: SampleGrid,
                              nn_index: NNIndex) -> KeypointFeaturePack:
    """Place keypoints under every candidate transform and find neighbors.

    `cloud`, `grid`, and `keypoints` must all live in the normalized crop
    frame (see normalize_and_crop / normalize_sample_grid; keypoints are the
    object-frame sample points divided by the object radius).
    """
    keypoints = np.asarray(keypoints, dtype=np.float64)
    r = len(grid)
    k = keypoints.shape[0]
    # sample transforms map cloud frame -> object frame; keypoints are in
    # the object frame, so place them with the inverse map
    diff = keypoints[None, :, :] - grid.translations[:, None, :]
    scene_pos = np.einsum("rkj,rji->rki", diff, grid.rotations)
    ids, dist = nn_index.query_batch(scene_pos.reshape(-1, 3))
    deltas = scene_pos.reshape(-1, 3) - cloud.positions[ids]
    return KeypointFeaturePack(
        spatial_deltas=deltas.reshape(r, k, 3).astype(np.float32),
        source_ids=ids.reshape(r, k),
        nn_distances=dist.reshape(r, k),
        embeddings=encoder_out.gather_rows(ids),
    )


def aggregate_keypoints(pack: KeypointFeaturePack, params: dict,
                        config: ModelConfig) -> Tensor:
    """Fuse per-keypoint branches into one (r, k*hidden) row per sample.

    Each keypoint contributes h_x(spatial offset) and h_f(embedding);
    ablations drop one branch without resizing the other.
    """
    r, k = pack.n_samples, pack.n_keypoints
    if k != config.n_keypoints:
        raise ValueError(f"pack has {k} keypoints, config expects {config.n_keypoints}")
    branches = []
    if config.ablation != "omit_spatial":
        hx = Tensor(pack.spatial_deltas.reshape(r * k, 3))
        hx = hx.linear(params["agg_hx1_w"], params["agg_hx1_b"]).relu()
        hx = hx.linear(params["agg_hx2_w"], params["agg_hx2_b"]).relu()
        branches.append(hx)
    if config.ablation != "omit_features":
        hf = pack.embeddings.linear(params["agg_hf1_w"], params["agg_hf1_b"]).relu()
        hf = hf.linear(params["agg_hf2_w"], params["agg_hf2_b"]).relu()
        branches.append(hf)
    fused = branches[0] if len(branches) == 1 else concat(branches, axis=1)
    fused = fused.linear(params["agg_fuse_w"], params["agg_fuse_b"]).relu()
    return fused.reshape(r, k * config.agg_hidden)


def score_head(flat: Tensor, params: dict, config: ModelConfig,
               training: bool = False, rng=None) -> Tensor:
    """Reduce fused keypoint rows to one log-likelihood per sample."""
    if training and rng is None:
        raise ValueError("training mode requires an rng for dropout")
    h = flat.linear(params["head1_w"], params["head1_b"]).relu()
    h = dropout(h, config.dropout_rate, rng, training)
    h = h.linear(params["head2_w"], params["head2_b"]).relu()
    h = dropout(h, config.dropout_rate, rng, training)
    scores = h.linear(params["head3_w"], params["head3_b"])
    return scores.reshape(flat.shape[0])


def aggregate_and_score(pack: KeypointFeaturePack, params: dict,
                        config: ModelConfig, training: bool = False,
                        rng=None) -> Tensor:
    """Log-likelihood scores (r,) from the per-keypoint feature pairs."""
    flat = aggregate_keypoints(pack, params, config)
    return score_head(flat, params, config, training, rng)


@dataclass(frozen=True)
class PoseDistribution:
    """Probabilities over the candidate grid, reflection-major order."""

    probs: np.ndarray       # (r,) float64, sums to 1
    log_scores: np.ndarray  # (r,) float64, un-normalized
    n_revolution: int = 360

    @property
    def n_reflections(self) -> int:
        return len(self.probs) // self.n_revolution

    def rows(self) -> np.ndarray:
        """(n_reflections, n_revolution) view of the probabilities."""
        return self.probs.reshape(self.n_reflections, self.n_revolution)

    def reflection_marginal(self) -> np.ndarray:
        return self.rows().sum(axis=1)

    def revolution_marginal(self) -> np.ndarray:
        return self.rows().sum(axis=0)

    def best_bin(self) -> int:
        return int(np.argmax(self.probs))

    def entropy(self) -> float:
        return entropy(self.probs)

    def reflection_entropy(self) -> float:
        return entropy(self.reflection_marginal())

    def revolution_entropy(self) -> float:
        return entropy(self.revolution_marginal())


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats; zero-probability bins contribute nothing."""
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def normalize(log_scores, n_revolution: int = 360) -> PoseDistribution:
    """Numerically stable softmax over the candidate scores."""
    scores = log_scores.data if isinstance(log_scores, Tensor) else log_scores
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(scores)):
        raise NumericalError("non-finite candidate scores")
    shifted = scores - scores.max()
    e = np.exp(shifted)
    probs = e / e.sum()
    return PoseDistribution(probs=probs, log_scores=scores.copy(),
                            n_revolution=n_revolution)


def infonce_loss(log_scores: Tensor, gt_bin: int) -> Tensor:
    """Cross-entropy of the ground-truth bin against all other candidates."""
    r = log_scores.shape[0]
    if not 0 <= gt_bin < r:
        raise ValueError(f"gt_bin {gt_bin} outside [0, {r})")
    return log_scores.logsumexp() - log_scores.take_scalar(gt_bin)