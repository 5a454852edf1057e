"""Scikit-learn style estimator tying the full pipeline together.

``fit`` trains the scoring model on a generated dataset directory (or a
loaded DatasetIndex); ``predict_distribution`` turns a scene cloud plus an
initial pose into a probability distribution over the reflection/revolution
candidate grid. A fitted estimator round-trips through a single weight file
that also stores the keypoints and normalization constants.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .autodiff import Tensor
from .dataset import (
    AugmentParams,
    DatasetIndex,
    augment_depth,
    jitter_pose,
    load_manifest,
)
from .encoder import encode_points
from .errors import DataError
from .geometry import (
    NNIndex,
    PointCloud,
    RigidTransform,
    build_sample_grid,
    farthest_point_sample,
    normalize_and_crop,
    normalize_sample_grid,
)
from .meshes import make_object_mesh
from .nn import (
    AdamState,
    ModelConfig,
    adam_step,
    arrays_to_params,
    eval_mode,
    init_params,
    load_weights,
    params_to_arrays,
    save_weights,
    scale_grads,
    zero_grads,
)
from .policies import PolicyDecision, policy_pose, policy_reflection
from .scoring import (
    PoseDistribution,
    aggregate_and_score,
    extract_keypoint_features,
    infonce_loss,
    normalize,
)

_EVAL_RESAMPLE_SEED = 1234


class PoseDistributionEstimator(BaseEstimator):
    """Estimates a distribution over an object's reflection and revolution.

    Candidates form a 2 x n_revolution grid of transforms around the given
    initial pose; the model scores how well each candidate's keypoint
    placement matches the observed cloud.
    """

    def __init__(
        self,
        n_points: int = 4096,
        k_neighbors: int = 20,
        feature_dim: int = 64,
        n_keypoints: int = 32,
        n_revolution: int = 360,
        agg_hidden: int = 64,
        head_hidden: int = 256,
        dropout_rate: float = 0.1,
        ablation: str = "full",
        crop_factor: float = 1.2,
        epochs: int = 200,
        batches_per_epoch: int = 100,
        batch_size: int = 1,
        learning_rate: float = 1e-4,
        seed: int = 0,
        noise_std: float = 3e-4,
        point_dropout: float = 0.1,
        max_patches: int = 2,
        n_validation: int = 16,
        log_every: int = 0,
        checkpoint_dir=None,
        checkpoint_every: int = 10,
    ):
        self.n_points = n_points
        self.k_neighbors = k_neighbors
        self.feature_dim = feature_dim
        self.n_keypoints = n_keypoints
        self.n_revolution = n_revolution
        self.agg_hidden = agg_hidden
        self.head_hidden = head_hidden
        self.dropout_rate = dropout_rate
        self.ablation = ablation
        self.crop_factor = crop_factor
        self.epochs = epochs
        self.batches_per_epoch = batches_per_epoch
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.noise_std = noise_std
        self.point_dropout = point_dropout
        self.max_patches = max_patches
        self.n_validation = n_validation
        self.log_every = log_every
        self.checkpoint_dir = checkpoint_dir
        self.checkpoint_every = checkpoint_every

    # -- configuration ---------------------------------------------------------

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            n_points=self.n_points,
            in_dims=6,
            k_neighbors=self.k_neighbors,
            feature_dim=self.feature_dim,
            n_keypoints=self.n_keypoints,
            n_samples=2 * self.n_revolution,
            agg_hidden=self.agg_hidden,
            head_hidden=self.head_hidden,
            dropout_rate=self.dropout_rate,
            ablation=self.ablation,
        )

    @property
    def is_fitted(self) -> bool:
        return hasattr(self, "params_")

    # -- training ----------------------------------------------------------------

    def fit(self, dataset, y=None):
        """Train on a dataset directory or DatasetIndex; returns self."""
        index = dataset if isinstance(dataset, DatasetIndex) else load_manifest(dataset)
        train = index.split("train")
        if not train:
            raise DataError("dataset has no training instances")

        mesh = make_object_mesh(index.config.object_spec)
        kp = farthest_point_sample(mesh.vertices, self.n_keypoints)
        self.keypoints_ = kp.points
        self.keypoint_indices_ = kp.vertex_indices
        self.object_radius_ = float(index.object_radius)
        self.config_ = self._model_config()
        self.params_ = init_params(self.config_, self.seed)
        self.history_ = []

        rng = np.random.default_rng(np.random.SeedSequence((self.seed, 0xF17)))
        n_val = min(self.n_validation, max(0, len(train) - 8))
        val = train[len(train) - n_val:] if n_val else []
        train = train[: len(train) - n_val] if n_val else train

        cache = [
            (r.load_cloud(), r.load_gt_pose(), np.asarray(r.camera_eye)) for r in train
        ]
        val_cache = [
            (r.load_cloud(), r.load_init_pose(), r.load_gt_pose(), np.asarray(r.camera_eye),
             r.residual_reflection, r.residual_revolution)
            for r in val
        ]
        augment = AugmentParams(
            noise_std=self.noise_std,
            dropout=self.point_dropout,
            max_patches=self.max_patches,
            n_points=self.n_points,
        )
        jitter = index.config.jitter
        adam = AdamState.zeros(self.params_)
        best_val = np.inf
        best_arrays = None
        t_start = time.perf_counter()

        step = 0
        for epoch in range(self.epochs):
            epoch_losses = []
            for _ in range(self.batches_per_epoch):
                zero_grads(self.params_)
                batch_losses = []
                for _ in range(self.batch_size):
                    cloud, gt, eye = cache[int(rng.integers(0, len(cache)))]
                    loss = self._training_loss(cloud, gt, eye, augment, jitter, rng)
                    loss.backward()
                    batch_losses.append(float(loss.data))
                if self.batch_size > 1:
                    scale_grads(self.params_, 1.0 / self.batch_size)
                adam_step(self.params_, adam, lr=self.learning_rate)
                step += 1
                epoch_losses.append(float(np.mean(batch_losses)))
                if self.log_every and step % self.log_every == 0:
                    recent = float(np.mean(epoch_losses[-self.log_every:]))
                    elapsed = time.perf_counter() - t_start
                    print(f"step {step}: loss {recent:.4f} ({elapsed:.0f}s)", flush=True)

            entry = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
            if val_cache:
                entry["val_loss"] = self._validation_loss(val_cache)
                if entry["val_loss"] < best_val:
                    best_val = entry["val_loss"]
                    best_arrays = {k: p.data.copy() for k, p in self.params_.items()}
                    if self.checkpoint_dir is not None:
                        self._write_checkpoint(Path(self.checkpoint_dir) / "best.opde", adam)
            self.history_.append(entry)
            if (
                self.checkpoint_dir is not None
                and self.checkpoint_every
                and (epoch + 1) % self.checkpoint_every == 0
            ):
                self._write_checkpoint(
                    Path(self.checkpoint_dir) / f"epoch_{epoch + 1:05d}.opde", adam
                )

        # keep the best-validation weights when validation was used
        if best_arrays is not None:
            for k, p in self.params_.items():
                p.data = best_arrays[k]
        if self.checkpoint_dir is not None:
            self._write_checkpoint(Path(self.checkpoint_dir) / "final.opde", adam)
        return self

    def _training_loss(self, cloud, gt, eye, augment, jitter, rng) -> Tensor:
        """One training instance: fresh jitter, corruption, crop, score, loss."""
        t_init, (refl, revo) = jitter_pose(gt, rng, jitter)
        aug = augment_depth(cloud, rng, augment, eye=eye)
        center = t_init.center()
        crop = normalize_and_crop(
            aug, center, self.object_radius_, self.crop_factor, self.n_points, rng=rng
        )
        grid = build_sample_grid(t_init, self.n_revolution)
        gt_bin = grid.bin_index(refl, revo)
        grid_n = normalize_sample_grid(grid, center, self.object_radius_)
        nn_index = NNIndex(crop.positions)
        feats = encode_points(self.params_, crop, self.config_)
        pack = extract_keypoint_features(
            crop, feats, self.keypoints_ / self.object_radius_, grid_n, nn_index
        )
        scores = aggregate_and_score(pack, self.params_, self.config_, training=True, rng=rng)
        return infonce_loss(scores, gt_bin)

    def _validation_loss(self, val_cache) -> float:
        losses = []
        with eval_mode(self.params_):
            for cloud, t_init, gt, eye, refl, revo in val_cache:
                try:
                    scores, grid = self._score(cloud, t_init)
                except DataError:
                    continue
                gt_bin = grid.bin_index(refl, revo)
                losses.append(float(infonce_loss(scores, gt_bin).data))
        return float(np.mean(losses)) if losses else np.inf

    def _write_checkpoint(self, path: Path, adam: AdamState) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = self._export_arrays()
        arrays["__adam_step__"] = np.array([adam.step], dtype=np.float32)
        for k in adam.m:
            arrays[f"adam_m:{k}"] = adam.m[k]
            arrays[f"adam_v:{k}"] = adam.v[k]
        save_weights(path, arrays)

    # -- inference ----------------------------------------------------------------

    def _score(self, cloud: PointCloud, t_init: RigidTransform):
        """Shared scoring path; returns (score Tensor, grid). No dropout."""
        center = t_init.center()
        crop = normalize_and_crop(
            cloud,
            center,
            self.object_radius_,
            self.crop_factor,
            self.n_points,
            rng=np.random.default_rng(_EVAL_RESAMPLE_SEED),
        )
        grid = build_sample_grid(t_init, self.n_revolution)
        grid_n = normalize_sample_grid(grid, center, self.object_radius_)
        nn_index = NNIndex(crop.positions)
        feats = encode_points(self.params_, crop, self.config_)
        pack = extract_keypoint_features(
            crop, feats, self.keypoints_ / self.object_radius_, grid_n, nn_index
        )
        scores = aggregate_and_score(pack, self.params_, self.config_, training=False)
        return scores, grid

    def predict_distribution(self, cloud: PointCloud,
                             t_init: RigidTransform) -> PoseDistribution:
        """Probability over the candidate grid for one scene crop."""
        self._check_fitted()
        with eval_mode(self.params_):
            scores, _ = self._score(cloud, t_init)
        return normalize(scores, self.n_revolution)

    def predict(self, cloud: PointCloud, t_init: RigidTransform,
                cutoff: float = 0.99, window_deg: float = 15.0) -> PolicyDecision:
        """Pose-policy decision; falls back to the reflection policy."""
        dist = self.predict_distribution(cloud, t_init)
        pose = policy_pose(dist, cutoff, window_deg)
        if pose.accepted:
            return pose
        return policy_reflection(dist, cutoff)

    def _check_fitted(self):
        if not self.is_fitted:
            raise DataError("estimator is not fitted; call fit() or load()")

    # -- persistence ----------------------------------------------------------------

    def _export_arrays(self) -> dict:
        arrays = dict(params_to_arrays(self.params_))
        arrays["__config__"] = self.config_.to_vector()
        arrays["__keypoints__"] = self.keypoints_.astype(np.float32)
        arrays["__keypoint_indices__"] = self.keypoint_indices_.astype(np.float32)
        arrays["__object_radius__"] = np.array([self.object_radius_], dtype=np.float32)
        arrays["__crop_factor__"] = np.array([self.crop_factor], dtype=np.float32)
        return arrays

    def save(self, path) -> None:
        """Write weights plus keypoints/normalization into one file."""
        self._check_fitted()
        save_weights(path, self._export_arrays())

    @classmethod
    def load(cls, path) -> "PoseDistributionEstimator":
        """Restore a fitted estimator from a weight file."""
        arrays = load_weights(path)
        for required in ("__config__", "__keypoints__", "__object_radius__"):
            if required not in arrays:
                raise DataError(f"weight file lacks {required}")
        config = ModelConfig.from_vector(arrays["__config__"])
        est = cls(
            n_points=config.n_points,
            k_neighbors=config.k_neighbors,
            feature_dim=config.feature_dim,
            n_keypoints=config.n_keypoints,
            n_revolution=config.n_samples // 2,
            agg_hidden=config.agg_hidden,
            head_hidden=config.head_hidden,
            dropout_rate=config.dropout_rate,
            ablation=config.ablation,
            crop_factor=float(arrays.get("__crop_factor__", np.array([1.2]))[0]),
        )
        est.config_ = config
        est.params_ = arrays_to_params(
            {k: v for k, v in arrays.items() if not k.startswith(("__", "adam_"))},
            config,
        )
        est.keypoints_ = arrays["__keypoints__"].astype(np.float64)
        est.keypoint_indices_ = arrays.get(
            "__keypoint_indices__", np.zeros(config.n_keypoints, dtype=np.float32)
        ).astype(np.int64)
        est.object_radius_ = float(arrays["__object_radius__"][0])
        est.history_ = []
        return est
