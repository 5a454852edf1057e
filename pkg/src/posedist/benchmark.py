"""Per-stage runtime measurement of a single scoring pass.

Times the pipeline stages separately (cloud preparation, feature encoding,
keypoint nearest-neighbor lookup, feature aggregation, scoring head), each
as the median over repeated runs, plus candidate-grid construction on its
own. Stage outputs are chained exactly as inference runs them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .encoder import build_knn_graph, encode_points
from .geometry import (
    NNIndex,
    PointCloud,
    RigidTransform,
    build_sample_grid,
    normalize_and_crop,
    normalize_sample_grid,
)
from .nn import eval_mode
from .scoring import (
    aggregate_keypoints,
    extract_keypoint_features,
    normalize,
    score_head,
)

STAGES = (
    "load_cloud",
    "feature_encoding",
    "nearest_neighbor",
    "feature_aggregator",
    "model_head",
)


@dataclass
class BenchReport:
    stage_ms: dict           # stage name -> median milliseconds
    grid_ms: float           # candidate-grid construction, median ms
    repeats: int

    @property
    def total_ms(self) -> float:
        return float(sum(self.stage_ms.values()))

    def scoring_ms(self) -> float:
        """Encode + NN + aggregate + head (excludes cloud loading)."""
        return float(sum(v for k, v in self.stage_ms.items() if k != "load_cloud"))

    def format_table(self) -> str:
        rows = [f"{'stage':<22}{'median ms':>12}{'cumulative ms':>15}"]
        rows.append("-" * len(rows[0]))
        cum = 0.0
        for name in STAGES:
            cum += self.stage_ms[name]
            rows.append(f"{name:<22}{self.stage_ms[name]:>12.2f}{cum:>15.2f}")
        rows.append(f"{'grid_sampling':<22}{self.grid_ms:>12.2f}{'(separate)':>15}")
        rows.append(f"(median of {self.repeats} runs)")
        return "\n".join(rows)


def _median_time(fn, repeats: int) -> tuple:
    """Median wall time of fn over `repeats` runs plus its last result."""
    times = np.empty(repeats)
    result = None
    for i in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        times[i] = time.perf_counter() - t0
    return float(np.median(times) * 1e3), result


def runtime_bench(estimator, cloud: PointCloud, t_init: RigidTransform,
                  repeats: int = 31) -> BenchReport:
    """Benchmark one full scoring pass of a fitted estimator.

    The model is warmed up once before timing. Stages consume the previous
    stage's output, so per-stage medians decompose a real pass.
    """
    estimator._check_fitted()
    params = estimator.params_
    config = estimator.config_
    radius = estimator.object_radius_
    center = t_init.center()
    kp_norm = estimator.keypoints_ / radius

    with eval_mode(params):
        # warm-up pass (allocators, BLAS thread pools, kd-tree code paths)
        estimator.predict_distribution(cloud, t_init)

        def stage_load():
            crop = normalize_and_crop(
                cloud, center, radius, estimator.crop_factor,
                estimator.n_points, rng=np.random.default_rng(0),
            )
            return crop, NNIndex(crop.positions), build_knn_graph(
                crop.positions, config.k_neighbors
            )

        ms_load, (crop, nn_index, graph) = _median_time(stage_load, repeats)

        ms_grid, grid = _median_time(
            lambda: build_sample_grid(t_init, estimator.n_revolution), repeats
        )
        grid_n = normalize_sample_grid(grid, center, radius)

        ms_enc, feats = _median_time(
            lambda: encode_points(params, crop, config, neighbors=graph), repeats
        )
        ms_nn, pack = _median_time(
            lambda: extract_keypoint_features(crop, feats, kp_norm, grid_n, nn_index),
            repeats,
        )
        ms_agg, flat = _median_time(
            lambda: aggregate_keypoints(pack, params, config), repeats
        )
        ms_head, _ = _median_time(
            lambda: normalize(score_head(flat, params, config), estimator.n_revolution),
            repeats,
        )

    return BenchReport(
        stage_ms={
            "load_cloud": ms_load,
            "feature_encoding": ms_enc,
            "nearest_neighbor": ms_nn,
            "feature_aggregator": ms_agg,
            "model_head": ms_head,
        },
        grid_ms=ms_grid,
        repeats=repeats,
    )
