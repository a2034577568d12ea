"""Two localization pipelines: scan-to-local-map odometry and prior-map localization."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .datasets import FrameDataset
from .errors import (
    DegenerateLinearizationError,
    DivergenceError,
    ParameterError,
    SmvslabError,
)
from .geometry import (
    PointCloud,
    SpatialIndex,
    estimate_covariances,
    voxel_dedup,
    voxel_downsample,
)
from .matching import MatcherConfig, gauss_newton_align
from .se3 import PoseSE3
from .trajectory import Trajectory


@dataclass(frozen=True)
class PipelineConfig:
    frame_voxel: float = 0.5
    map_voxel: float = 0.5
    local_map_window: int = 20
    covariance_k: int = 20
    covariance_epsilon: float = 1e-3
    matcher: MatcherConfig = field(default_factory=MatcherConfig)


@dataclass
class FrameStatus:
    frame_id: int
    converged: bool
    iterations: int
    error: str | None = None


def _prepare_frame(frame: PointCloud, cfg: PipelineConfig) -> PointCloud:
    down = voxel_downsample(frame, cfg.frame_voxel)
    k = min(cfg.covariance_k, len(down))
    if k < 4:
        raise ParameterError(f"frame too sparse after downsampling ({len(down)} points)")
    return estimate_covariances(down, k=k, epsilon=cfg.covariance_epsilon)


def _align_or_predict(source, index, prediction, cfg):
    """Align with the prediction as seed; fall back to the prediction itself."""
    try:
        result = gauss_newton_align(source, index, prediction, cfg.matcher)
        return result.pose, result.converged, result.iterations, None
    except (DivergenceError, DegenerateLinearizationError, SmvslabError) as exc:
        return prediction, False, 0, type(exc).__name__


def odometry_run(dataset: FrameDataset, cfg: PipelineConfig | None = None):
    """KISS-ICP-style odometry against a sliding local map.

    The first frame defines the world origin. Each frame is downsampled,
    seeded with a constant-velocity prediction and aligned against the
    voxel-deduplicated union of the last `local_map_window` registered
    frames. Failed alignments keep the prediction and the run continues.
    """
    cfg = cfg or PipelineConfig()
    if len(dataset) < 1:
        raise ParameterError("dataset must contain at least one frame")

    poses: list[PoseSE3] = []
    statuses: list[FrameStatus] = []
    recent = deque(maxlen=cfg.local_map_window)
    map_index = None
    last_delta = PoseSE3.identity()

    for i, frame in enumerate(dataset.frames):
        source = _prepare_frame(frame, cfg)
        if i == 0:
            pose = PoseSE3.identity()
            converged, iterations, err = True, 0, None
        else:
            prediction = poses[-1].compose(last_delta)
            pose, converged, iterations, err = _align_or_predict(
                source, map_index, prediction, cfg
            )
            last_delta = poses[-1].inverse().compose(pose)
        poses.append(pose)
        statuses.append(FrameStatus(i, converged, iterations, err))

        # Local map: voxel-deduplicated union of the registered frames with
        # covariances re-estimated from map-local neighborhoods (per-frame
        # covariances are markedly worse normals near voxel boundaries).
        recent.append(PointCloud(pose.apply(source.points)))
        merged = voxel_dedup(
            PointCloud(np.concatenate([c.points for c in recent], axis=0)),
            cfg.map_voxel,
        )
        k = min(cfg.covariance_k, len(merged))
        map_cloud = estimate_covariances(merged, k=k, epsilon=cfg.covariance_epsilon)
        map_index = SpatialIndex(map_cloud)

    return Trajectory(dataset.timestamps, poses), statuses


def priormap_localize(
    dataset: FrameDataset,
    prior_map: PointCloud,
    init: PoseSE3 | None = None,
    cfg: PipelineConfig | None = None,
):
    """Localize every frame against a static prior map.

    Each frame is seeded with the previous frame's estimate (the init for
    the first frame); failures keep the seed and are recorded.
    """
    cfg = cfg or PipelineConfig()
    if len(dataset) < 1:
        raise ParameterError("dataset must contain at least one frame")
    if len(prior_map) == 0:
        raise ParameterError("prior map is empty")
    init = init or PoseSE3.identity()

    map_down = voxel_downsample(prior_map, cfg.map_voxel)
    k = min(cfg.covariance_k, len(map_down))
    map_cloud = estimate_covariances(map_down, k=k, epsilon=cfg.covariance_epsilon)
    map_index = SpatialIndex(map_cloud)

    poses: list[PoseSE3] = []
    statuses: list[FrameStatus] = []
    seed = init
    for i, frame in enumerate(dataset.frames):
        source = _prepare_frame(frame, cfg)
        pose, converged, iterations, err = _align_or_predict(
            source, map_index, seed, cfg
        )
        poses.append(pose)
        statuses.append(FrameStatus(i, converged, iterations, err))
        seed = pose

    return Trajectory(dataset.timestamps, poses), statuses


def build_prior_map(dataset: FrameDataset, trajectory: Trajectory, voxel: float = 0.5) -> PointCloud:
    """Union of frames registered at the given poses, voxel-deduplicated."""
    if len(dataset) != len(trajectory):
        raise ParameterError("dataset and trajectory lengths differ")
    chunks = [
        pose.apply(frame.points)
        for frame, pose in zip(dataset.frames, trajectory.poses)
    ]
    return voxel_downsample(PointCloud(np.concatenate(chunks, axis=0)), voxel)
