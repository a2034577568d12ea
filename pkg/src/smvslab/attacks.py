"""Spoofing attack models: HFR removal (with or without salt-and-pepper
noise) and wall injection, applied through a geometric azimuth window."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datasets import FrameDataset
from .errors import ParameterError
from .geometry import PointCloud
from .se3 import PoseSE3
from .simulate import SensorModel
from .trajectory import Trajectory

REMOVAL_NO_NOISE = "removal_no_noise"
REMOVAL_NOISE = "removal_noise"
INJECTION = "injection"
ATTACK_MODELS = (REMOVAL_NO_NOISE, REMOVAL_NOISE, INJECTION)

DEFAULT_HALF_WIDTH = math.radians(40.0)


@dataclass(frozen=True)
class AzimuthWindow:
    center: float                       # radians, sensor frame
    half_width: float = DEFAULT_HALF_WIDTH

    def __post_init__(self):
        if not (0 < self.half_width <= math.pi):
            raise ParameterError("half_width must be in (0, pi]")

    def contains(self, azimuths) -> np.ndarray:
        """Membership across the +-pi wrap."""
        diff = np.arctan2(
            np.sin(np.asarray(azimuths) - self.center),
            np.cos(np.asarray(azimuths) - self.center),
        )
        return np.abs(diff) <= self.half_width


@dataclass(frozen=True)
class AttackSpec:
    model: str = REMOVAL_NOISE
    wall_distance: float = 5.0
    layers: int = 10
    noise_range: tuple[float, float] = (1.0, 50.0)
    half_width: float = DEFAULT_HALF_WIDTH
    seed: int = 0

    def __post_init__(self):
        if self.model not in ATTACK_MODELS:
            raise ParameterError(f"unknown attack model {self.model!r}")
        if self.wall_distance <= 0:
            raise ParameterError("wall distance must be > 0")
        if self.layers < 1:
            raise ParameterError("need at least 1 injectable layer")
        if not self.noise_range[0] < self.noise_range[1]:
            raise ParameterError("noise range must satisfy r_min < r_max")


@dataclass(frozen=True)
class SpooferState:
    position: tuple[float, float]       # world ground plane, meters
    height: float = 1.0
    max_range: float = 50.0

    def __post_init__(self):
        if self.max_range <= 0:
            raise ParameterError("max effective range must be > 0")


def spoof_window(
    victim_pose: PoseSE3,
    spoofer: SpooferState,
    half_width: float = DEFAULT_HALF_WIDTH,
) -> AzimuthWindow | None:
    """Window seen by the victim sensor, or None when out of range."""
    world = np.array([spoofer.position[0], spoofer.position[1], spoofer.height])
    local = victim_pose.inverse().apply(world.reshape(1, 3))[0]
    planar = math.hypot(local[0], local[1])
    if planar > spoofer.max_range:
        return None
    return AzimuthWindow(center=math.atan2(local[1], local[0]), half_width=half_width)


def _planar(points: np.ndarray):
    azim = np.arctan2(points[:, 1], points[:, 0])
    rng = np.hypot(points[:, 0], points[:, 1])
    return azim, rng


def apply_removal(
    frame: PointCloud,
    window: AzimuthWindow,
    with_noise: bool,
    spec: AttackSpec,
    sensor: SensorModel | None = None,
    rng: np.random.Generator | None = None,
) -> PointCloud:
    """Delete in-window points; optionally replace them one-for-one with
    salt-and-pepper noise (uniform azimuth/elevation/range)."""
    sensor = sensor or SensorModel()
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(spec.seed))
    azim, _ = _planar(frame.points)
    inside = window.contains(azim)
    kept = frame.points[~inside]
    if not with_noise:
        return PointCloud(kept)
    count = int(np.count_nonzero(inside))
    theta = window.center + rng.uniform(-window.half_width, window.half_width, count)
    vfov = math.radians(sensor.vertical_fov_deg) / 2.0
    phi = rng.uniform(-vfov, vfov, count)
    r = rng.uniform(spec.noise_range[0], spec.noise_range[1], count)
    noise = np.column_stack(
        (r * np.cos(phi) * np.cos(theta), r * np.cos(phi) * np.sin(theta), r * np.sin(phi))
    )
    return PointCloud(np.concatenate([kept, noise], axis=0))


def apply_injection(
    frame: PointCloud,
    window: AzimuthWindow,
    spec: AttackSpec,
    sensor: SensorModel | None = None,
) -> PointCloud:
    """Inject a wall arc at fixed planar range across the window.

    The wall occludes original in-window points farther than the wall;
    nearer points survive. The arc is sampled at the sensor's horizontal
    resolution on min(layers, rings) rings centered on the horizon.
    """
    sensor = sensor or SensorModel()
    if spec.wall_distance >= sensor.max_range:
        raise ParameterError("wall distance must be below the sensor max range")

    azim, planar = _planar(frame.points)
    inside = window.contains(azim)
    occluded = inside & (planar > spec.wall_distance)
    kept = frame.points[~occluded]

    res = math.radians(sensor.horizontal_resolution_deg)
    steps = int(round(2.0 * window.half_width / res))
    steps = max(steps, 1)
    theta = window.center - window.half_width + (np.arange(steps) + 0.5) * res

    elev = sensor.ring_elevations()
    order = np.argsort(np.abs(elev), kind="stable")
    rings = np.sort(elev[order[: min(spec.layers, len(elev))]])

    d = spec.wall_distance
    tt, pp = np.meshgrid(theta, rings, indexing="ij")
    wall = np.column_stack(
        (
            d * np.cos(tt).ravel(),
            d * np.sin(tt).ravel(),
            d * np.tan(pp).ravel(),
        )
    )
    # Cylindrical wall points can exceed the spherical max range at steep
    # elevations; the sensor would not report those.
    norm = np.linalg.norm(wall, axis=1)
    wall = wall[norm <= sensor.max_range]
    return PointCloud(np.concatenate([kept, wall], axis=0))


def apply_attack(
    frame: PointCloud,
    window: AzimuthWindow,
    spec: AttackSpec,
    sensor: SensorModel | None = None,
    rng: np.random.Generator | None = None,
) -> PointCloud:
    if spec.model == REMOVAL_NO_NOISE:
        return apply_removal(frame, window, False, spec, sensor, rng)
    if spec.model == REMOVAL_NOISE:
        return apply_removal(frame, window, True, spec, sensor, rng)
    return apply_injection(frame, window, spec, sensor)


def attack_dataset(
    dataset: FrameDataset,
    ground_truth: Trajectory,
    spoofer: SpooferState,
    spec: AttackSpec,
    sensor: SensorModel | None = None,
) -> FrameDataset:
    """Apply the attack frame-by-frame, aiming at the true vehicle pose.

    Frames for which the spoofer is out of range pass through untouched.
    Per-frame noise streams are derived from (spec.seed, frame id), so the
    result is deterministic.
    """
    if len(dataset) != len(ground_truth):
        raise ParameterError("dataset and ground-truth lengths differ")
    sensor = sensor or SensorModel()
    frames = []
    for i, frame in enumerate(dataset.frames):
        window = spoof_window(ground_truth.poses[i], spoofer, spec.half_width)
        if window is None:
            frames.append(frame)
            continue
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([spec.seed, i]))
        )
        frames.append(apply_attack(frame, window, spec, sensor, rng))
    return FrameDataset(frames, list(dataset.timestamps), dataset.ground_truth)
