"""Synthetic worlds, a spinning-LiDAR sensor model and raycast dataset
generation with exact ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .datasets import FrameDataset
from .errors import ParameterError
from .geometry import PointCloud
from .se3 import PoseSE3
from .trajectory import Trajectory


@dataclass(frozen=True)
class SensorModel:
    rings: int = 32
    vertical_fov_deg: float = 30.0          # total span, symmetric about horizon
    horizontal_resolution_deg: float = 0.4
    max_range: float = 50.0
    range_noise_sigma: float = 0.0

    def __post_init__(self):
        if self.max_range <= 0:
            raise ParameterError("max range must be > 0")
        if self.horizontal_resolution_deg <= 0:
            raise ParameterError("horizontal resolution must be > 0")
        if self.rings < 1:
            raise ParameterError("need at least one ring")

    def ring_elevations(self) -> np.ndarray:
        half = math.radians(self.vertical_fov_deg) / 2.0
        if self.rings == 1:
            return np.array([0.0])
        return np.linspace(-half, half, self.rings)

    def azimuth_steps(self) -> np.ndarray:
        res = math.radians(self.horizontal_resolution_deg)
        steps = int(round(2.0 * math.pi / res))
        return -math.pi + np.arange(steps) * res

    def ray_directions(self) -> np.ndarray:
        """Unit directions for every (ring, azimuth step), sensor frame."""
        phi = self.ring_elevations()
        theta = self.azimuth_steps()
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        return np.column_stack(
            (
                (np.cos(pp) * np.cos(tt)).ravel(),
                (np.cos(pp) * np.sin(tt)).ravel(),
                np.sin(pp).ravel(),
            )
        )


@dataclass(frozen=True)
class Patch:
    """Rectangular wall patch: corner plus two edge vectors."""

    corner: tuple[float, float, float]
    edge_u: tuple[float, float, float]
    edge_v: tuple[float, float, float]

    def __post_init__(self):
        u = np.asarray(self.edge_u, dtype=np.float64)
        v = np.asarray(self.edge_v, dtype=np.float64)
        if np.linalg.norm(np.cross(u, v)) < 1e-12:
            raise ParameterError("degenerate patch: edge vectors are parallel")


@dataclass(frozen=True)
class Scene:
    patches: tuple[Patch, ...]
    ground: bool = True


@dataclass(frozen=True)
class SceneSpec:
    archetype: str = "custom"               # custom | canyon | open-wall | mixed
    length: float = 100.0
    width: float = 12.0
    wall_height: float = 5.0
    ground: bool = True
    patches: tuple[Patch, ...] = ()


def _wall_x_span(x0, x1, y, height, facing_unused=None) -> Patch:
    """Vertical wall along x at fixed y."""
    return Patch((x0, y, 0.0), (x1 - x0, 0.0, 0.0), (0.0, 0.0, height))


def _wall_y_span(y0, y1, x, height) -> Patch:
    """Vertical wall along y at fixed x."""
    return Patch((x, y0, 0.0), (0.0, y1 - y0, 0.0), (0.0, 0.0, height))


def canyon_patches(length, width, height, x0=0.0) -> list[Patch]:
    half = width / 2.0
    return [
        _wall_x_span(x0, x0 + length, -half, height),
        _wall_x_span(x0, x0 + length, half, height),
    ]


def canyon_stub_patches(length, width, height, x0=0.0, spacing=8.0, depth=1.0) -> list[Patch]:
    """Short cross walls jutting inward from both canyon walls; they break
    the along-corridor degeneracy of a bare two-wall canyon."""
    half = width / 2.0
    patches = []
    x = x0 + spacing
    while x < x0 + length:
        patches.append(_wall_y_span(half - depth, half, x, height))
        patches.append(_wall_y_span(-half, -half + depth, x, height))
        x += spacing
    return patches


def staggered_stub_patches(positions, width, height, depth=1.5) -> list[Patch]:
    """Inward stubs at explicit (x, side) positions, side +1 for the left
    wall and -1 for the right. Aperiodic placement keeps the corridor from
    aliasing onto itself under a one-period registration error."""
    half = width / 2.0
    patches = []
    for x, side in positions:
        if side > 0:
            patches.append(_wall_y_span(half - depth, half, float(x), height))
        else:
            patches.append(_wall_y_span(-half, -half + depth, float(x), height))
    return patches


def open_corner_patches(x0, x1, y, height, return_depth=8.0) -> list[Patch]:
    """A dominant wall with a perpendicular return: one azimuth cluster
    that still constrains both ground-plane translations."""
    return [
        _wall_x_span(x0, x1, y, height),
        _wall_y_span(y, y + return_depth, x1, height),
    ]


def divider_patches(x, gap_half, half_width, height) -> list[Patch]:
    """Transverse wall with a central gap the vehicle drives through."""
    return [
        _wall_y_span(-half_width, -gap_half, x, height),
        _wall_y_span(gap_half, half_width, x, height),
    ]


def build_scene(spec: SceneSpec) -> Scene:
    """Deterministic scene construction from an archetype or explicit patches."""
    if spec.archetype == "custom":
        if not spec.patches:
            raise ParameterError("custom scene needs at least one patch")
        return Scene(tuple(spec.patches), ground=spec.ground)
    if spec.archetype == "canyon":
        patches = canyon_patches(spec.length, spec.width, spec.wall_height)
        return Scene(tuple(patches), ground=spec.ground)
    if spec.archetype == "open-wall":
        patches = open_corner_patches(
            0.0, spec.length, -spec.width, spec.wall_height
        )
        return Scene(tuple(patches), ground=spec.ground)
    if spec.archetype == "mixed":
        return mixed_course_scene(spec)
    raise ParameterError(f"unknown archetype {spec.archetype!r}")


MIXED_STUB_POSITIONS = (
    (-6, 1), (-3, -1), (2, 1), (7, -1), (11, 1), (16, -1), (18, 1), (23, -1),
)


def mixed_course_scene(spec: SceneSpec | None = None) -> Scene:
    """Course with a structured canyon segment followed by an open segment
    holding a single dominant corner cluster.

    The canyon spans x in [-10, 24] with aperiodic inward stubs; past it
    the only structure is an 8 m wall with a perpendicular return at
    x in [30, 38], y = -10. Scan matching is well-constrained inside the
    canyon and hangs on the single cluster in the open segment.
    """
    spec = spec or SceneSpec(archetype="mixed")
    h = spec.wall_height
    w = spec.width
    patches = []
    patches += canyon_patches(34.0, w, h, x0=-10.0)
    patches += staggered_stub_patches(MIXED_STUB_POSITIONS, w, h, depth=1.5)
    patches += open_corner_patches(30.0, 38.0, -10.0, h, return_depth=6.0)
    return Scene(tuple(patches), ground=spec.ground)


@dataclass(frozen=True)
class TrajectorySpec:
    waypoints: tuple[tuple[float, float], ...]
    speed: float = 5.0
    frame_rate: float = 10.0
    sensor_height: float = 1.5

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ParameterError("need at least 2 waypoints")
        if self.speed <= 0:
            raise ParameterError("speed must be > 0")
        if self.frame_rate <= 0:
            raise ParameterError("frame rate must be > 0")


def _polyline_poses(spec: TrajectorySpec) -> list[PoseSE3]:
    wps = np.asarray(spec.waypoints, dtype=np.float64)
    seg = np.diff(wps, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    if np.any(seg_len < 1e-12):
        raise ParameterError("repeated waypoints")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = float(cum[-1])
    step = spec.speed / spec.frame_rate
    count = int(round(total / step))
    poses = []
    for i in range(count):
        s = i * step
        j = int(np.searchsorted(cum, s, side="right")) - 1
        j = min(j, len(seg) - 1)
        frac = (s - cum[j]) / seg_len[j]
        xy = wps[j] + frac * seg[j]
        yaw = math.atan2(seg[j][1], seg[j][0])
        poses.append(
            PoseSE3.from_rpy(0.0, 0.0, yaw, (xy[0], xy[1], spec.sensor_height))
        )
    return poses


def raycast_frame(
    scene: Scene,
    pose: PoseSE3,
    sensor: SensorModel,
    seed: int | np.random.SeedSequence = 0,
) -> PointCloud:
    """One sensor sweep: nearest patch hit per ray, Gaussian range noise."""
    dirs_local = sensor.ray_directions()
    rotation = pose.rotation_matrix()
    dirs = dirs_local @ rotation.T
    origin = np.asarray(pose.translation, dtype=np.float64)

    best = np.full(len(dirs), np.inf)
    for patch in scene.patches:
        corner = np.asarray(patch.corner, dtype=np.float64)
        u = np.asarray(patch.edge_u, dtype=np.float64)
        v = np.asarray(patch.edge_v, dtype=np.float64)
        normal = np.cross(u, v)
        denom = dirs @ normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((corner - origin) @ normal) / denom
        hit = np.isfinite(t) & (t > 1e-6)
        t = np.where(hit, t, 0.0)
        q = origin + dirs * t[:, None]
        rel = q - corner
        uu, vv = u @ u, v @ v
        alpha = rel @ u / uu
        beta = rel @ v / vv
        hit &= (alpha >= 0) & (alpha <= 1) & (beta >= 0) & (beta <= 1)
        closer = hit & (t < best)
        best[closer] = t[closer]
    if scene.ground:
        dz = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -origin[2] / dz
        hit = np.isfinite(t) & (t > 1e-6)
        closer = hit & (t < best)
        best[closer] = t[closer]

    returned = best <= sensor.max_range
    ranges = best[returned]
    if sensor.range_noise_sigma > 0:
        rng = np.random.Generator(np.random.PCG64(seed))
        ranges = ranges + rng.normal(0.0, sensor.range_noise_sigma, len(ranges))
    return PointCloud(dirs_local[returned] * ranges[:, None])


def generate_dataset(
    scene: Scene,
    traj: TrajectorySpec,
    sensor: SensorModel,
    seed: int = 0,
) -> FrameDataset:
    """Raycast every pose along the path; ground truth attached."""
    poses = _polyline_poses(traj)
    timestamps = [i / traj.frame_rate for i in range(len(poses))]
    frames = [
        raycast_frame(scene, pose, sensor, np.random.SeedSequence([seed, i]))
        for i, pose in enumerate(poses)
    ]
    return FrameDataset(frames, timestamps, Trajectory(timestamps, poses))
