"""Spoofer placement from an SMVS profile: half-line casting, forward
intersections, 2-sigma outlier rejection and the perpendicular placement
line through the bounding-box center."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFitError, ParameterError
from .geometry import AzimuthBinning, bin_center_angle
from .smvs import SmvsProfile


@dataclass(frozen=True)
class HalfLine2D:
    origin: tuple[float, float]
    direction: tuple[float, float]

    def __post_init__(self):
        norm = math.hypot(*self.direction)
        if abs(norm - 1.0) > 1e-12:
            raise ParameterError("direction must be a unit vector")


@dataclass
class PlacementResult:
    kept_points: np.ndarray             # (M, 2)
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    center: np.ndarray                  # (C_x, C_y)
    trajectory_point: np.ndarray        # point on the fitted trajectory line
    trajectory_direction: np.ndarray    # unit
    placement_direction: np.ndarray     # unit, perpendicular to trajectory
    line_intersection: np.ndarray       # center projected onto the trajectory
    standoff: float
    recommended: np.ndarray             # (2, 2), the two candidate positions


def top_frames(profile: SmvsProfile, top_m: int):
    """Frames with the highest frame-wise SMVS; ties go to earlier frames."""
    entries = sorted(
        profile.entries, key=lambda e: (-e.smvs.value, e.frame_id)
    )
    return entries[: min(top_m, len(entries))]


def critical_directions(
    profile: SmvsProfile,
    top_m: int = 10,
    binning: AzimuthBinning | None = None,
) -> list[HalfLine2D]:
    """One half-line per top frame, from its world position toward the
    world-frame azimuth of the peak-score region's bin center."""
    binning = binning or AzimuthBinning()
    if len(profile) < 2:
        raise ParameterError("need a profile with at least 2 frames")
    if top_m < 2:
        raise ParameterError("top_m must be >= 2")
    lines = []
    for entry in top_frames(profile, top_m):
        local = bin_center_angle(entry.smvs.k_center, binning)
        world = entry.pose.yaw() + local
        origin = (float(entry.pose.translation[0]), float(entry.pose.translation[1]))
        lines.append(
            HalfLine2D(origin=origin, direction=(math.cos(world), math.sin(world)))
        )
    return lines


def intersect_halflines(lines: list[HalfLine2D]) -> np.ndarray:
    """All pairwise intersections lying forward of both origins."""
    if len(lines) < 2:
        raise ParameterError("need at least 2 half-lines")
    points = []
    for a in range(len(lines)):
        for b in range(a + 1, len(lines)):
            o1 = np.asarray(lines[a].origin)
            d1 = np.asarray(lines[a].direction)
            o2 = np.asarray(lines[b].origin)
            d2 = np.asarray(lines[b].direction)
            cross = d1[0] * d2[1] - d1[1] * d2[0]
            if abs(cross) < 1e-9:
                continue
            diff = o2 - o1
            t1 = (diff[0] * d2[1] - diff[1] * d2[0]) / cross
            t2 = (diff[0] * d1[1] - diff[1] * d1[0]) / cross
            if t1 >= 0 and t2 >= 0:
                points.append(o1 + t1 * d1)
    return np.asarray(points, dtype=np.float64).reshape(-1, 2)


def filter_outliers(points) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Keep points within +-2 sigma of the per-axis mean.

    Returns (kept, bbox_min, bbox_max, center). A zero-sigma axis keeps
    everything on that axis.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 1:
        raise ParameterError("need at least 1 intersection point")
    mu = pts.mean(axis=0)
    sigma = pts.std(axis=0)
    keep = np.ones(len(pts), dtype=bool)
    for axis in range(2):
        if sigma[axis] > 0:
            keep &= np.abs(pts[:, axis] - mu[axis]) <= 2.0 * sigma[axis]
    kept = pts[keep]
    bbox_min = kept.min(axis=0)
    bbox_max = kept.max(axis=0)
    center = 0.5 * (bbox_min + bbox_max)
    return kept, bbox_min, bbox_max, center


def fit_direction(points) -> tuple[np.ndarray, np.ndarray]:
    """Total-least-squares line through 2D points: (mean, unit direction)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered
    if np.linalg.norm(cov) < 1e-18:
        raise DegenerateFitError("all positions coincide; cannot fit a line")
    w, v = np.linalg.eigh(cov)
    direction = v[:, -1]
    if direction[0] < 0 or (direction[0] == 0 and direction[1] < 0):
        direction = -direction
    return mean, direction


def placement_line(
    center,
    profile: SmvsProfile,
    top_m: int = 10,
    standoff: float = 12.5,
    standoff_bounds: tuple[float, float] = (10.0, 15.0),
    kept_points=None,
    bbox=None,
) -> PlacementResult:
    """Placement line through the center, perpendicular to the trajectory
    fitted over the top-m frames; two recommended positions at the clamped
    standoff on either side."""
    entries = top_frames(profile, top_m)
    if len(entries) < 2:
        raise ParameterError("need at least 2 frames for the trajectory fit")
    positions = np.array([e.pose.translation[:2] for e in entries])
    traj_point, traj_dir = fit_direction(positions)

    center = np.asarray(center, dtype=np.float64).reshape(2)
    perp = np.array([-traj_dir[1], traj_dir[0]])
    # Project the bounding-box center onto the fitted trajectory line.
    along = (center - traj_point) @ traj_dir
    intersection = traj_point + along * traj_dir

    s = float(np.clip(standoff, standoff_bounds[0], standoff_bounds[1]))
    recommended = np.stack([intersection + s * perp, intersection - s * perp])

    kept = (
        np.asarray(kept_points, dtype=np.float64).reshape(-1, 2)
        if kept_points is not None
        else np.empty((0, 2))
    )
    if bbox is not None:
        bbox_min, bbox_max = (np.asarray(b, dtype=np.float64) for b in bbox)
    elif len(kept):
        bbox_min, bbox_max = kept.min(axis=0), kept.max(axis=0)
    else:
        bbox_min = bbox_max = center.copy()

    return PlacementResult(
        kept_points=kept,
        bbox_min=bbox_min,
        bbox_max=bbox_max,
        center=center,
        trajectory_point=traj_point,
        trajectory_direction=traj_dir,
        placement_direction=perp,
        line_intersection=intersection,
        standoff=s,
        recommended=recommended,
    )


def optimize_placement(
    profile: SmvsProfile,
    top_m: int = 10,
    standoff: float = 12.5,
    binning: AzimuthBinning | None = None,
) -> PlacementResult:
    """Full placement chain: directions -> intersections -> filter -> line."""
    lines = critical_directions(profile, top_m, binning)
    points = intersect_halflines(lines)
    if len(points) == 0:
        # No forward crossings: fall back to the half-line origins' spread
        # so a placement still exists for near-parallel direction sets.
        points = np.array([l.origin for l in lines]) + standoff * np.array(
            [l.direction for l in lines]
        )
    kept, bbox_min, bbox_max, center = filter_outliers(points)
    return placement_line(
        center,
        profile,
        top_m=top_m,
        standoff=standoff,
        kept_points=kept,
        bbox=(bbox_min, bbox_max),
    )


def choose_recommended(result: PlacementResult, profile: SmvsProfile, top_m: int = 10) -> np.ndarray:
    """Pick the candidate on the same side as the intersection cluster."""
    side = (result.center - result.line_intersection) @ result.placement_direction
    return result.recommended[0] if side >= 0 else result.recommended[1]


def save_placement(result: PlacementResult, path, csv_path=None):
    with open(path, "w") as f:
        f.write(f"center_x={float(result.center[0])!r}\n")
        f.write(f"center_y={float(result.center[1])!r}\n")
        f.write(f"bbox_min_x={float(result.bbox_min[0])!r}\n")
        f.write(f"bbox_min_y={float(result.bbox_min[1])!r}\n")
        f.write(f"bbox_max_x={float(result.bbox_max[0])!r}\n")
        f.write(f"bbox_max_y={float(result.bbox_max[1])!r}\n")
        f.write(f"trajectory_dir_x={float(result.trajectory_direction[0])!r}\n")
        f.write(f"trajectory_dir_y={float(result.trajectory_direction[1])!r}\n")
        f.write(f"placement_dir_x={float(result.placement_direction[0])!r}\n")
        f.write(f"placement_dir_y={float(result.placement_direction[1])!r}\n")
        f.write(f"standoff={float(result.standoff)!r}\n")
        f.write(f"recommended_a_x={float(result.recommended[0][0])!r}\n")
        f.write(f"recommended_a_y={float(result.recommended[0][1])!r}\n")
        f.write(f"recommended_b_x={float(result.recommended[1][0])!r}\n")
        f.write(f"recommended_b_y={float(result.recommended[1][1])!r}\n")
    if csv_path is not None:
        with open(csv_path, "w") as f:
            f.write("x,y\n")
            for p in result.kept_points:
                f.write(f"{float(p[0])!r},{float(p[1])!r}\n")
