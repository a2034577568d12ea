"""Trajectory error metrics (APE, RPE) and SMVS-vs-error bucket tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .trajectory import Trajectory


@dataclass
class ApeStats:
    rmse: float
    mean: float
    std: float
    max: float
    rot_rmse_deg: float
    rot_mean_deg: float
    rot_max_deg: float
    count: int


@dataclass
class RpeStats:
    max: float
    mean: float
    rot_max_deg: float
    rot_mean_deg: float
    delta: int
    count: int


def _associate(est: Trajectory, ref: Trajectory, tol: float = 1e-6):
    """Match poses by timestamp within tol, truncated to the shorter run."""
    pairs = []
    j = 0
    for i, t in enumerate(est.timestamps):
        while j < len(ref) and ref.timestamps[j] < t - tol:
            j += 1
        if j < len(ref) and abs(ref.timestamps[j] - t) <= tol:
            pairs.append((i, j))
    return pairs


def _stats(values: np.ndarray):
    rmse = float(np.sqrt(np.mean(values ** 2)))
    return rmse, float(values.mean()), float(values.std()), float(values.max())


def ape(
    est: Trajectory,
    ref: Trajectory,
    align_first_pose: bool = True,
    association: str = "timestamp",
) -> ApeStats:
    """Absolute pose error between two trajectories.

    With align_first_pose the estimate is rigidly moved so its first
    associated pose coincides with the reference one. association
    "nearest" instead scores each estimated position against the nearest
    reference position regardless of time.
    """
    if association == "timestamp":
        pairs = _associate(est, ref)
        if not pairs:
            raise ParameterError("no timestamp associations between trajectories")
        est_poses = [est.poses[i] for i, _ in pairs]
        ref_poses = [ref.poses[j] for _, j in pairs]
    elif association == "nearest":
        ref_pos = ref.positions()
        est_poses = list(est.poses)
        idx = [
            int(np.argmin(np.linalg.norm(ref_pos - p.translation, axis=1)))
            for p in est_poses
        ]
        ref_poses = [ref.poses[j] for j in idx]
    else:
        raise ParameterError(f"unknown association mode {association!r}")

    if align_first_pose:
        correction = ref_poses[0].compose(est_poses[0].inverse())
        est_poses = [correction.compose(p) for p in est_poses]

    trans = np.array(
        [
            np.linalg.norm(e.translation - r.translation)
            for e, r in zip(est_poses, ref_poses)
        ]
    )
    rot = np.array(
        [math.degrees(e.rotation_angle_to(r)) for e, r in zip(est_poses, ref_poses)]
    )
    t_rmse, t_mean, t_std, t_max = _stats(trans)
    r_rmse, r_mean, _, r_max = _stats(rot)
    return ApeStats(
        rmse=t_rmse,
        mean=t_mean,
        std=t_std,
        max=t_max,
        rot_rmse_deg=r_rmse,
        rot_mean_deg=r_mean,
        rot_max_deg=r_max,
        count=len(trans),
    )


def rpe(est: Trajectory, ref: Trajectory, delta: int = 1) -> RpeStats:
    """Relative pose error over a fixed frame delta."""
    n = min(len(est), len(ref))
    if n < delta + 1:
        raise ParameterError(f"trajectories too short for delta={delta}")
    trans, rot = [], []
    for i in range(n - delta):
        rel_est = est.poses[i].inverse().compose(est.poses[i + delta])
        rel_ref = ref.poses[i].inverse().compose(ref.poses[i + delta])
        err = rel_ref.inverse().compose(rel_est)
        trans.append(np.linalg.norm(err.translation))
        rot.append(math.degrees(rel_est.rotation_angle_to(rel_ref)))
    trans = np.asarray(trans)
    rot = np.asarray(rot)
    return RpeStats(
        max=float(trans.max()),
        mean=float(trans.mean()),
        rot_max_deg=float(rot.max()),
        rot_mean_deg=float(rot.mean()),
        delta=delta,
        count=len(trans),
    )


DEFAULT_BUCKET_EDGES = (-10000.0, -6000.0, -3000.0, -1000.0)


@dataclass
class RunRecord:
    smvs: float
    model: str
    ape: ApeStats


@dataclass
class BucketCell:
    mean_m: float
    std_m: float
    mean_deg: float
    std_deg: float
    count: int


@dataclass
class BucketTable:
    edges: tuple[float, ...]
    cells: dict = field(default_factory=dict)   # (bucket index, model) -> BucketCell

    def bucket_label(self, idx: int) -> str:
        if idx == 0:
            return f"S < {self.edges[1]:g}"
        if idx == len(self.edges) - 1:
            return f"{self.edges[-1]:g} < S"
        return f"{self.edges[idx]:g} < S < {self.edges[idx + 1]:g}"

    @property
    def num_buckets(self) -> int:
        return len(self.edges)

    def total_runs(self) -> int:
        return sum(c.count for c in self.cells.values())

    def save_csv(self, path, models=None):
        models = models or sorted({m for _, m in self.cells})
        with open(path, "w") as f:
            f.write("bucket," + ",".join(
                f"{m}_mean_m,{m}_std_m,{m}_mean_deg,{m}_std_deg,{m}_count" for m in models
            ) + "\n")
            for b in range(self.num_buckets):
                row = [self.bucket_label(b)]
                for m in models:
                    cell = self.cells.get((b, m))
                    if cell is None:
                        row += ["n/a"] * 5
                    else:
                        row += [
                            f"{cell.mean_m!r}",
                            f"{cell.std_m!r}",
                            f"{cell.mean_deg!r}",
                            f"{cell.std_deg!r}",
                            str(cell.count),
                        ]
                f.write(",".join(row) + "\n")


def bucket_index(smvs: float, edges) -> int:
    """Bucket 0 holds everything below edges[1]; the last bucket is open above."""
    idx = 0
    for b in range(1, len(edges)):
        if smvs > edges[b]:
            idx = b
    return idx


def bucket_report(runs: list[RunRecord], edges=DEFAULT_BUCKET_EDGES) -> BucketTable:
    """Group runs by SMVS bucket and attack model; mean +- std per cell."""
    edges = tuple(edges)
    table = BucketTable(edges=edges)
    groups: dict[tuple[int, str], list[RunRecord]] = {}
    for run in runs:
        groups.setdefault((bucket_index(run.smvs, edges), run.model), []).append(run)
    for key, members in groups.items():
        m = np.array([r.ape.rmse for r in members])
        d = np.array([r.ape.rot_rmse_deg for r in members])
        table.cells[key] = BucketCell(
            mean_m=float(m.mean()),
            std_m=float(m.std()),
            mean_deg=float(d.mean()),
            std_deg=float(d.std()),
            count=len(members),
        )
    return table
