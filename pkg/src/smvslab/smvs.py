"""Scan Matching Vulnerability Score: point-wise importances, azimuth-region
histograms and the frame-wise aggregate, over single frames or whole runs.

Point-wise importance is I = |x_min_global . x_max_local| where
x_min_global is the eigenvector of the smallest eigenvalue of the global
6x6 matching Hessian and x_max_local the largest-eigenvalue eigenvector
of the point's local Hessian. The frame-wise score sums azimuth-region
importance mass weighted by f(d_k) = -d_k + d_th with circular region
distance d_k.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

from .datasets import FrameDataset
from .errors import AnalysisError, DegenerateLinearizationError, ParameterError
from .geometry import (
    AzimuthBinning,
    PointCloud,
    SpatialIndex,
    azimuth_bins,
    estimate_covariances,
)
from .matching import linearize
from .se3 import PoseSE3
from .trajectory import Trajectory


@dataclass(frozen=True)
class CloneParams:
    sigma: float = 0.01
    keep_ratio: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ParameterError("noise sigma must be >= 0")
        if not (0 < self.keep_ratio <= 1):
            raise ParameterError("keep_ratio must be in (0, 1]")


@dataclass
class ImportanceCloud:
    importance: np.ndarray          # (N,), values in [0, 1]
    lambda_min_global: float
    x_min_global: np.ndarray        # (6,)
    local_max_eigvecs: np.ndarray   # (N, 6)
    matched: np.ndarray             # (N,) bool
    degenerate_spectrum: bool


@dataclass
class RegionHistogram:
    scores: np.ndarray              # (n,)
    k_center: int


@dataclass
class FrameSmvs:
    value: float
    k_center: int
    d_th: int


@dataclass
class SmvsFrameEntry:
    frame_id: int
    timestamp: float
    smvs: FrameSmvs
    histogram: RegionHistogram
    pose: PoseSE3
    degenerate_spectrum: bool


@dataclass
class SmvsProfile:
    entries: list[SmvsFrameEntry]
    skipped: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def values(self) -> np.ndarray:
        return np.array([e.smvs.value for e in self.entries])

    def save_csv(self, path):
        with open(path, "w") as f:
            f.write("frame_id,timestamp,smvs,k_center,tx,ty,tz,qx,qy,qz,qw\n")
            for e in self.entries:
                tx, ty, tz = (float(v) for v in e.pose.translation)
                qx, qy, qz, qw = (float(v) for v in e.pose.quat)
                f.write(
                    f"{e.frame_id},{e.timestamp!r},{e.smvs.value!r},{e.smvs.k_center},"
                    f"{tx!r},{ty!r},{tz!r},{qx!r},{qy!r},{qz!r},{qw!r}\n"
                )


@dataclass(frozen=True)
class SmvsConfig:
    binning: AzimuthBinning = field(default_factory=AzimuthBinning)
    d_th: int = 8
    clone_sigma: float = 0.01
    keep_ratio: float = 0.9
    seed: int = 0
    covariance_k: int = 20
    covariance_epsilon: float = 1e-3
    max_corr_dist: float = 2.0
    threads: int = 1


def perturbed_clones(frame: PointCloud, params: CloneParams):
    """Two independently subsampled and jittered copies of a frame.

    Each clone keeps round(keep_ratio * N) points (original order) and adds
    i.i.d. Gaussian noise per axis; sub-seeds are spawned from params.seed
    so the same seed always yields bitwise-identical clones.
    """
    n = len(frame)
    if n == 0:
        raise ParameterError("frame is empty")
    keep = int(round(params.keep_ratio * n))
    keep = max(keep, 1)
    children = np.random.SeedSequence(params.seed).spawn(2)
    clones = []
    for child in children:
        rng = np.random.Generator(np.random.PCG64(child))
        idx = np.sort(rng.choice(n, size=keep, replace=False))
        pts = frame.points[idx] + rng.normal(0.0, params.sigma, size=(keep, 3))
        clones.append(PointCloud(pts))
    return clones[0], clones[1]


def _sign_normalize(vec: np.ndarray) -> np.ndarray:
    """Make the first nonzero component positive."""
    for v in vec:
        if v != 0.0:
            return vec if v > 0 else -vec
    return vec


def pointwise_smvs(
    source: PointCloud,
    target: PointCloud,
    max_corr_dist: float = 2.0,
) -> ImportanceCloud:
    """Per-point importance of the source cloud against the target.

    Linearizes once at the identity pose, eigendecomposes the global
    Hessian for its weakest direction and every local Hessian for its
    strongest one. Unmatched points get importance 0.
    """
    try:
        system = linearize(
            source, SpatialIndex(target), PoseSE3.identity(), max_corr_dist
        )
    except DegenerateLinearizationError as exc:
        raise AnalysisError(str(exc)) from exc

    eigvals, eigvecs = np.linalg.eigh(system.h_global)
    lam_min = float(eigvals[0])
    scale = max(abs(float(eigvals[-1])), 1e-300)
    degenerate = bool((eigvals[1] - eigvals[0]) / scale < 1e-6)
    x_min = _sign_normalize(eigvecs[:, 0].copy())

    matched = system.correspondences >= 0
    local_vecs = np.zeros((len(source), 6))
    if matched.any():
        _, vecs = np.linalg.eigh(system.local_hessians[matched])
        local_vecs[matched] = vecs[:, :, -1]

    importance = np.abs(local_vecs @ x_min)
    importance[~matched] = 0.0
    importance = np.clip(importance, 0.0, 1.0)

    return ImportanceCloud(
        importance=importance,
        lambda_min_global=lam_min,
        x_min_global=x_min,
        local_max_eigvecs=local_vecs,
        matched=matched,
        degenerate_spectrum=degenerate,
    )


def circular_distance(k: int, k_center: int, n: int) -> int:
    delta = abs(k_center - k)
    return min(delta, n - delta)


def framewise_smvs(
    imp: ImportanceCloud,
    frame: PointCloud,
    binning: AzimuthBinning | None = None,
    d_th: int = 8,
):
    """Aggregate point importances into a region histogram and frame score.

    Returns (FrameSmvs, RegionHistogram). Points on the z-axis cannot be
    binned and are dropped; if none remain the frame is unanalyzable.
    """
    binning = binning or AzimuthBinning()
    if d_th > binning.n // 2:
        raise ParameterError(f"d_th={d_th} exceeds n/2={binning.n // 2}")
    bins, valid = azimuth_bins(frame.points, binning)
    if not valid.any():
        raise AnalysisError("all points lie on the z-axis; no azimuths defined")

    scores = np.bincount(
        bins[valid], weights=imp.importance[valid], minlength=binning.n
    ).astype(np.float64)
    k_center = int(np.argmax(scores))
    ks = np.arange(binning.n)
    delta = np.abs(ks - k_center)
    d = np.minimum(delta, binning.n - delta)
    value = float(np.sum(scores * (d_th - d)))
    return FrameSmvs(value=value, k_center=k_center, d_th=d_th), RegionHistogram(
        scores=scores, k_center=k_center
    )


def frame_seed(global_seed: int, frame_id: int) -> int:
    """Deterministic per-frame sub-seed."""
    return int(np.random.SeedSequence([global_seed, frame_id]).generate_state(1)[0])


def analyze_frame(frame: PointCloud, frame_id: int, cfg: SmvsConfig):
    params = CloneParams(
        sigma=cfg.clone_sigma,
        keep_ratio=cfg.keep_ratio,
        seed=frame_seed(cfg.seed, frame_id),
    )
    source, target = perturbed_clones(frame, params)
    k = min(cfg.covariance_k, len(source), len(target))
    if k < 4:
        raise AnalysisError(f"frame {frame_id} too sparse for covariance estimation")
    source = estimate_covariances(source, k=k, epsilon=cfg.covariance_epsilon)
    target = estimate_covariances(target, k=k, epsilon=cfg.covariance_epsilon)
    imp = pointwise_smvs(source, target, cfg.max_corr_dist)
    smvs, hist = framewise_smvs(imp, source, cfg.binning, cfg.d_th)
    return smvs, hist, imp


def trajectory_smvs(
    dataset: FrameDataset,
    benign_trajectory: Trajectory,
    cfg: SmvsConfig | None = None,
) -> SmvsProfile:
    """Frame-wise SMVS along a benign run; deterministic given cfg.seed.

    Frames whose analysis fails are skipped and recorded as gaps. Frames
    are independent, so analysis fans out over cfg.threads with results
    merged in frame order.
    """
    cfg = cfg or SmvsConfig()
    if len(dataset) != len(benign_trajectory):
        raise ParameterError("dataset and trajectory lengths differ")

    def work(i):
        return analyze_frame(dataset.frames[i], i, cfg)

    results: dict[int, object] = {}
    if cfg.threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futures = {pool.submit(work, i): i for i in range(len(dataset))}
            for fut, i in futures.items():
                try:
                    results[i] = fut.result()
                except AnalysisError as exc:
                    results[i] = exc
    else:
        for i in range(len(dataset)):
            try:
                results[i] = work(i)
            except AnalysisError as exc:
                results[i] = exc

    entries = []
    skipped = []
    for i in range(len(dataset)):
        res = results[i]
        if isinstance(res, AnalysisError):
            skipped.append((i, str(res)))
            continue
        smvs, hist, imp = res
        entries.append(
            SmvsFrameEntry(
                frame_id=i,
                timestamp=float(dataset.timestamps[i]),
                smvs=smvs,
                histogram=hist,
                pose=benign_trajectory.poses[i],
                degenerate_spectrum=imp.degenerate_spectrum,
            )
        )
    return SmvsProfile(entries=entries, skipped=skipped)


def load_profile_csv(path) -> SmvsProfile:
    entries = []
    with open(path, "r") as f:
        header = f.readline()
        for line in f:
            parts = line.strip().split(",")
            if len(parts) != 11:
                continue
            frame_id = int(parts[0])
            timestamp = float(parts[1])
            value = float(parts[2])
            k_center = int(parts[3])
            t = [float(v) for v in parts[4:7]]
            q = [float(v) for v in parts[7:11]]
            entries.append(
                SmvsFrameEntry(
                    frame_id=frame_id,
                    timestamp=timestamp,
                    smvs=FrameSmvs(value=value, k_center=k_center, d_th=-1),
                    histogram=RegionHistogram(scores=np.zeros(0), k_center=k_center),
                    pose=PoseSE3(q, t),
                    degenerate_spectrum=False,
                )
            )
    return SmvsProfile(entries=entries)
