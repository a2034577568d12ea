"""Point-cloud containers, spatial indexing, covariance estimation and azimuth binning.

Conventions: right-handed sensor frame, x forward / y left / z up, all
lengths in meters. Azimuth is the full-quadrant atan2(y, x) in (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParameterError, QueryError, UndefinedAzimuthError

TWO_PI = 2.0 * math.pi


class PointCloud:
    """Ordered set of 3D points with optional per-point 3x3 covariances.

    Arrays are frozen after construction; instances are safe to share.
    """

    __slots__ = ("points", "covariances")

    def __init__(self, points, covariances=None):
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        if not np.isfinite(pts).all():
            raise ParameterError("point coordinates must be finite")
        pts.setflags(write=False)
        self.points = pts
        if covariances is not None:
            covs = np.ascontiguousarray(
                np.asarray(covariances, dtype=np.float64).reshape(-1, 3, 3)
            )
            if len(covs) != len(pts):
                raise ParameterError(
                    f"covariance count {len(covs)} != point count {len(pts)}"
                )
            covs.setflags(write=False)
            self.covariances = covs
        else:
            self.covariances = None

    def __len__(self):
        return len(self.points)

    @property
    def has_covariances(self):
        return self.covariances is not None

    def select(self, indices) -> "PointCloud":
        """Subcloud at the given indices (covariances follow)."""
        covs = self.covariances[indices] if self.has_covariances else None
        return PointCloud(self.points[indices], covs)

    def with_covariances(self, covariances) -> "PointCloud":
        return PointCloud(self.points, covariances)

    def transformed(self, rotation, translation) -> "PointCloud":
        """Apply p -> R p + t; covariances are conjugated by R."""
        rotation = np.asarray(rotation, dtype=np.float64)
        pts = self.points @ rotation.T + np.asarray(translation, dtype=np.float64)
        covs = None
        if self.has_covariances:
            covs = np.einsum("ij,njk,lk->nil", rotation, self.covariances, rotation)
        return PointCloud(pts, covs)


@dataclass(frozen=True)
class AzimuthBinning:
    """Partition of the horizontal angle into n equal regions."""

    n: int = 72

    def __post_init__(self):
        if self.n < 4 or self.n % 2 != 0:
            raise ParameterError(f"region count must be even and >= 4, got {self.n}")

    @property
    def bin_width(self) -> float:
        return TWO_PI / self.n


class SpatialIndex:
    """Immutable kd-tree over a PointCloud; exact nearest-neighbor queries."""

    __slots__ = ("cloud", "_tree")

    def __init__(self, cloud: PointCloud):
        self.cloud = cloud
        self._tree = cKDTree(cloud.points) if len(cloud) else None

    def __len__(self):
        return len(self.cloud)

    def query(self, points, k=1):
        """Raw batched query; returns (distances, ids) arrays shaped (M, k)."""
        if self._tree is None:
            raise QueryError("query against an empty index")
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        kk = min(k, len(self.cloud))
        d, i = self._tree.query(pts, k=kk, workers=-1)
        if kk == 1:
            d = d.reshape(-1, 1)
            i = i.reshape(-1, 1)
        return d, i


def knn(index: SpatialIndex, query, k: int):
    """k nearest neighbors of a single query point.

    Returns min(k, N) pairs (point id, distance) sorted by ascending
    distance, ties broken by ascending id.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if len(index) == 0:
        raise QueryError("knn on an empty index")
    n = len(index)
    m = min(k, n)
    # Expand until the cut-off distance is strictly below the next one, so
    # id tie-breaking cannot depend on kd-tree internals.
    take = m
    while True:
        probe = min(take + 1, n)
        d, i = index.query(np.asarray(query, dtype=np.float64).reshape(1, 3), k=probe)
        d, i = d[0], i[0]
        if probe == n or d[take - 1] < d[take]:
            break
        take = min(take * 2, n)
    order = np.lexsort((i[:probe], d[:probe]))[:m]
    return [(int(i[j]), float(d[j])) for j in order]


def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """One centroid per occupied voxel; output ordered by voxel key."""
    if voxel <= 0:
        raise ParameterError(f"voxel size must be > 0, got {voxel}")
    if len(cloud) == 0:
        return PointCloud(np.empty((0, 3)))
    flat = _voxel_keys(cloud.points, voxel)
    uniq, inverse = np.unique(flat, return_inverse=True)
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inverse, cloud.points)
    counts = np.bincount(inverse, minlength=len(uniq)).astype(np.float64)
    return PointCloud(sums / counts[:, None])


def _voxel_keys(points: np.ndarray, voxel: float) -> np.ndarray:
    """Collision-free scalar voxel key per point (keys shifted to zero)."""
    keys = np.floor(points / voxel).astype(np.int64)
    keys -= keys.min(axis=0)
    dims = keys.max(axis=0) + 1
    return (keys[:, 0] * dims[1] + keys[:, 1]) * dims[2] + keys[:, 2]


def voxel_dedup(cloud: PointCloud, voxel: float) -> PointCloud:
    """Keep the first point (and covariance) per occupied voxel."""
    if voxel <= 0:
        raise ParameterError(f"voxel size must be > 0, got {voxel}")
    if len(cloud) == 0:
        return cloud
    flat = _voxel_keys(cloud.points, voxel)
    _, first = np.unique(flat, return_index=True)
    return cloud.select(np.sort(first))


def estimate_covariances(cloud: PointCloud, k: int = 20, epsilon: float = 1e-3) -> PointCloud:
    """Per-point GICP plane-to-plane covariances.

    Sample covariance over the k nearest neighbors, eigenvalues replaced
    by (1, 1, epsilon) keeping eigenvector order (smallest direction gets
    epsilon).
    """
    if k < 4:
        raise ParameterError(f"need k >= 4 neighbors, got {k}")
    if len(cloud) < k:
        raise ParameterError(f"cloud has {len(cloud)} points, need >= {k}")
    index = SpatialIndex(cloud)
    _, ids = index.query(cloud.points, k=k)
    neigh = cloud.points[ids]                       # (N, k, 3)
    mean = neigh.mean(axis=1, keepdims=True)
    centered = neigh - mean
    raw = np.einsum("nki,nkj->nij", centered, centered) / (k - 1)
    w, v = np.linalg.eigh(raw)                      # ascending eigenvalues
    target = np.array([epsilon, 1.0, 1.0])
    covs = np.einsum("nij,j,nkj->nik", v, target, v)
    return cloud.with_covariances(covs)


def raw_neighbor_covariances(cloud: PointCloud, k: int) -> np.ndarray:
    """Unregularized k-NN sample covariances (exposed for verification)."""
    if len(cloud) < k:
        raise ParameterError(f"cloud has {len(cloud)} points, need >= {k}")
    index = SpatialIndex(cloud)
    _, ids = index.query(cloud.points, k=k)
    neigh = cloud.points[ids]
    mean = neigh.mean(axis=1, keepdims=True)
    centered = neigh - mean
    return np.einsum("nki,nkj->nij", centered, centered) / (k - 1)


def azimuth(p) -> float:
    """Horizontal angle atan2(y, x) in (-pi, pi]; undefined on the z-axis."""
    x, y = float(p[0]), float(p[1])
    if x == 0.0 and y == 0.0:
        raise UndefinedAzimuthError("point lies on the z-axis")
    return math.atan2(y, x)


def azimuth_bin(p, binning: AzimuthBinning) -> int:
    """Region index k = floor((theta + pi) / bin_width) mod n."""
    theta = azimuth(p)
    return int(math.floor((theta + math.pi) / binning.bin_width)) % binning.n


def azimuth_bins(points, binning: AzimuthBinning):
    """Vectorized azimuth_bin; returns (bins, valid mask).

    z-axis points get bin -1 and valid=False instead of raising.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    valid = (pts[:, 0] != 0.0) | (pts[:, 1] != 0.0)
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    bins = np.floor((theta + math.pi) / binning.bin_width).astype(np.int64) % binning.n
    bins[~valid] = -1
    return bins, valid


def bin_center_angle(k: int, binning: AzimuthBinning) -> float:
    """Center azimuth of region k under the fixed -pi bin origin."""
    return -math.pi + (k + 0.5) * binning.bin_width


def load_xyz(path) -> PointCloud:
    """Read an ASCII "x y z" file; '#' lines are comments."""
    pts = []
    with open(path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParameterError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            try:
                xyz = [float(v) for v in parts]
            except ValueError:
                raise ParameterError(f"{path}:{lineno}: non-numeric field") from None
            if not all(math.isfinite(v) for v in xyz):
                raise ParameterError(f"{path}:{lineno}: non-finite coordinate")
            pts.append(xyz)
    return PointCloud(np.asarray(pts, dtype=np.float64).reshape(-1, 3))


def save_xyz(cloud: PointCloud, path):
    with open(path, "w") as f:
        for p in cloud.points:
            f.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
