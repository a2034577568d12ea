"""GICP-style distribution-to-distribution matching with explicit Gauss-Newton.

The cost per correspondence (a_i, b_i) is the Mahalanobis distance
d_i^T W_i d_i with d_i = b_i - T a_i and W_i = (C_i^B + R C_i^A R^T)^-1,
the weight held fixed within one linearization. Residuals are whitened
with the Cholesky factor of W_i so the normal equations take the plain
J^T J / J^T r form and the per-point local Hessians sum exactly to the
global one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateLinearizationError, DivergenceError, ParameterError
from .geometry import PointCloud, SpatialIndex
from .se3 import PoseSE3, left_update, skew_batch


@dataclass(frozen=True)
class MatcherConfig:
    max_corr_dist: float = 2.0
    max_iterations: int = 30
    convergence_tol: float = 1e-6
    min_eigenvalue: float = 1e-6    # damping kicks in below this
    max_damping_retries: int = 8


@dataclass
class LinearSystem:
    """One linearization: global normal equations plus per-point pieces."""

    h_global: np.ndarray            # (6, 6)
    b_global: np.ndarray            # (6,)
    local_hessians: np.ndarray      # (N, 6, 6); zero rows for unmatched points
    residual_norms: np.ndarray      # (N,)
    correspondences: np.ndarray     # (N,) target ids, -1 where unmatched
    cost: float
    weights: np.ndarray | None = None   # (m, 3, 3), matched rows only

    @property
    def num_correspondences(self) -> int:
        return int(np.count_nonzero(self.correspondences >= 0))


@dataclass
class MatchResult:
    pose: PoseSE3
    iterations: int
    converged: bool
    system: LinearSystem
    final_cost: float


def _weights(target_covs, source_covs, rotation):
    """W = (C_B + R C_A R^T)^-1 and its Cholesky factor, batched."""
    rotated = np.einsum("ij,njk,lk->nil", rotation, source_covs, rotation)
    combined = target_covs + rotated
    w = np.linalg.inv(combined)
    w = 0.5 * (w + np.transpose(w, (0, 2, 1)))
    chol = np.linalg.cholesky(w)
    return w, chol


def _correspond(source_world, target_index, max_corr_dist):
    d, i = target_index.query(source_world, k=1)
    d = d[:, 0]
    ids = i[:, 0].astype(np.int64)
    matched = d <= max_corr_dist
    ids[~matched] = -1
    return ids, matched


def linearize(
    source: PointCloud,
    target_index: SpatialIndex,
    pose: PoseSE3,
    max_corr_dist: float = 2.0,
) -> LinearSystem:
    """Build the Gauss-Newton normal equations at the given pose.

    Jacobians use the left-multiplicative perturbation T <- Exp(delta)*T,
    giving d(T a)/dw = -skew(T a) and d(T a)/dv = I for each matched point.
    """
    if max_corr_dist <= 0:
        raise ParameterError("max_corr_dist must be > 0")
    if not source.has_covariances or not target_index.cloud.has_covariances:
        raise ParameterError("both clouds must carry covariances")
    if len(source) == 0:
        raise ParameterError("source cloud is empty")

    rotation = pose.rotation_matrix()
    src_world = source.points @ rotation.T + pose.translation
    ids, matched = _correspond(src_world, target_index, max_corr_dist)

    n = len(source)
    local_h = np.zeros((n, 6, 6))
    res_norms = np.zeros(n)
    h_global = np.zeros((6, 6))
    b_global = np.zeros(6)

    m = int(np.count_nonzero(matched))
    if m == 0:
        raise DegenerateLinearizationError("no correspondences within max_corr_dist")

    q = src_world[matched]                              # transformed source points
    tgt = target_index.cloud
    b_pts = tgt.points[ids[matched]]
    weights, chol = _weights(
        tgt.covariances[ids[matched]], source.covariances[matched], rotation
    )
    d = b_pts - q                                       # (m, 3)
    r = np.einsum("nji,nj->ni", chol, d)                # L^T d, whitened residual

    # J_d = [skew(q) | -I]; residual r = L^T (b - T a) so dr/ddelta = -L^T J_q
    # with J_q = [-skew(q) | I], i.e. J = L^T [skew(q) | -I].
    jd = np.concatenate([skew_batch(q), -np.broadcast_to(np.eye(3), (m, 3, 3))], axis=2)
    j = np.einsum("nji,njk->nik", chol, jd)             # (m, 3, 6)

    h_local = np.einsum("nij,nik->njk", j, j)
    b_local = np.einsum("nij,ni->nj", j, r)

    local_h[matched] = h_local
    res_norms[matched] = np.linalg.norm(r, axis=1)
    h_global = h_local.sum(axis=0)
    b_global = b_local.sum(axis=0)
    cost = float(np.sum(r * r))

    return LinearSystem(
        h_global=h_global,
        b_global=b_global,
        local_hessians=local_h,
        residual_norms=res_norms,
        correspondences=ids,
        cost=cost,
        weights=weights,
    )


def matching_cost(
    source: PointCloud,
    target: PointCloud,
    correspondences: np.ndarray,
    weights: np.ndarray,
    pose: PoseSE3,
) -> float:
    """Cost at a pose with correspondences and weights held fixed.

    `weights` holds one 3x3 matrix per matched correspondence, in the
    order the matched points appear in the source cloud.
    """
    matched = correspondences >= 0
    rotation = pose.rotation_matrix()
    q = source.points[matched] @ rotation.T + pose.translation
    d = target.points[correspondences[matched]] - q
    return float(np.einsum("ni,nij,nj->", d, weights, d))


def gauss_newton_align(
    source: PointCloud,
    target,
    init: PoseSE3 | None = None,
    cfg: MatcherConfig | None = None,
) -> MatchResult:
    """Iterate linearize + damped solve until the update norm converges.

    `target` may be a PointCloud or a prebuilt SpatialIndex. Levenberg
    damping is added to the H diagonal whenever the smallest eigenvalue
    drops below cfg.min_eigenvalue, and increased until the step does not
    raise the fixed-correspondence cost.
    """
    cfg = cfg or MatcherConfig()
    init = init or PoseSE3.identity()
    if len(source) == 0:
        raise ParameterError("source cloud is empty")
    index = target if isinstance(target, SpatialIndex) else SpatialIndex(target)
    if len(index) == 0:
        raise ParameterError("target cloud is empty")

    pose = init
    system = None
    converged = False
    iterations = 0

    for iterations in range(1, cfg.max_iterations + 1):
        system = linearize(source, index, pose, cfg.max_corr_dist)
        eigvals = np.linalg.eigvalsh(system.h_global)
        lam = 0.0
        if eigvals[0] < cfg.min_eigenvalue:
            lam = cfg.min_eigenvalue - eigvals[0]

        cost0 = system.cost
        step = None
        for _ in range(cfg.max_damping_retries + 1):
            h = system.h_global + lam * np.eye(6)
            try:
                delta = -np.linalg.solve(h, system.b_global)
            except np.linalg.LinAlgError:
                delta = np.full(6, np.nan)
            if not np.isfinite(delta).all():
                raise DivergenceError("non-finite Gauss-Newton update", last_pose=pose)
            candidate = left_update(pose, delta)
            cost1 = matching_cost(
                source, index.cloud, system.correspondences, system.weights, candidate
            )
            if cost1 <= cost0 + 1e-12 * max(1.0, cost0):
                step = (candidate, delta)
                break
            lam = max(lam * 10.0, cfg.min_eigenvalue)
        if step is None:
            # No damping level improved the fixed-correspondence cost;
            # keep the current pose and stop.
            break
        pose, delta = step
        if np.linalg.norm(delta) < cfg.convergence_tol:
            converged = True
            break

    final_cost = system.cost if system is not None else float("nan")
    return MatchResult(
        pose=pose,
        iterations=iterations,
        converged=converged,
        system=system,
        final_cost=final_cost,
    )
