import numpy as np
import pytest

from smvslab.errors import DegenerateLinearizationError, ParameterError
from smvslab.geometry import PointCloud, SpatialIndex, estimate_covariances
from smvslab.matching import (
    MatcherConfig,
    gauss_newton_align,
    linearize,
    matching_cost,
)
from smvslab.se3 import PoseSE3, left_update


def random_spd(rng, n):
    """Random well-conditioned 3x3 SPD matrices."""
    a = rng.normal(size=(n, 3, 3))
    return np.einsum("nij,nkj->nik", a, a) + 0.5 * np.eye(3)


def make_problem(seed, n=40, offset=0.05):
    rng = np.random.default_rng(seed)
    tgt_pts = rng.uniform(-5, 5, size=(n, 3))
    src_pts = tgt_pts + rng.normal(0.0, offset, size=(n, 3))
    source = PointCloud(src_pts, random_spd(rng, n))
    target = PointCloud(tgt_pts, random_spd(rng, n))
    return source, SpatialIndex(target)


def random_pose(rng, scale=0.05):
    from smvslab.se3 import exp_twist

    return exp_twist(scale * rng.normal(size=6))


def fd_gradient(source, index, system, pose, eps=1e-6):
    """Central finite differences of the fixed-correspondence cost."""
    grad = np.zeros(6)
    for i in range(6):
        e = np.zeros(6)
        e[i] = eps
        up = matching_cost(
            source, index.cloud, system.correspondences, system.weights,
            left_update(pose, e),
        )
        dn = matching_cost(
            source, index.cloud, system.correspondences, system.weights,
            left_update(pose, -e),
        )
        grad[i] = (up - dn) / (2 * eps)
    return grad


def test_gradient_matches_finite_differences():
    # d(cost)/d(delta) at delta=0 must equal 2 * b_global.
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        source, index = make_problem(seed)
        pose = random_pose(rng)
        system = linearize(source, index, pose)
        grad = fd_gradient(source, index, system, pose)
        analytic = 2.0 * system.b_global
        denom = max(np.linalg.norm(grad), 1.0)
        assert np.linalg.norm(grad - analytic) / denom < 1e-5


def test_global_hessian_is_sum_of_local():
    source, index = make_problem(3)
    system = linearize(source, index, PoseSE3.identity())
    total = system.local_hessians.sum(axis=0)
    assert np.allclose(total, system.h_global, rtol=1e-12, atol=1e-12)


def test_global_hessian_positive_semidefinite():
    for seed in range(5):
        source, index = make_problem(seed)
        system = linearize(source, index, PoseSE3.identity())
        assert np.linalg.eigvalsh(system.h_global)[0] > -1e-9
        for h in system.local_hessians:
            assert np.linalg.eigvalsh(h)[0] > -1e-9


def test_cost_matches_mahalanobis_definition():
    source, index = make_problem(4)
    pose = random_pose(np.random.default_rng(4))
    system = linearize(source, index, pose)
    rot = pose.rotation_matrix()
    total = 0.0
    row = 0
    for i, j in enumerate(system.correspondences):
        if j < 0:
            continue
        q = rot @ source.points[i] + pose.translation
        d = index.cloud.points[j] - q
        c = index.cloud.covariances[j] + rot @ source.covariances[i] @ rot.T
        total += d @ np.linalg.solve(c, d)
        # The cached weight must equal the inverse combined covariance.
        assert np.allclose(system.weights[row], np.linalg.inv(c))
        row += 1
    assert total == pytest.approx(system.cost, rel=1e-9)


def test_residual_norms_squared_sum_to_cost():
    source, index = make_problem(5)
    system = linearize(source, index, PoseSE3.identity())
    assert np.sum(system.residual_norms**2) == pytest.approx(system.cost, rel=1e-9)


def test_permutation_invariance():
    source, index = make_problem(6)
    system = linearize(source, index, PoseSE3.identity())
    perm = np.random.default_rng(6).permutation(len(source))
    shuffled = source.select(perm)
    system2 = linearize(shuffled, index, PoseSE3.identity())
    assert np.allclose(system2.h_global, system.h_global)
    assert np.allclose(system2.b_global, system.b_global)
    assert system2.cost == pytest.approx(system.cost)
    assert np.array_equal(system2.correspondences, system.correspondences[perm])


def test_unmatched_points_have_empty_rows():
    source = PointCloud(
        [[0.0, 0.0, 0.0], [100.0, 0.0, 0.0]], np.stack([np.eye(3)] * 2)
    )
    target = PointCloud([[0.1, 0.0, 0.0]], np.eye(3)[None])
    system = linearize(source, SpatialIndex(target), PoseSE3.identity(), 2.0)
    assert system.correspondences[1] == -1
    assert np.all(system.local_hessians[1] == 0.0)
    assert system.residual_norms[1] == 0.0
    assert system.num_correspondences == 1


def test_linearize_no_correspondences_raises():
    source = PointCloud([[0.0, 0.0, 0.0]], np.eye(3)[None])
    target = PointCloud([[50.0, 0.0, 0.0]], np.eye(3)[None])
    with pytest.raises(DegenerateLinearizationError):
        linearize(source, SpatialIndex(target), PoseSE3.identity(), 1.0)


def test_linearize_requires_covariances():
    bare = PointCloud([[0.0, 0.0, 0.0]])
    with_cov = PointCloud([[0.0, 0.0, 0.0]], np.eye(3)[None])
    with pytest.raises(ParameterError):
        linearize(bare, SpatialIndex(with_cov), PoseSE3.identity())
    with pytest.raises(ParameterError):
        linearize(with_cov, SpatialIndex(bare), PoseSE3.identity())


def structured_cloud(seed, n=300):
    """Two perpendicular planes plus ground: fully constrained geometry."""
    rng = np.random.default_rng(seed)
    ground = np.column_stack(
        [rng.uniform(-5, 5, n), rng.uniform(-5, 5, n), np.zeros(n)]
    )
    wall_a = np.column_stack(
        [rng.uniform(-5, 5, n), np.full(n, 5.0), rng.uniform(0, 3, n)]
    )
    wall_b = np.column_stack(
        [np.full(n, 5.0), rng.uniform(-5, 5, n), rng.uniform(0, 3, n)]
    )
    return PointCloud(np.concatenate([ground, wall_a, wall_b]))


def test_gauss_newton_recovers_known_transform():
    target = estimate_covariances(structured_cloud(7), k=10)
    true_pose = PoseSE3.from_rpy(0.0, 0.0, 0.05, (0.3, -0.2, 0.1))
    # Source observed from true_pose: moving it by true_pose recreates target.
    src_pts = true_pose.inverse().apply(target.points)
    source = estimate_covariances(PointCloud(src_pts), k=10)
    result = gauss_newton_align(source, target, PoseSE3.identity())
    assert result.converged
    assert np.linalg.norm(result.pose.translation - true_pose.translation) < 1e-3
    assert result.pose.rotation_angle_to(true_pose) < 1e-3


def test_gauss_newton_final_cost_not_worse_than_initial():
    target = estimate_covariances(structured_cloud(8), k=10)
    init = PoseSE3.from_rpy(0.0, 0.0, 0.03, (0.2, 0.1, 0.0))
    source = estimate_covariances(PointCloud(init.inverse().apply(target.points)), k=10)
    start = linearize(source, SpatialIndex(target), PoseSE3.identity()).cost
    result = gauss_newton_align(source, target, PoseSE3.identity())
    assert result.final_cost <= start


def test_gauss_newton_empty_inputs():
    cloud = estimate_covariances(structured_cloud(9, n=20), k=5)
    empty = PointCloud(np.empty((0, 3)))
    with pytest.raises(ParameterError):
        gauss_newton_align(empty, cloud)
    with pytest.raises(ParameterError):
        gauss_newton_align(cloud, empty)


def test_matcher_config_used():
    target = estimate_covariances(structured_cloud(10), k=10)
    source = estimate_covariances(PointCloud(target.points), k=10)
    result = gauss_newton_align(
        source, target, PoseSE3.identity(), MatcherConfig(max_iterations=1)
    )
    assert result.iterations == 1
