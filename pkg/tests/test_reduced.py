import numpy as np
import pytest

from partialdro import chull, moments, reduced
from partialdro.errors import PartitionMismatch
from partialdro.moments import Partition


def two_point_rep():
    part = Partition.singletons(1)
    return part, chull.explicit_enumeration_rep([np.array([0.0]), np.array([1.0])], part)


def test_two_point_bound_half():
    part, rep = two_point_rep()
    spec = moments.validate(part, [0.0], [np.array([[1.0]])])
    rs = reduced.solve_bound(spec, rep)
    assert rs.z_star == pytest.approx(0.5, abs=1e-6)


def test_scalar_closed_form(rng):
    # worst-case E[c^+] with mean m and variance v is (m + sqrt(m^2 + v)) / 2
    part, rep = two_point_rep()
    for _ in range(5):
        m = float(rng.uniform(-2, 2))
        v = float(rng.uniform(0.1, 4))
        spec = moments.validate(part, [m], [np.array([[v + m * m]])])
        rs = reduced.solve_bound(spec, rep)
        assert rs.z_star == pytest.approx(0.5 * (m + np.sqrt(m * m + v)), abs=1e-6)


def test_block_structure_sizes():
    # singleton blocks -> 3x3; pair blocks -> 5x5; full block -> 2n+1
    n = 4
    verts = chull.enumerate_interval_partitions(n)
    for part in (Partition.singletons(n), Partition.pairs(n), Partition.full(n)):
        rep = chull.explicit_enumeration_rep(verts, part)
        mu = np.zeros(n)
        pi = []
        for blk in part.blocks:
            pi.append(np.eye(len(blk)) * 2.0)
        spec = moments.validate(part, mu, pi)
        prob, _ = reduced.build(spec, rep)
        expected = tuple(1 + 2 * len(blk) for blk in part.blocks)
        assert prob.cone.psd_block_sizes == expected


def test_partition_mismatch():
    spec = moments.singleton_spec([0.0, 0.0], [1.0, 1.0])
    rep = chull.interval_partition_rep(2)  # pairs
    with pytest.raises(PartitionMismatch):
        reduced.build(spec, rep)


def test_zero_variance_limit_is_lp(rng):
    n = 4
    part = Partition.pairs(n)
    mu = rng.uniform(-1, 2, size=n)
    pi = []
    for blk in part.blocks:
        mr = mu[list(blk)]
        pi.append(np.outer(mr, mr) + 1e-6 * np.eye(2))
    spec = moments.validate(part, mu, pi)
    rep = chull.interval_partition_rep(n)
    rs = reduced.solve_bound(spec, rep)
    lp = max(float(mu @ x) for x in chull.enumerate_interval_partitions(n))
    assert rs.z_star == pytest.approx(lp, abs=1e-2)


def test_information_monotonicity(rng):
    # adding a valid pair covariance never increases the bound over the
    # mean-variance value
    n = 4
    mu = rng.uniform(-1, 1, size=n)
    var = rng.uniform(0.5, 2.0, size=n)
    singles = moments.singleton_spec(mu, var)
    rep_s = chull._interval_rep(singles.partition)
    z_mv = reduced.solve_bound(singles, rep_s).z_star
    rep_p = chull.interval_partition_rep(n)
    prev = None
    for rho in (-0.8, -0.4, 0.0, 0.4, 0.8):
        spec = moments.paired_from_correlation(n, mu, var, rho)
        z = reduced.solve_bound(spec, rep_p).z_star
        assert z <= z_mv + 1e-6 * (1 + abs(z_mv))


def test_feasibility_residuals_of_blocks(rng):
    n = 4
    spec = moments.paired_from_correlation(n, rng.uniform(-1, 1, n), rng.uniform(0.5, 2, n), 0.5)
    rep = chull.interval_partition_rep(n)
    rs = reduced.solve_bound(spec, rep)
    for r, blk in enumerate(spec.partition.blocks):
        n_r = len(blk)
        B = np.zeros((1 + 2 * n_r, 1 + 2 * n_r))
        B[0, 0] = 1.0
        B[0, 1:1 + n_r] = B[1:1 + n_r, 0] = spec.mu_block(r)
        B[1:1 + n_r, 1:1 + n_r] = spec.pi[r]
        B[0, 1 + n_r:] = B[1 + n_r:, 0] = rs.p[list(blk)]
        B[1 + n_r:, 1:1 + n_r] = rs.Y[r]
        B[1:1 + n_r, 1 + n_r:] = rs.Y[r].T
        B[1 + n_r:, 1 + n_r:] = rs.X[r]
        assert np.linalg.eigvalsh(B)[0] >= -1e-7
