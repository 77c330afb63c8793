import numpy as np
import pytest

from partialdro import assign, baselines, chull, moments
from partialdro.errors import PartitionMismatch
from partialdro.moments import Partition


def row_partition(m):
    return Partition(m * m, tuple(tuple(r * m + j for j in range(m)) for r in range(m)))


def row_block_spec(m, mu, rng, ridge=0.3):
    part = row_partition(m)
    pi = []
    for blk in part.blocks:
        G = rng.normal(size=(m, m))
        cov = G @ G.T + ridge * np.eye(m)
        mr = np.asarray(mu)[list(blk)]
        pi.append(cov + np.outer(mr, mr))
    return moments.validate(part, mu, pi)


def test_assignment_det_examples():
    assert assign.assignment_det(np.eye(3)) == pytest.approx(3.0)
    assert assign.assignment_det([[1.0, 2.0], [2.0, 1.0]]) == pytest.approx(4.0)


def test_assignment_det_matches_brute(rng):
    for _ in range(15):
        m = int(rng.integers(2, 6))
        C = rng.normal(size=(m, m))
        assert assign.assignment_det(C) == pytest.approx(assign.assignment_brute(C), abs=1e-9)


def test_zlap_forced_m1():
    spec = moments.validate(Partition(1, ((0,),)), [1.5], [np.array([[2.3]])])
    z, _ = assign.zlap_bound(spec)
    assert z == pytest.approx(1.5, abs=1e-7)


def test_zlap_zero_variance_limit(rng):
    m = 3
    part = row_partition(m)
    mu = rng.uniform(0, 3, size=m * m)
    pi = [np.outer(mu[list(blk)], mu[list(blk)]) + 1e-6 * np.eye(m) for blk in part.blocks]
    spec = moments.validate(part, mu, pi)
    z, _ = assign.zlap_bound(spec)
    assert z == pytest.approx(assign.assignment_det(mu.reshape(m, m)), abs=1e-2)


def test_zlap_matches_enumeration(rng):
    m = 3
    spec = row_block_spec(m, rng.uniform(0, 2, size=m * m), rng)
    z, rs = assign.zlap_bound(spec)
    z_big = baselines.large_sdp_bound(spec, chull.enumerate_permutations(m))
    assert z == pytest.approx(z_big, rel=1e-4)
    for X in rs.X:
        off = X - np.diag(np.diag(X))
        assert np.max(np.abs(off)) <= 1e-6


def test_zlap_partition_enforced():
    spec = moments.singleton_spec(np.ones(4), np.ones(4))
    with pytest.raises(PartitionMismatch):
        assign.zlap_bound(spec)


def test_column_partition_transpose_flag(rng):
    # the transpose flag relabels a column-block spec into the row-block
    # problem; on exchangeable data (constant mean and variance, diagonal
    # covariance blocks) the two groupings are isomorphic and agree
    m = 3
    mu = np.full((m, m), 1.3)
    var = np.full((m, m), 0.8)
    part_rows = row_partition(m)
    pi_rows = [np.diag(var[r]) + np.outer(mu[r], mu[r]) for r in range(m)]
    spec_rows = moments.validate(part_rows, mu.ravel(), pi_rows)
    z_rows, _ = assign.zlap_bound(spec_rows)

    part_cols = Partition(m * m, tuple(tuple(i * m + c for i in range(m)) for c in range(m)))
    pi_cols = [np.diag(var[:, c]) + np.outer(mu[:, c], mu[:, c]) for c in range(m)]
    spec_cols = moments.validate(part_cols, mu.ravel(), pi_cols)
    z_cols, _ = assign.zlap_bound(spec_cols, transpose=True)
    assert z_cols == pytest.approx(z_rows, rel=1e-5, abs=1e-5)


def test_transpose_flag_is_pure_relabeling(rng):
    # transpose=True on a column-block spec must equal solving the manually
    # transposed row-block instance
    m = 3
    mu = rng.uniform(0, 2, size=(m, m))
    var = rng.uniform(0.4, 1.5, size=(m, m))
    part_cols = Partition(m * m, tuple(tuple(i * m + c for i in range(m)) for c in range(m)))
    pi_cols = [np.diag(var[:, c]) + np.outer(mu[:, c], mu[:, c]) for c in range(m)]
    spec_cols = moments.validate(part_cols, mu.ravel(), pi_cols)
    z_flag, _ = assign.zlap_bound(spec_cols, transpose=True)

    muT = mu.T.copy()
    varT = var.T.copy()
    pi_rows = [np.diag(varT[r]) + np.outer(muT[r], muT[r]) for r in range(m)]
    spec_rows = moments.validate(row_partition(m), muT.ravel(), pi_rows)
    z_direct, _ = assign.zlap_bound(spec_rows)
    assert z_flag == pytest.approx(z_direct, rel=1e-6, abs=1e-6)
