import numpy as np
import pytest

from partialdro import appsched, baselines, chull, moments
from partialdro.errors import TooManyVertices


def test_large_sdp_matches_hull_oracle(rng):
    n = 4
    spec = moments.paired_from_correlation(n, rng.uniform(-1, 1, n), rng.uniform(0.5, 2, n), -0.3)
    verts = chull.enumerate_interval_partitions(n)
    z1 = baselines.large_sdp_bound(spec, verts)
    z2 = baselines.hull_value_oracle(spec, verts)
    assert z1 == pytest.approx(z2, rel=1e-6)


def test_large_sdp_vertex_permutation_invariance(rng):
    n = 4
    spec = moments.paired_from_correlation(n, rng.uniform(-1, 1, n), rng.uniform(0.5, 2, n), 0.2)
    verts = chull.enumerate_interval_partitions(n)
    z1 = baselines.large_sdp_bound(spec, verts)
    perm = rng.permutation(len(verts))
    z2 = baselines.large_sdp_bound(spec, [verts[i] for i in perm])
    assert z1 == pytest.approx(z2, rel=1e-6, abs=1e-6)


def test_large_sdp_vertex_guard():
    spec = moments.singleton_spec([0.0], [1.0])
    with pytest.raises(TooManyVertices):
        baselines.large_sdp_bound(spec, [np.array([float(i)]) for i in range(10)], max_vertices=5)


def test_large_sdp_zero_variance_is_lp(rng):
    n = 4
    part = moments.Partition.pairs(n)
    mu = rng.uniform(-1, 2, size=n)
    pi = [np.outer(mu[list(b)], mu[list(b)]) + 1e-6 * np.eye(2) for b in part.blocks]
    spec = moments.validate(part, mu, pi)
    verts = chull.enumerate_interval_partitions(n)
    z = baselines.large_sdp_bound(spec, verts)
    assert z == pytest.approx(max(float(mu @ x) for x in verts), abs=1e-2)


def test_full_covariance_two_asset_grid_oracle():
    # R = 1, X = {e1, e2}: worst-case E[max(c1, c2)] against a coarse grid
    # search over two-point supported distributions
    part = moments.Partition.full(2)
    mu = np.array([0.1, -0.2])
    cov = np.array([[0.8, 0.2], [0.2, 0.5]])
    spec = moments.validate(part, mu, [cov + np.outer(mu, mu)])
    verts = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    z = baselines.large_sdp_bound(spec, verts)

    best = -np.inf
    lams = np.linspace(0.05, 0.95, 10)
    dirs = np.linspace(0, np.pi, 13)[:-1]
    for lam in lams:
        for th in dirs:
            d = np.array([np.cos(th), np.sin(th)])
            # two-point distribution mu + t1 d (prob lam), mu - t2 d with
            # matched mean needs t1 lam = t2 (1 - lam); scale to match cov载
            # along d only; acceptance: any feasible one gives a lower bound
            for scale in (0.5, 1.0, 1.5, 2.0):
                t1 = scale * np.sqrt((1 - lam) / lam)
                t2 = scale * np.sqrt(lam / (1 - lam))
                pts = [mu + t1 * d, mu - t2 * d]
                ws = [lam, 1 - lam]
                emp_cov = sum(w * np.outer(p - mu, p - mu) for w, p in zip(ws, pts))
                if np.all(np.linalg.eigvalsh(cov - emp_cov) >= -1e-12):
                    val = sum(w * max(p) for w, p in zip(ws, pts))
                    best = max(best, val)
    assert z >= best - 1e-8
    assert z <= best + 0.35  # coarse grid; the bound is within reach


def test_dnn_dominates_exact(rng):
    for _ in range(3):
        n = 4
        rho = float(rng.choice([-0.6, 0.0, 0.6]))
        spec = moments.paired_from_correlation(n, rng.uniform(-1, 1, n), rng.uniform(0.5, 2, n), rho)
        s = rng.uniform(0, 1, size=n)
        z, _ = appsched.zapp_bound(spec, s)
        assert baselines.dnn_bound(spec, s) >= z - 1e-6


def test_dnn_schedule_dominates_optimal(rng):
    n = 4
    spec = moments.paired_from_correlation(n, 2.0, 0.3, -0.5)
    _, v_pc = appsched.optimal_schedule(spec, 9.0)
    _, v_dnn = baselines.dnn_schedule(spec, 9.0)
    assert v_dnn >= v_pc - 1e-6


def test_dnn_full_covariance_spec():
    spec = moments.paired_from_correlation(4, 2.0, 0.25, 0.5)
    full = baselines.full_covariance_spec(spec)
    assert full.partition.R == 1
    Pi = full.pi[0]
    assert Pi[0, 1] == pytest.approx(4.0 + 0.5 * 0.25)  # pair entry kept
    assert Pi[0, 2] == pytest.approx(4.0)               # cross filled at zero corr
