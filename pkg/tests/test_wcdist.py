import numpy as np
import pytest

from partialdro import appsched, assign, chull, moments, pert, reduced, wcdist
from partialdro.errors import NotChordalPattern, NotPartialPsd
from partialdro.moments import Partition


def appsched_pipeline(spec, s):
    value, rs = appsched.zapp_bound(spec, s)
    t = {}
    for name, v in zip(rs.index.rep.aux_names, rs.aux):
        k, j = name[2:-1].split(",")
        t[(int(k), int(j))] = float(v)
    dec = chull.decompose_interval_point(t, spec.n)
    return value, rs, dec


# ---------------------------------------------------------------------------
# pseudoinverse


def test_pseudoinverse_identity():
    assert np.allclose(wcdist.pseudoinverse(np.eye(3)), np.eye(3))


def test_pseudoinverse_rank_deficient_diagonal():
    assert np.allclose(wcdist.pseudoinverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))


def test_pseudoinverse_penrose_residuals(rng):
    for shape in [(5, 4), (4, 6), (6, 6)]:
        M = rng.normal(size=shape)
        P = wcdist.pseudoinverse(M)
        scale = 1 + np.abs(M).max()
        assert np.max(np.abs(M @ P @ M - M)) < 1e-8 * scale
        assert np.max(np.abs(P @ M @ P - P)) < 1e-8 * scale
        assert np.max(np.abs((M @ P) - (M @ P).T)) < 1e-8
        assert np.max(np.abs((P @ M) - (P @ M).T)) < 1e-8


# ---------------------------------------------------------------------------
# elimination orderings and completion


def test_peo_complete_graph():
    assert wcdist.perfect_elimination_ordering(np.ones((5, 5), dtype=bool)) is not None


def test_peo_rejects_4_cycle():
    mask = np.eye(4, dtype=bool)
    for i, j in [(0, 1), (1, 2), (2, 3), (3, 0)]:
        mask[i, j] = mask[j, i] = True
    assert wcdist.perfect_elimination_ordering(mask) is None


@pytest.mark.parametrize("n", [2, 4, 6])
def test_lp_pattern_is_chordal(n):
    mask = wcdist.lp_pattern(Partition.pairs(n))
    assert wcdist.perfect_elimination_ordering(mask) is not None


def test_chordal_complete_rank1_chain():
    vals = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
    mask = np.array([[True, True, False], [True, True, True], [False, True, True]])
    L = wcdist.chordal_complete(wcdist.PartialMatrix(values=vals, mask=mask))
    assert np.linalg.eigvalsh(L)[0] >= -1e-7
    assert L[0, 1] == pytest.approx(1.0, abs=1e-8)
    assert L[0, 2] == pytest.approx(1.0, abs=1e-6)  # rank-1 chain forces 1


def test_chordal_complete_full_matrix_is_fixed_point(rng):
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    L = wcdist.chordal_complete(wcdist.PartialMatrix(values=A, mask=np.ones((2, 2), bool)))
    assert np.allclose(L, A, atol=1e-8)


def test_chordal_complete_rejects_nonchordal():
    mask = np.eye(4, dtype=bool)
    for i, j in [(0, 1), (1, 2), (2, 3), (3, 0)]:
        mask[i, j] = mask[j, i] = True
    vals = np.eye(4)
    with pytest.raises(NotChordalPattern):
        wcdist.chordal_complete(wcdist.PartialMatrix(values=vals, mask=mask))


def test_chordal_complete_rejects_not_partial_psd():
    vals = np.array([[1.0, 2.0, 0.0], [2.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
    mask = np.array([[True, True, False], [True, True, True], [False, True, True]])
    with pytest.raises(NotPartialPsd):
        wcdist.chordal_complete(wcdist.PartialMatrix(values=vals, mask=mask))


# ---------------------------------------------------------------------------
# assemble and complete from a solved instance


def test_assemble_lp_missing_count(rng):
    n = 4
    spec = moments.paired_from_correlation(n, rng.uniform(0, 2, n), rng.uniform(0.3, 1, n), 0.4)
    _, rs, dec = appsched_pipeline(spec, np.zeros(n))
    pm = wcdist.assemble_Lp(spec, rs, dec.second_moment())
    # missing = cross-block positions: (n^2 - sum n_r^2) in the symmetric
    # Delta region plus twice that in the two Y orientations
    cross = n * n - sum(len(b) ** 2 for b in spec.partition.blocks)
    got_missing = pm.mask.size - int(pm.mask.sum())
    assert got_missing == 3 * cross


def test_assemble_and_complete_end_to_end(rng):
    n = 4
    spec = moments.paired_from_correlation(n, rng.uniform(0, 2, n), rng.uniform(0.3, 1, n), -0.5)
    _, rs, dec = appsched_pipeline(spec, rng.uniform(0, 1.5, n))
    pm = wcdist.assemble_Lp(spec, rs, dec.second_moment())
    order = wcdist.perfect_elimination_ordering(pm.mask)
    assert order is not None
    L = wcdist.chordal_complete(pm)
    assert np.linalg.eigvalsh(L)[0] >= -1e-7
    assert np.max(np.abs(L[pm.mask] - pm.values[pm.mask])) <= 1e-8
    # completed second-moment block matches the specified entries exactly
    for r, blk in enumerate(spec.partition.blocks):
        idx = [1 + i for i in blk]
        assert np.allclose(L[np.ix_(idx, idx)], spec.pi[r], atol=1e-8)


# ---------------------------------------------------------------------------
# worst-case mixture and sampling


def test_factor_components_moment_feasibility(rng):
    n = 4
    spec = moments.paired_from_correlation(n, rng.uniform(0, 2, n), rng.uniform(0.5, 1.5, n), 0.3)
    value, rs, dec = appsched_pipeline(spec, np.full(n, 1.5))
    dist = wcdist.factor_components(spec, rs, dec)
    assert np.max(np.abs(dist.mixture_mean() - spec.mu)) <= 1e-6
    for r in range(spec.partition.R):
        assert np.max(np.abs(dist.mixture_second_moment(r) - spec.pi[r])) <= 1e-6
    # objective identity: mixture linear value equals trace(Y) = z + s'p
    tr_y = sum(np.trace(Y) for Y in rs.Y)
    assert dist.objective_identity_value() == pytest.approx(tr_y, rel=1e-5)


def test_degenerate_point_mass_limit():
    # second moment of an (almost) deterministic vertex: d ~ mu, Phi ~ eps I
    part = Partition.singletons(1)
    rep = chull.explicit_enumeration_rep([np.array([0.0]), np.array([1.0])], part)
    spec = moments.validate(part, [2.0], [np.array([[4.0 + 1e-6]])])
    rs = reduced.solve_bound(spec, rep)
    dec = chull.VertexDecomposition([(rs.aux[0], np.array([0.0])), (rs.aux[1], np.array([1.0]))])
    dist = wcdist.factor_components(spec, rs, dec)
    assert dist.mixture_mean()[0] == pytest.approx(2.0, abs=1e-6)
    assert float(dist.phi[0][0, 0]) <= 2e-6


def test_two_point_closed_form_means():
    part = Partition.singletons(1)
    rep = chull.explicit_enumeration_rep([np.array([0.0]), np.array([1.0])], part)
    spec = moments.validate(part, [0.0], [np.array([[1.0]])])
    rs = reduced.solve_bound(spec, rep)
    dec = chull.VertexDecomposition([
        (max(rs.aux[0], 0.0), np.array([0.0])),
        (max(rs.aux[1], 0.0), np.array([1.0])),
    ])
    dist = wcdist.factor_components(spec, rs, dec)
    # conditional means +-1 at weights 1/2 reproduce mean 0, second moment 1
    ds = sorted(float(d[0][0]) for _, _, d in dist.entries)
    assert ds[0] == pytest.approx(-1.0, abs=1e-3)
    assert ds[1] == pytest.approx(1.0, abs=1e-3)


def test_sampling_deterministic_and_moment_consistent(rng):
    n = 4
    spec = moments.paired_from_correlation(n, rng.uniform(0, 2, n), rng.uniform(0.5, 1.5, n), -0.4)
    value, rs, dec = appsched_pipeline(spec, np.zeros(n))
    dist = wcdist.factor_components(spec, rs, dec)
    s1 = wcdist.sample(dist, 500, seed=11)
    s2 = wcdist.sample(dist, 500, seed=11)
    assert np.array_equal(s1, s2)
    big = wcdist.sample(dist, 60000, seed=5)
    se = big.std(axis=0) / np.sqrt(big.shape[0])
    assert np.all(np.abs(big.mean(axis=0) - spec.mu) <= 4 * se + 1e-9)


def test_monte_carlo_sandwich_appsched(rng):
    n = 4
    spec = moments.paired_from_correlation(n, rng.uniform(1, 2.5, n), rng.uniform(0.4, 1.2, n), 0.5)
    s = np.full(n, 1.2)
    value, rs, dec = appsched_pipeline(spec, s)
    dist = wcdist.factor_components(spec, rs, dec)
    samples = wcdist.sample(dist, 60000, seed=3)
    emp = float(np.mean([appsched.lindley_waiting(u, s) for u in samples]))
    assert abs(emp - value) <= 0.01 * abs(value) + 1e-6


def test_phi_zero_gives_support_on_means():
    part = Partition.singletons(1)
    rep = chull.explicit_enumeration_rep([np.array([0.0]), np.array([1.0])], part)
    spec = moments.validate(part, [0.5], [np.array([[0.5 + 1e-9]])], pd_tol=1e-12)
    rs = reduced.solve_bound(spec, rep)
    dec = chull.VertexDecomposition([
        (max(rs.aux[0], 1e-12), np.array([0.0])),
        (max(rs.aux[1], 1e-12), np.array([1.0])),
    ])
    dist = wcdist.factor_components(spec, rs, dec)
    samples = wcdist.sample(dist, 200, seed=1)
    means = sorted({round(float(d[0][0]), 4) for _, _, d in dist.entries})
    for v in np.unique(np.round(samples, 4)):
        assert min(abs(v - m) for m in means) <= 1e-3
