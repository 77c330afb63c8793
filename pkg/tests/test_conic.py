import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings as hsettings, strategies as st

from partialdro import conic
from partialdro.conic import ConeStructure, ProblemBuilder, SolveStatus


def random_feasible_problem(rng, max_block=8, max_rows=60):
    """Problem with a known strictly feasible primal-dual pair."""
    n_free = int(rng.integers(0, 4))
    n_nonneg = int(rng.integers(0, 8))
    blocks = tuple(int(k) for k in rng.integers(2, max_block, size=rng.integers(1, 4)))
    cone = ConeStructure(n_free, n_nonneg, blocks)
    n = cone.dim
    m = int(rng.integers(5, min(max_rows, n + 5)))
    A = np.round(rng.normal(size=(m, n)), 6)

    def interior(scale):
        v = np.zeros(n)
        v[:n_free] = rng.normal(size=n_free)
        v[n_free:n_free + n_nonneg] = rng.uniform(0.5, 2.0, size=n_nonneg)
        off = n_free + n_nonneg
        for k in blocks:
            G = rng.normal(size=(k, k))
            v[off:off + conic.packed_dim(k)] = conic.svec(G @ G.T + 0.5 * np.eye(k))
            off += conic.packed_dim(k)
        if scale == "dual":
            v[:n_free] = 0.0
        return v

    x0 = interior("primal")
    b = A @ x0
    y0 = rng.normal(size=m)
    s0 = interior("dual")
    c = A.T @ y0 - s0
    return conic.BlockSDPProblem(cone=cone, objective=c, A=sp.csr_matrix(A), b=b)


# ---------------------------------------------------------------------------
# packing


@hsettings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=9), st.integers(min_value=0, max_value=2**31 - 1))
def test_pack_unpack_roundtrip(k, seed):
    r = np.random.default_rng(seed)
    S = r.normal(size=(k, k))
    S = S + S.T
    assert np.allclose(conic.smat(conic.svec(S), k), S, atol=1e-13)
    v = r.normal(size=conic.packed_dim(k))
    assert np.allclose(conic.svec(conic.smat(v, k), ), v, atol=1e-13)


def test_packing_preserves_inner_products(rng):
    for k in (2, 4, 7):
        A = rng.normal(size=(k, k)); A = A + A.T
        B = rng.normal(size=(k, k)); B = B + B.T
        assert abs(conic.svec(A) @ conic.svec(B) - np.trace(A @ B)) < 1e-9


def test_offdiagonal_scaling_inverse():
    M = np.array([[0.0, 3.5], [3.5, 0.0]])
    v = conic.svec(M)
    assert v[1] == pytest.approx(3.5 * np.sqrt(2.0))
    assert conic.smat(v, 2)[0, 1] == pytest.approx(3.5)


# ---------------------------------------------------------------------------
# trivial solves


def test_lp_corner():
    b = ProblemBuilder()
    x = b.nonneg("x")
    w = b.nonneg("w")
    b.row({x: 1.0, w: 1.0}, 3.0)
    b.obj(x, 1.0)
    sol = conic.solve(b.build())
    assert sol.status == SolveStatus.OPTIMAL
    assert sol.pobj == pytest.approx(3.0, abs=1e-6)


def test_psd_boundary_2x2():
    # minimize t with [[t, 1], [1, t]] PSD -> t = 1
    b = ProblemBuilder()
    M = b.psd_block(2)
    r00, f00 = M.entry(0, 0)
    r11, f11 = M.entry(1, 1)
    b.row({r00: f00, r11: -f11}, 0.0)
    b.fix_entry(M, 0, 1, 1.0)
    b.obj_entry(M, 0, 0, -1.0)
    sol = conic.solve(b.build())
    assert sol.status == SolveStatus.OPTIMAL
    assert -sol.pobj == pytest.approx(1.0, abs=1e-6)


def test_two_point_worst_case_expectation():
    # max trace coupling with X = {0, 1}, mean 0, second moment 1 -> 1/2
    b = ProblemBuilder()
    M = b.psd_block(3)
    alpha = [b.nonneg("a0"), b.nonneg("a1")]
    b.row({alpha[0]: 1.0, alpha[1]: 1.0}, 1.0)
    b.fix_entry(M, 0, 0, 1.0)
    b.fix_entry(M, 0, 1, 0.0)
    b.fix_entry(M, 1, 1, 1.0)
    b.tie_entry(M, 0, 2, {alpha[1]: 1.0})
    b.tie_entry(M, 2, 2, {alpha[1]: 1.0})
    b.obj_entry(M, 2, 1, 1.0)
    sol = conic.solve(b.build())
    assert sol.pobj == pytest.approx(0.5, abs=1e-6)


def test_extract_psd_block_identity(rng):
    b = ProblemBuilder()
    M = b.psd_block(2)
    b.fix_entry(M, 0, 0, 1.0)
    b.fix_entry(M, 1, 1, 1.0)
    b.fix_entry(M, 0, 1, 0.0)
    b.obj_entry(M, 0, 0, 1.0)
    sol = conic.solve(b.build())
    assert np.allclose(conic.extract_psd_block(sol, 0), np.eye(2), atol=1e-7)
    with pytest.raises(IndexError):
        conic.extract_psd_block(sol, 1)


# ---------------------------------------------------------------------------
# random suite


def test_random_sdp_accuracy(rng):
    for _ in range(12):
        prob = random_feasible_problem(rng)
        sol = conic.solve(prob)
        assert sol.status == SolveStatus.OPTIMAL
        assert sol.gap <= 1e-7
        assert max(sol.residuals) <= 1e-7
        for bi, k in enumerate(prob.cone.psd_block_sizes):
            X = conic.extract_psd_block(sol, bi)
            assert np.linalg.eigvalsh(X)[0] >= -10 * 1e-8


def test_deterministic_resolve(rng):
    prob = random_feasible_problem(rng)
    s1 = conic.solve(prob)
    s2 = conic.solve(prob)
    assert abs(s1.pobj - s2.pobj) <= 1e-9 * (1 + abs(s1.pobj))


def test_weak_duality_at_optimum(rng):
    for _ in range(5):
        prob = random_feasible_problem(rng)
        sol = conic.solve(prob)
        # maximization: primal objective below dual objective up to gap slack
        assert sol.pobj <= sol.dobj + 1e-6 * (1 + abs(sol.pobj))


def test_dualize_value_agreement(rng):
    for _ in range(6):
        prob = random_feasible_problem(rng, max_block=6, max_rows=30)
        s1 = conic.solve(prob)
        dual = conic.dualize(prob)
        s2 = conic.solve(dual.builder.build())
        assert -s2.pobj == pytest.approx(s1.pobj, rel=1e-6, abs=1e-6)


def test_presolve_drops_duplicate_rows():
    b = ProblemBuilder()
    x = b.nonneg("x")
    w = b.nonneg("w")
    b.row({x: 1.0, w: 1.0}, 3.0)
    b.row({x: 1.0, w: 1.0}, 3.0)  # duplicate
    b.row({x: 2.0, w: 2.0}, 6.0)  # scaled duplicate
    b.obj(x, 1.0)
    sol = conic.solve(b.build())
    assert sol.pobj == pytest.approx(3.0, abs=1e-6)


def test_inconsistent_rows_reported_infeasible():
    b = ProblemBuilder()
    x = b.nonneg("x")
    b.row({x: 1.0}, 1.0)
    b.row({x: 0.0}, 5.0)  # zero row, nonzero rhs
    prob = b.build()
    sol = conic.solve(prob)
    assert sol.status == SolveStatus.PRIMAL_INFEASIBLE


def test_dump_parse_roundtrip(rng):
    prob = random_feasible_problem(rng, max_block=4, max_rows=12)
    text = conic.dump_text(prob)
    back = conic.parse_text(text)
    assert back.cone == prob.cone
    assert np.allclose(back.objective, prob.objective)
    assert np.allclose(back.b, prob.b)
    assert (back.A != prob.A).nnz == 0
    s1 = conic.solve(prob)
    s2 = conic.solve(back)
    assert s1.pobj == pytest.approx(s2.pobj, abs=1e-8)
