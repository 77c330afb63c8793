"""Verification baselines: the exact bound with explicitly enumerated
vertices and one large PSD block, and the doubly-nonnegative relaxation of
the full-covariance scheduling formulation (bound and schedule variants)."""

from __future__ import annotations

import numpy as np

from . import conic, reduced
from .chull import explicit_enumeration_rep
from .conic import ProblemBuilder, SolverSettings, VarRef
from .errors import TooManyVertices
from .moments import MomentSpec, Partition
from .reduced import _corner_kernel as _moment_corner_kernel


def large_sdp_bound(spec: MomentSpec, vertices: list[np.ndarray], offset=None,
                    settings: SolverSettings | None = None,
                    max_vertices: int = 4096) -> float:
    """Exact bound through one (2n+1)-sized PSD block with the cross-block
    second moments free and the hull captured by explicit vertex weights.

    Forced degeneracies (singular fixed moment corners, affine identities of
    the vertex set) are compressed out of the block so the interior-point
    iteration keeps a strictly feasible point."""
    if len(vertices) > max_vertices:
        raise TooManyVertices(f"{len(vertices)} vertices exceed the guard {max_vertices}")
    n = spec.n
    V = len(vertices)
    part = spec.partition
    bld = ProblemBuilder()
    alphas = [bld.nonneg(f"alpha[{v}]") for v in range(V)]
    bld.row({a: 1.0 for a in alphas}, 1.0)
    p_refs = [bld.free(f"p[{i}]") for i in range(n)]
    for i in range(n):
        coeffs = {p_refs[i]: 1.0}
        for v in range(V):
            if vertices[v][i] != 0.0:
                coeffs[alphas[v]] = coeffs.get(alphas[v], 0.0) - float(vertices[v][i])
        bld.row(coeffs, 0.0)
    y_refs = np.empty((n, n), dtype=object)  # Y[x-index, c-index]
    for a in range(n):
        for b in range(n):
            y_refs[a, b] = bld.free(f"Y[{a},{b}]")
    block_of = {}
    for r, blk in enumerate(part.blocks):
        for a, i in enumerate(blk):
            block_of[i] = (r, a)
    delta_refs = {}
    for i in range(n):
        for j in range(i + 1, n):
            if block_of[i][0] != block_of[j][0]:
                delta_refs[(i, j)] = bld.free(f"D[{i},{j}]")

    def entry(i: int, j: int):
        if i > j:
            i, j = j, i
        if i == 0 and j == 0:
            return {}, 1.0
        if i == 0 and j <= n:
            return {}, float(spec.mu[j - 1])
        if i == 0:
            return {p_refs[j - 1 - n]: 1.0}, 0.0
        if j <= n:
            ii, jj = i - 1, j - 1
            ri, ai = block_of[ii]
            rj, aj = block_of[jj]
            if ri == rj:
                return {}, float(spec.pi[ri][ai, aj])
            return {delta_refs[(ii, jj)]: 1.0}, 0.0
        if i <= n:
            return {y_refs[j - 1 - n, i - 1]: 1.0}, 0.0
        ii, jj = i - 1 - n, j - 1 - n
        terms = {alphas[v]: float(vertices[v][ii] * vertices[v][jj])
                 for v in range(V) if vertices[v][ii] * vertices[v][jj] != 0.0}
        return terms, 0.0

    K0 = 2 * n + 1
    entries = [[None] * K0 for _ in range(K0)]
    for i in range(K0):
        for j in range(i, K0):
            entries[i][j] = entry(i, j)

    kvecs = []
    for r, blk in enumerate(part.blocks):
        U_null = _moment_corner_kernel(spec.mu_block(r), spec.pi[r])
        for q in range(U_null.shape[1]):
            v = np.zeros(K0)
            v[0] = U_null[0, q]
            for a, i in enumerate(blk):
                v[1 + i] = U_null[1 + a, q]
            kvecs.append(v)
    # affine identities of the vertex set: w0 + w'x = 0 at every vertex
    rows = np.column_stack([np.ones(V)] + [np.array([float(vertices[v][i]) for v in range(V)])
                                           for i in range(n)])
    _, sv, Vt = np.linalg.svd(rows, full_matrices=True)
    tol = max(1.0, sv[0] if sv.size else 1.0) * 1e-10
    for q in range(Vt.shape[0]):
        if q >= len(sv) or sv[q] <= tol:
            w = Vt[q]
            v = np.zeros(K0)
            v[0] = w[0]
            v[1 + n :] = w[1:]
            kvecs.append(v)

    conic.add_kernel_reduced_psd_block(bld, entries, kvecs, "L")
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float).reshape(-1)
    for i in range(n):
        bld.obj(y_refs[i, i], 1.0)
        if off[i] != 0.0:
            bld.obj(p_refs[i], -float(off[i]))
    value, _ = conic.solve_value(bld.build(), settings, context="large-SDP baseline")
    return value


def hull_value_oracle(spec: MomentSpec, vertices: list[np.ndarray], offset=None,
                      settings: SolverSettings | None = None) -> float:
    """Same exact value via the reduced formulation over an enumeration
    representation; used to cross-check representations against each other."""
    rep = explicit_enumeration_rep(vertices, spec.partition)
    rs = reduced.solve_bound(spec, rep, linear_offset=offset, settings=settings)
    return rs.z_star


# ---------------------------------------------------------------------------
# Doubly nonnegative relaxation of the full-covariance scheduling bound

def _scheduling_region_rows(n: int) -> list[np.ndarray]:
    """Rows of the extended scheduling region {v = (x, w) >= 0 : B v = 1}:
    x_i - x_{i+1} + w_i = 1 with x_{n+1} = 0, matching the orientation of
    the interval-partition polytope."""
    rows = []
    for i in range(n):
        r = np.zeros(2 * n)
        r[i] = 1.0
        if i + 1 < n:
            r[i + 1] = -1.0
        r[n + i] = 1.0
        rows.append(r)
    return rows


class DnnIndex:
    def __init__(self, builder: ProblemBuilder, block, n: int):
        self.builder = builder
        self.block = block
        self.n = n

    def p_corner_ref(self, i: int) -> tuple[VarRef, float]:
        """Packed ref of the schedule-facing p_i corner entry (first n coords)."""
        return self.block.entry(0, 1 + self.n + i)


def _build_dnn(spec: MomentSpec, s=None) -> tuple[conic.BlockSDPProblem, DnnIndex]:
    """Relaxation of the completely positive scheduling formulation: one PSD
    block of size 3n+1 over (1, c, x, w) with entrywise nonnegativity on the
    (1, x, w) corner; second moments fixed on the spec's blocks and free
    elsewhere."""
    n = spec.n
    part = spec.partition
    bld = ProblemBuilder()
    M = bld.psd_block(3 * n + 1, "D")
    bld.fix_entry(M, 0, 0, 1.0)
    for i in range(n):
        bld.fix_entry(M, 0, 1 + i, float(spec.mu[i]))
    block_of = {}
    for r, blk in enumerate(part.blocks):
        for a, i in enumerate(blk):
            block_of[i] = (r, a)
    for i in range(n):
        for j in range(i, n):
            ri, ai = block_of[i]
            rj, aj = block_of[j]
            if ri == rj:
                bld.fix_entry(M, 1 + i, 1 + j, float(spec.pi[ri][ai, aj]))
    rows = _scheduling_region_rows(n)
    # linear rows on p = M[0, n+1:] and quadratic rows on X = M[n+1:, n+1:]
    for r in rows:
        coeffs: dict[VarRef, float] = {}
        for j in range(2 * n):
            if r[j] != 0.0:
                ref, factor = M.entry(0, 1 + n + j)
                coeffs[ref] = coeffs.get(ref, 0.0) + r[j] * factor
        bld.row(coeffs, 1.0)
    for r in rows:
        coeffs = {}
        nz = np.nonzero(r)[0]
        for aj in nz:
            for ak in nz:
                if ak < aj:
                    continue
                ref, factor = M.entry(1 + n + aj, 1 + n + ak)
                w = r[aj] * r[ak] * (2.0 if ak > aj else 1.0)
                coeffs[ref] = coeffs.get(ref, 0.0) + w * factor
        bld.row(coeffs, 1.0)
    # entrywise nonnegativity on the (1, x, w) corner via slack links
    for j in range(2 * n):
        slack = bld.nonneg(f"np[{j}]")
        bld.tie_entry(M, 0, 1 + n + j, {slack: 1.0}, 0.0)
    for j in range(2 * n):
        for k in range(j, 2 * n):
            slack = bld.nonneg(f"nX[{j},{k}]")
            bld.tie_entry(M, 1 + n + j, 1 + n + k, {slack: 1.0}, 0.0)
    for i in range(n):
        bld.obj_entry(M, 1 + i, 1 + n + i, 1.0)  # trace(Y)
    if s is not None:
        s = np.asarray(s, dtype=float).reshape(-1)
        for i in range(n):
            if s[i] != 0.0:
                bld.obj_entry(M, 0, 1 + n + i, -float(s[i]))
    return bld.build(), DnnIndex(bld, M, n)


def dnn_bound(spec: MomentSpec, s=None, settings: SolverSettings | None = None) -> float:
    """Upper bound on the exact partial-information value for schedule s;
    unspecified covariance entries are maximized over.

    Singular moment blocks (|rho| = 1 pairs) leave this formulation without
    a strictly feasible point, so the iteration can stall; in that case the
    certified dual value is reported, taking the tighter of the primal-form
    and dual-form certificates.  Both are valid upper bounds."""
    prob, _ = _build_dnn(spec, s)
    value, _ = conic.solve_value(prob, settings, context="DNN bound")
    return value


def dnn_schedule(spec: MomentSpec, T: float,
                 settings: SolverSettings | None = None):
    """Schedule minimizing the DNN upper bound: the conic dual of the bound
    problem (PSD part plus an entrywise-nonnegative part on the nonnegative
    corner, the standard inner approximation of the copositive cone),
    minimized jointly over schedules in the budget simplex."""
    prob, index = _build_dnn(spec, s=None)
    dual = conic.dualize(prob)
    bld = dual.builder
    n = index.n
    s_refs = [bld.nonneg(f"s{i}") for i in range(n)]
    for i in range(n):
        ref, factor = index.p_corner_ref(i)
        col = index.builder.column(ref)
        bld.add_to_row(dual.rows_by_column[col], s_refs[i], factor)
    budget = bld.nonneg("budget_slack")
    coeffs = {r: 1.0 for r in s_refs}
    coeffs[budget] = 1.0
    bld.row(coeffs, float(T))
    sol = conic.solve(bld.build(), settings)
    if not (sol.optimal or sol.acceptable()) and sol.residuals[0] > 1e-6:
        raise conic.NumericalFailure(
            f"DNN schedule failed: {sol.status.value}, gap={sol.gap:.1e}, "
            f"residuals={sol.residuals}"
        )
    from .appsched import _clean_schedule

    return _clean_schedule(bld.values(sol, s_refs), T), -sol.pobj


def full_covariance_spec(spec: MomentSpec, fill: float = 0.0) -> MomentSpec:
    """Single-block spec with cross-block covariances set to ``fill`` (the
    full-covariance comparison instance)."""
    n = spec.n
    Pi = np.full((n, n), np.nan)
    block_of = {}
    for r, blk in enumerate(spec.partition.blocks):
        for a, i in enumerate(blk):
            block_of[i] = (r, a)
    for i in range(n):
        for j in range(n):
            ri, ai = block_of[i]
            rj, aj = block_of[j]
            if ri == rj:
                Pi[i, j] = spec.pi[ri][ai, aj]
            else:
                Pi[i, j] = spec.mu[i] * spec.mu[j] + fill
    return MomentSpec(partition=Partition.full(n), mu=spec.mu.copy(), pi=(Pi,))
