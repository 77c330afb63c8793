"""Assembly and solution of the reduced semidefinite program: one PSD block

    [[1, mu^r', p^r'], [mu^r, Pi^r, Y^r'], [p^r, Y^r, X^r]]  >= 0

of size 1 + 2 n_r per moment block, coupled through a polyhedral hull
representation of (p, X^1, ..., X^R), maximizing sum_r trace(Y^r) minus an
optional linear offset on p.

Degenerate blocks are facially reduced.  Two degeneracy sources force a
kernel on every feasible block matrix M: a singular moment corner
[[1, mu'], [mu, Pi]] (perfectly correlated coordinates), and affine
identities w0 + w'x = 0 holding at every vertex of the feasible region
(e.g. assignment rows summing to one).  For any such direction v,
M >= 0 plus v'Mv = 0 forces Mv = 0, and the PSD constraint collapses onto
the orthogonal complement.  Reducing restores a strictly feasible point,
which the interior-point method needs to converge to full accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic
from .chull import ChullRep
from .conic import ProblemBuilder, PsdHandle, SolverSettings, VarRef
from .errors import PartitionMismatch
from .moments import MomentSpec

CORNER_NULL_TOL = 1e-9  # relative eigenvalue threshold for kernel detection

LinComb = tuple[dict[VarRef, float], float]  # (variable terms, constant)


@dataclass
class _BlockPlan:
    handle: PsdHandle
    n_r: int
    basis: np.ndarray  # (1 + 2 n_r) x d map from reduced to full coordinates
    p_refs: list[VarRef]
    y_refs: np.ndarray  # object array (n_r, n_r)


@dataclass
class ReducedIndex:
    """Handles into the assembled problem, for extraction and dualization."""

    builder: ProblemBuilder
    plans: list[_BlockPlan]
    aux_refs: list[VarRef]
    rep: ChullRep
    spec: MomentSpec

    def p_coupling(self, r: int, a: int) -> tuple[VarRef, float]:
        """Scalar variable carrying p^r_a (unit factor)."""
        return self.plans[r].p_refs[a], 1.0


@dataclass
class ReducedSolution:
    z_star: float
    p: np.ndarray
    X: list[np.ndarray]
    Y: list[np.ndarray]
    aux: np.ndarray
    index: ReducedIndex
    solution: conic.SDPSolution


def _corner_kernel(mu_r: np.ndarray, pi_r: np.ndarray) -> np.ndarray:
    """Null-space basis of [[1, mu'], [mu, Pi]] (columns; possibly empty)."""
    k = 1 + mu_r.shape[0]
    C = np.empty((k, k))
    C[0, 0] = 1.0
    C[0, 1:] = mu_r
    C[1:, 0] = mu_r
    C[1:, 1:] = pi_r
    w, U = np.linalg.eigh(C)
    tol = max(w[-1], 1.0) * CORNER_NULL_TOL
    return U[:, w <= tol]


def build(spec: MomentSpec, rep: ChullRep,
          linear_offset: np.ndarray | None = None) -> tuple[conic.BlockSDPProblem, ReducedIndex]:
    """Assemble the reduced SDP for a validated moment spec and a matching
    hull representation.  ``linear_offset`` subtracts offset'p from the
    objective (the scheduling form trace(Y) - s'p)."""
    if spec.partition != rep.partition:
        raise PartitionMismatch("moment partition differs from representation partition")
    part = spec.partition
    bld = ProblemBuilder()
    aux_refs = [
        bld.nonneg(rep.aux_names[i]) if i in rep.nonneg_aux else bld.free(rep.aux_names[i])
        for i in range(rep.num_aux)
    ]
    for expr, rhs in rep.eqs:
        bld.row({aux_refs[c]: cf for c, cf in expr.items()}, rhs)

    offset = None
    if linear_offset is not None:
        offset = np.asarray(linear_offset, dtype=float).reshape(-1)
        if offset.shape != (spec.n,):
            raise PartitionMismatch("linear offset length does not match dimension")

    x_affine = getattr(rep, "x_affine", {})

    plans: list[_BlockPlan] = []
    for r, blk in enumerate(part.blocks):
        n_r = len(blk)
        mu_r = spec.mu_block(r)
        K0 = 1 + 2 * n_r

        p_refs = [bld.free(f"p[{i}]") for i in blk]
        for a, i_glob in enumerate(blk):
            coeffs = {p_refs[a]: 1.0}
            for c, cf in rep.p_expr[i_glob].items():
                coeffs[aux_refs[c]] = coeffs.get(aux_refs[c], 0.0) - cf
            bld.row(coeffs, 0.0)
        y_refs = np.empty((n_r, n_r), dtype=object)
        for a in range(n_r):
            for b in range(n_r):
                y_refs[a, b] = bld.free(f"Y{r}[{a},{b}]")

        # symbolic entries of the full block over (1, c, x)
        def entry(i: int, j: int) -> LinComb:
            if i > j:
                i, j = j, i
            if i == 0 and j == 0:
                return {}, 1.0
            if i == 0 and j <= n_r:
                return {}, float(mu_r[j - 1])
            if i == 0:
                return {p_refs[j - 1 - n_r]: 1.0}, 0.0
            if j <= n_r:
                return {}, float(spec.pi[r][i - 1, j - 1])
            if i <= n_r:
                return {y_refs[j - 1 - n_r, i - 1]: 1.0}, 0.0
            e = rep.x_entry(r, i - 1 - n_r, j - 1 - n_r)
            if e is None:
                return {}, 0.0
            return {aux_refs[c]: cf for c, cf in e.items()}, 0.0

        # forced kernel directions
        kvecs = []
        U_null = _corner_kernel(mu_r, spec.pi[r])
        for q in range(U_null.shape[1]):
            v = np.zeros(K0)
            v[: 1 + n_r] = U_null[:, q]
            kvecs.append(v)
        for (w0, w) in x_affine.get(r, []):
            v = np.zeros(K0)
            v[0] = float(w0)
            v[1 + n_r :] = np.asarray(w, dtype=float)
            kvecs.append(v)

        entries = [[None] * K0 for _ in range(K0)]
        for i in range(K0):
            for j in range(i, K0):
                entries[i][j] = entry(i, j)
        M, T = conic.add_kernel_reduced_psd_block(bld, entries, kvecs, f"B{r}")
        plans.append(_BlockPlan(handle=M, n_r=n_r, basis=T, p_refs=p_refs, y_refs=y_refs))

        for a in range(n_r):
            bld.obj(y_refs[a, a], 1.0)
        if offset is not None:
            for a, i_glob in enumerate(blk):
                if offset[i_glob] != 0.0:
                    bld.obj(p_refs[a], -float(offset[i_glob]))

    index = ReducedIndex(builder=bld, plans=plans, aux_refs=aux_refs, rep=rep, spec=spec)
    return bld.build(), index


def extract(index: ReducedIndex, sol: conic.SDPSolution) -> ReducedSolution:
    part = index.spec.partition
    p = np.zeros(index.spec.n)
    Ys = []
    for r, blk in enumerate(part.blocks):
        plan = index.plans[r]
        n_r = plan.n_r
        for a, i_glob in enumerate(blk):
            p[i_glob] = index.builder.value(sol, plan.p_refs[a])
        Ys.append(np.array([[index.builder.value(sol, plan.y_refs[a, b]) for b in range(n_r)]
                            for a in range(n_r)]))
    aux = index.builder.values(sol, index.aux_refs)
    _, Xs = index.rep.project(aux)
    return ReducedSolution(z_star=sol.pobj, p=p, X=Xs, Y=Ys, aux=aux,
                           index=index, solution=sol)


def solve_bound(spec: MomentSpec, rep: ChullRep, linear_offset=None,
                settings: SolverSettings | None = None) -> ReducedSolution:
    """Solve the reduced SDP.  If the iteration still stalls, the bound is
    taken from the certified dual side; the blocks come from the best
    primal iterate."""
    prob, index = build(spec, rep, linear_offset)
    value, sol = conic.solve_value(prob, settings, context="reduced SDP")
    out = extract(index, sol)
    out.z_star = value
    return out
