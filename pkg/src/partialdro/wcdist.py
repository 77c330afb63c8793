"""Construction and sampling of a worst-case distribution attaining the
reduced-SDP bound: a mixture over vertices of the feasible region with
independent per-block Gaussian conditionals, built from a PSD factorization
of the optimal blocks.  Also the chordal machinery (perfect elimination
orderings, PSD completion) behind the reduction's correctness, exposed for
verification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic
from .chull import VertexDecomposition
from .conic import ProblemBuilder, SolverSettings
from .errors import DimensionMismatch, NegativePhi, NotChordalPattern, NotPartialPsd
from .moments import MomentSpec
from .reduced import ReducedSolution

WEIGHT_FLOOR = 1e-10
PHI_CLIP = -1e-8
PHI_FAIL = -1e-6


@dataclass
class WorstCaseDistribution:
    """Mixture over vertices x with per-block Gaussian conditionals: pick a
    vertex with probability alpha, then draw each block of c independently
    from N(d_r(x^r), Phi_r)."""

    spec: MomentSpec
    entries: list[tuple[float, np.ndarray, list[np.ndarray]]]  # (alpha, x, [d_r])
    phi: list[np.ndarray]

    def mixture_mean(self) -> np.ndarray:
        mu = np.zeros(self.spec.n)
        for alpha, _, ds in self.entries:
            for r, blk in enumerate(self.spec.partition.blocks):
                mu[list(blk)] += alpha * ds[r]
        return mu

    def mixture_second_moment(self, r: int) -> np.ndarray:
        k = len(self.spec.partition.blocks[r])
        out = np.zeros((k, k))
        for alpha, _, ds in self.entries:
            out += alpha * (np.outer(ds[r], ds[r]) + self.phi[r])
        return out

    def objective_identity_value(self) -> float:
        """sum_x alpha_x sum_r d_r(x^r)'x^r; equals the bound at optimum."""
        total = 0.0
        for alpha, x, ds in self.entries:
            for r, blk in enumerate(self.spec.partition.blocks):
                total += alpha * float(ds[r] @ x[list(blk)])
        return total


def pseudoinverse(M: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudoinverse with a spectral cutoff scaled by the
    dimension and machine epsilon."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise DimensionMismatch("non-finite entries")
    rcond = max(M.shape) * np.finfo(float).eps
    return np.linalg.pinv(M, rcond=rcond)


def factor_components(spec: MomentSpec, solution: ReducedSolution,
                      decomposition: VertexDecomposition) -> WorstCaseDistribution:
    """Build the worst-case mixture from an optimal reduced solution and a
    vertex decomposition of its (p, X-blocks).

    Per block r, the conditional means are the columns of
    [mu^r, Y^r'] (V_r^+)' scaled by the root vertex weights, where V_r
    collects columns (sqrt(a), sqrt(a) x^r) over distinct projections x^r
    with aggregated weights a; the shared covariance is the Schur-type
    remainder Pi^r - [mu^r, Y^r'] G^+ [mu^r, Y^r']' with G the Gram matrix
    of V_r."""
    part = spec.partition
    # vertices with negligible weight are dropped and the rest renormalized;
    # a relative floor keeps near-zero weights from wrecking the Gram
    # pseudoinverse conditioning
    max_w = max(a for a, _ in decomposition.entries)
    floor = max(WEIGHT_FLOOR, 1e-7 * max_w)
    entries = [(float(a), np.asarray(x, dtype=float)) for a, x in decomposition.entries
               if a >= floor]
    total = sum(a for a, _ in entries)
    entries = [(a / total, x) for a, x in entries]

    phi: list[np.ndarray] = []
    d_by_proj: list[dict[tuple, np.ndarray]] = []
    for r, blk in enumerate(part.blocks):
        idx = list(blk)
        n_r = len(idx)
        # aggregate weights over vertices sharing a projection
        agg: dict[tuple, float] = {}
        for a, x in entries:
            key = tuple(np.round(x[idx], 9))
            agg[key] = agg.get(key, 0.0) + a
        projs = sorted(agg.keys())
        V = np.zeros((n_r + 1, len(projs)))
        for col, key in enumerate(projs):
            root = np.sqrt(agg[key])
            V[0, col] = root
            V[1:, col] = root * np.asarray(key)
        B = np.column_stack([spec.mu_block(r).reshape(-1, 1), solution.Y[r].T])
        # B is n_r x (1 + n_r): first column mu^r, then Y^r'
        gram = V @ V.T
        Phi = spec.pi[r] - B @ pseudoinverse(gram) @ B.T
        Phi = (Phi + Phi.T) / 2.0
        w, U = np.linalg.eigh(Phi)
        scale = max(1.0, float(np.max(np.abs(spec.pi[r]))))
        if w[0] < PHI_FAIL * scale:
            raise NegativePhi(
                f"block {r}: conditional covariance eigenvalue {w[0]:.2e} < "
                f"{PHI_FAIL * scale:.1e}; solution and decomposition are inconsistent"
            )
        w = np.clip(w, 0.0, None)
        phi.append((U * w) @ U.T)
        D = B @ pseudoinverse(V).T  # n_r x m_r; column per projection
        dmap = {}
        for col, key in enumerate(projs):
            dmap[key] = D[:, col] / np.sqrt(agg[key])
        d_by_proj.append(dmap)

    full = []
    for a, x in entries:
        ds = []
        for r, blk in enumerate(part.blocks):
            key = tuple(np.round(x[list(blk)], 9))
            ds.append(d_by_proj[r][key])
        full.append((a, x, ds))
    return WorstCaseDistribution(spec=spec, entries=full, phi=phi)


def sample(dist: WorstCaseDistribution, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` samples of the cost vector; deterministic per seed
    (Philox counter-based generator)."""
    if count < 1:
        raise DimensionMismatch("count must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=seed))
    part = dist.spec.partition
    weights = np.array([a for a, _, _ in dist.entries])
    weights = weights / weights.sum()
    choice = rng.choice(len(dist.entries), size=count, p=weights)
    out = np.empty((count, dist.spec.n))
    chols = []
    for r, blk in enumerate(part.blocks):
        P = dist.phi[r]
        w, U = np.linalg.eigh((P + P.T) / 2.0)
        chols.append(U * np.sqrt(np.clip(w, 0.0, None)))
    for r, blk in enumerate(part.blocks):
        idx = list(blk)
        z = rng.standard_normal(size=(count, len(idx)))
        noise = z @ chols[r].T
        means = np.array([dist.entries[c][2][r] for c in choice])
        out[:, idx] = means + noise
    return out


# ---------------------------------------------------------------------------
# Partial matrices, elimination orderings, chordal completion


@dataclass
class PartialMatrix:
    """Symmetric matrix with a specified-entry mask; diagonal must be
    specified for completion use."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        k = self.values.shape[0]
        if self.values.shape != (k, k) or self.mask.shape != (k, k):
            raise DimensionMismatch("values and mask must be square and matching")
        if not np.array_equal(self.mask, self.mask.T):
            raise DimensionMismatch("mask must be symmetric")
        vs = np.where(self.mask, self.values, 0.0)
        if np.max(np.abs(vs - vs.T), initial=0.0) > 1e-8:
            raise DimensionMismatch("specified values must be symmetric")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def perfect_elimination_ordering(mask: np.ndarray) -> list[int] | None:
    """A perfect elimination ordering of the pattern graph via maximum
    cardinality search, or None if the graph is not chordal."""
    mask = np.asarray(mask, dtype=bool)
    k = mask.shape[0]
    adj = [set(np.nonzero(mask[i])[0]) - {i} for i in range(k)]
    weight = [0] * k
    numbered: list[int] = []
    unnumbered = set(range(k))
    for _ in range(k):
        v = max(sorted(unnumbered), key=lambda u: weight[u])
        numbered.append(v)
        unnumbered.discard(v)
        for u in adj[v]:
            if u in unnumbered:
                weight[u] += 1
    order = numbered[::-1]  # MCS gives a reverse PEO on chordal graphs
    pos = {v: i for i, v in enumerate(order)}
    for i, v in enumerate(order):
        later = [u for u in adj[v] if pos[u] > i]
        for a in range(len(later)):
            for b in range(a + 1, len(later)):
                if later[b] not in adj[later[a]]:
                    return None
    return order


def _check_partial_psd(partial: PartialMatrix, order: list[int], tol: float = 1e-8) -> None:
    """Verify partial positive semidefiniteness on a chordal pattern: the
    cliques {v} + later-neighbors along a perfect elimination ordering cover
    all maximal fully specified principal submatrices."""
    mask = partial.mask
    pos = {v: i for i, v in enumerate(order)}
    for i, v in enumerate(order):
        clique = [v] + [u for u in np.nonzero(mask[v])[0] if u != v and pos[int(u)] > i]
        S = partial.values[np.ix_(clique, clique)]
        lam = np.linalg.eigvalsh((S + S.T) / 2.0)[0]
        if lam < -tol * max(1.0, float(np.max(np.abs(S)))):
            raise NotPartialPsd(
                f"specified principal submatrix at vertex {v} has eigenvalue {lam:.2e}"
            )


def chordal_complete(partial: PartialMatrix,
                     settings: SolverSettings | None = None) -> np.ndarray:
    """PSD completion of a chordal-pattern partial PSD matrix, computed by
    maximizing t subject to L - t I >= 0 with the specified entries fixed."""
    if not np.all(np.diag(partial.mask)):
        raise DimensionMismatch("diagonal must be fully specified")
    order = perfect_elimination_ordering(partial.mask)
    if order is None:
        raise NotChordalPattern("specified pattern is not chordal")
    _check_partial_psd(partial, order)
    k = partial.dim
    bld = ProblemBuilder()
    t = bld.free("t")
    Z = bld.psd_block(k, "Z")  # Z = L - t I
    for i in range(k):
        for j in range(i, k):
            if partial.mask[i, j]:
                if i == j:
                    bld.tie_entry(Z, i, i, {t: -1.0}, float(partial.values[i, i]))
                else:
                    bld.fix_entry(Z, i, j, float(partial.values[i, j]))
    bld.obj(t, 1.0)
    sol = conic.solve_or_raise(bld.build(), settings, context="chordal completion")
    L = bld.block_matrix(sol, Z) + bld.value(sol, t) * np.eye(k)
    # exact restoration of the specified entries
    L[partial.mask] = partial.values[partial.mask]
    return (L + L.T) / 2.0


def lp_pattern(partition) -> np.ndarray:
    """Specified-entry mask of the (2n+1) partial matrix: corner row full,
    (c, c) and (x, c) entries on the partition blocks, (x, x) full."""
    n = partition.n
    k = 2 * n + 1
    mask = np.zeros((k, k), dtype=bool)
    mask[0, :] = mask[:, 0] = True
    for blk in partition.blocks:
        for i in blk:
            for j in blk:
                mask[1 + i, 1 + j] = True
                mask[1 + n + i, 1 + j] = mask[1 + j, 1 + n + i] = True
    mask[1 + n :, 1 + n :] = True
    np.fill_diagonal(mask, True)
    return mask


def assemble_Lp(spec: MomentSpec, solution: ReducedSolution,
                full_X: np.ndarray) -> PartialMatrix:
    """The (2n+1)-dimensional partial matrix over rows (1, c, x): corner row
    fully specified, second moments and Y specified on the partition blocks,
    and the lifted vertex matrix fully specified."""
    n = spec.n
    if full_X.shape != (n, n):
        raise DimensionMismatch("full lifted matrix must be n x n")
    k = 2 * n + 1
    vals = np.zeros((k, k))
    mask = np.zeros((k, k), dtype=bool)

    def put(i, j, v):
        vals[i, j] = vals[j, i] = v
        mask[i, j] = mask[j, i] = True

    put(0, 0, 1.0)
    for i in range(n):
        put(0, 1 + i, spec.mu[i])
        put(0, 1 + n + i, solution.p[i])
    for r, blk in enumerate(spec.partition.blocks):
        for a, i in enumerate(blk):
            for b, j in enumerate(blk):
                if i <= j:
                    put(1 + i, 1 + j, spec.pi[r][a, b])
                # Y^r[a, b] sits at (x-row i_a, c-col i_b)
                put(1 + n + i, 1 + j, solution.Y[r][a, b])
    for i in range(n):
        for j in range(i, n):
            put(1 + n + i, 1 + n + j, full_X[i, j])
    return PartialMatrix(values=vals, mask=mask)
