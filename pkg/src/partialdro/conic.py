"""Primal-dual interior-point solver for block-structured conic programs.

Solves, in standard form,

    maximize    c'x
    subject to  A x = b,
                x in K = R^f  x  R^l_+  x  S^{k_1}_+ x ... x S^{k_B}_+,

where PSD blocks are stored in packed symmetric ("svec") coordinates with
sqrt(2) scaling on off-diagonal entries, so that Euclidean inner products of
packed vectors equal trace inner products of the matrices they represent.

The search direction uses Nesterov-Todd scaling with a Mehrotra
predictor-corrector, an infeasible start, and static regularization of the
Newton (KKT) system.  All operations are deterministic for fixed input.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import IndexOutOfRange, NumericalFailure

_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# Symmetric packing


def packed_dim(k: int) -> int:
    return k * (k + 1) // 2


def packed_indices(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column index arrays for the packed upper triangle, row-major."""
    rows = []
    cols = []
    for i in range(k):
        for j in range(i, k):
            rows.append(i)
            cols.append(j)
    return np.asarray(rows), np.asarray(cols)


def svec(M: np.ndarray) -> np.ndarray:
    """Pack a symmetric matrix; off-diagonal entries are scaled by sqrt(2)."""
    k = M.shape[0]
    out = np.empty(packed_dim(k))
    idx = 0
    for i in range(k):
        out[idx] = M[i, i]
        row = M[i, i + 1 : k]
        out[idx + 1 : idx + k - i] = row * _SQRT2
        idx += k - i
    return out


def smat(v: np.ndarray, k: int) -> np.ndarray:
    """Inverse of :func:`svec`."""
    M = np.empty((k, k))
    idx = 0
    for i in range(k):
        M[i, i] = v[idx]
        row = v[idx + 1 : idx + k - i] / _SQRT2
        M[i, i + 1 : k] = row
        M[i + 1 : k, i] = row
        idx += k - i
    return M


def packed_entry_offset(k: int, i: int, j: int) -> int:
    """Offset of entry (i, j), i <= j, in the packed upper triangle."""
    if i > j:
        i, j = j, i
    return i * k - i * (i - 1) // 2 + (j - i)


# ---------------------------------------------------------------------------
# Problem data types


class SolveStatus(enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class ConeStructure:
    """Product cone: free scalars, nonnegative scalars, dense PSD blocks."""

    n_free: int
    n_nonneg: int
    psd_block_sizes: tuple[int, ...]

    @property
    def dim(self) -> int:
        return self.n_free + self.n_nonneg + sum(packed_dim(k) for k in self.psd_block_sizes)

    @property
    def conic_dim(self) -> int:
        return self.dim - self.n_free

    @property
    def barrier_degree(self) -> int:
        return self.n_nonneg + sum(self.psd_block_sizes)

    def block_slices(self) -> list[slice]:
        """Packed-coordinate slice of each PSD block within the full vector."""
        out = []
        off = self.n_free + self.n_nonneg
        for k in self.psd_block_sizes:
            out.append(slice(off, off + packed_dim(k)))
            off += packed_dim(k)
        return out


@dataclass
class BlockSDPProblem:
    """Standard-form conic program: maximize c'x over Ax = b, x in cone."""

    cone: ConeStructure
    objective: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    var_names: list[str] | None = None

    def validate(self) -> None:
        n = self.cone.dim
        if self.objective.shape != (n,):
            raise ValueError(f"objective length {self.objective.shape} != cone dim {n}")
        if self.A.shape[1] != n:
            raise ValueError(f"A has {self.A.shape[1]} columns, expected {n}")
        if self.b.shape != (self.A.shape[0],):
            raise ValueError("rhs length does not match A")
        if not np.all(np.isfinite(self.objective)) or not np.all(np.isfinite(self.b)):
            raise ValueError("non-finite problem data")
        if not np.all(np.isfinite(self.A.data)):
            raise ValueError("non-finite constraint coefficients")


@dataclass
class SDPSolution:
    status: SolveStatus
    primal: np.ndarray
    y: np.ndarray
    dual_slacks: np.ndarray
    pobj: float
    dobj: float
    gap: float
    residuals: tuple[float, float]
    iterations: int
    cone: ConeStructure

    @property
    def optimal(self) -> bool:
        return self.status == SolveStatus.OPTIMAL

    def acceptable(self, gap_tol: float = 1e-5, feas_tol: float = 1e-6) -> bool:
        """Usable even if not fully converged (loose-tolerance check)."""
        return self.gap <= gap_tol and max(self.residuals) <= feas_tol


def extract_psd_block(solution: SDPSolution, block_index: int) -> np.ndarray:
    """Unpack PSD block ``block_index`` of a solution to a dense symmetric matrix."""
    cone = solution.cone
    if not 0 <= block_index < len(cone.psd_block_sizes):
        raise IndexOutOfRange(f"block index {block_index} out of range")
    sl = cone.block_slices()[block_index]
    return smat(solution.primal[sl], cone.psd_block_sizes[block_index])


# ---------------------------------------------------------------------------
# Incremental problem construction


@dataclass(frozen=True)
class VarRef:
    kind: str  # "free" | "nonneg" | "psd"
    index: int  # local index within its arena


@dataclass
class PsdHandle:
    block: int
    size: int
    base: int  # local packed offset within the psd arena

    def entry(self, i: int, j: int) -> tuple[VarRef, float]:
        """Packed variable of entry (i, j) and the factor mapping it to M[i, j].

        M[i, j] = factor * packed_value, i.e. a constraint coefficient ``a`` on
        M[i, j] becomes ``a * factor`` on the packed variable.
        """
        if not (0 <= i < self.size and 0 <= j < self.size):
            raise IndexOutOfRange(f"entry ({i},{j}) outside block of size {self.size}")
        off = packed_entry_offset(self.size, i, j)
        factor = 1.0 if i == j else 1.0 / _SQRT2
        return VarRef("psd", self.base + off), factor


class ProblemBuilder:
    """Accumulates variables, equality rows, and an objective, then emits
    a :class:`BlockSDPProblem` with columns ordered free | nonneg | psd."""

    def __init__(self) -> None:
        self._free_names: list[str] = []
        self._nonneg_names: list[str] = []
        self._blocks: list[tuple[int, str]] = []
        self._psd_dim = 0
        self._rows: list[dict[VarRef, float]] = []
        self._rhs: list[float] = []
        self._obj: dict[VarRef, float] = {}

    # -- variables

    def free(self, name: str = "x") -> VarRef:
        self._free_names.append(name)
        return VarRef("free", len(self._free_names) - 1)

    def nonneg(self, name: str = "w") -> VarRef:
        self._nonneg_names.append(name)
        return VarRef("nonneg", len(self._nonneg_names) - 1)

    def psd_block(self, k: int, name: str = "M") -> PsdHandle:
        handle = PsdHandle(block=len(self._blocks), size=k, base=self._psd_dim)
        self._blocks.append((k, name))
        self._psd_dim += packed_dim(k)
        return handle

    # -- rows and objective

    def row(self, coeffs: dict[VarRef, float], rhs: float) -> int:
        self._rows.append(dict(coeffs))
        self._rhs.append(float(rhs))
        return len(self._rows) - 1

    def add_to_row(self, row_id: int, ref: VarRef, coeff: float) -> None:
        row = self._rows[row_id]
        row[ref] = row.get(ref, 0.0) + coeff

    def fix_entry(self, handle: PsdHandle, i: int, j: int, value: float) -> int:
        ref, factor = handle.entry(i, j)
        return self.row({ref: factor}, value)

    def tie_entry(self, handle: PsdHandle, i: int, j: int,
                  terms: dict[VarRef, float], const: float = 0.0) -> int:
        """Add row: M[i, j] - sum(terms) = const."""
        ref, factor = handle.entry(i, j)
        coeffs = {ref: factor}
        for r, cf in terms.items():
            coeffs[r] = coeffs.get(r, 0.0) - cf
        return self.row(coeffs, const)

    def obj(self, ref: VarRef, coeff: float) -> None:
        self._obj[ref] = self._obj.get(ref, 0.0) + coeff

    def obj_entry(self, handle: PsdHandle, i: int, j: int, coeff: float) -> None:
        ref, factor = handle.entry(i, j)
        self.obj(ref, coeff * factor)

    # -- assembly

    def column(self, ref: VarRef) -> int:
        f = len(self._free_names)
        l = len(self._nonneg_names)
        if ref.kind == "free":
            return ref.index
        if ref.kind == "nonneg":
            return f + ref.index
        return f + l + ref.index

    def build(self) -> BlockSDPProblem:
        cone = ConeStructure(
            n_free=len(self._free_names),
            n_nonneg=len(self._nonneg_names),
            psd_block_sizes=tuple(k for k, _ in self._blocks),
        )
        n = cone.dim
        c = np.zeros(n)
        for ref, v in self._obj.items():
            c[self.column(ref)] += v
        data, ri, ci = [], [], []
        for r, row in enumerate(self._rows):
            for ref, v in row.items():
                if v != 0.0:
                    ri.append(r)
                    ci.append(self.column(ref))
                    data.append(v)
        A = sp.csr_matrix((data, (ri, ci)), shape=(len(self._rows), n))
        A.sum_duplicates()
        names = (
            [f"f:{s}" for s in self._free_names]
            + [f"n:{s}" for s in self._nonneg_names]
            + [f"p:{name}[{k}]" for k, name in self._blocks]
        )
        prob = BlockSDPProblem(cone=cone, objective=c, A=A, b=np.asarray(self._rhs, dtype=float),
                               var_names=names)
        prob.validate()
        return prob

    def value(self, solution: SDPSolution, ref: VarRef) -> float:
        return float(solution.primal[self.column(ref)])

    def values(self, solution: SDPSolution, refs) -> np.ndarray:
        return np.array([self.value(solution, r) for r in refs])

    def block_matrix(self, solution: SDPSolution, handle: PsdHandle) -> np.ndarray:
        return extract_psd_block(solution, handle.block)


LinComb = tuple[dict[VarRef, float], float]  # (variable terms, constant)


def add_kernel_reduced_psd_block(bld: ProblemBuilder, entries: list[list[LinComb]],
                                 kernel: list[np.ndarray], name: str = "M"
                                 ) -> tuple[PsdHandle, np.ndarray]:
    """Add the PSD constraint E >= 0 for a symbolic symmetric entry matrix E
    (entries[i][j] valid for i <= j), compressed against forced kernel
    directions: for each v in ``kernel`` (known to satisfy v'Ev = 0 on the
    feasible set), the rows E v = 0 are imposed and the block is restricted
    to the orthogonal complement, where a strictly feasible point exists.

    Returns the handle of the compressed block and the complement basis T
    with E = T (T'ET) T' at feasible points."""
    K0 = len(entries)
    if kernel:
        K = np.column_stack(kernel)
        Uk, sk, _ = np.linalg.svd(K, full_matrices=True)
        rank_k = int(np.sum(sk > 1e-12 * max(1.0, sk[0] if sk.size else 1.0)))
        kern = Uk[:, :rank_k]
        T = Uk[:, rank_k:]
    else:
        kern = np.zeros((K0, 0))
        T = np.eye(K0)

    def combine(weights_ij) -> LinComb:
        terms: dict[VarRef, float] = {}
        const = 0.0
        for (i, j), w in weights_ij:
            if w == 0.0:
                continue
            t, c0 = entries[min(i, j)][max(i, j)]
            const += w * c0
            for ref, cf in t.items():
                terms[ref] = terms.get(ref, 0.0) + w * cf
        return terms, const

    d = T.shape[1]
    handle = bld.psd_block(d, name)
    for al in range(d):
        nz_a = np.nonzero(np.abs(T[:, al]) > 1e-14)[0]
        for be in range(al, d):
            nz_b = np.nonzero(np.abs(T[:, be]) > 1e-14)[0]
            weights = [((int(i), int(j)), float(T[i, al] * T[j, be]))
                       for i in nz_a for j in nz_b]
            terms, const = combine(weights)
            ref, factor = handle.entry(al, be)
            coeffs = {ref: factor}
            for vref, cf in terms.items():
                coeffs[vref] = coeffs.get(vref, 0.0) - cf
            bld.row(coeffs, const)
    for q in range(kern.shape[1]):
        v = kern[:, q]
        nz = np.nonzero(np.abs(v) > 1e-14)[0]
        for i in range(K0):
            weights = [((int(i), int(j)), float(v[j])) for j in nz]
            terms, const = combine(weights)
            if terms:
                bld.row(terms, -const)
    return handle, T


# ---------------------------------------------------------------------------
# Settings and presolve


@dataclass
class SolverSettings:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iters: int = 200
    regularization: float = 1e-9
    step_frac: float = 0.99
    stall_patience: int = 14  # non-improving iterations before giving up
    verbose: bool = False
    dense_kkt_limit: int = 4200  # rows; above this the sparse KKT path is used


def _presolve(A: sp.csr_matrix, b: np.ndarray, tol: float = 1e-12):
    """Row-scale and drop zero/duplicate rows.  Returns (A, b, scale, keep)."""
    A = A.tocsr().copy()
    m = A.shape[0]
    scale = np.ones(m)
    row_max = np.zeros(m)
    for i in range(m):
        seg = A.data[A.indptr[i]: A.indptr[i + 1]]
        row_max[i] = np.max(np.abs(seg)) if seg.size else 0.0
    keep = []
    seen: dict[bytes, int] = {}
    b = b.astype(float).copy()
    for i in range(m):
        if row_max[i] <= tol:
            if abs(b[i]) > 1e-9:
                return None  # inconsistent zero row
            continue
        f = 1.0 / row_max[i]
        scale[i] = f
        start, end = A.indptr[i], A.indptr[i + 1]
        A.data[start:end] *= f
        b[i] *= f
        cols = A.indices[start:end]
        vals = np.round(A.data[start:end], 12)
        key = cols.tobytes() + vals.tobytes()
        if key in seen:
            j = seen[key]
            if abs(b[i] - b[j]) > 1e-9:
                return None
            continue
        seen[key] = i
        keep.append(i)
    keep = np.asarray(keep, dtype=int)
    return A[keep], b[keep], scale, keep


# ---------------------------------------------------------------------------
# Nesterov-Todd scaling helpers


def _psd_factor(M: np.ndarray) -> np.ndarray:
    """Lower-triangular-ish factor F with F F' = M, robust to slight indefiniteness."""
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        w, U = np.linalg.eigh((M + M.T) / 2.0)
        floor = max(w[-1], 1.0) * 1e-14
        w = np.maximum(w, floor)
        return U * np.sqrt(w)


class _NTBlock:
    """NT scaling data for one PSD block.

    R satisfies X = R Lam R' and S = R^{-T} Lam R^{-1} with Lam diagonal.
    W = R R' solves W S W = X.
    """

    def __init__(self, X: np.ndarray, S: np.ndarray):
        k = X.shape[0]
        Lx = _psd_factor(X)
        Ls = _psd_factor(S)
        U, sig, Vt = np.linalg.svd(Ls.T @ Lx)
        sig = np.maximum(sig, np.max(sig) * 1e-150)
        self.lam = sig
        self.R = Lx @ Vt.T @ np.diag(1.0 / np.sqrt(sig))
        self.Rinv = np.diag(np.sqrt(sig)) @ Vt @ np.linalg.solve(Lx, np.eye(k))
        self.W = self.R @ self.R.T
        self.k = k

    def scaled_kron(self) -> np.ndarray:
        """Dense matrix of the operator v -> svec(W smat(v) W) on packed coords."""
        k = self.k
        d = packed_dim(k)
        W = self.W
        out = np.empty((d, d))
        col = 0
        for i in range(k):
            wi = W[:, i]
            # diagonal basis element E_ii
            out[:, col] = svec(np.outer(wi, wi))
            col += 1
            for j in range(i + 1, k):
                wj = W[:, j]
                M = np.outer(wi, wj)
                M = (M + M.T) / _SQRT2
                out[:, col] = svec(M)
                col += 1
        # columns were generated in (i,i),(i,i+1).. order per i, matching svec order
        return out


def _svec_order_check():  # pragma: no cover - development aid
    k = 3
    rows, cols = packed_indices(k)
    assert list(zip(rows, cols)) == [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


def _max_step_nonneg(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def _max_step_psd(X: np.ndarray, dX: np.ndarray) -> float:
    """Largest t with X + t dX >= 0, via the generalized eigenvalue bound."""
    L = _psd_factor(X)
    M = np.linalg.solve(L, dX)
    M = np.linalg.solve(L, M.T)
    w = np.linalg.eigvalsh((M + M.T) / 2.0)
    wmin = w[0]
    if wmin >= 0:
        return np.inf
    return float(-1.0 / wmin)


# ---------------------------------------------------------------------------
# Main solver


def solve(problem: BlockSDPProblem, settings: SolverSettings | None = None) -> SDPSolution:
    """Solve a block conic program; see module docstring for the form."""
    settings = settings or SolverSettings()
    problem.validate()
    cone = problem.cone
    pres = _presolve(problem.A, problem.b)
    if pres is None:
        zero = np.zeros(cone.dim)
        return SDPSolution(SolveStatus.PRIMAL_INFEASIBLE, zero, np.zeros(problem.A.shape[0]),
                           zero, 0.0, 0.0, np.inf, (np.inf, np.inf), 0, cone)
    A, b, row_scale, keep = pres
    c = problem.objective
    m, n = A.shape
    f = cone.n_free
    l = cone.n_nonneg
    blocks = cone.psd_block_sizes
    bslices = cone.block_slices()
    nu = max(1, cone.barrier_degree)

    A = A.tocsc()
    A_f = A[:, :f]
    A_c = A[:, f:]
    A_nn = A[:, f : f + l].tocsr()
    A_blk = [A[:, sl].tocsr() for sl in bslices]
    A_f_csr = A_f.tocsr()
    AfT = A_f.T.tocsr()
    AcT = A_c.T.tocsr()

    norm_b = 1.0 + np.linalg.norm(b)
    norm_c = 1.0 + np.linalg.norm(c)

    # identity-scaled interior start sized from the data norms
    tau_p = max(10.0, math.sqrt(float(np.max(np.abs(b)) if b.size else 1.0)) * 5.0)
    tau_d = max(10.0, math.sqrt(float(np.max(np.abs(c)) if c.size else 1.0)) * 5.0)
    x = np.zeros(n)
    s = np.zeros(n)
    x[f : f + l] = tau_p
    s[f : f + l] = tau_d
    for sl, k in zip(bslices, blocks):
        x[sl] = svec(tau_p * np.eye(k))
        s[sl] = svec(tau_d * np.eye(k))
    y = np.zeros(m)

    use_dense = m <= settings.dense_kkt_limit
    eps_reg = settings.regularization

    best = None
    best_merit = np.inf
    status = SolveStatus.MAX_ITERATIONS
    it = 0
    stall = 0

    def record(pobj, dobj, gap, pinf, dinf):
        nonlocal best, best_merit, stall
        merit = max(gap, pinf, dinf)
        if merit < best_merit:
            best_merit = merit
            best = (x.copy(), y.copy(), s.copy(), pobj, dobj, gap, pinf, dinf, it)
            stall = 0
        else:
            stall += 1

    for it in range(settings.max_iters):
        rp = b - A @ x
        rd = c - (A.T @ y) + s  # over all coordinates; s is zero on the free part
        pobj = float(c @ x)
        dobj = float(b @ y)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = float(np.linalg.norm(rp)) / norm_b
        dinf = float(np.linalg.norm(rd)) / norm_c
        record(pobj, dobj, gap, pinf, dinf)
        if settings.verbose:
            print(f"iter {it:3d}  pobj {pobj:+.9e}  dobj {dobj:+.9e} "
                  f"gap {gap:.2e}  pinf {pinf:.2e}  dinf {dinf:.2e}")
        if gap <= settings.gap_tol and pinf <= settings.feas_tol and dinf <= settings.feas_tol:
            status = SolveStatus.OPTIMAL
            break
        if stall >= settings.stall_patience:
            status = SolveStatus.NUMERICAL_FAILURE if best_merit > 1e-4 else SolveStatus.MAX_ITERATIONS
            break

        x_nn = x[f : f + l]
        s_nn = s[f : f + l]
        compl = float(x[f:] @ s[f:])
        mu = compl / nu

        # NT scaling per cone piece
        try:
            nts = [_NTBlock(smat(x[sl], k), smat(s[sl], k)) for sl, k in zip(bslices, blocks)]
        except np.linalg.LinAlgError:
            status = SolveStatus.NUMERICAL_FAILURE
            break
        d_nn = x_nn / s_nn

        # Schur complement M = A_c D A_c'
        kron = []
        pieces = []
        if l:
            pieces.append((A_nn.multiply(d_nn[None, :])) @ A_nn.T)
        for blk_i, (sl, k) in enumerate(zip(bslices, blocks)):
            Dk = nts[blk_i].scaled_kron()
            kron.append(Dk)
            Ab = A_blk[blk_i]
            rows_nz = np.unique(Ab.nonzero()[0])
            if rows_nz.size == 0:
                continue
            Asub = Ab[rows_nz].toarray()
            contrib = Asub @ Dk @ Asub.T
            rr = np.repeat(rows_nz, rows_nz.size)
            cc = np.tile(rows_nz, rows_nz.size)
            pieces.append(sp.coo_matrix((contrib.ravel(), (rr, cc)), shape=(m, m)))
        if pieces:
            Msp_acc = pieces[0].tocoo()
            for p in pieces[1:]:
                Msp_acc = (Msp_acc + p).tocoo()
        else:
            Msp_acc = sp.coo_matrix((m, m))
        M = Msp_acc.toarray() if use_dense else Msp_acc.tocsc()

        def apply_D(v: np.ndarray) -> np.ndarray:
            out = np.empty_like(v)
            out[:l] = d_nn * v[:l]
            off = l
            for blk_i, k in enumerate(blocks):
                d = packed_dim(k)
                out[off : off + d] = kron[blk_i] @ v[off : off + d]
                off += d
            return out

        # factor the KKT system  [[M + eps, -A_f], [-A_f', -eps]]; the static
        # regularization is escalated only if the factorization fails
        # (iterative refinement corrects the perturbation afterwards)
        kkt_solve = None
        reg = eps_reg
        for _attempt in range(8):
            try:
                if use_dense:
                    Mreg = M + reg * np.eye(m)
                    cho = sla.cho_factor(Mreg, lower=True, check_finite=False)
                    if f:
                        Af_dense = A_f_csr.toarray()
                        MinvAf = sla.cho_solve(cho, Af_dense, check_finite=False)
                        Schur_f = Af_dense.T @ MinvAf + reg * np.eye(f)
                        cho_f = sla.cho_factor(Schur_f, lower=True, check_finite=False)

                    def kkt_solve(h1: np.ndarray, h2: np.ndarray):
                        # solve M dy - A_f dxf = h1 ;  -A_f' dy = h2  (regularized)
                        if f:
                            t = sla.cho_solve(cho, h1, check_finite=False)
                            rhs_f = -(h2 + Af_dense.T @ t)
                            dxf = sla.cho_solve(cho_f, rhs_f, check_finite=False)
                            dy = sla.cho_solve(cho, h1 + Af_dense @ dxf, check_finite=False)
                        else:
                            dy = sla.cho_solve(cho, h1, check_finite=False)
                            dxf = np.zeros(0)
                        return dy, dxf
                else:
                    if f:
                        K = sp.bmat(
                            [
                                [M + reg * sp.eye(m), -A_f],
                                [-A_f.T, -reg * sp.eye(f)],
                            ],
                            format="csc",
                        )
                    else:
                        K = (M + reg * sp.eye(m)).tocsc()
                    lu = sp.linalg.splu(K)

                    def kkt_solve(h1: np.ndarray, h2: np.ndarray):
                        sol = lu.solve(np.concatenate([h1, h2]))
                        return sol[:m], sol[m:]
                break
            except (np.linalg.LinAlgError, RuntimeError):
                reg *= 100.0
        if kkt_solve is None:
            status = SolveStatus.NUMERICAL_FAILURE
            break

        rd_c = rd[f:]
        rd_f = rd[:f]

        def directions(rc: np.ndarray):
            h1 = A_c @ rc + A_c @ apply_D(rd_c) - rp
            scale_h = 1.0 + float(np.linalg.norm(h1))
            dy, dxf = kkt_solve(h1, -rd_f)
            # refine against the unregularized KKT operator
            for _ in range(4):
                res1 = h1 - M @ dy
                if f:
                    res1 += A_f_csr @ dxf
                    res2 = -rd_f + AfT @ dy
                else:
                    res2 = np.zeros(0)
                if np.linalg.norm(res1) <= 1e-12 * scale_h:
                    break
                ddy, ddxf = kkt_solve(res1, res2)
                dy = dy + ddy
                if f:
                    dxf = dxf + ddxf
            ds_c = AcT @ dy - rd_c
            dx_c = rc - apply_D(ds_c)
            return dy, dxf, dx_c, ds_c

        # predictor
        rc_aff = -x[f:].copy()
        dy_a, dxf_a, dx_a, ds_a = directions(rc_aff)

        def max_steps(dx_c: np.ndarray, ds_c: np.ndarray) -> tuple[float, float]:
            ap = _max_step_nonneg(x_nn, dx_c[:l]) if l else np.inf
            ad = _max_step_nonneg(s_nn, ds_c[:l]) if l else np.inf
            off = l
            for blk_i, k in enumerate(blocks):
                d = packed_dim(k)
                Xb = smat(x[bslices[blk_i]], k)
                Sb = smat(s[bslices[blk_i]], k)
                dXb = smat(dx_c[off : off + d], k)
                dSb = smat(ds_c[off : off + d], k)
                ap = min(ap, _max_step_psd(Xb, dXb))
                ad = min(ad, _max_step_psd(Sb, dSb))
                off += d
            return ap, ad

        ap_a, ad_a = max_steps(dx_a, ds_a)
        ap_a = min(1.0, 0.999 * ap_a)
        ad_a = min(1.0, 0.999 * ad_a)
        compl_aff = float((x[f:] + ap_a * dx_a) @ (s[f:] + ad_a * ds_a))
        sigma = min(0.99, max(1e-8, (max(compl_aff, 0.0) / compl) ** 3))

        # corrector
        rc = np.empty(n - f)
        if l:
            rc[:l] = (sigma * mu - dx_a[:l] * ds_a[:l]) / s_nn - x_nn
        off = l
        for blk_i, k in enumerate(blocks):
            d = packed_dim(k)
            nt = nts[blk_i]
            dXa = smat(dx_a[off : off + d], k)
            dSa = smat(ds_a[off : off + d], k)
            dXt = nt.Rinv @ dXa @ nt.Rinv.T
            dSt = nt.R.T @ dSa @ nt.R
            corr = (dXt @ dSt + dSt @ dXt) / 2.0
            lam = nt.lam
            T = sigma * mu * np.eye(k) - np.diag(lam**2) - corr
            denom = (lam[:, None] + lam[None, :]) / 2.0
            Rct = T / denom
            rc[off : off + d] = svec(nt.R @ Rct @ nt.R.T)
            off += d

        dy, dxf, dx_c, ds_c = directions(rc)
        ap, ad = max_steps(dx_c, ds_c)
        gamma = 0.9 + 0.09 * min(1.0, min(ap, ad))
        ap = min(1.0, gamma * ap)
        ad = min(1.0, gamma * ad)

        def interior(vc: np.ndarray) -> bool:
            if l and np.any(vc[:l] <= 0.0):
                return False
            off = l
            for k in blocks:
                d = packed_dim(k)
                try:
                    np.linalg.cholesky(smat(vc[off : off + d], k))
                except np.linalg.LinAlgError:
                    return False
                off += d
            return True

        # keep iterates strictly interior in floating point
        for _ in range(30):
            if interior(x[f:] + ap * dx_c):
                break
            ap *= 0.7
        else:
            ap = 0.0
        for _ in range(30):
            if interior(s[f:] + ad * ds_c):
                break
            ad *= 0.7
        else:
            ad = 0.0
        if ap == 0.0 and ad == 0.0:
            status = SolveStatus.NUMERICAL_FAILURE
            break

        x[:f] += ap * dxf
        x[f:] += ap * dx_c
        y += ad * dy
        s[f:] += ad * ds_c
    else:
        it = settings.max_iters

    if best is None:
        best = (x, y, s, float(c @ x), float(b @ y), np.inf, np.inf, np.inf, it)
    bx, by, bs, pobj, dobj, gap, pinf, dinf, _ = best
    if status != SolveStatus.OPTIMAL:
        if gap <= settings.gap_tol and pinf <= settings.feas_tol and dinf <= settings.feas_tol:
            status = SolveStatus.OPTIMAL

    # map multipliers back to the original (unscaled, undropped) row space
    y_full = np.zeros(problem.A.shape[0])
    y_full[keep] = by
    y_full *= row_scale
    return SDPSolution(
        status=status,
        primal=bx,
        y=y_full,
        dual_slacks=bs,
        pobj=pobj,
        dobj=dobj,
        gap=gap,
        residuals=(pinf, dinf),
        iterations=it + 1,
        cone=cone,
    )


def solve_or_raise(problem: BlockSDPProblem, settings: SolverSettings | None = None,
                   context: str = "") -> SDPSolution:
    sol = solve(problem, settings)
    if not (sol.optimal or sol.acceptable()):
        raise NumericalFailure(
            f"solve failed{' in ' + context if context else ''}: status={sol.status.value}, "
            f"gap={sol.gap:.2e}, residuals={sol.residuals}"
        )
    return sol


def solve_value(problem: BlockSDPProblem, settings: SolverSettings | None = None,
                context: str = "") -> tuple[float, SDPSolution]:
    """Solve and return (objective value, primal-form solution).

    A fully converged solve returns its primal objective.  Degenerate
    problems (no strictly feasible primal point, e.g. singular moment
    blocks) can stall short of tolerance; then the value reported is the
    tightest available certified DUAL estimate: the stalled solve's dual
    objective when its dual residual is tiny, possibly improved by solving
    the mechanical dual form.  Both are upper estimates of a maximization,
    so two routes to the same quantity land on the same side."""
    sol = solve(problem, settings)
    if sol.optimal:
        return sol.pobj, sol
    candidates = []
    if sol.residuals[1] <= 1e-6:
        candidates.append(sol.dobj)
    if sol.gap > 1e-6 or not candidates:
        dual = dualize(problem)
        dsol = solve(dual.builder.build(), settings)
        if dsol.residuals[0] <= 1e-6:
            candidates.append(-dsol.pobj)
    if not candidates:
        raise NumericalFailure(
            f"solve failed{' in ' + context if context else ''}: status={sol.status.value}, "
            f"gap={sol.gap:.2e}, residuals={sol.residuals}"
        )
    return min(candidates), sol


# ---------------------------------------------------------------------------
# Mechanical conic dual


@dataclass
class DualizedProblem:
    builder: ProblemBuilder
    y_refs: list[VarRef]          # one free var per primal row
    slack_refs: list              # cone slack aligned with primal conic columns
    rows_by_column: list[int]     # dual equality row per primal column


def dualize(problem: BlockSDPProblem) -> DualizedProblem:
    """Build the Lagrangian dual  min b'y  s.t.  A'y - z = c,  z in K*  as a
    standard-form maximization (objective -b'y).

    Free primal columns yield plain equality rows (no slack); nonnegative and
    PSD columns get self-dual cone slacks.  The dual optimum equals -pobj of
    the returned problem.
    """
    cone = problem.cone
    f, l = cone.n_free, cone.n_nonneg
    bld = ProblemBuilder()
    m = problem.A.shape[0]
    y_refs = [bld.free(f"y{i}") for i in range(m)]
    z_nonneg = [bld.nonneg(f"z{j}") for j in range(l)]
    z_blocks = [bld.psd_block(k, f"Z{bi}") for bi, k in enumerate(cone.psd_block_sizes)]

    for yr, bi in zip(y_refs, problem.b):
        bld.obj(yr, -float(bi))

    AT = problem.A.T.tocsr()
    c = problem.objective
    rows_by_column: list[int] = []

    def col_terms(jcol: int) -> dict[VarRef, float]:
        start, end = AT.indptr[jcol], AT.indptr[jcol + 1]
        return {y_refs[i]: float(v) for i, v in zip(AT.indices[start:end], AT.data[start:end])}

    for j in range(f):
        rows_by_column.append(bld.row(col_terms(j), float(c[j])))
    for j in range(l):
        coeffs = col_terms(f + j)
        coeffs[z_nonneg[j]] = coeffs.get(z_nonneg[j], 0.0) - 1.0
        rows_by_column.append(bld.row(coeffs, float(c[f + j])))
    off = f + l
    for handle, k in zip(z_blocks, cone.psd_block_sizes):
        for local in range(packed_dim(k)):
            jcol = off + local
            coeffs = col_terms(jcol)
            zref = VarRef("psd", handle.base + local)
            coeffs[zref] = coeffs.get(zref, 0.0) - 1.0
            rows_by_column.append(bld.row(coeffs, float(c[jcol])))
        off += packed_dim(k)

    return DualizedProblem(builder=bld, y_refs=y_refs,
                           slack_refs=z_nonneg + z_blocks, rows_by_column=rows_by_column)


# ---------------------------------------------------------------------------
# Debug text dump (documented in the README)


def dump_text(problem: BlockSDPProblem) -> str:
    """Serialize a problem to the plain-text conic format described in the README."""
    cone = problem.cone
    lines = [
        "conic-problem v1",
        f"free {cone.n_free}",
        f"nonneg {cone.n_nonneg}",
        "psd " + " ".join(str(k) for k in cone.psd_block_sizes),
        "maximize " + " ".join(f"{j}:{v:.17g}" for j, v in enumerate(problem.objective) if v != 0.0),
    ]
    A = problem.A.tocsr()
    for i in range(A.shape[0]):
        seg = slice(A.indptr[i], A.indptr[i + 1])
        terms = " ".join(f"{j}:{v:.17g}" for j, v in zip(A.indices[seg], A.data[seg]))
        lines.append(f"eq {terms} = {problem.b[i]:.17g}")
    return "\n".join(lines) + "\n"


def parse_text(text: str) -> BlockSDPProblem:
    """Inverse of :func:`dump_text`."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if lines[0].strip() != "conic-problem v1":
        raise ValueError("unrecognized header")
    n_free = int(lines[1].split()[1])
    n_nonneg = int(lines[2].split()[1])
    psd = tuple(int(t) for t in lines[3].split()[1:])
    cone = ConeStructure(n_free, n_nonneg, psd)
    c = np.zeros(cone.dim)
    for tok in lines[4].split()[1:]:
        j, v = tok.split(":")
        c[int(j)] = float(v)
    data, ri, ci, rhs = [], [], [], []
    for r, ln in enumerate(lines[5:]):
        body = ln[3:]
        lhs, rval = body.rsplit("=", 1)
        rhs.append(float(rval))
        for tok in lhs.split():
            j, v = tok.split(":")
            ri.append(r)
            ci.append(int(j))
            data.append(float(v))
    A = sp.csr_matrix((data, (ri, ci)), shape=(len(rhs), cone.dim))
    return BlockSDPProblem(cone=cone, objective=c, A=A, b=np.asarray(rhs))
