"""Polyhedral representations of the projected convex hull
conv{(x, x^1 x^1', ..., x^R x^R'): x in X} for each application, and
vertex decompositions of points in those hulls.

A representation carries auxiliary variables z, linear equalities over z,
and per-coordinate linear expressions giving p_i and the represented X-block
entries in terms of z.  X-block entries with no expression are structurally
zero (e.g. off-diagonal products of mutually exclusive indicators).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    DisconnectedArc,
    EmptyVertexSet,
    NoPerfectMatching,
    NotAcyclic,
    NotAFlow,
    NotDoublyStochastic,
    NotFeasible,
    OddDimension,
    TooLarge,
    TooManyVertices,
)
from .moments import Partition

SUPPORT_EPS = 1e-9  # greedy peeling / matching support threshold


# ---------------------------------------------------------------------------
# Representation container

LinExpr = dict[int, float]  # aux column -> coefficient


@dataclass
class ChullRep:
    n: int
    partition: Partition
    num_aux: int
    aux_names: list[str]
    nonneg_aux: set[int]
    eqs: list[tuple[LinExpr, float]]
    p_expr: list[LinExpr]
    x_expr: dict[tuple[int, int, int], LinExpr]  # (r, a, b) with a <= b block-local
    # affine identities w0 + w'x^r = 0 holding at every vertex, keyed by r;
    # they flag forced degeneracy that the SDP builder facially reduces
    x_affine: dict[int, list[tuple[float, np.ndarray]]] = None

    def __post_init__(self):
        if self.x_affine is None:
            self.x_affine = {}

    def x_entry(self, r: int, a: int, b: int) -> LinExpr | None:
        """Expression for X^r[a, b], or None if structurally zero."""
        if a > b:
            a, b = b, a
        return self.x_expr.get((r, a, b))

    def project(self, z: np.ndarray):
        """Evaluate (p, X-blocks) at an aux vector."""
        p = np.array([sum(cf * z[c] for c, cf in e.items()) for e in self.p_expr])
        Xs = []
        for r, blk in enumerate(self.partition.blocks):
            k = len(blk)
            X = np.zeros((k, k))
            for a in range(k):
                for b in range(a, k):
                    e = self.x_entry(r, a, b)
                    v = sum(cf * z[c] for c, cf in e.items()) if e else 0.0
                    X[a, b] = X[b, a] = v
            Xs.append(X)
        return p, Xs


@dataclass
class VertexDecomposition:
    """Convex combination sum alpha_x (x, x^1 x^1', ...) over vertices of X."""

    entries: list[tuple[float, np.ndarray]]

    def weights(self) -> np.ndarray:
        return np.array([a for a, _ in self.entries])

    def points(self) -> np.ndarray:
        return np.array([x for _, x in self.entries])

    def mean(self) -> np.ndarray:
        return sum(a * x for a, x in self.entries)

    def second_moment(self) -> np.ndarray:
        """Full lifted matrix sum alpha_x x x' over all coordinates."""
        n = len(self.entries[0][1])
        X = np.zeros((n, n))
        for a, x in self.entries:
            X += a * np.outer(x, x)
        return X

    def block_second_moment(self, partition: Partition, r: int) -> np.ndarray:
        idx = list(partition.blocks[r])
        X = np.zeros((len(idx), len(idx)))
        for a, x in self.entries:
            xr = x[idx]
            X += a * np.outer(xr, xr)
        return X


def _check_weights(entries, context: str):
    total = sum(a for a, _ in entries)
    if abs(total - 1.0) > 1e-9:
        raise NotFeasible(f"{context}: weights sum to {total}, not 1")
    return entries


# ---------------------------------------------------------------------------
# Interval-partition hull for the scheduling polytope

def _interval_rep(partition: Partition) -> ChullRep:
    """Shared t_kj machinery for singleton or consecutive-pair partitions.

    Variables t[k, j] over integer intervals [k, j] of {1, ..., n+1} with
    coverage constraints; represents p_i, X_ii for all i and the cross term
    X_{i,i+1} for blocks {i, i+1}.
    """
    n = partition.n
    col: dict[tuple[int, int], int] = {}
    names = []
    for k in range(1, n + 2):
        for j in range(k, n + 2):
            if k == n + 1 and j == n + 1:
                continue  # covers no constrained position; pure slack
            col[(k, j)] = len(names)
            names.append(f"t[{k},{j}]")
    eqs: list[tuple[LinExpr, float]] = []
    for i in range(1, n + 1):
        cover = {col[(k, j)]: 1.0 for k in range(1, i + 1) for j in range(i, n + 2)}
        eqs.append((cover, 1.0))
    p_expr: list[LinExpr] = []
    diag_expr: list[LinExpr] = []
    for i in range(1, n + 1):
        pe: LinExpr = {}
        de: LinExpr = {}
        for k in range(1, i + 1):
            for j in range(i, n + 2):
                if j - i:
                    pe[col[(k, j)]] = float(j - i)
                    de[col[(k, j)]] = float((j - i) ** 2)
        p_expr.append(pe)
        diag_expr.append(de)
    x_expr: dict[tuple[int, int, int], LinExpr] = {}
    for r, blk in enumerate(partition.blocks):
        for a, i0 in enumerate(blk):
            x_expr[(r, a, a)] = diag_expr[i0]
        if len(blk) == 2:
            i = blk[0] + 1  # 1-based odd index
            ce: LinExpr = {}
            for k in range(1, i + 1):
                for j in range(i + 1, n + 2):
                    v = float((j - i) * (j - (i + 1)))
                    if v:
                        ce[col[(k, j)]] = v
            x_expr[(r, 0, 1)] = ce
        elif len(blk) > 2:
            raise DimensionMismatch("interval representation supports blocks of size 1 or 2")
    return ChullRep(
        n=n,
        partition=partition,
        num_aux=len(names),
        aux_names=names,
        nonneg_aux=set(range(len(names))),
        eqs=eqs,
        p_expr=p_expr,
        x_expr=x_expr,
    )


def interval_partition_rep(n: int) -> ChullRep:
    """Hull representation for the scheduling polytope under the
    consecutive-pair partition {1,2}, {3,4}, ...; n must be even."""
    if n < 2 or n % 2 != 0:
        raise OddDimension(f"pairing needs even n >= 2, got {n}")
    return _interval_rep(Partition.pairs(n))


def enumerate_interval_partitions(n: int) -> list[np.ndarray]:
    """All 2^n vertices of the scheduling polytope, one per interval
    partition of {1, ..., n+1}.  Cut set bitmasks enumerate partitions."""
    if n > 20:
        raise TooLarge(f"2^{n} vertices; refusing n > 20")
    out = []
    for mask in range(1 << n):
        # bit i-1 set <=> a cut between positions i and i+1 (1-based)
        bounds = [1]
        for i in range(1, n + 1):
            if mask >> (i - 1) & 1:
                bounds.append(i + 1)
        bounds.append(n + 2)
        x = np.zeros(n, dtype=float)
        for bi in range(len(bounds) - 1):
            k, j = bounds[bi], bounds[bi + 1] - 1  # interval [k, j]
            for i in range(k, min(j, n) + 1):
                x[i - 1] = j - i
        out.append(x)
    return out


def interval_vertex_t(x: np.ndarray) -> dict[tuple[int, int], float]:
    """The 0/1 interval indicator T_kj of a vertex x (inverse of the
    bijection); the inert trailing singleton [n+1, n+1] is omitted."""
    n = len(x)
    t: dict[tuple[int, int], float] = {}
    i = 1
    while i <= n:
        j = i + int(round(x[i - 1]))
        t[(i, j)] = 1.0
        i = j + 1
    return t


def decompose_interval_point(t: dict[tuple[int, int], float] | np.ndarray,
                             n: int, eps: float = SUPPORT_EPS) -> VertexDecomposition:
    """Greedy peeling of a feasible t into a convex combination of interval
    partitions.  At each round, walk from position 1 choosing the interval
    with the smallest right endpoint that has mass, peel off the minimum
    mass along the chain, and repeat."""
    work: dict[tuple[int, int], float] = {}
    if isinstance(t, np.ndarray):
        if t.shape != (n + 1, n + 1):
            raise DimensionMismatch(f"t array must be ({n+1}, {n+1})")
        for k in range(1, n + 2):
            for j in range(k, n + 2):
                v = float(t[k - 1, j - 1])
                if v > eps:
                    work[(k, j)] = v
    else:
        work = {kj: float(v) for kj, v in t.items() if v > eps}

    entries: list[tuple[float, np.ndarray]] = []
    total = 1.0
    residual_ok = 1e-6  # leftover mass below this is solver noise, not error
    while total > eps:
        # prefer intervals carrying a non-trivial share of the remaining mass
        # so that noise-level slivers cannot lead the chain into a dead end
        thr = max(eps, 1e-4 * total)
        chain = []
        pos = 1
        broken = False
        while pos <= n:  # positions beyond n are unconstrained
            js = sorted(j for (k, j) in work if k == pos and work[(k, j)] > thr)
            if not js:
                js = sorted(j for (k, j) in work if k == pos)
            if not js:
                if total <= residual_ok:
                    broken = True
                    break
                raise NotFeasible(
                    f"no interval starting at {pos} has mass; input violates the "
                    "coverage constraints beyond tolerance"
                )
            j = js[0]
            chain.append((pos, j))
            pos = j + 1
        if broken:
            break
        lam = min(work[kj] for kj in chain)
        lam = min(lam, total)
        x = np.zeros(n)
        for k, j in chain:
            for i in range(k, min(j, n) + 1):
                x[i - 1] = j - i
        entries.append((lam, x))
        for kj in chain:
            work[kj] -= lam
            if work[kj] <= eps:
                del work[kj]
        total -= lam
    if not entries:
        raise NotFeasible("no mass to decompose")
    # fold residual mass into the weights by normalization
    w = sum(a for a, _ in entries)
    entries = [(a / w, x) for a, x in entries]
    return VertexDecomposition(_check_weights(entries, "interval peel"))


# ---------------------------------------------------------------------------
# DAG flow hull

@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph with source 0 and sink m-1; arcs are ordered."""

    m: int
    arcs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        order = self.topological_order()
        if order is None:
            raise NotAcyclic("graph has a directed cycle")
        on_src = self._reachable_from(0)
        on_snk = self._coreachable_to(self.m - 1)
        for (u, v) in self.arcs:
            if u not in on_src or v not in on_snk:
                raise DisconnectedArc(f"arc ({u}, {v}) lies on no 0 -> {self.m - 1} path")

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    def out_arcs(self, u: int) -> list[int]:
        return [i for i, (a, _) in enumerate(self.arcs) if a == u]

    def in_arcs(self, v: int) -> list[int]:
        return [i for i, (_, b) in enumerate(self.arcs) if b == v]

    def topological_order(self) -> list[int] | None:
        indeg = [0] * self.m
        for _, v in self.arcs:
            indeg[v] += 1
        ready = sorted(u for u in range(self.m) if indeg[u] == 0)
        order = []
        while ready:
            u = ready.pop(0)
            order.append(u)
            for (a, b) in self.arcs:
                if a == u:
                    indeg[b] -= 1
                    if indeg[b] == 0:
                        ready.append(b)
            ready.sort()
        return order if len(order) == self.m else None

    def _reachable_from(self, s: int) -> set[int]:
        seen = {s}
        stack = [s]
        while stack:
            u = stack.pop()
            for (a, b) in self.arcs:
                if a == u and b not in seen:
                    seen.add(b)
                    stack.append(b)
        return seen

    def _coreachable_to(self, t: int) -> set[int]:
        seen = {t}
        stack = [t]
        while stack:
            u = stack.pop()
            for (a, b) in self.arcs:
                if b == u and a not in seen:
                    seen.add(a)
                    stack.append(a)
        return seen

    def incoming_partition(self) -> Partition:
        """Arcs grouped by head node, r = 1..m-1 (node 0 has no in-arcs)."""
        blocks = []
        for r in range(1, self.m):
            blk = tuple(self.in_arcs(r))
            if blk:
                blocks.append(blk)
        return Partition(self.n_arcs, tuple(blocks))


def parse_dag_edge_list(text: str) -> Dag:
    """Edge-list format: one "u v" pair per line; nodes 0..m-1."""
    arcs = []
    mx = -1
    for ln in text.strip().splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        u, v = (int(tok) for tok in ln.split())
        arcs.append((u, v))
        mx = max(mx, u, v)
    return Dag(m=mx + 1, arcs=tuple(arcs))


def _node_unavoidable(dag: Dag, node: int) -> bool:
    """True when every source-sink path passes through ``node``."""
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for (a, b) in dag.arcs:
            if a == u and b != node and b not in seen:
                seen.add(b)
                stack.append(b)
    return (dag.m - 1) not in seen


def flow_rep(dag: Dag) -> ChullRep:
    """Unit-flow hull: p on arcs with conservation; per head node r the block
    X^r has diagonal equal to the incoming arc flows and zero off-diagonals.
    Nodes crossed by every path carry the identity "incoming flow = 1",
    recorded for facial reduction."""
    n = dag.n_arcs
    partition = dag.incoming_partition()
    names = [f"p[{u}->{v}]" for (u, v) in dag.arcs]
    eqs: list[tuple[LinExpr, float]] = []
    for node in range(dag.m):
        expr: LinExpr = {}
        for i in dag.out_arcs(node):
            expr[i] = expr.get(i, 0.0) + 1.0
        for i in dag.in_arcs(node):
            expr[i] = expr.get(i, 0.0) - 1.0
        rhs = 1.0 if node == 0 else (-1.0 if node == dag.m - 1 else 0.0)
        eqs.append((expr, rhs))
    p_expr: list[LinExpr] = [{i: 1.0} for i in range(n)]
    x_expr: dict[tuple[int, int, int], LinExpr] = {}
    x_affine: dict[int, list[tuple[float, np.ndarray]]] = {}
    node_of_block = []
    for r, blk in enumerate(partition.blocks):
        for a, arc in enumerate(blk):
            x_expr[(r, a, a)] = {arc: 1.0}
        node_of_block.append(dag.arcs[blk[0]][1])
    for r, blk in enumerate(partition.blocks):
        if _node_unavoidable(dag, node_of_block[r]):
            x_affine[r] = [(-1.0, np.ones(len(blk)))]
    return ChullRep(n=n, partition=partition, num_aux=n, aux_names=names,
                    nonneg_aux=set(range(n)), eqs=eqs, p_expr=p_expr, x_expr=x_expr,
                    x_affine=x_affine)


def enumerate_paths(dag: Dag, limit: int = 4096) -> list[np.ndarray]:
    """All 0 -> m-1 paths as arc indicator vectors."""
    out: list[np.ndarray] = []

    def walk(u: int, used: list[int]):
        if len(out) > limit:
            raise TooLarge(f"more than {limit} paths")
        if u == dag.m - 1:
            x = np.zeros(dag.n_arcs)
            x[used] = 1.0
            out.append(x)
            return
        for i in dag.out_arcs(u):
            walk(dag.arcs[i][1], used + [i])

    walk(0, [])
    return out


def decompose_flow(p, dag: Dag, eps: float = SUPPORT_EPS) -> VertexDecomposition:
    """Peel a unit source-sink flow into at most |arcs| path indicators."""
    p = np.asarray(p, dtype=float).copy()
    if p.shape != (dag.n_arcs,):
        raise DimensionMismatch("flow length does not match arc count")
    if np.any(p < -1e-9):
        raise NotAFlow("negative arc flow")
    for node in range(dag.m):
        net = sum(p[i] for i in dag.out_arcs(node)) - sum(p[i] for i in dag.in_arcs(node))
        target = 1.0 if node == 0 else (-1.0 if node == dag.m - 1 else 0.0)
        if abs(net - target) > 1e-7:
            raise NotAFlow(f"conservation violated at node {node} by {net - target:.2e}")
    entries: list[tuple[float, np.ndarray]] = []
    total = 1.0
    while total > eps:
        thr = max(eps, 1e-4 * total)
        path = []
        u = 0
        dead = False
        while u != dag.m - 1:
            cands = [i for i in dag.out_arcs(u) if p[i] > thr]
            if not cands:
                cands = [i for i in dag.out_arcs(u) if p[i] > eps]
            if not cands:
                if total <= 1e-6:
                    dead = True
                    break
                raise NotAFlow(f"stuck at node {u}: no outgoing flow above threshold")
            i = cands[0]  # smallest arc index, deterministic
            path.append(i)
            u = dag.arcs[i][1]
        if dead:
            break
        lam = min(total, min(p[i] for i in path))
        x = np.zeros(dag.n_arcs)
        x[path] = 1.0
        entries.append((lam, x))
        p[path] -= lam
        total -= lam
    if not entries:
        raise NotAFlow("no mass to decompose")
    w = sum(a for a, _ in entries)
    entries = [(a / w, x) for a, x in entries]
    return VertexDecomposition(_check_weights(entries, "flow peel"))


# ---------------------------------------------------------------------------
# Birkhoff polytope

def birkhoff_rep(m: int) -> ChullRep:
    """Doubly stochastic hull; per-row blocks with diagonal = row entries."""
    if m < 1:
        raise DimensionMismatch("m must be >= 1")
    n = m * m
    partition = Partition(n, tuple(tuple(r * m + j for j in range(m)) for r in range(m)))
    names = [f"p[{i},{j}]" for i in range(m) for j in range(m)]
    eqs: list[tuple[LinExpr, float]] = []
    for i in range(m):
        eqs.append(({i * m + j: 1.0 for j in range(m)}, 1.0))
    for j in range(m):
        eqs.append(({i * m + j: 1.0 for i in range(m)}, 1.0))
    p_expr: list[LinExpr] = [{i: 1.0} for i in range(n)]
    x_expr: dict[tuple[int, int, int], LinExpr] = {}
    for r in range(m):
        for a in range(m):
            x_expr[(r, a, a)] = {r * m + a: 1.0}
    # each row assigns exactly one job: sum_j x_rj = 1 at every vertex
    x_affine = {r: [(-1.0, np.ones(m))] for r in range(m)}
    return ChullRep(n=n, partition=partition, num_aux=n, aux_names=names,
                    nonneg_aux=set(range(n)), eqs=eqs, p_expr=p_expr, x_expr=x_expr,
                    x_affine=x_affine)


def enumerate_permutations(m: int, limit: int = 4096) -> list[np.ndarray]:
    if math.factorial(m) > limit:
        raise TooLarge(f"{m}! permutation matrices exceed {limit}")
    out = []
    for perm in itertools.permutations(range(m)):
        x = np.zeros(m * m)
        for i, j in enumerate(perm):
            x[i * m + j] = 1.0
        out.append(x)
    return out


def _find_matching(P: np.ndarray, eps: float) -> list[int] | None:
    """Perfect matching on the support {P > eps} via augmenting paths."""
    m = P.shape[0]
    match_col = [-1] * m  # column -> row

    def try_row(i: int, seen: set[int]) -> bool:
        for j in range(m):
            if P[i, j] > eps and j not in seen:
                seen.add(j)
                if match_col[j] == -1 or try_row(match_col[j], seen):
                    match_col[j] = i
                    return True
        return False

    for i in range(m):
        if not try_row(i, set()):
            return None
    perm = [-1] * m
    for j, i in enumerate(match_col):
        perm[i] = j
    return perm


def decompose_doubly_stochastic(p, m: int, eps: float = SUPPORT_EPS) -> VertexDecomposition:
    """Greedy Birkhoff decomposition via perfect matchings on the support."""
    P = np.asarray(p, dtype=float).reshape(m, m).copy()
    if np.any(P < -1e-9):
        raise NotDoublyStochastic("negative entry")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-7 or np.max(np.abs(P.sum(axis=0) - 1.0)) > 1e-7:
        raise NotDoublyStochastic("row/column sums differ from 1 beyond tolerance")
    entries: list[tuple[float, np.ndarray]] = []
    total = 1.0
    while total > eps:
        perm = _find_matching(P, eps)
        if perm is None:
            # thin numerical support; one retry with a coarser threshold
            perm = _find_matching(P, eps * 100)
            if perm is None:
                raise NoPerfectMatching(
                    "support has no perfect matching; retry with a larger support threshold"
                )
        lam = min(total, min(P[i, perm[i]] for i in range(m)))
        x = np.zeros(m * m)
        for i in range(m):
            x[i * m + perm[i]] = 1.0
            P[i, perm[i]] -= lam
        entries.append((lam, x))
        total -= lam
    w = sum(a for a, _ in entries)
    entries = [(a / w, x) for a, x in entries]
    return VertexDecomposition(_check_weights(entries, "birkhoff peel"))


# ---------------------------------------------------------------------------
# Explicit vertex enumeration

def explicit_enumeration_rep(vertices: list[np.ndarray], partition: Partition,
                             max_vertices: int = 4096) -> ChullRep:
    """Hull as an explicit convex combination over an enumerated vertex list.

    Represents every X^r entry, and additionally exposes the full lifted
    matrix through ``full_x_expr`` on the returned object for callers that
    need cross-block products."""
    if len(vertices) == 0:
        raise EmptyVertexSet("vertex list is empty")
    if len(vertices) > max_vertices:
        raise TooManyVertices(f"{len(vertices)} vertices exceed the guard {max_vertices}")
    n = partition.n
    V = len(vertices)
    names = [f"alpha[{v}]" for v in range(V)]
    eqs: list[tuple[LinExpr, float]] = [({v: 1.0 for v in range(V)}, 1.0)]
    p_expr: list[LinExpr] = []
    for i in range(n):
        p_expr.append({v: float(vertices[v][i]) for v in range(V) if vertices[v][i] != 0.0})
    x_expr: dict[tuple[int, int, int], LinExpr] = {}
    for r, blk in enumerate(partition.blocks):
        for a in range(len(blk)):
            for b in range(a, len(blk)):
                i, j = blk[a], blk[b]
                e = {v: float(vertices[v][i] * vertices[v][j]) for v in range(V)
                     if vertices[v][i] * vertices[v][j] != 0.0}
                x_expr[(r, a, b)] = e
    # affine identities per block detected from the vertex list itself
    x_affine: dict[int, list[tuple[float, np.ndarray]]] = {}
    for r, blk in enumerate(partition.blocks):
        rows = np.column_stack([np.ones(V)] + [np.array([vertices[v][i] for v in range(V)])
                                               for i in blk])
        _, sv, Vt = np.linalg.svd(rows, full_matrices=True)
        tol = max(1.0, sv[0] if sv.size else 1.0) * 1e-10
        null = [Vt[q] for q in range(Vt.shape[0]) if q >= len(sv) or sv[q] <= tol]
        ids = [(float(w[0]), np.asarray(w[1:], dtype=float)) for w in null]
        if ids:
            x_affine[r] = ids
    rep = ChullRep(n=n, partition=partition, num_aux=V, aux_names=names,
                   nonneg_aux=set(range(V)), eqs=eqs, p_expr=p_expr, x_expr=x_expr,
                   x_affine=x_affine)
    full: dict[tuple[int, int], LinExpr] = {}
    for i in range(n):
        for j in range(i, n):
            full[(i, j)] = {v: float(vertices[v][i] * vertices[v][j]) for v in range(V)
                            if vertices[v][i] * vertices[v][j] != 0.0}
    rep.full_x_expr = full  # type: ignore[attr-defined]
    rep.vertices = [np.asarray(v, dtype=float) for v in vertices]  # type: ignore[attr-defined]
    return rep
