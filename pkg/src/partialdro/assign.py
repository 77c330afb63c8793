"""Worst-case expected total welfare of an optimal assignment under
per-candidate second-moment blocks."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import chull, reduced
from .conic import SolverSettings
from .errors import DimensionMismatch, PartitionMismatch
from .moments import MomentSpec, Partition


def assignment_det(C) -> float:
    """Maximum-weight perfect matching value of a square preference matrix."""
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DimensionMismatch("preference matrix must be square")
    rows, cols = linear_sum_assignment(C, maximize=True)
    return float(C[rows, cols].sum())


def assignment_brute(C) -> float:
    """Permutation enumeration check for small m."""
    C = np.asarray(C, dtype=float)
    m = C.shape[0]
    if math.factorial(m) > 10000:
        raise DimensionMismatch("brute force limited to small m")
    return max(sum(C[i, p[i]] for i in range(m)) for p in itertools.permutations(range(m)))


def _transpose_spec(spec: MomentSpec, m: int) -> MomentSpec:
    """Relabel entries (i, j) -> (j, i) so column blocks become row blocks.
    Within-block ordering is preserved, so the pi matrices carry over."""
    perm = np.array([(k % m) * m + (k // m) for k in range(m * m)])
    mu_new = np.empty(m * m)
    mu_new[perm] = spec.mu
    blocks = tuple(tuple(int(perm[i]) for i in blk) for blk in spec.partition.blocks)
    order = sorted(range(len(blocks)), key=lambda r: blocks[r][0])
    part = Partition(m * m, tuple(blocks[r] for r in order))
    pi = tuple(spec.pi[r] for r in order)
    return MomentSpec(partition=part, mu=mu_new, pi=pi)


def zlap_bound(spec: MomentSpec, transpose: bool = False,
               settings: SolverSettings | None = None) -> tuple[float, reduced.ReducedSolution]:
    """Worst-case expected optimal-assignment welfare.  The partition must
    group the m x m preference entries by candidate row; ``transpose=True``
    accepts the column-block variant by relabeling."""
    n = spec.n
    m = int(round(math.isqrt(n)))
    if m * m != n:
        raise DimensionMismatch(f"dimension {n} is not a square")
    if transpose:
        spec = _transpose_spec(spec, m)
    expected = Partition(n, tuple(tuple(r * m + j for j in range(m)) for r in range(m)))
    if spec.partition != expected:
        raise PartitionMismatch("moment partition must group entries by candidate row")
    rs = reduced.solve_bound(spec, chull.birkhoff_rep(m), settings=settings)
    return rs.z_star, rs
