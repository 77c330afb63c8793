"""Worst-case expected longest path in a DAG with mean and per-node
incoming-arc second-moment blocks."""

from __future__ import annotations

import numpy as np

from . import chull, reduced
from .chull import Dag, parse_dag_edge_list  # noqa: F401  (public API)
from .conic import SolverSettings
from .errors import DimensionMismatch, PartitionMismatch
from .moments import MomentSpec


def longest_path_det(dag: Dag, c) -> float:
    """Deterministic longest 0 -> m-1 path length by dynamic programming
    over a topological order."""
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.shape != (dag.n_arcs,):
        raise DimensionMismatch("arc length vector does not match arc count")
    order = dag.topological_order()
    value = np.full(dag.m, -np.inf)
    value[0] = 0.0
    for u in order:
        if value[u] == -np.inf:
            continue
        for i in dag.out_arcs(u):
            v = dag.arcs[i][1]
            value[v] = max(value[v], value[u] + c[i])
    return float(value[dag.m - 1])


def zpath_bound(dag: Dag, spec: MomentSpec,
                settings: SolverSettings | None = None) -> tuple[float, reduced.ReducedSolution]:
    """Worst-case expected longest path; the moment partition must group
    arcs by head node."""
    expected = dag.incoming_partition()
    if spec.partition != expected:
        raise PartitionMismatch(
            "moment partition must group arcs by the node they enter "
            f"(expected blocks {expected.blocks})"
        )
    rs = reduced.solve_bound(spec, chull.flow_rep(dag), settings=settings)
    return rs.z_star, rs


def path_enumeration_oracle(dag: Dag, c) -> float:
    """Brute-force longest path over all enumerated source-sink paths."""
    c = np.asarray(c, dtype=float)
    return max(float(c @ x) for x in chull.enumerate_paths(dag))
