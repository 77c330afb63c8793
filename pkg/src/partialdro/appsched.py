"""Distributionally robust appointment scheduling: waiting-time evaluation,
worst-case bounds under adjoining-pair correlation information, optimal
schedules, and the mean-variance bound in both its SDP and SOCP forms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import chull, conic, moments, reduced
from .conic import SolverSettings
from .errors import DimensionMismatch, OddDimension
from .moments import MomentSpec, Partition


@dataclass(frozen=True)
class Schedule:
    """Nonnegative appointment durations fitting within a horizon."""

    s: np.ndarray
    T: float

    def __post_init__(self):
        object.__setattr__(self, "s", np.asarray(self.s, dtype=float).reshape(-1))
        if np.any(self.s < -1e-12):
            raise DimensionMismatch("schedule durations must be nonnegative")
        if float(np.sum(self.s)) > self.T + 1e-9:
            raise DimensionMismatch("schedule exceeds the horizon T")


def _clean_schedule(s_raw: np.ndarray, T: float) -> Schedule:
    """Project solver output onto the budget simplex (removes 1e-8 slop)."""
    s = np.maximum(np.asarray(s_raw, dtype=float), 0.0)
    tot = float(s.sum())
    if tot > T > 0:
        s = s * (T / tot)
    return Schedule(s=s, T=float(T))


def _require_paired(spec: MomentSpec, allow_odd: bool = False) -> MomentSpec:
    n = spec.n
    if n % 2 != 0:
        if not allow_odd:
            raise OddDimension(
                f"n = {n} is odd; pass allow_odd=True to pad with a zero dummy patient"
            )
        # pad with a dummy final patient: zero mean, tiny variance, uncorrelated
        mu = np.concatenate([spec.mu, [0.0]])
        var_pad = 1e-6
        pi = list(spec.pi)
        last = spec.pi[-1]
        if spec.partition.blocks[-1] != (n - 1,):
            raise OddDimension("odd-n padding expects a trailing singleton block")
        pi[-1] = np.array([[last[0, 0], 0.0], [0.0, var_pad]])
        part = Partition.pairs(n + 1)
        return moments.validate(part, mu, pi, pd_tol=-1e-7)
    if spec.partition != Partition.pairs(n):
        raise DimensionMismatch("spec partition must be consecutive pairs {1,2}, {3,4}, ...")
    return spec


def lindley_waiting(u, s) -> float:
    """Total waiting (patients 2..n plus doctor overtime) for realized
    durations u under schedule s, by the single-server recursion."""
    u = np.asarray(u, dtype=float).reshape(-1)
    s = np.asarray(s, dtype=float).reshape(-1)
    if u.shape != s.shape:
        raise DimensionMismatch("durations and schedule lengths differ")
    w = 0.0
    total = 0.0
    for i in range(len(u)):
        if i > 0:
            w = max(w + u[i - 1] - s[i - 1], 0.0)
        total += max(w + u[i] - s[i], 0.0)
    return total


def zapp_bound(spec: MomentSpec, schedule: Schedule | np.ndarray,
               settings: SolverSettings | None = None,
               allow_odd: bool = False) -> tuple[float, reduced.ReducedSolution]:
    """Worst-case expected total waiting time for a given schedule under
    mean and adjoining-pair second-moment information."""
    spec = _require_paired(spec, allow_odd)
    s = schedule.s if isinstance(schedule, Schedule) else np.asarray(schedule, dtype=float)
    if s.shape[0] < spec.n:  # padded dummy patient gets zero slot
        s = np.concatenate([s, np.zeros(spec.n - s.shape[0])])
    rep = chull.interval_partition_rep(spec.n)
    rs = reduced.solve_bound(spec, rep, linear_offset=s, settings=settings)
    return rs.z_star, rs


def _min_over_schedules(prob: conic.BlockSDPProblem, index: reduced.ReducedIndex,
                        T: float, settings: SolverSettings | None):
    """Jointly minimize the conic dual of a bound problem over schedules in
    {s >= 0, sum s <= T}.  The schedule enters the primal objective as
    -s'p, so each p-corner column's dual equality row gains a +s_i term."""
    dual = conic.dualize(prob)
    bld = dual.builder
    spec = index.spec
    s_refs = [bld.nonneg(f"s{i}") for i in range(spec.n)]
    for r, blk in enumerate(spec.partition.blocks):
        for a, i_glob in enumerate(blk):
            ref, factor = index.p_coupling(r, a)
            col = index.builder.column(ref)
            bld.add_to_row(dual.rows_by_column[col], s_refs[i_glob], factor)
    budget = bld.nonneg("budget_slack")
    coeffs = {ref: 1.0 for ref in s_refs}
    coeffs[budget] = 1.0
    bld.row(coeffs, float(T))
    dprob = bld.build()
    sol = conic.solve(dprob, settings)
    # the returned schedule comes from the (near-)feasible iterate, so its
    # objective -pobj is an achieved value even if the gap did not close
    if not (sol.optimal or sol.acceptable()) and sol.residuals[0] > 1e-6:
        raise conic.NumericalFailure(
            f"schedule optimization failed: {sol.status.value}, gap={sol.gap:.1e}, "
            f"residuals={sol.residuals}"
        )
    s_star = bld.values(sol, s_refs)
    value = -sol.pobj  # the dual is a minimization folded into max form
    return _clean_schedule(s_star, T), value


def optimal_schedule(spec: MomentSpec, T: float,
                     settings: SolverSettings | None = None,
                     allow_odd: bool = False) -> tuple[Schedule, float]:
    """Schedule minimizing the worst-case expected waiting time under
    adjoining-pair information: the dual SDP with one 5x5 block per pair and
    interval-indexed linear inequalities, minimized jointly over s."""
    spec = _require_paired(spec, allow_odd)
    rep = chull.interval_partition_rep(spec.n)
    prob, index = reduced.build(spec, rep, linear_offset=None)
    return _min_over_schedules(prob, index, T, settings)


def mv_bound(mu, var, schedule, settings: SolverSettings | None = None) -> float:
    """Worst-case expected waiting time under mean-variance information only
    (singleton blocks, 3x3 PSD blocks over the same interval hull)."""
    spec = moments.singleton_spec(mu, var)
    s = schedule.s if isinstance(schedule, Schedule) else np.asarray(schedule, dtype=float)
    rep = chull._interval_rep(spec.partition)
    rs = reduced.solve_bound(spec, rep, linear_offset=s, settings=settings)
    return rs.z_star


def mv_schedule(mu, var, T: float,
                settings: SolverSettings | None = None) -> tuple[Schedule, float]:
    """Mean-variance optimal schedule (dual SDP form with 3x3 blocks)."""
    spec = moments.singleton_spec(mu, var)
    rep = chull._interval_rep(spec.partition)
    prob, index = reduced.build(spec, rep, linear_offset=None)
    return _min_over_schedules(prob, index, T, settings)


def socp_mv_schedule(mu, var, T: float,
                     settings: SolverSettings | None = None) -> tuple[Schedule, float]:
    """Mean-variance optimal schedule through the second-order cone program,
    with each ratio (pi_ij - alpha_i)^2 / (4 beta_i) expressed as a 2x2 PSD
    block.  Independent route that must agree with :func:`mv_schedule`."""
    mu = np.asarray(mu, dtype=float).reshape(-1)
    n = mu.shape[0]
    var = np.asarray(var, dtype=float) * np.ones(n)
    bld = conic.ProblemBuilder()
    lam = [bld.free(f"lam{i}") for i in range(n)]
    alpha = [bld.free(f"alpha{i}") for i in range(n)]
    beta = [bld.nonneg(f"beta{i}") for i in range(n)]
    s_refs = [bld.nonneg(f"s{i}") for i in range(n)]
    q: dict[tuple[int, int], conic.VarRef] = {}
    for i in range(1, n + 1):
        for j in range(i, n + 2):
            qij = bld.free(f"q[{i},{j}]")
            q[(i, j)] = qij
            B = bld.psd_block(2, f"rc[{i},{j}]")
            bld.tie_entry(B, 0, 0, {beta[i - 1]: 2.0})
            bld.tie_entry(B, 0, 1, {alpha[i - 1]: -1.0}, float(j - i))
            bld.tie_entry(B, 1, 1, {qij: 2.0})
    for k in range(1, n + 1):
        for j in range(k, n + 2):
            hi = min(n, j)
            coeffs: dict[conic.VarRef, float] = {}
            for i in range(k, hi + 1):
                coeffs[lam[i - 1]] = coeffs.get(lam[i - 1], 0.0) + 1.0
                coeffs[q[(i, j)]] = coeffs.get(q[(i, j)], 0.0) - 1.0
                coeffs[s_refs[i - 1]] = coeffs.get(s_refs[i - 1], 0.0) + float(j - i)
            slack = bld.nonneg(f"ineq[{k},{j}]")
            coeffs[slack] = -1.0
            bld.row(coeffs, 0.0)
    budget = bld.nonneg("budget_slack")
    coeffs = {r: 1.0 for r in s_refs}
    coeffs[budget] = 1.0
    bld.row(coeffs, float(T))
    for i in range(n):
        bld.obj(lam[i], -1.0)
        bld.obj(alpha[i], -float(mu[i]))
        bld.obj(beta[i], -float(mu[i] ** 2 + var[i]))
    sol = conic.solve_or_raise(bld.build(), settings, context="mean-variance SOCP")
    s_star = bld.values(sol, s_refs)
    return _clean_schedule(s_star, T), -sol.pobj


def waiting_oracle(u, s, n_max: int = 16) -> float:
    """Independent check of :func:`lindley_waiting`: maximize (u - s)'x over
    the enumerated scheduling polytope vertices."""
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    n = u.shape[0]
    if n > n_max:
        raise DimensionMismatch(f"oracle limited to n <= {n_max}")
    c = u - s
    return max(float(c @ x) for x in chull.enumerate_interval_partitions(n))
