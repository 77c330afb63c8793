"""Command-line front end: bound evaluation, schedule optimization, PERT and
assignment bounds, worst-case sampling, and the experiment harness that
reproduces the computational study at desk scale.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import appsched, assign, baselines, chull, moments, pert, wcdist
from .conic import SolverSettings
from .errors import ConfigInvalid, PartialDroError

RHO_GRID_DEFAULT = (-1.0, -0.7, -0.3, 0.0, 0.3, 0.7, 1.0)


def _rng_for_run(seed: int, run: int) -> np.random.Generator:
    """Philox counter-based stream: key = (seed, run) makes runs independent
    and reproducible regardless of execution order."""
    return np.random.Generator(np.random.Philox(key=(np.uint64(seed) << np.uint64(20)) + np.uint64(run)))


def _settings(args) -> SolverSettings:
    st = SolverSettings()
    if getattr(args, "tol_gap", None):
        st.gap_tol = float(args.tol_gap)
    if getattr(args, "tol_feas", None):
        st.feas_tol = float(args.tol_feas)
    return st


def _load_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = json.load(fh)
    for key in ("n", "rho", "runs", "seed", "T", "out"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    return cfg


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _write(path: str | None, text: str) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Instance generation (Section-5 style)


def random_instance(rng: np.random.Generator, n: int, rho: float,
                    mean_range=(-2.0, 2.0), var_range=(1e-6, 5.0)):
    """Means uniform on mean_range, variances uniform on var_range, adjoining
    pairs correlated at rho; |rho| = 1 admits the singular covariance."""
    mu = rng.uniform(mean_range[0], mean_range[1], size=n)
    var = rng.uniform(var_range[0], var_range[1], size=n)
    pd_tol = -1e-7 if abs(abs(rho) - 1.0) < 1e-12 else moments.DEFAULT_PD_TOL
    spec = moments.paired_from_correlation(n, mu, var, rho, pd_tol=pd_tol)
    return spec, mu, var


# ---------------------------------------------------------------------------
# Experiments


def run_bound_ratio(config: dict) -> dict:
    """Bound ratios of the mean-variance, exact partial-correlation, and DNN
    values over the enumeration baseline, on random instances at s = 0."""
    n = int(config.get("n", 6))
    runs = int(config.get("runs", 50))
    seed = int(config.get("seed", 0))
    rhos = config.get("rho_grid", config.get("rho", RHO_GRID_DEFAULT))
    if isinstance(rhos, (int, float)):
        rhos = (float(rhos),)
    workers = int(config.get("workers", 1))
    if runs < 1:
        raise ConfigInvalid("runs must be >= 1")
    if n > 9:
        raise ConfigInvalid("the enumeration denominator is limited to n <= 9")
    if any(abs(r) > 1 for r in rhos):
        raise ConfigInvalid("rho must lie in [-1, 1]")
    mean_range = tuple(config.get("mean_range", (-2.0, 2.0)))
    var_range = tuple(config.get("var_range", (1e-6, 5.0)))
    verts = chull.enumerate_interval_partitions(n)
    s0 = np.zeros(n)

    def one(task):
        # one (mu, var) draw per run index, shared across the rho grid
        rho, run = task
        rng = _rng_for_run(seed, run)
        spec, mu, var = random_instance(rng, n, rho, mean_range, var_range)
        z_exact = baselines.large_sdp_bound(spec, verts)
        z_ours, _ = appsched.zapp_bound(spec, s0)
        z_mv = appsched.mv_bound(mu, var, s0)
        z_dnn = baselines.dnn_bound(spec, s0)
        return (rho, run, z_mv / z_exact, z_ours / z_exact, z_dnn / z_exact)

    tasks = [(float(rho), run) for rho in rhos for run in range(runs)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, tasks))
    else:
        rows = [one(t) for t in tasks]
    rows.sort(key=lambda r: (r[0], r[1]))

    lines = ["rho,run,mv_ratio,ours_ratio,dnn_ratio"]
    for rho, run, mvr, ourr, dnnr in rows:
        lines.append(f"{_fmt(rho)},{run},{_fmt(mvr)},{_fmt(ourr)},{_fmt(dnnr)}")
    summary = {}
    for rho in rhos:
        sel = [r for r in rows if r[0] == float(rho)]
        for name, idx in (("mv", 2), ("ours", 3), ("dnn", 4)):
            vals = [r[idx] for r in sel]
            summary.setdefault(str(rho), {})[name] = {
                "mean": float(np.mean(vals)),
                "min": float(np.min(vals)),
                "max": float(np.max(vals)),
            }
    return {"csv": "\n".join(lines) + "\n", "summary": summary}


def run_schedule_comparison(config: dict) -> dict:
    """Optimal schedules from each formulation on the deterministic
    equal-mean instance, with the swap matrix of percentage increases."""
    n = int(config.get("n", 20))
    T = float(config.get("T", 45.0))
    rho = float(config.get("rho", -1.0))
    mean = float(config.get("mean", 2.0))
    sd = float(config.get("sd", 0.5))
    if T <= 0:
        raise ConfigInvalid("T must be positive")
    var = sd * sd
    pd_tol = -1e-7 if abs(abs(rho) - 1.0) < 1e-12 else moments.DEFAULT_PD_TOL
    spec = moments.paired_from_correlation(n, mean, var, rho, pd_tol=pd_tol)
    mu = np.full(n, mean)
    vv = np.full(n, var)

    s_pc, v_pc = appsched.optimal_schedule(spec, T)
    s_mv, v_mv = appsched.mv_schedule(mu, vv, T)
    s_dnn, v_dnn = baselines.dnn_schedule(spec, T)
    full_spec = baselines.full_covariance_spec(spec)
    s_dnnf, v_dnnf = baselines.dnn_schedule(full_spec, T)

    z_pc_at_mv, _ = appsched.zapp_bound(spec, s_mv)
    z_mv_at_pc = appsched.mv_bound(mu, vv, s_pc.s)
    swap = {
        "pc_increase_under_mv_schedule_pct": 100.0 * (z_pc_at_mv / v_pc - 1.0),
        "mv_increase_under_pc_schedule_pct": 100.0 * (z_mv_at_pc / v_mv - 1.0),
    }
    return {
        "rho": rho,
        "values": {
            "pc": v_pc,
            "mv": v_mv,
            "dnn_nonoverlapping": v_dnn,
            "dnn_full_covariance": v_dnnf,
        },
        "schedules": {
            "pc": s_pc.s.tolist(),
            "mv": s_mv.s.tolist(),
            "dnn_nonoverlapping": s_dnn.s.tolist(),
            "dnn_full_covariance": s_dnnf.s.tolist(),
        },
        "swap": swap,
    }


def run_timing(config: dict) -> dict:
    """Wall-clock growth of the bound formulations over an n grid; shape
    only, no absolute assertions."""
    grid = config.get("n_grid", list(range(30, 101, 10)))
    rho = float(config.get("rho", 0.5))
    mean = float(config.get("mean", 2.0))
    sd = float(config.get("sd", 0.5))
    rows = []
    for n in grid:
        n = int(n)
        spec = moments.paired_from_correlation(n, mean, sd * sd, rho)
        s0 = np.zeros(n)
        t0 = time.perf_counter()
        appsched.zapp_bound(spec, s0)
        t_ours = time.perf_counter() - t0
        t0 = time.perf_counter()
        appsched.mv_bound(np.full(n, mean), np.full(n, sd * sd), s0)
        t_mv = time.perf_counter() - t0
        rows.append({"n": n, "ours_sec": t_ours, "mv_sec": t_mv})
    return {"rows": rows}


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_bound(args) -> int:
    with open(args.moments) as fh:
        spec = moments.from_json(fh.read(), pd_tol=float(args.pd_tol))
    s = np.zeros(spec.n) if args.schedule is None else np.asarray(json.loads(args.schedule), dtype=float)
    value, _ = appsched.zapp_bound(spec, s, settings=_settings(args))
    _write(args.out, json.dumps({"value": value, "s": s.tolist()}) + "\n")
    return 0


def _cmd_schedule(args) -> int:
    st = _settings(args)
    T = float(args.T)
    if args.formulation in ("partial", "dnn"):
        with open(args.moments) as fh:
            spec = moments.from_json(fh.read(), pd_tol=float(args.pd_tol))
        if args.formulation == "partial":
            sch, value = appsched.optimal_schedule(spec, T, settings=st)
        else:
            sch, value = baselines.dnn_schedule(spec, T, settings=st)
    else:
        data = json.loads(open(args.moments).read()) if args.moments else {}
        mu = np.asarray(data["mu"], dtype=float)
        var = np.asarray(data["var"], dtype=float)
        if args.formulation == "mv":
            sch, value = appsched.mv_schedule(mu, var, T, settings=st)
        else:
            sch, value = appsched.socp_mv_schedule(mu, var, T, settings=st)
    _write(args.out, json.dumps({"s": sch.s.tolist(), "value": value,
                                 "formulation": args.formulation}) + "\n")
    return 0


def _cmd_pert(args) -> int:
    dag = chull.parse_dag_edge_list(open(args.dag).read())
    with open(args.moments) as fh:
        spec = moments.from_json(fh.read(), pd_tol=float(args.pd_tol))
    value, _ = pert.zpath_bound(dag, spec, settings=_settings(args))
    _write(args.out, json.dumps({"value": value}) + "\n")
    return 0


def _cmd_assign(args) -> int:
    with open(args.moments) as fh:
        spec = moments.from_json(fh.read(), pd_tol=float(args.pd_tol))
    value, _ = assign.zlap_bound(spec, transpose=args.transpose, settings=_settings(args))
    _write(args.out, json.dumps({"value": value}) + "\n")
    return 0


def _cmd_wcdist_sample(args) -> int:
    with open(args.moments) as fh:
        spec = moments.from_json(fh.read(), pd_tol=float(args.pd_tol))
    s = np.zeros(spec.n) if args.schedule is None else np.asarray(json.loads(args.schedule), dtype=float)
    value, rs = appsched.zapp_bound(spec, s, settings=_settings(args))
    t = {}
    for name, v in zip(rs.index.rep.aux_names, rs.aux):
        k, j = name[2:-1].split(",")
        t[(int(k), int(j))] = float(v)
    dec = chull.decompose_interval_point(t, spec.n)
    dist = wcdist.factor_components(spec, rs, dec)
    samples = wcdist.sample(dist, int(args.count), int(args.seed))
    lines = [",".join(_fmt(v) for v in row) for row in samples]
    _write(args.out, "\n".join(lines) + "\n")
    return 0


def _cmd_experiment(args) -> int:
    cfg = _load_config(args)
    if args.kind == "ratio":
        result = run_bound_ratio(cfg)
        out = args.out
        _write(out, result["csv"])
        sys.stderr.write(json.dumps(result["summary"], indent=1) + "\n")
    elif args.kind == "schedule":
        result = run_schedule_comparison(cfg)
        _write(args.out, json.dumps(result, indent=1) + "\n")
    else:
        result = run_timing(cfg)
        _write(args.out, json.dumps(result, indent=1) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="partialdro",
                                description="Distributionally robust bounds under "
                                            "block-diagonal moment information")
    p.add_argument("--tol-gap", dest="tol_gap", default=None)
    p.add_argument("--tol-feas", dest="tol_feas", default=None)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, schedule_flag=True):
        sp.add_argument("--moments", required=True, help="moment spec JSON file")
        sp.add_argument("--pd-tol", dest="pd_tol", default=str(moments.DEFAULT_PD_TOL))
        if schedule_flag:
            sp.add_argument("--schedule", default=None, help="JSON array of slot lengths")
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("bound", help="worst-case expected waiting time for a schedule")
    common(sp)
    sp.set_defaults(func=_cmd_bound)

    sp = sub.add_parser("schedule", help="optimal schedule under a chosen formulation")
    sp.add_argument("--formulation", choices=("partial", "mv", "socp", "dnn"), default="partial")
    sp.add_argument("--moments", required=True,
                    help="moment JSON (partial/dnn) or {mu, var} JSON (mv/socp)")
    sp.add_argument("--pd-tol", dest="pd_tol", default=str(moments.DEFAULT_PD_TOL))
    sp.add_argument("--T", required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_schedule)

    sp = sub.add_parser("pert", help="worst-case expected longest path")
    sp.add_argument("--dag", required=True, help='edge list file, "u v" per line')
    common(sp, schedule_flag=False)
    sp.set_defaults(func=_cmd_pert)

    sp = sub.add_parser("assign", help="worst-case expected assignment welfare")
    sp.add_argument("--transpose", action="store_true")
    common(sp, schedule_flag=False)
    sp.set_defaults(func=_cmd_assign)

    sp = sub.add_parser("wcdist", help="worst-case distribution operations")
    wsub = sp.add_subparsers(dest="wcommand", required=True)
    ssp = wsub.add_parser("sample", help="sample the attaining distribution (CSV)")
    common(ssp)
    ssp.add_argument("--count", default="1000")
    ssp.add_argument("--seed", default="0")
    ssp.set_defaults(func=_cmd_wcdist_sample)

    sp = sub.add_parser("experiment", help="experiment harness")
    sp.add_argument("kind", choices=("ratio", "schedule", "timing"))
    sp.add_argument("--config", default=None)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--rho", type=float, default=None)
    sp.add_argument("--runs", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--T", type=float, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigInvalid, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return 2
    except PartialDroError as exc:
        sys.stderr.write(f"solver error: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
