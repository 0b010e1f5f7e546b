"""Command-line harness: seeded runs, on-disk artifacts, markdown reports.

Every run writes three files into its output directory: results.json (full
diagnostics, stable key order, byte-identical across reruns of the same
config), results.csv (plot-ready rows, RFC 4180), and manifest.json (config
echo, version, wall time). Errors print as structured JSON on stderr and map
to exit codes: 2 for validation/usage problems, 3 for an exhausted budget.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import subprocess
import sys
import time

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import (BudgetExceeded, CltLabError, ConfigError, MissingResults)
from .seeding import child_rng, child_seed

SELFTEST_COUNT = 100


def _version_string() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"],
                             cwd=here, capture_output=True, text=True, timeout=10)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except Exception:
        pass
    try:
        from importlib.metadata import version
        return "v" + version("clt-lab")
    except Exception:
        return "unknown"


# ---------------------------------------------------------------------------
# experiment runners; each returns (payload, csv_header, csv_rows, stdout lines)


def _point_csv_rows(name: str, curve_dict: dict):
    rows = []
    for pt in curve_dict["points"]:
        est, se = pt["estimate"], pt["stderr"]
        plotted = est if est > 0 else max(est, se / 2.0)
        rows.append([name, pt["n"], f"{math.log(pt['n']):.12g}",
                     f"{est:.12g}", f"{math.log(max(plotted, 1e-300)):.12g}",
                     f"{se:.12g}", int(pt["floored"])])
    return rows


def _curve_ok(curve_dict: dict, slope_window) -> bool:
    slope = curve_dict["slope"]
    if slope_window:
        return slope_window[0] <= slope <= slope_window[1]
    theo = curve_dict["theoretical_exponent"]
    if theo is None:
        return True
    return abs(slope - theo) <= 0.12


def _run_rate(cfg: ExperimentConfig):
    from .rates import clt_distance_curve
    gen = dict(cfg.generator) if cfg.generator is not None else None
    if cfg.experiment == "ustat":
        if gen is None:
            raise ConfigError("generator: ustat experiments need a family")
        gen["kind"] = "ustat-variance"
        if not cfg.exponent_setting:
            cfg.exponent_setting = "indep_w1"
            cfg.exponent_params = {"delta": 1.0}
    if gen is None:
        gen = {"kind": "markov", "chain": cfg.chain}
    cfg.generator = gen
    curve = clt_distance_curve(cfg).to_dict()
    payload = {"experiment": cfg.experiment, "name": cfg.name, "curve": curve,
               "slope_window": cfg.slope_window,
               "ok": _curve_ok(curve, cfg.slope_window)}
    header = ["setting", "n", "log_n", "estimate", "log_estimate", "stderr",
              "floored"]
    theo = curve["theoretical_exponent"]
    lines = [f"{cfg.name}: slope {curve['slope']:+.4f} "
             f"ci [{curve['slope_ci'][0]:+.4f}, {curve['slope_ci'][1]:+.4f}]"
             + (f" theoretical {theo:+.4f}" if theo is not None else "")]
    return payload, header, _point_csv_rows(cfg.name, curve), lines


def _run_split_chain(cfg: ExperimentConfig):
    from .rates import _coerce_chain
    from .regeneration import (build_minorization, cycle_tail_fit,
                               kn_concentration, mean_cycle_length,
                               simulate_split_chain_batch)
    chain = _coerce_chain(cfg.chain)
    minor = build_minorization(chain, chain.small_set, cfg.block_m)
    grid = list(cfg.n_grid) or [1 << 12]
    horizon = max(grid)
    slack = max(int(80 * minor.m / minor.beta), 64)
    traces = simulate_split_chain_batch(chain, minor, horizon + slack,
                                        cfg.num_traces,
                                        child_seed(cfg.seed, "traces"))
    tail = cycle_tail_fit(traces, min_cycles=cfg.min_cycles)
    mu = mean_cycle_length(traces)
    rows = kn_concentration(traces, grid, q=cfg.q)
    ok = tail.r_squared >= 0.95 and tail.rho_hat < 1.0
    payload = {"experiment": cfg.experiment, "name": cfg.name,
               "beta": minor.beta, "block_m": minor.m, "mu_lambda": mu,
               "tail": dataclasses.asdict(tail), "kn": rows, "ok": ok}
    header = ["n", "mean_abs", "mean_abs_q", "ratio", "stderr"]
    csv_rows = [[r["n"], f"{r['mean_abs']:.12g}", f"{r['mean_abs_q']:.12g}",
                 f"{r['ratio']:.12g}", f"{r['stderr']:.12g}"] for r in rows]
    lines = [f"{cfg.name}: beta {minor.beta:.4f}, rho_hat {tail.rho_hat:.4f}, "
             f"R^2 {tail.r_squared:.4f}, {tail.num_cycles} cycles, "
             f"mean cycle {mu:.3f}"]
    return payload, header, csv_rows, lines


def selftest_rows(seed: int, count: int = SELFTEST_COUNT):
    """Assignment solver vs permutation brute force on random small clouds."""
    from .transport import PointCloud, wp_assignment, wp_bruteforce
    rows = []
    for i in range(count):
        rng = child_rng(seed, "selftest", i)
        m = int(rng.integers(2, 8))
        d = int(rng.integers(1, 4))
        p = float(rng.integers(1, 4))
        x = PointCloud(rng.standard_normal((m, d)))
        y = PointCloud(rng.standard_normal((m, d)))
        a = wp_assignment(x, y, p)
        b = wp_bruteforce(x, y, p)
        rows.append({"instance": i, "m": m, "d": d, "p": int(p),
                     "assignment": a, "bruteforce": b, "abs_diff": abs(a - b)})
    return rows


def _run_selftest(cfg: ExperimentConfig):
    rows = selftest_rows(cfg.seed)
    exact = sum(1 for r in rows if r["abs_diff"] <= 1e-9)
    payload = {"experiment": cfg.experiment, "name": cfg.name,
               "count": len(rows), "exact": exact, "ok": exact == len(rows)}
    header = ["instance", "m", "d", "p", "assignment", "bruteforce", "abs_diff"]
    csv_rows = [[r["instance"], r["m"], r["d"], r["p"],
                 f"{r['assignment']:.12g}", f"{r['bruteforce']:.12g}",
                 f"{r['abs_diff']:.3g}"] for r in rows]
    return payload, header, csv_rows, [f"{exact}/{len(rows)} instances exact"]


def _run_blocks(cfg: ExperimentConfig):
    from .blocks import block_partition, block_sums, optimal_block_length
    from .generators import MomentProfile, gen_m_dependent
    gen = dict(cfg.generator or {"kind": "iid", "family": "gaussian"})
    profile = MomentProfile(gen.get("family", "gaussian"), gen.get("params", {}))
    d = int(gen.get("d", 1))
    grid = list(cfg.n_grid) or [256, 512, 1024, 2048]
    rows, report = [], []
    worst_err = 0.0
    for n in grid:
        ell = optimal_block_length(n, cfg.M, cfg.p, cfg.q)
        part = block_partition(n, cfg.M, ell)
        pairs, a_vals, s_vals = [], [], []
        err = 0.0
        for r in range(cfg.block_reps):
            samp = gen_m_dependent(n, d, cfg.M, profile,
                                   child_seed(cfg.seed, "blocks", n, r))
            out = block_sums(samp, part)
            err = max(err, out["two_way_error"],
                      float(np.abs(out["S_n"] - out["A"] - out["Delta"]).max()))
            a_vals.append(out["A"])
            s_vals.append(out["S_n"])
            U = out["U"][:, 0]
            if len(U) > 1:
                pairs.extend(zip(U[:-1], U[1:]))
        worst_err = max(worst_err, err)
        crosscov = 0.0
        if len(pairs) > 2:
            arr = np.asarray(pairs)
            crosscov = float(np.corrcoef(arr[:, 0], arr[:, 1])[0, 1])
        s_var = float(np.var(np.asarray(s_vals)[:, 0], ddof=1))
        d_var = float(np.var(np.asarray(s_vals)[:, 0] - np.asarray(a_vals)[:, 0],
                             ddof=1))
        share = d_var / s_var if s_var > 0 else 0.0
        rows.append([n, cfg.M, ell, part.k, f"{err:.3g}", f"{share:.6g}",
                     f"{crosscov:.6g}"])
        report.append({"n": n, "ell": ell, "k": part.k, "identity_error": err,
                       "delta_var_share": share, "big_block_crosscorr": crosscov})
    payload = {"experiment": cfg.experiment, "name": cfg.name, "M": cfg.M,
               "p": cfg.p, "q": cfg.q, "rows": report,
               "ok": worst_err <= 1e-9}
    header = ["n", "M", "ell", "k", "identity_error", "delta_var_share",
              "big_block_crosscorr"]
    lines = [f"{cfg.name}: max identity error {worst_err:.3g} over "
             f"{len(grid)} grid points x {cfg.block_reps} realizations"]
    return payload, header, rows, lines


def _run_depfun(cfg: ExperimentConfig):
    from .rates import _coerce_chain, estimate_dependence_functional
    target = _coerce_chain(cfg.chain) if cfg.chain is not None \
        else dict(cfg.generator)
    t0 = time.time()
    results = []
    for n in cfg.n_grid:
        remaining = None
        if cfg.budget_secs is not None:
            remaining = cfg.budget_secs - (time.time() - t0)
            if remaining <= 0:
                raise BudgetExceeded(f"budget exhausted before n={n}")
        est = estimate_dependence_functional(target, n, cfg.outer_reps,
                                             cfg.inner_m,
                                             child_seed(cfg.seed, "dep", n),
                                             budget_secs=remaining)
        results.append(est)
    values = [e.value for e in results]
    ok = len(values) < 2 or values[-1] < values[0]
    payload = {"experiment": cfg.experiment, "name": cfg.name,
               "rows": [{"n": e.n, "value": e.value, "stderr": e.stderr}
                        for e in results], "ok": ok}
    header = ["n", "value", "stderr"]
    csv_rows = [[e.n, f"{e.value:.12g}", f"{e.stderr:.12g}"] for e in results]
    lines = [f"{cfg.name}: functional " +
             ", ".join(f"n={e.n}: {e.value:.4f}±{e.stderr:.4f}" for e in results)]
    return payload, header, csv_rows, lines


_RUNNERS = {
    "rate": _run_rate,
    "ustat": _run_rate,
    "split-chain": _run_split_chain,
    "transport-selftest": _run_selftest,
    "blocks": _run_blocks,
    "dependence-functional": _run_depfun,
}


# ---------------------------------------------------------------------------
# artifacts


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _write_artifacts(cfg: ExperimentConfig, payload, header, rows, wall):
    outdir = cfg.output
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "results.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, ensure_ascii=False,
                  default=_json_default)
        fh.write("\n")
    with open(os.path.join(outdir, "results.csv"), "w", encoding="utf-8",
              newline="") as fh:
        w = csv.writer(fh)               # default dialect is RFC 4180 CRLF
        w.writerow(header)
        w.writerows(rows)
    manifest = {"config": dataclasses.asdict(cfg),
                "version": _version_string(),
                "wall_time_secs": round(wall, 3)}
    with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2, ensure_ascii=False,
                  default=_json_default)
        fh.write("\n")


def run_command(args) -> int:
    overrides = {"seed": args.seed, "budget_secs": args.budget_secs,
                 "threads": args.threads, "output": args.output}
    cfg = load_config(args.config, overrides)
    if cfg.threads == 0:
        cfg.threads = int(os.environ.get("CLT_LAB_THREADS", "1"))
    t0 = time.time()
    payload, header, rows, lines = _RUNNERS[cfg.experiment](cfg)
    _write_artifacts(cfg, payload, header, rows, time.time() - t0)
    for line in lines:
        print(line)
    print(f"wrote {cfg.output}/results.json, results.csv, manifest.json")
    return 0


# ---------------------------------------------------------------------------
# report


def _find_results(root: str):
    found = []
    candidates = [root] + sorted(
        os.path.join(root, d) for d in os.listdir(root)
        if os.path.isdir(os.path.join(root, d)))
    for d in candidates:
        path = os.path.join(d, "results.json")
        if os.path.isfile(path):
            with open(path, encoding="utf-8") as fh:
                found.append(json.load(fh))
    return found


def report_command(args) -> int:
    if not os.path.isdir(args.results_dir):
        raise MissingResults(f"{args.results_dir} is not a directory")
    payloads = _find_results(args.results_dir)
    if not payloads:
        raise MissingResults(f"no results.json under {args.results_dir}")
    header = "| setting | experiment | slope | theoretical | tolerance | status |"
    rule = "|---|---|---|---|---|---|"
    body = []
    any_fail = False
    for pl in payloads:
        name = pl.get("name", "?")
        kind = pl.get("experiment", "?")
        curve = pl.get("curve")
        if curve is not None:
            slope = f"{curve['slope']:+.4f}"
            theo = curve.get("theoretical_exponent")
            theo_s = f"{theo:+.4f}" if theo is not None else "—"
            win = pl.get("slope_window")
            tol = (f"[{win[0]:+.2f}, {win[1]:+.2f}]" if win
                   else ("±0.12" if theo is not None else "—"))
            ok = _curve_ok(curve, win)
        else:
            slope, theo_s = "—", "—"
            tol = "—"
            ok = bool(pl.get("ok", False))
        any_fail = any_fail or not ok
        mark = "✓" if ok else "✗"
        body.append(f"| {name} | {kind} | {slope} | {theo_s} | {tol} | {mark} |")
    print("\n".join([header, rule] + body))
    return 1 if any_fail else 0


def selftest_command(args) -> int:
    rows = selftest_rows(args.seed)
    exact = sum(1 for r in rows if r["abs_diff"] <= 1e-9)
    print(f"{exact}/{len(rows)} instances exact")
    return 0 if exact == len(rows) else 1


def _print_error(exc: Exception, code: int):
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clt-lab",
        description="Seeded Wasserstein CLT-rate experiments on dependent data")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment config")
    run_p.add_argument("config", help="TOML experiment file")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    run_p.add_argument("--budget-secs", type=float, default=None,
                       help="override the wall-time budget")
    run_p.add_argument("--threads", type=int, default=None,
                       help="worker threads (also env CLT_LAB_THREADS)")
    run_p.add_argument("--output", default=None,
                       help="override the output directory")
    run_p.set_defaults(func=run_command)

    rep_p = sub.add_parser("report", help="summarize results directories")
    rep_p.add_argument("results_dir")
    rep_p.set_defaults(func=report_command)

    st_p = sub.add_parser("selftest",
                          help="assignment solver vs brute-force permutations")
    st_p.add_argument("--seed", type=int, default=0)
    st_p.set_defaults(func=selftest_command)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceeded as exc:
        _print_error(exc, 3)
        return 3
    except CltLabError as exc:
        _print_error(exc, 2)
        return 2


if __name__ == "__main__":
    sys.exit(main())
