"""Command-line entry point: ``dreamhop <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .coupling import Setting, build_information_matrix, dreaming_kernel, save_coupling
from .data_gen import (STREAM_EXAMPLES, STREAM_PATTERNS, ParameterDomainError, RngSpec, load_dataset,
                       make_examples, make_ground_truths, save_dataset)
from .retrieval_theory import (GA_THRESHOLD, RetrievalScenario, Scenario, ga_validity_bound, m1_theory, moments,
                               parse_sweep, predict_curve)
from .simulation import SimParams, empirical_spectrum_histogram, retrieval_sweep, se_trials
from .spectral_theory import (QuadratureRule, bulk_density, check_normalization, density_grid, law_for,
                              se_theory)


def _floats(text: str) -> list[float]:
    """'0:1:0.1' (inclusive) or '0.1,0.2'."""
    return [float(v) for v in parse_sweep(f"v={text}")[1]]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",")]


def _out_path(arg: str | None, name: str) -> Path:
    if arg:
        return Path(arg)
    return ex.default_output_dir() / name


def _emit(rows: list[dict], columns: list[str], out: str | None) -> None:
    """Write CSV to ``out`` or stdout when out is None or '-'."""
    data = ex.csv_bytes(rows, columns)
    if out in (None, "-"):
        sys.stdout.write(data.decode())
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_bytes(data)


# -- coupling ---------------------------------------------------------------

def cmd_coupling(args) -> int:
    rng = RngSpec(args.seed)
    if args.dataset:
        gt, examples, meta = load_dataset(args.dataset)
        setting = Setting(args.setting or meta.get("setting") or "storing")
    else:
        setting = Setting(args.setting or "storing")
        gt = make_ground_truths(args.N, int(round(args.alpha * args.N)), rng.child(STREAM_PATTERNS))
        examples = None
        if setting is not Setting.STORING:
            examples = make_examples(gt, args.M, args.r, rng.child(STREAM_EXAMPLES))
        if args.save_dataset:
            save_dataset(args.save_dataset, gt, examples, seed=args.seed, setting=setting.value)
    data = gt if setting is Setting.STORING else examples
    kernel = dreaming_kernel(build_information_matrix(data, setting))
    J = kernel.dense(args.t)
    out = _out_path(args.out, "coupling")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_coupling(out, J, seed=args.seed)
    print(f"wrote {out.with_suffix('.bin')} (N={J.N}, t={args.t}, setting={setting.value})")
    return 0


# -- theory -----------------------------------------------------------------

def cmd_theory(args) -> int:
    law = law_for(args.setting, args.t, args.alpha, args.r)
    ok, err = check_normalization(law) if law.degenerate_bulk is None else (True, 0.0)
    if not ok:
        print(f"warning: bulk normalization off by {err:.2e}", file=sys.stderr)
    _emit(density_grid(law, args.grid), ["lambda", "density", "peak_location", "peak_mass"], args.out)
    return 0


def cmd_retrieval(args) -> int:
    kind = Scenario(args.scenario)
    name, grid = parse_sweep(args.sweep)
    sc = RetrievalScenario(kind, args.alpha, args.t, p=args.p, r=args.r)
    rows = predict_curve(sc, grid)
    _emit(rows, ["x", "m1_theory", "ga_bound"], args.out)
    flagged = [r["x"] for r in rows if r["ga_flag"]]
    if flagged:
        print(f"note: Gaussian approximation questionable (bound > {GA_THRESHOLD}) "
              f"at {name} in {flagged}", file=sys.stderr)
    return 0


# -- simulate ---------------------------------------------------------------

SIM_KEYS = ("kind", "setting", "N", "alpha", "r", "M", "t", "p", "trials", "seed", "bins", "jobs", "zero_diagonal")


def _simulate(cfg: dict) -> tuple[list[dict], list[str], dict]:
    kind, setting = cfg["kind"], Setting(cfg["setting"])
    ts = cfg["t"]
    if kind == "retrieval":
        xs = cfg["p"] if setting is Setting.STORING else cfg["r"]
        params = SimParams(setting, cfg["N"], cfg["alpha"], M=cfg["M"])
        res = retrieval_sweep(params, ts, xs, cfg["trials"], cfg["seed"], jobs=cfg["jobs"],
                              zero_diagonal=cfg["zero_diagonal"])
        rows = []
        for (t, x), tr in res.items():
            sc_kind = Scenario.STORING_ATTRACTIVENESS if setting is Setting.STORING else Scenario(f"{setting.value}-attractiveness")
            sc = RetrievalScenario(sc_kind, cfg["alpha"], t).with_x(x)
            th = m1_theory(moments(sc)) if (x > 0 or setting is Setting.STORING) and not cfg["zero_diagonal"] else None
            rows.append({"t": t, "x": x, "m0": tr.m0, "m0_stderr": tr.m0_stderr, "m1": tr.m1,
                         "m1_stderr": tr.m1_stderr, "delta_mean": tr.delta_mean, "delta_m2": tr.delta_m2,
                         "delta_m3c": tr.delta_m3c, "m1_theory": th,
                         "ga_bound": ga_validity_bound(sc.law, sc.probe_overlap),
                         "m1_var_between": tr.m1_var_between, "m1_var_within": tr.m1_var_within,
                         "trials": tr.trials, "probes": tr.probes})
        return rows, list(rows[0]), {}
    if kind == "spectrum":
        rows, extra = [], {"reports": []}
        for t in ts:
            for r in cfg["r"]:
                params = SimParams(setting, cfg["N"], cfg["alpha"], t, r=r, M=cfg["M"])
                law = law_for(setting, t, cfg["alpha"], r)
                for trial in range(cfg["trials"]):
                    rep = empirical_spectrum_histogram(params, bins=cfg["bins"], seed=cfg["seed"], trial=trial)
                    centers = 0.5 * (rep.hist_edges[1:] + rep.hist_edges[:-1])
                    law_d = law.alpha * bulk_density(law, centers) if law.degenerate_bulk is None else np.zeros_like(centers)
                    for lo, hi, d, ld in zip(rep.hist_edges[:-1], rep.hist_edges[1:], rep.hist_density, law_d):
                        rows.append({"t": t, "r": r, "trial": trial, "bin_left": float(lo), "bin_right": float(hi),
                                     "density": float(d), "law_bulk_density": float(ld)})
                    extra["reports"].append({"t": t, "r": r, "trial": trial, "w1": rep.w1, "peak_location": rep.peak_location,
                                             "peak_mass": rep.peak_mass, "low_cluster_mean": rep.low_cluster_mean,
                                             "zero_count": rep.zero_count})
        return rows, list(rows[0]), extra
    if kind == "se":
        rows = []
        for r in cfg["r"]:
            res = se_trials(setting, cfg["N"], cfg["alpha"], r, ts, cfg["Ms"], cfg["trials"], cfg["seed"])
            for (t, M), (mean, se) in res.items():
                rows.append({"t": t, "r": r, "M": M, "se_mean": mean, "se_stderr": se,
                             "se_theory": se_theory(setting, cfg["alpha"], r, t)})
        return rows, ["t", "r", "M", "se_mean", "se_stderr", "se_theory"], {}
    raise ParameterDomainError(f"unknown simulation {kind!r}")


def cmd_simulate(args) -> int:
    if args.from_metadata:
        cfg = json.loads(Path(args.from_metadata).read_text())["config"]
    else:
        cfg = {"kind": args.kind, "setting": args.setting, "N": args.N, "alpha": args.alpha,
               "r": _floats(args.r), "M": args.M, "Ms": _ints(args.Ms) if args.Ms else [args.M],
               "t": _floats(args.t), "p": _floats(args.p), "trials": args.trials, "seed": args.seed,
               "bins": args.bins, "jobs": args.jobs, "zero_diagonal": args.zero_diagonal}
    rows, columns, extra = _simulate(cfg)
    out = _out_path(args.out, "results.csv")
    ex.write_csv(out, rows, columns)
    meta = ex.write_metadata(out, cfg, {"command": "simulate", **extra})
    print(f"wrote {out} and {meta}")
    return 0


# -- reproduce / verify ---------------------------------------------------------

def cmd_reproduce(args) -> int:
    if args.from_metadata:
        cfg = ex.config_from_metadata(args.from_metadata)
        if args.out_dir:
            cfg.out_dir = args.out_dir
    else:
        file_values = ex.load_config_file(args.config) if args.config else {}
        flags = {"panel": args.panel or args.row, "settings": args.settings.split(",") if args.settings else None,
                 "N": args.N, "alphas": _floats(args.alpha) if args.alpha else None,
                 "rs": _floats(args.r) if args.r else None, "ts": _floats(args.t) if args.t else None,
                 "ps": _floats(args.p) if args.p else None, "Ms": _ints(args.Ms) if args.Ms else None,
                 "M": args.M, "trials": args.trials, "bins": args.bins, "seed": args.seed,
                 "simulate": False if args.no_sim else None, "jobs": args.jobs,
                 "memory_limit": args.memory_limit * 1e9 if args.memory_limit else None,
                 "max_runtime": args.max_runtime, "force": True if args.force else None,
                 "svg": True if args.svg else None, "quad_nodes": args.quad_nodes, "out_dir": args.out_dir}
        cfg = ex.merge_config(args.experiment, file_values, flags)
    try:
        paths = ex.reproduce(cfg)
    except ex.InfeasibleExperiment as err:
        print(f"refused: {err}", file=sys.stderr)
        return 3
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_verify(args) -> int:
    rule = QuadratureRule(n=args.quad_nodes, adaptive=False) if args.quad_nodes else QuadratureRule()
    checks = ex.verify(args.level, rule, args.seed)
    rep = ex.report(checks)
    text = json.dumps(rep, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.3g} (tol {c.tolerance:.3g}) {c.detail}",
              file=sys.stderr)
    if not args.out:
        print(text)
    if not rep["passed"]:
        print(f"failed checks: {', '.join(rep['failed'])}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dreamhop", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("coupling", help="build and dump a coupling matrix")
    c.add_argument("action", choices=["build"])
    c.add_argument("--setting", choices=[s.value for s in Setting],
                   help="default: storing, or the setting recorded in --dataset")
    c.add_argument("--N", type=int, default=500)
    c.add_argument("--alpha", type=float, default=0.1)
    c.add_argument("--r", type=float, default=1.0)
    c.add_argument("--M", type=int, default=50)
    c.add_argument("--t", type=float, default=0.0)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--dataset", help="load ground truths/examples from a dump instead of sampling")
    c.add_argument("--save-dataset", help="also dump the sampled dataset here")
    c.add_argument("--out")
    c.set_defaults(func=cmd_coupling)

    th = sub.add_parser("theory", help="limiting spectral densities")
    th.add_argument("action", choices=["density"])
    th.add_argument("--setting", choices=[s.value for s in Setting], default="storing")
    th.add_argument("--alpha", type=float, required=True)
    th.add_argument("--r", type=float, default=1.0)
    th.add_argument("--t", type=float, default=0.0)
    th.add_argument("--grid", type=int, default=200)
    th.add_argument("--out")
    th.set_defaults(func=cmd_theory)

    rt = sub.add_parser("retrieval", help="Gaussian-approximation retrieval curves")
    rt.add_argument("action", choices=["theory"])
    rt.add_argument("--scenario", choices=[s.value for s in Scenario], required=True)
    rt.add_argument("--alpha", type=float, required=True)
    rt.add_argument("--t", type=float, default=0.0)
    rt.add_argument("--p", type=float, default=1.0)
    rt.add_argument("--r", type=float, default=1.0)
    rt.add_argument("--sweep", default="p=0:1:0.02")
    rt.add_argument("--out")
    rt.set_defaults(func=cmd_retrieval)

    sm = sub.add_parser("simulate", help="finite-N Monte Carlo")
    sm.add_argument("kind", choices=["retrieval", "spectrum", "se"])
    sm.add_argument("--setting", choices=[s.value for s in Setting], default="storing")
    sm.add_argument("--N", type=int, default=1000)
    sm.add_argument("--alpha", type=float, default=0.1)
    sm.add_argument("--r", default="1.0", help="value or grid (start:stop:step or a,b,c)")
    sm.add_argument("--M", type=int, default=100)
    sm.add_argument("--Ms", help="comma list of nested sample sizes for se")
    sm.add_argument("--t", default="0", help="value or grid")
    sm.add_argument("--p", default="1.0", help="probe overlap grid (storing retrieval)")
    sm.add_argument("--trials", type=int, default=10)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--bins", type=int, default=60)
    sm.add_argument("--jobs", type=int, default=1)
    sm.add_argument("--zero-diagonal", action="store_true", help="drop self-couplings from the fields")
    sm.add_argument("--from-metadata", help="re-run from a metadata sidecar")
    sm.add_argument("--out")
    sm.set_defaults(func=cmd_simulate)

    rp = sub.add_parser("reproduce", help="regenerate figure data")
    rp.add_argument("experiment", choices=["fig1", "fig2", "fig3", "fig4"])
    rp.add_argument("--panel")
    rp.add_argument("--row", help="alias of --panel (fig1 rows are settings)")
    rp.add_argument("--settings")
    rp.add_argument("--config", help="JSON config file; flags override it")
    rp.add_argument("--from-metadata", help="re-run from a metadata sidecar")
    rp.add_argument("--N", type=int)
    rp.add_argument("--alpha")
    rp.add_argument("--r")
    rp.add_argument("--t")
    rp.add_argument("--p")
    rp.add_argument("--Ms")
    rp.add_argument("--M", type=int)
    rp.add_argument("--trials", type=int)
    rp.add_argument("--bins", type=int)
    rp.add_argument("--seed", type=int)
    rp.add_argument("--jobs", type=int)
    rp.add_argument("--memory-limit", type=float, help="GB")
    rp.add_argument("--max-runtime", type=float, help="seconds")
    rp.add_argument("--force", action="store_true", help="ignore resource guardrails")
    rp.add_argument("--no-sim", action="store_true", help="theory columns only")
    rp.add_argument("--svg", action="store_true")
    rp.add_argument("--quad-nodes", type=int)
    rp.add_argument("--out-dir")
    rp.set_defaults(func=cmd_reproduce)

    vf = sub.add_parser("verify", help="run the verification suite")
    vf.add_argument("level", choices=["fast", "full"], nargs="?", default="fast")
    vf.add_argument("--quad-nodes", type=int, help="fixed Gauss-Legendre order (negative control)")
    vf.add_argument("--seed", type=int, default=0)
    vf.add_argument("--out")
    vf.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParameterDomainError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
