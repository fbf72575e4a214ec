"""Figure reproduction, verification runs and result bookkeeping.

Every experiment writes plain CSV (fixed column order) plus a JSON metadata
sidecar holding the fully resolved configuration.  Feeding that sidecar back
through :func:`config_from_metadata` re-runs the experiment bit-for-bit.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .coupling import (Setting, build_information_matrix, dreaming_kernel, eigen_map, integrate_dreaming_ode,
                       spectrum)
from .data_gen import ParameterDomainError, RngSpec, make_ground_truths
from .retrieval_theory import (MomentPair, RetrievalScenario, Scenario, ga_validity_bound, m1_hopfield, m1_theory,
                               moments)
from .simulation import SimParams, empirical_spectrum_histogram, retrieval_sweep, se_trials
from .spectral_theory import (DEFAULT_RULE, QuadratureRule, check_normalization, density_grid, integrate_full,
                              law_for, mp_moment_checks, se_bulk_plus_constant, se_theory,
                              stability_integrals, stability_moments_mp)

SCHEMA_VERSION = 1
OUTPUT_ENV = "DREAMHOP_OUTPUT_DIR"
EXPERIMENTS = ("fig1", "fig2", "fig3", "fig4", "verify")
PANEL_COLUMNS = ["panel", "setting", "alpha", "t", "r", "M", "x", "theory", "sim_mean", "sim_stderr", "ga_bound"]
FLOPS_PER_SECOND = 2e10  # desk-scale guess used only for refusal decisions


class InfeasibleExperiment(RuntimeError):
    """The resource estimate exceeds the configured limits."""


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "results"))


def _grid(start: float, stop: float, step: float) -> list[float]:
    n = int(round((stop - start) / step))
    return [round(start + step * k, 12) for k in range(n + 1)]


# Values marked figure-inferred were read off the plots, not stated in text.
FIGURE_DEFAULTS = {
    "fig1": {"N": 1000, "trials": 1, "bins": 80,
             "rows": {"storing": {"alphas": [0.1, 0.3, 0.5], "rs": [1.0], "ts": [0.0, 1.0, 10.0]},
                      "supervised": {"alphas": [0.1], "rs": [0.3, 0.6, 0.9], "ts": [0.0, 1.0, 10.0]},
                      "unsupervised": {"alphas": [0.1], "rs": [0.3, 0.6, 0.9], "ts": [0.0, 1.0, 10.0]}},
             "M": 200, "figure_inferred": ["rows.*.alphas (storing)", "rows.*.rs", "rows.*.ts", "N", "M"]},
    "fig2": {"N": 1000, "Ms": [50, 100, 200], "alphas": [0.1, 0.2, 0.3], "rs": _grid(0.1, 1.0, 0.1),
             "ts": [0.0, 1.0, 10.0], "trials": 10, "figure_inferred": ["rs", "ts", "trials"]},
    "fig3": {"N": 5000, "trials": 100, "alphas": [0.1, 0.2, 0.3], "ts": [0.0, 10.0], "ps": _grid(0.0, 1.0, 0.1),
             "stability_alphas": _grid(0.05, 0.5, 0.05), "stability_ts": [0.0, 1.0, 10.0],
             "figure_inferred": ["ps", "stability_alphas", "stability_ts"]},
    "fig4": {"N": 1000, "M": 1000, "trials": 100, "alphas": [0.1, 0.2, 0.3], "rs": _grid(0.1, 1.0, 0.1),
             "ts": [0.0, 10.0], "figure_inferred": ["alphas", "rs", "ts"]},
}


@dataclass
class ExperimentConfig:
    """Resolved configuration of one experiment run.

    Grids left as None take the figure defaults.  ``settings``/``panel``
    restrict which panels are produced.
    """

    experiment: str
    panel: str | None = None
    settings: list[str] | None = None
    N: int | None = None
    alphas: list[float] | None = None
    rs: list[float] | None = None
    ts: list[float] | None = None
    ps: list[float] | None = None
    Ms: list[int] | None = None
    M: int | None = None
    trials: int | None = None
    bins: int | None = None
    seed: int = 0
    simulate: bool = True
    jobs: int = 1
    memory_limit: float | None = None  # bytes; None means physical memory
    max_runtime: float = 3600.0  # seconds, refusal threshold
    force: bool = False
    svg: bool = False
    quad_nodes: int | None = None
    level: str = "fast"
    out_dir: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ParameterDomainError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        for name in ("alphas", "rs", "ts", "ps"):
            for v in getattr(self, name) or []:
                if v < 0 or (name != "ts" and v > 1):
                    raise ParameterDomainError(f"{name} value {v} outside its domain")
        if self.trials is not None and self.trials < 1:
            raise ParameterDomainError("trials must be >= 1")

    @property
    def rule(self) -> QuadratureRule:
        if self.quad_nodes is None:
            return DEFAULT_RULE
        return QuadratureRule(n=self.quad_nodes, adaptive=False)

    def get(self, name: str, fallback=None):
        value = getattr(self, name, None)
        if value is not None:
            return value
        return FIGURE_DEFAULTS.get(self.experiment, {}).get(name, fallback)


def merge_config(experiment: str, file_values: dict | None = None, flags: dict | None = None) -> ExperimentConfig:
    """Layer defaults < config file < command-line flags (None flags are unset)."""
    known = {f.name for f in fields(ExperimentConfig)}
    merged: dict = {}
    for layer in (file_values or {}, flags or {}):
        for k, v in layer.items():
            if k not in known:
                raise ParameterDomainError(f"unknown config key {k!r}")
            if v is not None:
                merged[k] = v
    merged["experiment"] = merged.get("experiment", experiment)
    return ExperimentConfig(**merged)


def load_config_file(path) -> dict:
    return json.loads(Path(path).read_text())


def resolved(cfg: ExperimentConfig) -> dict:
    """Config with figure defaults filled in, as stored in metadata."""
    out = asdict(cfg)
    for k, v in FIGURE_DEFAULTS.get(cfg.experiment, {}).items():
        if k in out and out[k] is None:
            out[k] = v
    return out


def config_from_metadata(path) -> ExperimentConfig:
    meta = json.loads(Path(path).read_text())
    values = dict(meta["config"])
    return ExperimentConfig(**{k: values[k] for k in values if k in {f.name for f in fields(ExperimentConfig)}})


# -- output ---------------------------------------------------------------

def content_hash(data: bytes) -> str:
    """Git blob sha1 of ``data``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_bytes(rows: list[dict], columns: list[str]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue().encode()


class OrderedWriter:
    """Append-only CSV writer that flushes rows in parameter-index order.

    Rows may arrive out of order (from parallel workers); a row is written
    as soon as every lower index has been written.
    """

    def __init__(self, path, columns: list[str]):
        self.path = Path(path)
        self.columns = columns
        self._pending: dict[int, list[dict]] = {}
        self._next = 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "wb")
        self._fh.write(csv_bytes([], columns))

    def put(self, index: int, rows: list[dict]) -> None:
        self._pending[index] = rows
        while self._next in self._pending:
            data = csv_bytes(self._pending.pop(self._next), self.columns)
            self._fh.write(data.split(b"\n", 1)[1])
            self._fh.flush()
            self._next += 1

    def close(self) -> None:
        if self._pending:
            raise RuntimeError(f"missing rows before index {self._next}")
        self._fh.close()


def write_csv(path, rows: list[dict], columns: list[str]) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = csv_bytes(rows, columns)
    path.write_bytes(data)
    return content_hash(data)


def write_metadata(csv_path, config: dict, extra: dict | None = None) -> Path:
    csv_path = Path(csv_path)
    meta = {"schema_version": SCHEMA_VERSION, "package_version": __version__, "csv": csv_path.name,
            "columns": None, "content_hash": content_hash(csv_path.read_bytes()), "config": config}
    with open(csv_path, newline="") as fh:
        meta["columns"] = next(csv.reader(fh))
    meta.update(extra or {})
    out = csv_path.with_suffix(".json")
    out.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
    return out


def write_svg(path, rows: list[dict], title: str = "") -> Path:
    """Tiny line plot: one polyline per (panel, setting, alpha, t, r, M) series, theory solid, sim dots."""
    W, H, pad = 480, 320, 40
    series: dict[tuple, list[dict]] = {}
    for row in rows:
        key = tuple(row.get(c) for c in ("panel", "setting", "alpha", "t", "r", "M"))
        series.setdefault(key, []).append(row)
    xs = [r["x"] for r in rows]
    ys = [v for r in rows for v in (r.get("theory"), r.get("sim_mean")) if v is not None and math.isfinite(v)]
    if not xs or not ys:
        ys = [0.0, 1.0]
    x0, x1 = min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1
    y0, y1 = min(ys), max(ys) if max(ys) > min(ys) else min(ys) + 1

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (W - 2 * pad)

    def sy(y):
        return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)

    colors = ["#1b1b1b", "#c0392b", "#2471a3", "#1e8449", "#7d3c98", "#b9770e"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<text x="{pad}" y="20" font-size="12">{title}</text>',
             f'<text x="{pad}" y="{H - 8}" font-size="10">x: {x0:.3g} .. {x1:.3g}   y: {y0:.3g} .. {y1:.3g}</text>']
    for i, (key, pts) in enumerate(series.items()):
        c = colors[i % len(colors)]
        line = " ".join(f"{sx(p['x']):.1f},{sy(p['theory']):.1f}" for p in pts
                        if p.get("theory") is not None and math.isfinite(p["theory"]))
        if line:
            parts.append(f'<polyline fill="none" stroke="{c}" points="{line}"/>')
        for p in pts:
            if p.get("sim_mean") is not None:
                parts.append(f'<circle cx="{sx(p["x"]):.1f}" cy="{sy(p["sim_mean"]):.1f}" r="2" fill="{c}"/>')
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts))
    return path


# -- guardrails -------------------------------------------------------------

def physical_memory() -> float:
    try:
        return float(os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES"))
    except (ValueError, OSError, AttributeError):
        return 8e9


def matrix_bytes(N: int) -> float:
    return 8.0 * N * N


def estimate_cost(cfg: ExperimentConfig) -> dict:
    """Rough peak memory (bytes) and runtime (seconds) for the simulation part."""
    exp = cfg.experiment
    if exp == "verify" or not cfg.simulate:
        return {"memory": 0.0, "runtime": 0.0}
    N = int(cfg.get("N"))
    trials = int(cfg.get("trials"))
    workers = max(1, cfg.jobs)
    flops = 0.0
    if exp == "fig1":
        for row in _fig1_rows(cfg):
            flops += trials * len(row["alphas"]) * len(row["rs"]) * len(row["ts"]) * 10.0 * N ** 3
    elif exp == "fig2":
        for a in cfg.get("alphas"):
            P = a * N
            flops += trials * len(cfg.get("rs")) * len(cfg.get("settings") or [1, 1]) * (
                P * max(cfg.get("Ms")) * N * N + len(cfg.get("ts")) * len(cfg.get("Ms")) * 12.0 * N ** 3)
    elif exp == "fig3":
        for a in cfg.get("alphas"):
            P = a * N
            flops += trials * len(cfg.get("ps")) * len(cfg.get("ts")) * 4.0 * P * P * N
        for a in cfg.get("stability_alphas"):
            flops += trials * len(cfg.get("stability_ts")) * 4.0 * (a * N) ** 2 * N
    elif exp == "fig4":
        M = int(cfg.get("M"))
        for a in cfg.get("alphas"):
            P = a * N
            per = 4.0 * P * P * N * len(cfg.get("ts"))
            unsup = "unsupervised" in (cfg.get("settings") or ["unsupervised"])
            flops += trials * len(cfg.get("rs")) * (per + (P * M * N * N + 10.0 * N ** 3 if unsup else 0.0))
    return {"memory": 4 * matrix_bytes(N) * workers, "runtime": flops / FLOPS_PER_SECOND / workers}


def check_feasible(cfg: ExperimentConfig) -> dict:
    """Refuse oversize runs unless ``force``; the message proposes a scaled-down config."""
    est = estimate_cost(cfg)
    limit = cfg.memory_limit or physical_memory()
    problems = []
    if est["memory"] > limit:
        problems.append(f"memory {est['memory'] / 1e9:.2f} GB > limit {limit / 1e9:.2f} GB")
    if est["runtime"] > cfg.max_runtime:
        problems.append(f"runtime ~{est['runtime']:.0f} s > limit {cfg.max_runtime:.0f} s")
    if problems and not cfg.force:
        N, trials = int(cfg.get("N")), int(cfg.get("trials"))
        # runtime is linear in trials and at most cubic in N; memory quadratic in N
        scale = max(est["runtime"] / cfg.max_runtime, 1.0)
        new_trials = max(1, int(trials / scale))
        rest = scale * new_trials / trials
        new_N = min(N, int(math.sqrt(limit / (4 * 8 * max(1, cfg.jobs)))))
        if rest > 1:
            new_N = min(new_N, int(N / rest ** (1 / 3)))
        raise InfeasibleExperiment(f"{cfg.experiment}: " + "; ".join(problems)
                                   + f". Try --N {new_N} --trials {new_trials}, or pass --force.")
    return est


# -- figure 1: spectral densities -----------------------------------------------

def _fig1_rows(cfg: ExperimentConfig) -> list[dict]:
    rows = FIGURE_DEFAULTS["fig1"]["rows"]
    settings = cfg.settings or ([cfg.panel] if cfg.panel else list(rows))
    out = []
    for s in settings:
        base = rows[Setting(s).value]
        out.append({"setting": Setting(s).value, "alphas": cfg.alphas or base["alphas"],
                    "rs": cfg.rs or base["rs"], "ts": cfg.ts or base["ts"]})
    return out


def fig1_panel(setting: str, alpha: float, r: float, t: float, cfg: ExperimentConfig) -> list[dict]:
    """Density of alpha*bulk on a grid, with an empirical histogram on the same bins."""
    k = int(cfg.get("bins"))
    law = law_for(setting, t, alpha, r)
    theory = density_grid(law, k)
    sims = []
    if cfg.simulate and law.degenerate_bulk is None:
        lm, lp = law.edges
        edges = lm + (lp - lm) * np.arange(k + 1) / k
        M = int(cfg.get("M")) if setting != "storing" else 1
        params = SimParams(setting, int(cfg.get("N")), alpha, t, r=r, M=M)
        for trial in range(int(cfg.get("trials"))):
            rep = empirical_spectrum_histogram(params, seed=cfg.seed, trial=trial)
            counts, _ = np.histogram(rep.eigenvalues[params.N - params.P:], bins=edges)
            sims.append(counts / (params.N * np.diff(edges)))
    sims = np.array(sims)
    rows = []
    for i, th in enumerate(theory):
        mean = se = None
        if sims.size:
            mean = float(sims[:, i].mean())
            se = float(sims[:, i].std(ddof=1) / math.sqrt(len(sims))) if len(sims) > 1 else None
        rows.append({"panel": "density", "setting": setting, "alpha": alpha, "t": t, "r": r,
                     "M": None if setting == "storing" else cfg.get("M"), "x": th["lambda"],
                     "theory": th["density"], "sim_mean": mean, "sim_stderr": se, "ga_bound": None})
    return rows


def reproduce_fig1(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    paths = []
    for row in _fig1_rows(cfg):
        s = row["setting"]
        path = out_dir / f"fig1_{s}.csv"
        writer = OrderedWriter(path, PANEL_COLUMNS)
        peaks = []
        ix = 0
        for a in row["alphas"]:
            for r in row["rs"]:
                for t in row["ts"]:
                    writer.put(ix, fig1_panel(s, a, r, t, cfg))
                    law = law_for(s, t, a, r)
                    peaks.append({"alpha": a, "r": r, "t": t, "peak_location": law.peak,
                                  "peak_mass": law.peak_mass})
                    ix += 1
        writer.close()
        paths.append(path)
        _finish(path, cfg, {"peaks": peaks, "panel": s})
    return paths


# -- figure 2: squared error -------------------------------------------------

def reproduce_fig2(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    settings = cfg.settings or ([cfg.panel] if cfg.panel else ["supervised", "unsupervised"])
    Ms = sorted(int(m) for m in cfg.get("Ms"))
    paths = []
    for s in settings:
        for t in cfg.get("ts"):
            path = out_dir / f"fig2_{s}_t{_tag(t)}.csv"
            writer = OrderedWriter(path, PANEL_COLUMNS)
            ix = 0
            for a in cfg.get("alphas"):
                for r in cfg.get("rs"):
                    th = se_theory(s, a, r, t, cfg.rule)
                    sim = {}
                    if cfg.simulate:
                        sim = se_trials(s, int(cfg.get("N")), a, r, [t], Ms, int(cfg.get("trials")), cfg.seed)
                    rows = []
                    for M in Ms:
                        mean, se = sim.get((float(t), M), (None, None))
                        rows.append({"panel": "se", "setting": s, "alpha": a, "t": t, "r": r, "M": M, "x": r,
                                     "theory": th, "sim_mean": mean, "sim_stderr": se, "ga_bound": None})
                    writer.put(ix, rows)
                    ix += 1
            writer.close()
            paths.append(path)
            _finish(path, cfg)
    return paths


# -- figures 3 and 4: retrieval -------------------------------------------------

def _retrieval_rows(kind: Scenario, setting: str, alpha: float, ts, xs, cfg: ExperimentConfig,
                    M: int | None = None) -> list[dict]:
    sim = {}
    if cfg.simulate:
        params = SimParams(setting, int(cfg.get("N")), alpha, M=M or 1)
        sim = retrieval_sweep(params, ts, xs, int(cfg.get("trials")), cfg.seed, jobs=cfg.jobs,
                              memory_limit=cfg.memory_limit)
    rows = []
    for t in ts:
        for x in xs:
            sc = RetrievalScenario(kind, alpha, t).with_x(x)
            if x == 0 and kind is not Scenario.STORING_ATTRACTIVENESS:
                th = 0.0  # r=0 probes carry no signal
            else:
                th = m1_theory(moments(sc, cfg.rule))
            bound = ga_validity_bound(sc.law, sc.probe_overlap, rule=cfg.rule)
            res = sim.get((float(t), float(x)))
            rows.append({"panel": kind.value, "setting": setting, "alpha": alpha, "t": t,
                         "r": x if setting != "storing" else None, "M": M, "x": x, "theory": th,
                         "sim_mean": None if res is None else res.m1,
                         "sim_stderr": None if res is None else res.m1_stderr, "ga_bound": bound})
    return rows


def reproduce_fig3(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    panels = [cfg.panel] if cfg.panel else ["stability", "attractiveness"]
    paths = []
    if "stability" in panels:
        path = out_dir / "fig3_stability.csv"
        writer = OrderedWriter(path, PANEL_COLUMNS)
        ts = cfg.ts or FIGURE_DEFAULTS["fig3"]["stability_ts"]
        alphas = cfg.alphas or FIGURE_DEFAULTS["fig3"]["stability_alphas"]
        for ix, a in enumerate(alphas):
            sim = {}
            if cfg.simulate:
                sim = retrieval_sweep(SimParams("storing", int(cfg.get("N")), a), ts, [1.0],
                                      int(cfg.get("trials")), cfg.seed, jobs=cfg.jobs, memory_limit=cfg.memory_limit)
            rows = []
            for t in ts:
                th = m1_theory(moments(RetrievalScenario(Scenario.STORING_STABILITY, a, t), cfg.rule))
                res = sim.get((float(t), 1.0))
                rows.append({"panel": "stability", "setting": "storing", "alpha": a, "t": t, "r": None, "M": None,
                             "x": a, "theory": th, "sim_mean": None if res is None else res.m1,
                             "sim_stderr": None if res is None else res.m1_stderr, "ga_bound": 0.0})
            writer.put(ix, rows)
        writer.close()
        paths.append(path)
        _finish(path, cfg, {"panel": "stability", "hopfield_reference": "erf((1+alpha)/sqrt(2 alpha))"})
    if "attractiveness" in panels:
        path = out_dir / "fig3_attractiveness.csv"
        writer = OrderedWriter(path, PANEL_COLUMNS)
        for ix, a in enumerate(cfg.get("alphas")):
            writer.put(ix, _retrieval_rows(Scenario.STORING_ATTRACTIVENESS, "storing", a, cfg.get("ts"),
                                           cfg.get("ps"), cfg))
        writer.close()
        paths.append(path)
        _finish(path, cfg, {"panel": "attractiveness"})
    return paths


def reproduce_fig4(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    settings = cfg.settings or ([cfg.panel] if cfg.panel else ["supervised", "unsupervised"])
    paths = []
    for s in settings:
        kind = Scenario(f"{s}-attractiveness")
        path = out_dir / f"fig4_{s}.csv"
        writer = OrderedWriter(path, PANEL_COLUMNS)
        for ix, a in enumerate(cfg.get("alphas")):
            writer.put(ix, _retrieval_rows(kind, s, a, cfg.get("ts"), cfg.get("rs"), cfg, M=int(cfg.get("M"))))
        writer.close()
        paths.append(path)
        _finish(path, cfg, {"panel": s})
    return paths


def _tag(v: float) -> str:
    return f"{v:g}".replace(".", "p")


def _finish(path: Path, cfg: ExperimentConfig, extra: dict | None = None) -> None:
    info = {"figure_inferred": FIGURE_DEFAULTS.get(cfg.experiment, {}).get("figure_inferred", [])}
    info.update(extra or {})
    write_metadata(path, resolved(cfg), info)
    if cfg.svg:
        with open(path, newline="") as fh:
            rows = [{k: (float(v) if v not in ("",) and k not in ("panel", "setting") else (v or None))
                     for k, v in row.items()} for row in csv.DictReader(fh)]
        write_svg(path.with_suffix(".svg"), rows, path.stem)


REPRODUCERS = {"fig1": reproduce_fig1, "fig2": reproduce_fig2, "fig3": reproduce_fig3, "fig4": reproduce_fig4}


def reproduce(cfg: ExperimentConfig) -> list[Path]:
    """Write the CSV (and metadata) files of one figure; returns their paths."""
    if cfg.experiment == "verify":
        raise ParameterDomainError("use verify() for the verification suite")
    check_feasible(cfg)
    out_dir = Path(cfg.out_dir) if cfg.out_dir else default_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    paths = REPRODUCERS[cfg.experiment](cfg, out_dir)
    elapsed = time.perf_counter() - t0
    for p in paths:
        meta_path = p.with_suffix(".json")
        meta = json.loads(meta_path.read_text())
        meta["runtime_s"] = elapsed
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
    return paths


# -- verification ---------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


def _check_eigen_flow(seed: int, instances: int = 5, N: int = 200, P: int = 40) -> Check:
    worst = 0.0
    for k in range(instances):
        gt = make_ground_truths(N, P, RngSpec(seed, k))
        kernel = dreaming_kernel(build_information_matrix(gt, "storing"))
        lam0 = spectrum(kernel.dense(0.0))
        for t in (0.5, 1.0, 10.0):
            worst = max(worst, float(np.max(np.abs(spectrum(kernel.dense(t)) - np.sort(eigen_map(lam0, t))))))
    return Check("eigen_flow", worst < 1e-8, worst, 1e-8, f"{instances} instances N={N} P={P}")


def _check_ode(seed: int) -> Check:
    gt = make_ground_truths(100, 20, RngSpec(seed, 99))
    kernel = dreaming_kernel(build_information_matrix(gt, "storing"))
    J2 = kernel.dense(2.0).J
    ode = integrate_dreaming_ode(kernel.dense(0.0), 2.0, 2000).J
    rel = float(np.linalg.norm(ode - J2) / np.linalg.norm(J2))
    return Check("ode_rk4", rel < 1e-6, rel, 1e-6, "N=100 P=20 t=2 steps=2000")


def _check_normalization(rule: QuadratureRule) -> list[Check]:
    worst, where = 0.0, ""
    for s in Setting:
        for a in np.linspace(0.05, 1.0, 5):
            for r in np.linspace(0.2, 1.0, 5):
                for t in (0.0, 0.3, 1.0, 10.0, 100.0):
                    law = law_for(s, t, float(a), float(r))
                    err = abs(integrate_full(law, np.ones_like, rule) - 1.0)
                    if err > worst:
                        worst, where = err, f"{s.value} alpha={a:.3g} r={r:.3g} t={t:g}"
    ok, bulk_err = check_normalization(law_for("storing", 1.0, 0.3), rule)
    return [Check("measure_normalization", worst <= 1e-10, worst, 1e-10, f"worst at {where}"),
            Check("bulk_normalization_flag", ok, bulk_err, 1e-6, "storing alpha=0.3 t=1")]


def _check_moments(rule: QuadratureRule) -> list[Check]:
    out = []
    for a in (0.1, 0.2, 0.3):
        rep = mp_moment_checks(law_for("storing", 0.0, a), rule)
        err = max(rep["mu1_error"], rep["mu2_error"])
        out.append(Check(f"closed_moments_alpha{a}", rep["passed"], err, 1e-6))
        target = m1_hopfield(a)
        got = m1_theory(MomentPair(1 + a, a * a + 3 * a + 1))
        out.append(Check(f"hopfield_erf_alpha{a}", abs(got - target) < 1e-10, abs(got - target), 1e-10))
    for t in (50.0, 100.0):
        rep = mp_moment_checks(law_for("storing", t, 0.2), rule)
        err = max(rep["mu1_error"] * t ** 3 / 10, rep["mu2_error"] * t ** 3 / 30)
        out.append(Check(f"large_t_moments_t{t:g}", rep["passed"], err, 1.0, "error in units of the O(t^-3) allowance"))
    a, t = 0.2, 3.0
    i2, i3 = stability_moments_mp(a, t, rule)
    j2, j3 = stability_integrals(law_for("storing", t, a), rule)
    diff = max(abs(i2 - j2 / a), abs(i3 - j3 / a))
    out.append(Check("moment_routes_agree", diff < 1e-9, diff, 1e-9, "pushed-forward law vs undreamed MP law"))
    diff = abs(se_theory("unsupervised", 0.2, 0.6, 2.0, rule) - se_bulk_plus_constant("unsupervised", 0.2, 0.6, 2.0, rule))
    out.append(Check("se_routes_agree", diff < 1e-9, diff, 1e-9, "full law vs bulk plus constant"))
    return out


def _check_spectrum_w1(seed: int) -> list[Check]:
    out = []
    for t in (0.0, 1.0, 10.0):
        rep = empirical_spectrum_histogram(SimParams("storing", 2000, 0.2, t), seed=seed)
        out.append(Check(f"spectrum_w1_t{t:g}", rep.w1 < 0.05, rep.w1, 0.05, "N=2000 alpha=0.2"))
        out.append(Check(f"zero_count_t{t:g}", rep.zero_count == 1600, float(rep.zero_count), 1600.0,
                         "exact count expected"))
    return out


def _check_spot_retrieval(seed: int) -> list[Check]:
    res = retrieval_sweep(SimParams("storing", 2000, 0.1), [0.0], [0.6, 1.0], trials=5, seed=seed)
    out = []
    for (t, p), tr in res.items():
        th = m1_theory(moments(RetrievalScenario(Scenario.STORING_ATTRACTIVENESS, 0.1, t, p=p)))
        out.append(Check(f"fig3_spot_p{p:g}", abs(tr.m1 - th) < 0.03, abs(tr.m1 - th), 0.03, "N=2000, 5 trials"))
    return out


def verify(level: str = "fast", rule: QuadratureRule = DEFAULT_RULE, seed: int = 0) -> list[Check]:
    """Run the verification suite; ``full`` adds finite-N spectrum and retrieval spot checks."""
    if level not in ("fast", "full"):
        raise ParameterDomainError(f"level must be fast or full, got {level!r}")
    checks = [_check_eigen_flow(seed), _check_ode(seed)]
    checks += _check_normalization(rule)
    checks += _check_moments(rule)
    if level == "full":
        checks += _check_spectrum_w1(seed)
        checks += _check_spot_retrieval(seed)
    return checks


def report(checks: list[Check]) -> dict:
    return {"schema_version": SCHEMA_VERSION, "passed": all(c.passed for c in checks),
            "failed": [c.name for c in checks if not c.passed], "checks": [asdict(c) for c in checks]}
