"""Assumption checks, covariance convergence and Sobolev-lift runs, with reports.

A run builds one weighted graph per N (lattice, or heat-kernel weights on a
nested i.i.d. grid with a bandwidth chosen by the configured policy), then
each section tabulates its diagnostics per (N, test function).  Reports are
CSV tables plus a ``report.json`` with metadata; wall-clock timing goes to a
separate ``timing.json`` so that the reports themselves are byte-identical
across reruns with the same config and seed.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata

import numpy as np

from .bandwidth import (BandwidthSchedule, gap_adjusted_schedule, grid_w1, intermediate_gap,
                        select_bandwidth_wass)
from .config import ExperimentConfig, parse_config_text, serialize_config
from .field import pair_with_function, sample_dgff
from .graph import (Grid, SpectralData, assemble_laplacian, build_heat_kernel_graph, build_torus_lattice,
                    discretize_function, green_quadratic_form, sample_grid, semigroup_quadratic_form,
                    spectral_decompose)
from .manifolds import TestFunction, make_manifold
from .seeding import StreamFactory
from .sobolev import (SobolevExponentWarning, SobolevParams, cell_averages, lift_pair, tightness_statistic,
                      voronoi_assign)

REPORT_SCHEMA = "dgff-report/1"
STALENESS_TOL = 1e-12


@dataclass
class GraphCell:
    n: int
    grid: Grid
    lap: np.ndarray
    sd: SpectralData
    t: float | None = None
    t_prime: float | None = None
    w1: float | None = None
    w1_bias: float | None = None


@dataclass
class Section:
    name: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations


@dataclass
class ConvergenceReport:
    config: ExperimentConfig
    sections: dict[str, Section]
    substreams: dict[str, list[int]]
    schedule: BandwidthSchedule | None = None
    notes: list[str] = field(default_factory=list)
    timing: dict[str, float] = field(default_factory=dict)
    cells: dict[int, GraphCell] = field(default_factory=dict, repr=False)  # kept for dumps, not serialized

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.sections.values())

    @property
    def violations(self) -> list[str]:
        return [f"{name}: {v}" for name, s in self.sections.items() for v in s.violations]


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------


def _spectral(grid: Grid, graph) -> tuple[np.ndarray, SpectralData]:
    lap = assemble_laplacian(graph)
    return lap, spectral_decompose(lap)


def _heat_gap(grid: Grid, t: float) -> float:
    lap = assemble_laplacian(build_heat_kernel_graph(grid, t))
    return float(np.linalg.eigvalsh(lap)[1])


def build_cells(cfg: ExperimentConfig, streams: StreamFactory, threads: int = 1):
    """One GraphCell per N in the config, plus the bandwidth schedule if used."""
    model = cfg.model()
    notes: list[str] = []
    if cfg.grid == "lattice":
        def lattice(n):
            side = round(n ** (1 / model.dim))
            graph = build_torus_lattice(side, model.dim)
            lap, sd = _spectral(graph.grid, graph)
            return GraphCell(n, graph.grid, lap, sd)
        return {c.n: c for c in _map(lattice, cfg.n_list, threads)}, None, notes

    bw = cfg.bandwidth
    ns = sorted(set(cfg.n_list) | set(bw.ladder))
    # nested grids: the first N points of a single sampled sequence
    base = sample_grid(model, ns[-1], streams.rng("grid", 0, "points"), seed=cfg.seed)
    w1 = {}
    for n in ns:
        w1[n] = grid_w1(model, base.points[:n], streams.rng("bandwidth", n, "reference"), bw.reference_factor)
    raw = {n: select_bandwidth_wass(max(w1[n][0], 1e-300), model.dim, bw.safety) for n in ns}
    # running max from the right makes t' nonincreasing in N
    t_prime, running = {}, 0.0
    for n in reversed(ns):
        running = max(running, raw[n])
        t_prime[n] = running
    if any(t_prime[n] != raw[n] for n in ns):
        notes.append("W_1 rule bandwidth made nonincreasing by a running max over larger N")

    schedule = None
    if bw.policy == "fixed":
        t_of = {n: bw.t for n in ns}
    elif bw.policy == "wasserstein":
        t_of = dict(t_prime)
    else:
        target = {j: intermediate_gap(1.0 / j, model.spectral_gap) for j in range(1, bw.max_j + 1)}
        pairs = [(j, n) for j in range(1, bw.max_j + 1) for n in ns]
        gaps = _map(lambda jn: _heat_gap(base.head(jn[1]), 1.0 / jn[0]), pairs, threads)
        errors = {jn: abs(g - target[jn[0]]) for jn, g in zip(pairs, gaps)}
        schedule = gap_adjusted_schedule(errors, t_prime, w1, bw.safety, model.dim)
        notes.extend(schedule.notes)
        t_of = {}
        for row in schedule.rows:
            if row.t is None:
                t_of[row.n] = max(1.0, row.t_prime)
                notes.append(f"N={row.n}: below n_1, using t = {t_of[row.n]!r}")
            else:
                t_of[row.n] = row.t

    def heat(n):
        grid = base.head(n)
        lap, sd = _spectral(grid, build_heat_kernel_graph(grid, t_of[n]))
        return GraphCell(n, grid, lap, sd, t_of[n], t_prime[n], *w1[n])
    return {c.n: c for c in _map(heat, cfg.n_list, threads)}, schedule, notes


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------

ASSUMPTION_COLUMNS = ["N", "function", "t", "bandwidth", "gap", "gap_inf", "semigroup_value", "semigroup_target",
                      "semigroup_gap", "w1", "w1_bias", "ok"]


def run_assumption_suite(cfg: ExperimentConfig, cells: dict[int, GraphCell]) -> Section:
    """Running inf of lambda_2^N, semigroup pairing gaps, and W_1 per N."""
    model, funcs, th = cfg.model(), cfg.test_functions(), cfg.thresholds
    sec = Section("assumptions", ASSUMPTION_COLUMNS)
    gap_inf = math.inf
    floor = th.gap_floor * model.spectral_gap
    for n in cfg.n_list:
        cell = cells[n]
        gap_inf = min(gap_inf, cell.sd.gap)
        if gap_inf < floor:
            sec.violations.append(f"N={n}: running inf of gaps {gap_inf:.6g} < {floor:.6g}")
        for name, f in funcs.items():
            f_n = discretize_function(f, cell.grid)
            for t in cfg.times:
                value = semigroup_quadratic_form(cell.sd, t, f_n)
                target = f.semigroup_form(t)
                ok = abs(value - target) <= th.semigroup_abs and gap_inf >= floor
                if abs(value - target) > th.semigroup_abs:
                    sec.violations.append(f"N={n} f={name} t={t!r}: semigroup gap {abs(value - target):.3g}")
                sec.rows.append(dict(N=n, function=name, t=t, bandwidth=cell.t, gap=cell.sd.gap, gap_inf=gap_inf,
                                     semigroup_value=value, semigroup_target=target,
                                     semigroup_gap=abs(value - target), w1=cell.w1, w1_bias=cell.w1_bias, ok=ok))
    sec.summary["gap_inf"] = gap_inf
    return sec


COVARIANCE_COLUMNS = ["N", "function", "bandwidth", "gap", "form", "target", "abs_gap", "rel_gap", "w1", "draws",
                      "mc_var", "mc_se", "char_mean", "char_target", "char_se", "ok"]


def _covariance_mc(cell: GraphCell, funcs, draws, rng):
    phi = sample_dgff(cell.sd, rng, draws)
    out = {}
    for name, f in funcs.items():
        x = math.sqrt(cell.n) * pair_with_function(phi, f, cell.grid.points)
        sq, c = x**2, np.cos(x)
        out[name] = (sq.mean(), sq.std(ddof=1) / math.sqrt(draws), c.mean(), c.std(ddof=1) / math.sqrt(draws))
    return out


def run_covariance_convergence(cfg: ExperimentConfig, cells: dict[int, GraphCell], streams: StreamFactory,
                               threads: int = 1) -> Section:
    """N^{-1}(f_N, G_N f_N) against (f, G f), with optional Monte Carlo columns.

    The Monte Carlo columns are the empirical second moment of <sqrt(N) phi_N, f>
    and the empirical mean of its cosine, compared with exp(-form / 2).
    """
    funcs, th = cfg.test_functions(), cfg.thresholds
    sec = Section("covariance", COVARIANCE_COLUMNS)
    mc = {}
    if cfg.draws > 0:
        rngs = {n: streams.rng("dgff", n, "samples") for n in cfg.n_list}
        mc = dict(zip(cfg.n_list, _map(lambda n: _covariance_mc(cells[n], funcs, cfg.draws, rngs[n]),
                                       cfg.n_list, threads)))
    for n in cfg.n_list:
        cell = cells[n]
        for name, f in funcs.items():
            form = green_quadratic_form(cell.sd, discretize_function(f, cell.grid))
            target = f.green_form()
            abs_gap = abs(form - target)
            rel_gap = abs_gap / target if target > 0 else abs_gap
            ok = rel_gap <= th.covariance_rel
            if not ok:
                sec.violations.append(f"N={n} f={name}: relative covariance gap {rel_gap:.3g}")
            row = dict(N=n, function=name, bandwidth=cell.t, gap=cell.sd.gap, form=form, target=target,
                       abs_gap=abs_gap, rel_gap=rel_gap, w1=cell.w1, draws=cfg.draws if mc else 0)
            if mc:
                var, var_se, cmean, cse = mc[n][name]
                ctarget = math.exp(-form / 2)
                char_ok = abs(cmean - ctarget) <= th.char_sigmas * cse or abs(cmean - ctarget) < 1e-12
                if not char_ok:
                    sec.violations.append(f"N={n} f={name}: characteristic functional off by "
                                          f"{abs(cmean - ctarget) / max(cse, 1e-300):.2f} sigma")
                ok = ok and char_ok
                row.update(mc_var=var, mc_se=var_se, char_mean=cmean, char_target=ctarget, char_se=cse)
            row["ok"] = ok
            sec.rows.append(row)
    return sec


SOBOLEV_COLUMNS = ["N", "function", "fill_radius", "probes", "min_cell_probes", "draws", "lift_var", "pair_var",
                   "var_diff", "var_diff_se", "envelope", "lift_form", "pair_form", "ok"]
TIGHTNESS_COLUMNS = ["N", "s", "modes", "fill_radius", "draws", "statistic", "statistic_se", "exact", "bound_truncated",
                     "bound_series", "ratio", "ok"]


def _sobolev_cell(cell: GraphCell, cfg: ExperimentConfig, params: SobolevParams, streams_for):
    model, funcs = cfg.model(), cfg.test_functions()
    probes_rng, sample_rng, tight_rng = streams_for
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # probe count is configured explicitly
        tess = voronoi_assign(cell.grid, cfg.sobolev.probes_per_cell * cell.n, probes_rng)
    phi = sample_dgff(cell.sd, sample_rng, cfg.sobolev.draws)
    rows = []
    root_n = math.sqrt(cell.n)
    for name, f in funcs.items():
        a = root_n * lift_pair(phi, tess, f)
        b = root_n * pair_with_function(phi, f, cell.grid.points)
        d = a**2 - b**2
        avg, _ = cell_averages(f, tess)
        lift_form = green_quadratic_form(cell.sd, avg - avg.mean())
        pair_form = green_quadratic_form(cell.sd, discretize_function(f, cell.grid))
        envelope = 2 * tess.fill_radius * f.lipschitz_bound * f.sup_bound / cell.sd.gap
        rows.append(dict(N=cell.n, function=name, fill_radius=tess.fill_radius, probes=tess.m,
                         min_cell_probes=int(tess.counts.min()), draws=len(phi), lift_var=float((a**2).mean()),
                         pair_var=float((b**2).mean()), var_diff=float(d.mean()),
                         var_diff_se=float(d.std(ddof=1) / math.sqrt(len(d))), envelope=envelope,
                         lift_form=lift_form, pair_form=pair_form))
    tight = tightness_statistic(model, cell.sd, tess, params, cfg.sobolev.draws, tight_rng)
    trow = dict(N=cell.n, s=params.s, modes=params.modes, fill_radius=tess.fill_radius, draws=tight.draws,
                statistic=tight.statistic, statistic_se=tight.standard_error, exact=tight.exact_expectation,
                bound_truncated=tight.bound_truncated, bound_series=tight.bound_series,
                ratio=tight.statistic / tight.bound_series)
    return rows, trow


def run_sobolev_suite(cfg: ExperimentConfig, cells: dict[int, GraphCell], streams: StreamFactory,
                      threads: int = 1) -> tuple[Section, Section]:
    """Lifted-vs-grid variances per (N, f) and the tightness statistic per N."""
    model, th = cfg.model(), cfg.thresholds
    s = cfg.sobolev.s
    if cfg.sobolev.modes is None:
        params = SobolevParams.default_for(model, s)
    else:
        params = SobolevParams(s, cfg.sobolev.modes, model.dim)
    rngs = {n: (streams.rng("voronoi", n, "probes"), streams.rng("sobolev", n, "samples"),
                streams.rng("sobolev", n, "tightness")) for n in cfg.n_list}
    results = _map(lambda n: _sobolev_cell(cells[n], cfg, params, rngs[n]), cfg.n_list, threads)
    lift = Section("sobolev", SOBOLEV_COLUMNS)
    tight = Section("tightness", TIGHTNESS_COLUMNS)
    for rows, trow in results:
        for row in rows:
            ok = abs(row["var_diff"]) <= row["envelope"] + th.lift_sigmas * row["var_diff_se"]
            if not ok:
                lift.violations.append(f"N={row['N']} f={row['function']}: lifted variance outside the envelope")
            row["ok"] = ok
            lift.rows.append(row)
        trow["ok"] = trow["statistic"] <= trow["bound_series"]
        if not trow["ok"]:
            tight.violations.append(f"N={trow['N']}: tightness statistic exceeds the bound series")
        tight.rows.append(trow)
    stats = [r["statistic"] for r in tight.rows]
    spread = (max(stats) - min(stats)) / min(stats) if min(stats) > 0 else math.inf
    tight.summary["spread"] = spread
    if len(stats) > 1 and spread > th.tightness_spread:
        tight.violations.append(f"tightness statistic varies by {spread:.3g} across N")
    return lift, tight


# ---------------------------------------------------------------------------
# driver and reports
# ---------------------------------------------------------------------------

SUBCOMMANDS = {"assumptions": ("assumptions",), "converge": ("covariance",), "sobolev": ("sobolev", "tightness"),
               "full": ("assumptions", "covariance", "sobolev", "tightness")}


def run_experiment(cfg: ExperimentConfig, which: str = "full", threads: int = 1) -> ConvergenceReport:
    if which not in SUBCOMMANDS:
        raise ValueError(f"unknown experiment {which!r}")
    streams = StreamFactory(cfg.seed)
    timing = {}
    clock = time.perf_counter()
    notes: list[str] = []
    s_crit = cfg.model().dim - 0.5
    if which in ("sobolev", "full") and cfg.sobolev.s <= s_crit:
        notes.append(f"s = {cfg.sobolev.s!r} <= d - 1/2; tightness is not covered by the sup-norm series")
    cells, schedule, cell_notes = build_cells(cfg, streams, threads)
    notes.extend(cell_notes)
    timing["graphs"] = time.perf_counter() - clock
    sections = {}
    if which in ("assumptions", "full"):
        clock = time.perf_counter()
        sections["assumptions"] = run_assumption_suite(cfg, cells)
        timing["assumptions"] = time.perf_counter() - clock
    if which in ("converge", "full"):
        clock = time.perf_counter()
        sections["covariance"] = run_covariance_convergence(cfg, cells, streams, threads)
        timing["covariance"] = time.perf_counter() - clock
    if which in ("sobolev", "full"):
        clock = time.perf_counter()
        if cfg.sobolev.s <= s_crit:
            warnings.warn(notes[0], SobolevExponentWarning, stacklevel=2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SobolevExponentWarning)
            sections["sobolev"], sections["tightness"] = run_sobolev_suite(cfg, cells, streams, threads)
        timing["sobolev"] = time.perf_counter() - clock
    return ConvergenceReport(cfg, sections, streams.used(), schedule, notes, timing, cells)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_section(sec: Section, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {REPORT_SCHEMA} section={sec.name} columns={len(sec.columns)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(sec.columns)
        for row in sec.rows:
            w.writerow([_fmt(row.get(c)) for c in sec.columns])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def serialize_report(report: ConvergenceReport, out_dir, dump_spectra: bool = False,
                     dump_samples: bool = False) -> None:
    """Write section CSVs, report.json, timing.json, and optional dumps into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    meta = {
        "schema": REPORT_SCHEMA,
        "version": _version(),
        "seed": report.config.seed,
        "manifold": report.config.manifold,
        "grid": report.config.grid,
        "functions": report.config.functions,
        "config": serialize_config(report.config),
        "substreams": report.substreams,
        "passed": report.passed,
        "violations": report.violations,
        "notes": report.notes,
        "sections": {name: {"csv": f"{name}.csv", "passed": s.passed, "summary": s.summary}
                     for name, s in report.sections.items()},
    }
    if report.schedule is not None:
        report.schedule.to_csv(os.path.join(out_dir, "schedule.csv"))
        meta["schedule"] = {"csv": "schedule.csv", "n_j": report.schedule.n_j,
                            "truncated_at": report.schedule.truncated_at}
    for name, sec in report.sections.items():
        _write_section(sec, os.path.join(out_dir, f"{name}.csv"))
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(_jsonable(meta), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "timing.json"), "w") as fh:
        json.dump(report.timing, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if dump_spectra:
        for n, cell in report.cells.items():
            cell.sd.dump_csv(os.path.join(out_dir, f"spectrum_N{n}.csv"))
    if dump_samples and report.config.draws > 0:
        streams = StreamFactory(report.config.seed)
        for n, cell in report.cells.items():
            # same stream as the covariance section, so these are the draws it used
            phi = sample_dgff(cell.sd, streams.rng("dgff", n, "samples"), report.config.draws)
            np.save(os.path.join(out_dir, f"samples_N{n}.npy"), phi)


def verify_report(out_dir) -> list[str]:
    """Recompute every stored continuum target from the model; list mismatches."""
    with open(os.path.join(out_dir, "report.json")) as fh:
        meta = json.load(fh)
    cfg = parse_config_text(meta["config"])
    model = make_manifold(cfg.manifold)
    funcs = {name: TestFunction.parse(model, "" if text == "0" else text) for name, text in cfg.functions.items()}
    problems = []

    def rows(name):
        path = os.path.join(out_dir, f"{name}.csv")
        if not os.path.exists(path):
            return []
        with open(path) as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        return list(csv.DictReader(lines))

    for row in rows("covariance"):
        stored, fresh = float(row["target"]), funcs[row["function"]].green_form()
        if abs(stored - fresh) > STALENESS_TOL:
            problems.append(f"covariance N={row['N']} f={row['function']}: {stored!r} != {fresh!r}")
    for row in rows("assumptions"):
        stored, fresh = float(row["semigroup_target"]), funcs[row["function"]].semigroup_form(float(row["t"]))
        if abs(stored - fresh) > STALENESS_TOL:
            problems.append(f"assumptions N={row['N']} f={row['function']} t={row['t']}: {stored!r} != {fresh!r}")
    return problems
