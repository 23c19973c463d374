"""Experiment definitions behind the command-line runner.

Each experiment maps one sweep value to a list of CSV rows. Rows are plain
dicts keyed by the experiment's column list (see ``COLUMNS``); missing
entries are written as empty cells.
"""

import csv
import io
import json
import math
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from .de_engine import de_tables
from .errors import ValidationError
from .estimation import build_estimation_model, nmse
from .fading import AgingProfile
from .montecarlo import mc_nmse, mc_sum_se
from .optimizer import alternating_optimize
from .scenario import SPEED_OF_LIGHT, build_statistics

BASELINES = ("static", "no-ris", "mrt", "high-overhead-ce")

DEFAULT_SWEEPS = {
    "nmse-vs-snr": tuple(float(x) for x in range(-10, 41, 5)),
    "se-vs-doppler": tuple(round(0.02 * i, 2) for i in range(0, 26)),
    "se-vs-time": None,               # every data time of the frame
    "se-vs-L": (16.0, 32.0, 64.0),
    "se-vs-M": (32.0, 64.0, 128.0),
    "convergence": tuple(float(i) for i in range(1, 11)),
    "init-sensitivity": tuple(float(i) for i in range(5)),
}

_COMMON = ["experiment", "sweep_value", "baseline"]
COLUMNS = {
    "nmse-vs-snr": _COMMON + ["velocity_kmh", "alpha_train_mean", "nmse_de", "nmse_mc",
                              "nmse_mc_hw"],
    "se-vs-doppler": _COMMON + ["de_se", "mc_se", "mc_hw"],
    "se-vs-time": _COMMON + ["de_se_n", "mc_se_n", "mc_hw"],
    "se-vs-L": _COMMON + ["de_se", "mc_se", "mc_hw", "ao_iterations"],
    "se-vs-M": _COMMON + ["de_se", "mc_se", "mc_hw", "rel_gap"],
    "convergence": _COMMON + ["de_se", "pga_iterations", "wmmse_iterations", "converged"],
    "init-sensitivity": _COMMON + ["de_se", "ao_iterations", "rel_to_best"],
}
EXPERIMENTS = tuple(COLUMNS)


@dataclass
class ExperimentSpec:
    """What to run; ``sweep`` values are floats in strictly increasing order."""

    name: str
    sweep: tuple = None
    baselines: tuple = ()
    trials: int = 500
    seed: int = 0
    out: str = None
    velocities: tuple = (0.0, 50.0, 135.0)

    def __post_init__(self):
        if self.name not in COLUMNS:
            raise ValidationError(f"unknown experiment {self.name!r}; choose from {EXPERIMENTS}")
        if self.sweep is not None:
            self.sweep = tuple(float(v) for v in self.sweep)
            if not self.sweep:
                raise ValidationError("sweep must not be empty")
            if any(b <= a for a, b in zip(self.sweep, self.sweep[1:])):
                raise ValidationError("sweep must be strictly increasing")
        bad = [b for b in self.baselines if b not in BASELINES]
        if bad:
            raise ValidationError(f"unknown baselines {bad}; choose from {BASELINES}")
        if int(self.trials) != self.trials or self.trials < 0:
            raise ValidationError("trials must be a nonnegative integer")

    def resolved_sweep(self, cfg):
        if self.sweep is not None:
            return self.sweep
        if self.name == "se-vs-time":
            return tuple(float(n) for n in range(cfg.K + 1, cfg.tau_c + 1))
        return DEFAULT_SWEEPS[self.name]


@dataclass
class RunRecord:
    """Bookkeeping of one run, serialised into the JSON sidecar."""

    spec: ExperimentSpec
    cfg: object
    csv_path: str = None
    started: float = 0.0
    wall_clock_s: float = 0.0
    timings: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)


class _Timer:
    def __init__(self):
        self.stages = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t0


# -- helpers -------------------------------------------------------------------------------

def velocity_to_fd(v_kmh, carrier_freq):
    return v_kmh / 3.6 * carrier_freq / SPEED_OF_LIGHT


def _equal_power(cfg):
    return np.full(cfg.K, cfg.P_max / cfg.K)


def _models(cfg, profile=None, no_ris=False):
    stats = build_statistics(cfg)
    if no_ris:
        stats = stats.without_ris()
    return stats, build_estimation_model(stats, cfg, profile)


def _de_se(p, stats, est, cfg, max_lag=None):
    """DE sum SE, optionally keeping only the first ``max_lag`` data times."""
    times = None
    if max_lag is not None:
        if max_lag <= 0:
            return 0.0
        times = np.arange(cfg.K + 1, cfg.K + 1 + max_lag)
    tab = de_tables(stats, est, cfg, times=times)
    return float(np.log2(1.0 + tab.gamma(p)).sum() / cfg.tau_c)


def _mc(p, stats, est, cfg, spec, precoder="rzf", max_lag=None):
    if spec.trials == 0:
        return None
    return mc_sum_se(p, stats, est, cfg, trials=spec.trials, seed=spec.seed,
                     precoder=precoder, max_lag=max_lag)


def _se_row(spec, value, baseline, de=None, mc=None, **extra):
    row = {"experiment": spec.name, "sweep_value": value, "baseline": baseline, "de_se": de}
    if mc is not None:
        row["mc_se"], row["mc_hw"] = mc.mean, mc.half_width_95
    row.update(extra)
    return row


# -- experiments ---------------------------------------------------------------------------

def _nmse_vs_snr(spec, cfg, value, timer):
    """Pilot SNR is p_p * mean_k tr(R_k) / (M sigma^2), set through p_p."""
    rows = []
    stats = build_statistics(cfg)
    mean_gain = float(np.mean(np.trace(stats.R, axis1=1, axis2=2).real)) / cfg.M
    p_pilot = 10.0 ** (value / 10.0) * cfg.noise_var_ul / mean_gain
    for v in spec.velocities:
        c = replace(cfg, p_pilot=p_pilot, fD=velocity_to_fd(v, cfg.carrier_freq), fD_Ts=None)
        with timer.stage("estimation"):
            est = build_estimation_model(stats, c)
            de = float(np.mean([nmse(est, k) for k in range(est.K)]))
        row = {"experiment": spec.name, "sweep_value": value, "baseline": "mmse",
               "velocity_kmh": v, "alpha_train_mean": float(np.mean(est.alpha_train)),
               "nmse_de": de}
        if spec.trials:
            with timer.stage("monte_carlo"):
                mc = mc_nmse(stats, est, c, trials=spec.trials, seed=spec.seed)
            vals = np.array([m.mean for m in mc])
            row["nmse_mc"] = float(vals.mean())
            row["nmse_mc_hw"] = float(np.sqrt(np.sum([m.half_width_95**2 for m in mc])) / len(mc))
        rows.append(row)
    return rows


def _se_vs_doppler(spec, cfg, value, timer):
    c = replace(cfg, fD_Ts=value)
    p = _equal_power(c)
    rows = []
    with timer.stage("statistics"):
        stats, est = _models(c)
    with timer.stage("de"):
        de = _de_se(p, stats, est, c)
    with timer.stage("monte_carlo"):
        mc = _mc(p, stats, est, c, spec)
    rows.append(_se_row(spec, value, "rzf", de, mc))
    if "static" in spec.baselines:
        s_est = build_estimation_model(stats, c, AgingProfile.static(c.K, c.tau_c))
        rows.append(_se_row(spec, value, "static", _de_se(p, stats, s_est, c),
                            _mc(p, stats, s_est, c, spec)))
    if "no-ris" in spec.baselines:
        ns, ne = _models(c, no_ris=True)
        rows.append(_se_row(spec, value, "no-ris", _de_se(p, ns, ne, c), _mc(p, ns, ne, c, spec)))
    if "mrt" in spec.baselines:
        rows.append(_se_row(spec, value, "mrt", None, _mc(p, stats, est, c, spec, "mrt")))
    if "high-overhead-ce" in spec.baselines:
        lag = c.tau_c - c.L - c.K
        rows.append(_se_row(spec, value, "high-overhead-ce", _de_se(p, stats, est, c, lag),
                            _mc(p, stats, est, c, spec, max_lag=lag)))
    return rows


def _se_vs_time_all(spec, cfg, sweep, timer):
    """Per-channel-use sum SE sum_k log2(1 + gamma_{k,n}) for the requested n."""
    times = np.array([int(v) for v in sweep])
    p = _equal_power(cfg)
    variants = [("rzf", None)]
    if "static" in spec.baselines:
        variants.append(("static", AgingProfile.static(cfg.K, cfg.tau_c)))
    stats = build_statistics(cfg)
    rows = {float(v): [] for v in sweep}
    for tag, profile in variants:
        est = build_estimation_model(stats, cfg, profile)
        with timer.stage("de"):
            tab = de_tables(stats, est, cfg, times=times)
            de_n = np.log2(1.0 + tab.gamma(p)).sum(axis=1)
        mc = None
        if spec.trials:
            with timer.stage("monte_carlo"):
                mc = mc_sum_se(p, stats, est, cfg, trials=spec.trials, seed=spec.seed,
                               times=times)
        for i, v in enumerate(sweep):
            row = {"experiment": spec.name, "sweep_value": float(v), "baseline": tag,
                   "de_se_n": float(de_n[i])}
            if mc is not None:
                row["mc_se_n"] = float(mc.per_term["se_per_time"][i])
                row["mc_hw"] = float(mc.per_term["se_per_time_hw"][i])
            rows[float(v)].append(row)
    return [r for v in sweep for r in rows[float(v)]]


def _se_vs_L(spec, cfg, value, timer):
    c = replace(cfg, L=int(value))
    rows = []
    with timer.stage("statistics"):
        stats, est = _models(c)
    with timer.stage("optimize"):
        st = alternating_optimize(stats, est, c)
    stats_o = stats.with_theta(st.c)
    est_o = build_estimation_model(stats_o, c, est.profile)
    with timer.stage("monte_carlo"):
        mc = _mc(st.p, stats_o, est_o, c, spec)
    rows.append(_se_row(spec, value, "rzf-opt", st.objective, mc, ao_iterations=len(st.trace)))
    if "static" in spec.baselines:
        s_est = build_estimation_model(stats, c, AgingProfile.static(c.K, c.tau_c))
        with timer.stage("optimize"):
            ss = alternating_optimize(stats, s_est, c)
        s_stats = stats.with_theta(ss.c)
        s_est_o = build_estimation_model(s_stats, c, s_est.profile)
        rows.append(_se_row(spec, value, "static", ss.objective,
                            _mc(ss.p, s_stats, s_est_o, c, spec), ao_iterations=len(ss.trace)))
    if "no-ris" in spec.baselines:
        ns, ne = _models(c, no_ris=True)
        p = _equal_power(c)
        rows.append(_se_row(spec, value, "no-ris", _de_se(p, ns, ne, c), _mc(p, ns, ne, c, spec)))
    if "mrt" in spec.baselines:
        rows.append(_se_row(spec, value, "mrt", None, _mc(st.p, stats_o, est_o, c, spec, "mrt")))
    if "high-overhead-ce" in spec.baselines:
        lag = c.tau_c - c.L - c.K
        rows.append(_se_row(spec, value, "high-overhead-ce",
                            _de_se(st.p, stats_o, est_o, c, lag),
                            _mc(st.p, stats_o, est_o, c, spec, max_lag=lag)))
    return rows


def _se_vs_M(spec, cfg, value, timer):
    c = replace(cfg, M=int(value), Z_matrix=None)
    p = _equal_power(c)
    with timer.stage("statistics"):
        stats, est = _models(c)
    with timer.stage("de"):
        de = _de_se(p, stats, est, c)
    with timer.stage("monte_carlo"):
        mc = _mc(p, stats, est, c, spec)
    gap = None if mc is None or mc.mean == 0 else abs(de - mc.mean) / mc.mean
    rows = [_se_row(spec, value, "rzf", de, mc, rel_gap=gap)]
    if "mrt" in spec.baselines:
        rows.append(_se_row(spec, value, "mrt", None, _mc(p, stats, est, c, spec, "mrt")))
    return rows


def _convergence_all(spec, cfg, sweep, timer):
    stats, est = _models(cfg)
    with timer.stage("optimize"):
        st = alternating_optimize(stats, est, cfg, max_outer=int(max(sweep)))
    rows = []
    for v in sweep:
        i = int(v)
        if i < 1:
            continue
        j = min(i, len(st.trace)) - 1
        info = st.inner[j]
        rows.append({"experiment": spec.name, "sweep_value": float(v), "baseline": "ao",
                     "de_se": st.trace[j][1], "pga_iterations": info["pga_iterations"],
                     "wmmse_iterations": info["wmmse_iterations"],
                     "converged": int(st.converged and i >= len(st.trace))})
    return rows


def random_phases(L, seed, index):
    """Initial phases for realization ``index``; index 0 is the default j * 1_L."""
    if index == 0:
        return np.full(L, 1j)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(10_000 + index,)))
    return np.exp(2j * np.pi * rng.random(L))


def _init_sensitivity_all(spec, cfg, sweep, timer):
    stats, est = _models(cfg)
    results = []
    for v in sweep:
        with timer.stage("optimize"):
            st = alternating_optimize(stats, est, cfg, c0=random_phases(cfg.L, spec.seed, int(v)))
        results.append((float(v), st))
    best = max(st.objective for _, st in results)
    return [{"experiment": spec.name, "sweep_value": v, "baseline": "ao", "de_se": st.objective,
             "ao_iterations": len(st.trace), "rel_to_best": (best - st.objective) / best}
            for v, st in results]


_POINTWISE = {
    "nmse-vs-snr": _nmse_vs_snr,
    "se-vs-doppler": _se_vs_doppler,
    "se-vs-L": _se_vs_L,
    "se-vs-M": _se_vs_M,
}
_WHOLE = {
    "se-vs-time": _se_vs_time_all,
    "convergence": _convergence_all,
    "init-sensitivity": _init_sensitivity_all,
}


def _run_point(args):
    spec, cfg, value = args
    timer = _Timer()
    rows = _POINTWISE[spec.name](spec, cfg, value, timer)
    return rows, timer.stages


def _workers():
    try:
        return max(1, int(os.environ.get("RIS_DE_THREADS", "1")))
    except ValueError:
        return 1


def run_experiment(spec, cfg):
    """Evaluate every sweep point; returns a :class:`RunRecord` (rows in sweep order).

    Writes ``<out>/<name>.csv`` and its JSON sidecar when ``spec.out`` is set.
    """
    record = RunRecord(spec=spec, cfg=cfg, started=time.time())
    t0 = time.perf_counter()
    sweep = spec.resolved_sweep(cfg)
    if spec.name in _WHOLE:
        timer = _Timer()
        record.rows = _WHOLE[spec.name](spec, cfg, sweep, timer)
        record.timings = dict(timer.stages)
    else:
        jobs = [(spec, cfg, v) for v in sweep]
        workers = min(_workers(), len(jobs))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_point, jobs))
        else:
            results = [_run_point(j) for j in jobs]
        for rows, stages in results:
            record.rows.extend(rows)
            for k, v in stages.items():
                record.timings[k] = record.timings.get(k, 0.0) + v
    record.wall_clock_s = time.perf_counter() - t0
    if spec.out is not None:
        os.makedirs(spec.out, exist_ok=True)
        record.csv_path = os.path.join(spec.out, f"{spec.name}.csv")
        with open(record.csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(format_csv(spec.name, record.rows))
        emit_metadata(record)
    return record


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        return repr(v)
    return str(v)


def format_csv(name, rows):
    """Deterministic CSV text: fixed column order, shortest round-trip floats."""
    cols = COLUMNS[name]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def git_revision():
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             cwd=os.path.dirname(os.path.abspath(__file__)), timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def emit_metadata(run, path=None):
    """Write the JSON sidecar next to the CSV (or at ``path``); returns the dict."""
    spec = run.spec
    meta = {
        "experiment": spec.name if spec else None,
        "config": run.cfg.to_dict() if run.cfg is not None else None,
        "seed": spec.seed if spec else None,
        "trials": spec.trials if spec else None,
        "sweep": list(spec.resolved_sweep(run.cfg)) if spec and run.cfg is not None else None,
        "baselines": list(spec.baselines) if spec else [],
        "git_revision": git_revision(),
        "started_unix": run.started,
        "wall_clock_s": run.wall_clock_s,
        "stage_timings_s": {k: run.timings[k] for k in sorted(run.timings)},
        "csv": os.path.basename(run.csv_path) if run.csv_path else None,
    }
    if path is None and run.csv_path:
        path = os.path.splitext(run.csv_path)[0] + ".meta.json"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
    return meta
