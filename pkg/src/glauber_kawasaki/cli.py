"""Command-line front end: one run directory per invocation.

Every run writes CSV data, JSON reports and ``manifest.json`` (resolved
configuration, its hash, package version, seeds and the SHA-256 of every
output file) into ``<root>/<kind>-<timestamp>-<hash>``. The root is
``--out``, else ``$GLAUBER_KAWASAKI_OUT``, else ``./gk-runs``.

Exit codes: 0 pass, 1 statistical failure, 2 usage error, 3 runtime or
budget error.

CSV schemas (all floats written with full precision):

==================  =========================================================
simulate (1 traj)   ``series.csv``: t, <observable>...
simulate/ensemble   ``ensemble.csv``: traj, t, <observable>...
sample-measure      ``samples.csv``: index, m, Y, hex
kernel-g            ``coefficients.csv``: ell, lambda_minus, lambda_plus,
                    residual, scaled_residual; ``g.csv``: x, g
sde                 ``paths.csv``: path, t, y; ``moments.csv``: t, mean, m2, m4
pde                 ``profiles.csv``: t, x, u; ``norms.csv``: t, l2, bound
fast-field          ``samples.csv``: sample, time, k, cos, sin
exact adjoint       ``adjoint.csv``: state, bits, exclusion, glauber, closed_form
exact entropy       ``entropy.csv``: t, H, dH_fd, fd_error, dH_exact, gamma_n,
                    source, rhs, margin, holds, conclusive
exact tv            ``tv.csv``: state, bits, exact, empirical
==================  =========================================================
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, config_from_mapping, normalise_key, parse_kv
from .engine import ClockMode, ensemble, simulate, split_seed, stack
from .lattice import Configuration, Params

OUTPUT_ENV = "GLAUBER_KAWASAKI_OUT"
DEFAULT_ROOT = "gk-runs"
EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
KS_SDE_THRESHOLD = 0.1


class RuntimeBudgetError(RuntimeError):
    pass


# ----------------------------------------------------------------------------
# run directory
# ----------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def config_hash(cfg: ExperimentConfig) -> str:
    d = cfg.to_dict()
    d.pop("out", None)
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()


def output_root(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out or os.environ.get(OUTPUT_ENV) or DEFAULT_ROOT)


class RunDir:
    """Fresh output directory plus the bookkeeping needed for the manifest."""

    def __init__(self, cfg: ExperimentConfig, root: Path | None = None):
        self.cfg = cfg
        self.hash = config_hash(cfg)
        root = Path(root) if root is not None else output_root(cfg)
        stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S")
        base = f"{cfg.kind}-{stamp}-{self.hash[:10]}"
        path = root / base
        k = 1
        while path.exists():
            path = root / f"{base}-{k}"
            k += 1
        path.mkdir(parents=True)
        self.path = path
        self.files: list[str] = []
        self.seeds: dict = {"base_seed": cfg.seed}
        self.reports: list = []

    def write_csv(self, name: str, header, rows) -> Path:
        p = self.path / name
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.files.append(name)
        return p

    def write_json(self, name: str, obj) -> Path:
        from .stats import _jsonable

        p = self.path / name
        p.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
        self.files.append(name)
        return p

    def report(self, rep) -> None:
        self.reports.append(rep)
        print(rep.line())

    def finish(self, status: int) -> Path:
        if self.reports:
            self.write_json("reports.json", [r.to_dict() for r in self.reports])
        manifest = {
            "kind": self.cfg.kind,
            "config": self.cfg.to_dict(),
            "config_hash": self.hash,
            "version": __version__,
            "numpy": np.__version__,
            "seeds": self.seeds,
            "created": _dt.datetime.now().isoformat(timespec="seconds"),
            "exit_status": status,
            "files": {f: file_sha256(self.path / f) for f in self.files},
        }
        (self.path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return self.path


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _status(reports) -> int:
    return EXIT_PASS if all(r.passed for r in reports) else EXIT_FAIL


def _grid(cfg: ExperimentConfig) -> np.ndarray:
    return np.linspace(0.0, cfg.t_end, cfg.n_times) if cfg.n_times > 1 else np.array([cfg.t_end])


def _params(cfg: ExperimentConfig) -> Params:
    if "gamma" in cfg.extra:
        return Params.from_gamma(cfg.n, cfg.a, cfg.extra["gamma"])
    return Params(cfg.n, cfg.a, cfg.theta)


def _initial(cfg: ExperimentConfig):
    from .measures import parse_measure

    if cfg.init.startswith("hex:"):
        config = Configuration.from_hex(cfg.init[4:])
        if config.n != cfg.n:
            raise ValueError(f"init: configuration has {config.n} sites, n = {cfg.n}")
        return config
    return parse_measure(cfg.init)


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------

def _observables(cfg: ExperimentConfig) -> list[str]:
    from .observables import parse_selection

    names = [s.strip() for s in cfg.extra.get("observables", "Y").split(",") if s.strip()]
    for s in names:
        parse_selection(s)
    return names


def _write_ensemble(run: RunDir, series, names):
    rows = ([k, t, *(ts.records[c][j] for c in names)]
            for k, ts in enumerate(series) for j, t in enumerate(ts.times))
    run.write_csv("ensemble.csv", ["traj", "t", *names], rows)
    summary = {"n_traj": len(series), "truncated": sum(ts.truncated for ts in series),
               "events": sum(ts.counters["events"] for ts in series), "final": {}}
    for c in names:
        x = stack(series, c)[:, -1]
        summary["final"][c] = {"mean": float(np.mean(x)),
                               "se": float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else None}
    run.write_json("summary.json", summary)
    return summary


def cmd_simulate(cfg: ExperimentConfig, run: RunDir) -> int:
    from .limits import SdeParams, mu_b_sample, sde_simulate
    from .measures import IsingInit, sample
    from .stats import ks_two_sample

    params = _params(cfg)
    mode = ClockMode(cfg.mode)
    init = _initial(cfg)
    names = _observables(cfg)
    grid = _grid(cfg)
    max_events = cfg.extra.get("max_events", 10**10)
    if cfg.traj == 1:
        rng = np.random.Generator(np.random.PCG64(split_seed(cfg.seed, 0)))
        start = init if isinstance(init, Configuration) else sample(init, cfg.n, rng)
        ts = simulate(params, mode, start, grid, names, seed=rng, max_events=max_events)
        run.seeds["trajectory_0"] = {"entropy": cfg.seed, "spawn_key": [0]}
        ts.to_csv(run.path / "series.csv")
        run.files.append("series.csv")
        summary = ts.summary()
        summary["seed"] = run.seeds["trajectory_0"]
        run.write_json("summary.json", summary)
        return EXIT_RUNTIME if ts.truncated else EXIT_PASS
    if cfg.kind == "simulate" and "Y" not in names and mode is ClockMode.ACCELERATED:
        names = ["Y", *names]
    series = ensemble(params, mode, init, cfg.traj, grid, cfg.seed, names, max_events=max_events,
                      workers=cfg.extra.get("workers", 1))
    run.seeds["trajectories"] = f"SeedSequence({cfg.seed}).spawn_key=(k,) for k < {cfg.traj}"
    _write_ensemble(run, series, names)
    if any(ts.truncated for ts in series):
        return EXIT_RUNTIME
    if cfg.kind != "simulate" or mode is not ClockMode.ACCELERATED:
        return EXIT_PASS
    # law comparison of Y_T against the limiting SDE ensemble
    y_particles = stack(series, "Y")
    sde_seed = np.random.SeedSequence([cfg.seed, 1])
    run.seeds["sde"] = {"entropy": [cfg.seed, 1]}
    rng = np.random.Generator(np.random.PCG64(sde_seed))
    n_paths = cfg.extra.get("paths", 4 * cfg.traj)
    if isinstance(init, IsingInit) and init.c == 2.0:
        y0 = mu_b_sample(init.b, rng, n_paths)
    else:
        y0 = rng.choice(y_particles[:, 0], size=n_paths)
    h = cfg.extra.get("h", 1e-3)
    if cfg.t_end / h != round(cfg.t_end / h):
        h = cfg.t_end / math.ceil(cfg.t_end / h)
    path = sde_simulate(SdeParams(cfg.a, cfg.theta, h, cfg.t_end), y0, rng, record_times=[cfg.t_end])
    rep = ks_two_sample(y_particles[:, -1], path.final, threshold=KS_SDE_THRESHOLD, name="ks_Y_vs_sde")
    run.report(rep)
    return _status([rep])


def cmd_sample_measure(cfg: ExperimentConfig, run: RunDir) -> int:
    from .measures import check_size, parse_measure, sample

    spec = parse_measure(cfg.extra.get("measure", "u-tilted:theta=0"))
    check_size(spec, cfg.n)
    count = cfg.extra.get("count", 1000)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    rows, Y = [], []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for i in range(count):
            c = sample(spec, cfg.n, rng)
            y = (c.m - cfg.n / 2) / cfg.n**0.75
            Y.append(y)
            rows.append([i, c.m, y, c.to_hex()])
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    run.write_csv("samples.csv", ["index", "m", "Y", "hex"], rows)
    Y = np.asarray(Y)
    run.write_json("summary.json", {"measure": str(spec), "n": cfg.n, "count": count,
                                    "Y_mean": Y.mean(), "Y_m2": np.mean(Y**2), "Y_m4": np.mean(Y**4),
                                    "warnings": [str(w.message) for w in caught]})
    return EXIT_PASS


def cmd_kernel_g(cfg: ExperimentConfig, run: RunDir) -> int:
    from .kernel_g import KernelG, _roots, evaluate_g, jump_condition_check, weak_form_residual
    from .stats import EstimatorReport

    delta, b = cfg.extra.get("delta", 0.45), cfg.extra.get("b", 1.0)
    L = cfg.extra.get("L", 10_000)
    kern = KernelG(delta, b, L)
    ell = np.arange(L + 1)
    res = weak_form_residual(kern, ell)
    scale = 1.0 + 4.0 * np.pi**2 * ell.astype(float) ** 2
    run.write_csv("coefficients.csv", ["ell", "lambda_minus", "lambda_plus", "residual", "scaled_residual"],
                  zip(ell, kern.coeffs, _roots(ell, delta, b)[1], res, np.abs(res) / scale))
    G = cfg.extra.get("grid", 1000)
    x = np.arange(G + 1) / G
    run.write_csv("g.csv", ["x", "g"], zip(x, evaluate_g(x, kern)))
    jump = jump_condition_check(kern)
    reports = [
        EstimatorReport("max_scaled_residual", float(np.max(np.abs(res) / scale)), 0.0, L + 1, 1e-10, 0.0, "below"),
        EstimatorReport("lambda0", kern.lambda0, 0.0, 1, min(8 * delta, 4.0), 0.0, "within"),
    ]
    if delta != 0 and b != 0:
        reports.append(EstimatorReport("jump_condition", jump.measured, 0.0, L, jump.target,
                                       0.01 * abs(jump.target), "within", extra={"naive": jump.naive}))
    for r in reports:
        run.report(r)
    return _status(reports)


def _parse_y0(text: str, rng, size: int) -> np.ndarray:
    from .limits import mu_b_sample

    if text.startswith("mu_b"):
        b = 0.0
        if ":" in text:
            key, _, val = text.split(":", 1)[1].partition("=")
            if key.strip() != "b":
                raise ValueError(f"y0: unknown parameter {key!r}")
            b = float(val)
        return mu_b_sample(b, rng, size)
    return np.full(size, float(text))


def cmd_sde(cfg: ExperimentConfig, run: RunDir) -> int:
    from .limits import SdeParams, sde_simulate

    T = cfg.extra.get("T", cfg.t_end)
    p = SdeParams(cfg.a, cfg.theta, cfg.extra.get("h", 1e-3), T)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    paths = cfg.extra.get("paths", 1000)
    y0 = _parse_y0(cfg.extra.get("y0", "mu_b:b=0"), rng, paths)
    times = np.linspace(0.0, T, cfg.n_times) if cfg.n_times > 1 else np.array([T])
    path = sde_simulate(p, y0, rng, record_times=times)
    run.write_csv("paths.csv", ["path", "t", "y"],
                  ([k, t, path.values[j, k]] for k in range(paths) for j, t in enumerate(path.times)))
    v = path.values
    run.write_csv("moments.csv", ["t", "mean", "m2", "m4"],
                  zip(path.times, v.mean(axis=1), np.mean(v**2, axis=1), np.mean(v**4, axis=1)))
    run.write_json("summary.json", {"substeps": path.substeps, "paths": paths, "h": p.h, "T": T})
    return EXIT_PASS


def _parse_profile(text: str, G: int) -> np.ndarray:
    from .limits import cosine_profile

    kind, _, rest = text.partition(":")
    if kind == "const":
        return np.full(G, float(rest))
    if kind == "cos":
        kw = {"base": 0.5, "amp": 0.3, "k": 1}
        for item in filter(None, rest.split(",")):
            key, _, val = item.partition("=")
            if key not in kw:
                raise ValueError(f"rho0: unknown parameter {key!r}")
            kw[key] = int(val) if key == "k" else float(val)
        return cosine_profile(G, **kw)
    raise ValueError(f"rho0: expected 'const:<rho>' or 'cos:base=..,amp=..,k=..', got {text!r}")


def cmd_pde(cfg: ExperimentConfig, run: RunDir) -> int:
    from .limits import decay_bound, pde_solve

    G = cfg.extra.get("G", 512)
    gamma = cfg.extra.get("gamma", 0.5)
    rho0 = _parse_profile(cfg.extra.get("rho0", "cos:base=0.5,amp=0.3,k=1"), G)
    times = np.linspace(0.0, cfg.t_end, cfg.n_times)
    st = pde_solve(rho0, cfg.a, gamma, cfg.t_end, cfg.extra.get("dt", 1e-4), record_times=times,
                   keep_profiles=True)
    x = np.arange(G) / G
    run.write_csv("profiles.csv", ["t", "x", "u"],
                  ([t, xi, ui] for t, prof in zip(st.record_times, st.profiles) for xi, ui in zip(x, prof)))
    with np.errstate(divide="ignore"):
        bound = decay_bound(st.record_times)
    run.write_csv("norms.csv", ["t", "l2", "bound"], zip(st.record_times, st.l2_history, bound))
    run.write_json("summary.json", {"G": G, "gamma": gamma, "rejected_steps": st.rejected_steps,
                                    "final_mass": st.mass})
    return EXIT_PASS


def cmd_fast_field(cfg: ExperimentConfig, run: RunDir) -> int:
    from .limits import fast_field_variance, gaussian_fast_field
    from .stats import moment_ci

    K = cfg.extra.get("K", 3)
    count = cfg.extra.get("samples", 1000)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    draws = np.stack([gaussian_fast_field(K, cfg.a, rng, cfg.n_times) for _ in range(count)])
    rows = ([s, j, k + 1, draws[s, j, 0, k], draws[s, j, 1, k]]
            for s in range(count) for j in range(cfg.n_times) for k in range(K))
    run.write_csv("samples.csv", ["sample", "time", "k", "cos", "sin"], rows)
    reports = []
    for k in range(1, K + 1):
        target = float(fast_field_variance(k, cfg.a))
        rep = moment_ci(draws[:, 0, 0, k - 1], 2, target, name=f"var_cos_k{k}")
        run.report(rep)
        reports.append(rep)
    return _status(reports)


def cmd_exact(cfg: ExperimentConfig, run: RunDir) -> int:
    what = cfg.extra.get("what", "adjoint")
    return {"adjoint": _exact_adjoint, "entropy": _exact_entropy, "tv": _exact_tv}[what](cfg, run)


def _exact_adjoint(cfg, run) -> int:
    from .exact import adjoint_one, build_generator, nn_correlation
    from .measures import Product, parse_measure
    from .stats import EstimatorReport

    params = _params(cfg)
    gen = build_generator(params, ClockMode(cfg.mode))
    ref = parse_measure(cfg.extra.get("ref", "product:0.5"))
    adj = adjoint_one(gen, ref)
    scale = params.a * gen.speed
    closed = 16.0 * params.gamma * nn_correlation(params.n) if ref == Product(0.5) else np.full(gen.size, np.nan)
    bits = [Configuration.from_index(i, params.n).bits() for i in range(gen.size)]
    run.write_csv("adjoint.csv", ["state", "bits", "exclusion", "glauber", "closed_form"],
                  zip(range(gen.size), bits, adj.exclusion, adj.glauber, closed))
    if np.isnan(closed).all():
        print("no closed form for this reference measure; table written")
        return EXIT_PASS
    dev = float(np.max(np.abs(scale * (adj.glauber - closed))))
    ex_dev = float(np.max(np.abs(adj.exclusion)))
    print(f"max deviation {dev:.3e}")
    reports = [EstimatorReport("adjoint_glauber_max_deviation", dev, 0.0, gen.size, 1e-10, 0.0, "below"),
               EstimatorReport("adjoint_exclusion_max_abs", ex_dev, 0.0, gen.size, 1e-10, 0.0, "below")]
    for r in reports:
        run.report(r)
    return _status(reports)


def _exact_entropy(cfg, run) -> int:
    from .exact import ExactDistribution, build_generator, entropy_production_check
    from .measures import parse_measure

    params = _params(cfg)
    gen = build_generator(params, ClockMode(cfg.mode))
    ref = parse_measure(cfg.extra.get("ref", "u-tilted:theta=0"))
    mu0 = ExactDistribution.from_spec(_initial(cfg), params.n)
    t_max = cfg.extra.get("t_max", cfg.t_end)
    points = cfg.extra.get("points", 20)
    grid = np.linspace(t_max / points, t_max, points)
    rep = entropy_production_check(mu0, ref, gen, grid)
    keys = ["t", "H", "dH_fd", "fd_error", "dH_exact", "gamma_n", "source", "rhs", "margin", "holds", "conclusive"]
    run.write_csv("entropy.csv", keys, ([row[k] for k in keys] for row in rep.rows()))
    print(f"entropy production inequality holds at {sum(p.holds for p in rep.points)}/{len(rep.points)} "
          f"times, min margin {rep.min_margin:.4g}")
    return EXIT_PASS if rep.all_hold else EXIT_FAIL


def _exact_tv(cfg, run) -> int:
    from .exact import ExactDistribution, build_generator, empirical_distribution, evolve, state_indices, tv_distance
    from .stats import EstimatorReport

    params = _params(cfg)
    mode = ClockMode(cfg.mode)
    gen = build_generator(params, mode)
    init = _initial(cfg)
    t = cfg.extra.get("t", cfg.t_end)
    mu0 = (ExactDistribution.point(init.index(), params.n) if isinstance(init, Configuration)
           else ExactDistribution.from_spec(init, params.n))
    exact = evolve(mu0, gen, t).probs
    series = ensemble(params, mode, init, cfg.traj, [t], cfg.seed, observables=())
    finals = np.vstack([ts.snapshots[-1] for ts in series])
    emp = empirical_distribution(state_indices(finals), params.n)
    bits = [Configuration.from_index(i, params.n).bits() for i in range(gen.size)]
    run.write_csv("tv.csv", ["state", "bits", "exact", "empirical"], zip(range(gen.size), bits, exact, emp))
    envelope = 4.0 * math.sqrt(gen.size / cfg.traj)
    rep = EstimatorReport("tv_mc_vs_exact", tv_distance(exact, emp), math.nan, cfg.traj, envelope, 0.0, "below")
    run.report(rep)
    return _status([rep])


def cmd_analyze(cfg: ExperimentConfig, run: RunDir) -> int:
    from .stats import jackknife_mean_se, EstimatorReport, residual_brownian_check

    src = Path(cfg.extra["run"])
    manifest = json.loads((src / "manifest.json").read_text())
    scfg = manifest["config"]
    data = np.genfromtxt(src / "ensemble.csv", delimiter=",", names=True)
    names = [c for c in data.dtype.names if c not in ("traj", "t")]
    traj = data["traj"].astype(int)
    n_traj = traj.max() + 1
    times = data["t"][traj == 0]
    out, reports = {"source": str(src), "n_traj": int(n_traj), "final": {}}, []
    for c in names:
        arr = data[c].reshape(n_traj, times.size)
        x = arr[:, -1]
        m, se = jackknife_mean_se(x)
        out["final"][c] = {"mean": m, "se": se, "m2": float(np.mean(x**2)), "m4": float(np.mean(x**4))}
        if c == "Y" and times.size >= 3 and scfg.get("mode") == "accelerated":
            reports.append(residual_brownian_check(times, arr, scfg["a"], scfg["theta"], seed=cfg.seed))
        if c == "qv":
            m, se = jackknife_mean_se(x / times[-1])
            reports.append(EstimatorReport("qv_mean_rate", m, se, x.size, scfg["a"],
                                           max(3 * se, 0.05 * scfg["a"]), "within"))
    run.write_json("analysis.json", out)
    for r in reports:
        run.report(r)
    return _status(reports)


def cmd_calibrate(cfg: ExperimentConfig, run: RunDir) -> int:
    from .stats import calibrate

    reports = calibrate(cfg.seed)
    for r in reports:
        run.report(r)
    return _status(reports)


HANDLERS = {
    "simulate": cmd_simulate, "ensemble": cmd_simulate, "sample-measure": cmd_sample_measure,
    "kernel-g": cmd_kernel_g, "sde": cmd_sde, "pde": cmd_pde, "fast-field": cmd_fast_field,
    "exact": cmd_exact, "analyze": cmd_analyze, "calibrate": cmd_calibrate,
}


# ----------------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------------

_COMMON = {"seed": 0}
_DEFAULTS = {
    "simulate": {"n": 64, "a": 1.0, "theta": 0.0, "init": "ising:b=0,c=2", "mode": "accelerated",
                 "t_end": 1.0, "n_times": 11, "traj": 1, "observables": "Y"},
    "sample-measure": {"n": 64, "measure": "u-tilted:theta=0", "count": 1000},
    "kernel-g": {"delta": 0.45, "b": 1.0, "L": 10_000, "grid": 1000},
    "sde": {"a": 1.0, "theta": 0.0, "h": 1e-3, "T": 1.0, "paths": 1000, "y0": "mu_b:b=0", "n_times": 11},
    "pde": {"a": 1.0, "gamma": 0.5, "G": 512, "dt": 1e-4, "t_end": 1.0, "n_times": 11,
            "rho0": "cos:base=0.5,amp=0.3,k=1"},
    "fast-field": {"a": 1.0, "K": 3, "samples": 1000, "n_times": 1},
    "exact": {"n": 8, "a": 1.0, "theta": 0.0, "mode": "accelerated", "ref": "product:0.5",
              "init": "product:0.5", "t_end": 0.5, "traj": 10_000, "points": 20},
    "analyze": {},
    "calibrate": {"seed": 20240601},
}
_DEFAULTS["ensemble"] = dict(_DEFAULTS["simulate"], traj=100)

_OPTIONS = {
    "n": (int, "number of lattice sites"),
    "a": (float, "reaction strength"),
    "theta": (float, "critical-window parameter"),
    "gamma": (float, "Glauber parameter (overrides theta)"),
    "init": (str, "initial law (measure spec or hex:<configuration>)"),
    "mode": (str, "clock: accelerated or hydrodynamic"),
    "t_end": (float, "final time"),
    "n_times": (int, "number of recorded grid times"),
    "traj": (int, "number of trajectories"),
    "observables": (str, "comma-separated observable selections"),
    "max_events": (int, "event budget per trajectory"),
    "workers": (int, "threads for the ensemble"),
    "paths": (int, "number of SDE paths"),
    "h": (float, "SDE step"),
    "T": (float, "SDE horizon"),
    "y0": (str, "SDE initial law: a number or mu_b:b=<b>"),
    "measure": (str, "measure spec"),
    "count": (int, "number of samples"),
    "delta": (float, "kernel parameter delta"),
    "b": (float, "kernel parameter b"),
    "L": (int, "number of Fourier modes"),
    "grid": (int, "number of grid intervals for g"),
    "G": (int, "PDE grid size"),
    "dt": (float, "PDE step"),
    "rho0": (str, "PDE initial profile"),
    "K": (int, "number of fast modes"),
    "samples": (int, "number of samples"),
    "ref": (str, "reference measure spec"),
    "t": (float, "comparison time"),
    "t_max": (float, "last entropy grid time"),
    "points": (int, "number of entropy grid times"),
    "run": (str, "run directory to analyse"),
}

_SUB_OPTIONS = {
    "simulate": ["n", "a", "theta", "gamma", "init", "mode", "t_end", "n_times", "traj", "observables",
                 "max_events", "workers", "paths", "h"],
    "sample-measure": ["n", "measure", "count"],
    "kernel-g": ["delta", "b", "L", "grid"],
    "sde": ["a", "theta", "h", "T", "paths", "y0", "n_times"],
    "pde": ["a", "gamma", "G", "dt", "t_end", "n_times", "rho0"],
    "fast-field": ["a", "K", "samples", "n_times"],
    "exact": ["n", "a", "theta", "gamma", "mode", "ref", "init", "t", "t_end", "t_max", "points", "traj"],
    "analyze": ["run"],
    "calibrate": [],
}
_SUB_OPTIONS["ensemble"] = _SUB_OPTIONS["simulate"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glauber-kawasaki", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in HANDLERS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        if kind == "exact":
            p.add_argument("what", choices=["adjoint", "entropy", "tv"])
        p.add_argument("--config", help="key = value configuration file (flags override it)")
        p.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or ./{DEFAULT_ROOT})")
        p.add_argument("--seed", type=int, help="base seed")
        for key in _SUB_OPTIONS[kind]:
            tp, text = _OPTIONS[key]
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, type=str, help=f"{text} ({tp.__name__})")
    rp = sub.add_parser("replay", help="rerun a manifest and compare output hashes")
    rp.add_argument("manifest")
    rp.add_argument("--out", help="output root for the replayed run")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then the config file, then command-line flags."""
    kind = args.command
    merged = {"kind": kind, **_COMMON, **_DEFAULTS[kind]}
    if getattr(args, "config", None):
        raw, errors = parse_kv(Path(args.config).read_text())
        if errors:
            raise ConfigError(errors)
        raw.pop("kind", None)
        merged.update(raw)
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        merged[normalise_key(key)] = value
    if kind == "exact":
        merged.setdefault("what", args.what)
        if args.what == "entropy":
            for key, value in (("n", 10), ("a", 0.2), ("ref", "u-tilted:theta=0"), ("init", "ising:b=0,c=2"),
                               ("t_max", 0.1)):
                if not _given(args, key):
                    merged[key] = value
    if kind == "analyze" and "run" not in merged:
        raise ConfigError(["run: the run directory to analyse is required"])
    return config_from_mapping(merged)


def _given(args, key) -> bool:
    if getattr(args, key, None) is not None:
        return True
    if getattr(args, "config", None):
        raw, _ = parse_kv(Path(args.config).read_text())
        return key in raw
    return False


def execute(cfg: ExperimentConfig, root: Path | None = None) -> tuple[int, Path]:
    from .exact import TruncationBudgetExceeded
    from .limits import PdeStepRejected, SdeDivergence

    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    run = RunDir(cfg, root)
    try:
        status = HANDLERS[cfg.kind](cfg, run)
    except (TruncationBudgetExceeded, SdeDivergence, PdeStepRejected, RuntimeBudgetError, MemoryError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        status = EXIT_RUNTIME
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        status = EXIT_USAGE
    path = run.finish(status)
    print(path)
    return status, path


def replay(manifest_path: str, out: str | None = None) -> int:
    manifest = json.loads(Path(manifest_path).read_text())
    cfg = config_from_mapping(manifest["config"])
    root = Path(out) if out else Path(manifest_path).resolve().parent.parent
    status, path = execute(cfg, root)
    new = json.loads((path / "manifest.json").read_text())["files"]
    old = manifest["files"]
    mismatched = sorted(k for k in set(old) | set(new) if old.get(k) != new.get(k))
    for k in mismatched:
        print(f"hash mismatch: {k}")
    if not mismatched:
        print(f"replay reproduced {len(old)} files")
    return EXIT_FAIL if mismatched else status


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_PASS
    if args.command == "replay":
        return replay(args.manifest, args.out)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    status, _ = execute(cfg)
    return status


if __name__ == "__main__":
    sys.exit(main())
