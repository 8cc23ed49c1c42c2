"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -s`` to see the lines; the heavy
quadratic-variation run needs ``--runslow``.
"""

import math
import time

import numpy as np
import pytest

from glauber_kawasaki.engine import ClockMode, ensemble, simulate, stack
from glauber_kawasaki.exact import (
    ExactDistribution,
    adjoint_one,
    build_generator,
    empirical_distribution,
    entropy_production_check,
    evolve,
    nn_correlation,
    state_indices,
    tv_distance,
)
from glauber_kawasaki.kernel_g import KernelG, jump_condition_check, weak_form_residual
from glauber_kawasaki.lattice import Configuration, Params, apply_flip, apply_swap, glauber_rate
from glauber_kawasaki.limits import (
    SdeParams,
    box_smooth,
    cosine_profile,
    decay_bound,
    density_cdf,
    fast_field_variance,
    l1_distance,
    mu_b_sample,
    pde_solve,
    sde_simulate,
)
from glauber_kawasaki.measures import (
    IsingInit,
    Product,
    ProductProfile,
    UTilted,
    partition_Z_U,
    sample,
    sample_counts,
    z_u_limit,
)
from glauber_kawasaki.observables import empirical_measure, weak_distance
from glauber_kawasaki.stats import concentration_check, covariance_estimator, ks_distance, ks_two_sample, qv_mean_check


def verdict(number: int, ok: bool, detail: str, started: float) -> None:
    tag = "PASS" if ok else "FAIL"
    print(f"\n[{tag}] criterion {number}: {detail} ({time.perf_counter() - started:.1f} s)")
    assert ok, detail


def test_criterion_01_adjoint_identity():
    t0 = time.perf_counter()
    worst = 0.0
    for n in (4, 6, 8):
        for gamma in (0.0, 0.3, 0.5):
            params = Params.from_gamma(n, 1.0, gamma)
            adj = adjoint_one(build_generator(params), Product(0.5)).total(params)
            target = 16 * params.a * gamma * nn_correlation(n)
            worst = max(worst, float(np.max(np.abs(math.sqrt(n) * (adj - target)))))
    elapsed = time.perf_counter() - t0
    verdict(1, worst <= 1e-10 and elapsed < 1.0, f"max deviation {worst:.2e} <= 1e-10", t0)


def test_criterion_02_engine_exactness():
    t0 = time.perf_counter()
    n, traj, t = 8, 100_000, 0.5
    params = Params(n, 1.0, 0.0)
    start = Configuration.from_bits("11010000")
    exact = evolve(ExactDistribution.point(state_indices(start.occupations[None])[0], n),
                   build_generator(params), t).probs
    ens = ensemble(params, ClockMode.ACCELERATED, start, traj, [t], base_seed=2, observables=())
    emp = empirical_distribution(state_indices(np.vstack([s.snapshots[-1] for s in ens])), n)
    tv = tv_distance(exact, emp)
    bound = 4 * math.sqrt(2**n / traj)
    verdict(2, tv <= bound, f"TV {tv:.4f} <= {bound:.3f}", t0)


def test_criterion_03_entropy_production():
    t0 = time.perf_counter()
    n = 10
    gen = build_generator(Params(n, 0.2, 0.0))
    mu0 = ExactDistribution.from_spec(IsingInit(0, 2), n)
    rep = entropy_production_check(mu0, UTilted(0.0), gen, np.linspace(0.005, 0.1, 20))
    held = sum(p.holds for p in rep.points)
    verdict(3, held == 20, f"inequality holds at {held}/20 times, min margin {rep.min_margin:.3e}", t0)


@pytest.mark.parametrize("delta,b", [(0.45, 1.0), (0.49, 0.2), (0.1, 3.0)])
def test_criterion_04_kernel_g(delta, b):
    t0 = time.perf_counter()
    L = 10_000
    kern = KernelG(delta, b, L)
    ell = np.arange(L + 1)
    scaled = np.abs(weak_form_residual(kern, ell)) / (1 + 4 * np.pi**2 * ell**2)
    jump = jump_condition_check(kern)
    ok = scaled.max() <= 1e-10 and kern.lambda0 == min(8 * delta, 4.0) and jump.rel_error <= 0.01
    verdict(4, ok, f"(delta,b)=({delta},{b}) scaled residual {scaled.max():.1e}, lambda0 {kern.lambda0}, "
                   f"jump {jump.measured:.4f} vs {jump.target:.4f}", t0)


def test_criterion_05_partition_asymptotics():
    t0 = time.perf_counter()
    errs = {th: abs(partition_Z_U(10**5, th).scaled / z_u_limit(th) - 1) for th in (-1.0, 0.0, 1.0)}
    worst = max(errs.values())
    verdict(5, worst <= 0.02, "relative errors " + ", ".join(f"{k:+g}: {v:.2e}" for k, v in errs.items()), t0)


def test_criterion_06_sampler_law():
    t0 = time.perf_counter()
    n = 10**4
    k = sample_counts(UTilted(0.0), n, np.random.default_rng(6), 10**4)
    Y = (k - n / 2) / n**0.75
    rep = ks_distance(Y, density_cdf(lambda x: np.exp(-x**4)), threshold=0.05)
    verdict(6, rep.passed, f"KS {rep.estimate:.4f} <= 0.05", t0)


def test_criterion_07_sde_limit():
    t0 = time.perf_counter()
    n, traj = 64, 2000
    params = Params(n, 1.0, 0.0)
    ens = ensemble(params, ClockMode.ACCELERATED, IsingInit(0, 2), traj, [1.0], base_seed=7)
    y_particle = stack(ens, "Y")[:, -1]
    rng = np.random.default_rng(70)
    path = sde_simulate(SdeParams(1.0, 0.0, 1e-3, 1.0), mu_b_sample(0.0, rng, 4 * traj), rng, record_times=[1.0])
    ks = ks_two_sample(y_particle, path.final, threshold=0.1)
    rel = {p: abs(np.mean(y_particle**p) / np.mean(path.final**p) - 1) for p in (2, 4)}
    ok = ks.passed and max(rel.values()) <= 0.10
    verdict(7, ok, f"KS {ks.estimate:.4f} <= 0.1, moment errors m2 {rel[2]:.3f} m4 {rel[4]:.3f} <= 0.10", t0)


@pytest.mark.slow
def test_criterion_08_quadratic_variation():
    t0 = time.perf_counter()
    n, traj, t = 256, 200, 2.0
    params = Params(n, 1.0, 0.0)
    ens = ensemble(params, ClockMode.ACCELERATED, IsingInit(0, 2), traj, [t], base_seed=8, observables=("qv",))
    rep = qv_mean_check(ens, params.a, t)
    tol = max(3 * rep.se, 0.05 * params.a)
    ok = abs(rep.estimate - params.a) <= tol
    verdict(8, ok, f"mean QV/t {rep.estimate:.4f} (SE {rep.se:.4f}) vs a=1, tolerance {tol:.4f}", t0)


def test_criterion_09_fast_mode_covariance():
    t0 = time.perf_counter()
    n, traj = 128, 400
    params = Params(n, 1.0, 0.0)
    names = ("fast:cos:1", "fast:cos:2", "fast:cos:3")
    ens = ensemble(params, ClockMode.ACCELERATED, IsingInit(0, 2), traj, [0.5, 0.6], base_seed=9, observables=names)
    at05 = np.column_stack([stack(ens, nm)[:, 0] for nm in names])
    at06 = stack(ens, "fast:cos:1")[:, 1]
    cov = covariance_estimator(np.column_stack([at05, at06]), [*names, "fast:cos:1@0.6"])
    reps = [cov.check(k - 1, k - 1, float(fast_field_variance(k, params.a)), f"var k={k}") for k in (1, 2, 3)]
    reps += [cov.check(i, j, 0.0, f"cov {i + 1},{j + 1}") for i, j in ((0, 1), (0, 2), (1, 2))]
    reps.append(cov.check(0, 3, 0.0, "cov t=0.5,0.6"))
    failed = [r.name for r in reps if not r.passed]
    detail = "; ".join(f"{r.name} {r.estimate:.4f}+-{r.se:.4f}" for r in reps)
    verdict(9, not failed, detail + (f"; failed: {failed}" if failed else ""), t0)


def test_criterion_10_hydrodynamic_limit_and_decay():
    t0 = time.perf_counter()
    n, t, half = 512, 0.1, 64
    params = Params(n, 1.0, 0.0)
    rho0 = cosine_profile(n)
    rng = np.random.default_rng(10)
    start = sample(ProductProfile(0.5, 0.3, 1), n, rng)
    ts = simulate(params, ClockMode.HYDRODYNAMIC, start, [t], observables=(), seed=rng)
    pde = pde_solve(rho0, params.a, params.gamma, t, dt=1e-4)
    dist = l1_distance(box_smooth(ts.snapshots[-1], half), box_smooth(pde.values, half))
    times = np.linspace(0.5, 20.0, 40)
    decay = pde_solve(rho0, 1.0, 0.5, 20.0, dt=1e-3, record_times=times)
    decay_ok = bool(np.all(decay.l2_history <= decay_bound(times)))
    verdict(10, dist <= 0.05 and decay_ok,
            f"L1 {dist:.4f} <= 0.05, decay bound holds on [0.5, 20]: {decay_ok}", t0)


def test_criterion_11_concentration():
    t0 = time.perf_counter()
    n, draws = 1000, 20_000
    rng = np.random.default_rng(11)
    base = np.zeros(n)
    base[: n // 2] = 1
    occ = rng.permuted(np.tile(base, (draws, 1)), axis=1)
    reps = [concentration_check(occ, np.ones(n), alpha) for alpha in (0.125, 0.25)]
    detail = "; ".join(f"alpha {r.extra['alpha']}: {r.estimate:.4f}+3SE <= {r.target:.2f}" for r in reps)
    verdict(11, all(r.passed for r in reps), detail, t0)


def test_criterion_12_property_suites():
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)
    failures = []
    for _ in range(200):
        n = int(rng.integers(4, 33))
        occ = rng.integers(0, 2, n).astype(np.uint8)
        cfg = Configuration(occ)
        i = int(rng.integers(n))
        gamma = float(rng.uniform(-1, 1))
        if apply_flip(apply_flip(cfg, i), i) != cfg or apply_swap(apply_swap(cfg, i), i) != cfg:
            failures.append("involution")
        if apply_swap(cfg, i).occupations.sum() != occ.sum():
            failures.append("conservation")
        if glauber_rate(cfg, i, gamma) != glauber_rate(Configuration(1 - occ), i, gamma):
            failures.append("spin-flip symmetry")
        mus = [empirical_measure(Configuration(rng.integers(0, 2, n).astype(np.uint8))) for _ in range(3)]
        d = lambda p, q: weak_distance(p, q, K=20).value
        if d(mus[0], mus[0]) != 0 or abs(d(mus[0], mus[1]) - d(mus[1], mus[0])) > 1e-12 \
                or d(mus[0], mus[2]) > d(mus[0], mus[1]) + d(mus[1], mus[2]) + 1e-12:
            failures.append("metric axioms")
    for n in (4, 6, 8):
        for _ in range(3):
            params = Params(n, float(rng.uniform(0, 2)), float(rng.uniform(-2, 2)))
            gen = build_generator(params)
            if np.max(np.abs(np.asarray(gen.Q.sum(axis=1)).ravel())) > 1e-9:
                failures.append("row sums")
            d0 = ExactDistribution.from_spec(Product(0.3), n)
            s, u = float(rng.uniform(0, 0.05)), float(rng.uniform(0, 0.05))
            if np.max(np.abs(evolve(evolve(d0, gen, s), gen, u).probs - evolve(d0, gen, s + u).probs)) > 1e-9:
                failures.append("semigroup")
    a0 = Params(16, 0.0, 0.0)
    ts = simulate(a0, ClockMode.ACCELERATED, Configuration.from_bits("1100101000111010"), [0.01, 0.02],
                  observables=("density",), seed=int(rng.integers(1 << 30)))
    if not np.all(ts["density"] == 8 / 16):
        failures.append("dynamics conservation")
    verdict(12, not failures, f"failures: {sorted(set(failures)) or 'none'}", t0)
