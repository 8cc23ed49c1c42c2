"""Estimators with standard errors and pass/fail reports.

A report stores everything needed to re-derive its verdict: the estimate,
its standard error, the target, the tolerance and the comparison rule.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps
from scipy.special import logsumexp

KS_COEFF_95 = 1.36


@dataclass
class EstimatorReport:
    """Point estimate with SE and a reproducible verdict.

    ``comparison`` is one of

    * ``"within"``: ``|estimate - target| <= tolerance``
    * ``"below"``: ``estimate <= target``
    * ``"upper"``: ``estimate + tolerance <= target`` (one-sided bound check)
    """

    name: str
    estimate: float
    se: float
    n: int
    target: float
    tolerance: float
    comparison: str = "within"
    passed: bool = False
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed = self.verdict()

    def verdict(self) -> bool:
        e, t, tol = self.estimate, self.target, self.tolerance
        if not all(map(math.isfinite, (e, t))) or math.isnan(tol):
            return False
        if self.comparison == "within":
            return abs(e - t) <= tol
        if self.comparison == "below":
            return e <= t
        if self.comparison == "upper":
            return e + tol <= t
        raise ValueError(f"unknown comparison {self.comparison!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorReport":
        d = dict(d)
        stored = d.pop("pass", None)
        rep = cls(**d)
        if stored is not None and stored != rep.passed:
            raise ValueError(f"stored verdict {stored} disagrees with recomputed {rep.passed}")
        return rep

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: estimate={self.estimate:.6g} se={self.se:.3g} "
                f"target={self.target:.6g} tol={self.tolerance:.3g} ({self.comparison})"
                + (f" flags={self.flags}" if self.flags else ""))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ----------------------------------------------------------------------------
# moments and distributions
# ----------------------------------------------------------------------------

def jackknife_mean_se(values) -> tuple[float, float]:
    """Mean and delete-one jackknife SE (equal to the classical ``s/sqrt(N)`` for a mean)."""
    v = np.asarray(values, dtype=float)
    N = v.size
    if N < 2:
        return float(v.mean()) if N else math.nan, math.nan
    loo = (v.sum() - v) / (N - 1)
    se = math.sqrt((N - 1) / N * np.sum((loo - loo.mean()) ** 2))
    return float(v.mean()), se


def moment_ci(samples, order: int, target: float = math.nan, k_se: float = 3.0,
              name: str | None = None, rel_tol: float | None = None) -> EstimatorReport:
    """Empirical ``E[X^order]`` with jackknife SE.

    The tolerance is ``k_se`` SE, or ``rel_tol * |target|`` when given.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 30:
        raise ValueError("moment_ci needs at least 30 samples")
    est, se = jackknife_mean_se(x**order)
    flags = ["degenerate"] if se == 0.0 else []
    tol = rel_tol * abs(target) if rel_tol is not None else k_se * se
    return EstimatorReport(name or f"moment_{order}", est, se, x.size, target, tol, "within", flags=flags)


def ks_distance(samples, cdf: Callable, threshold: float | None = None,
                name: str = "ks") -> EstimatorReport:
    """Kolmogorov-Smirnov sup distance; passes when below ``threshold`` (default ``1.36/sqrt(N)``)."""
    x = np.asarray(samples, dtype=float).ravel()
    N = x.size
    res = sps.kstest(x, cdf)
    crit = KS_COEFF_95 / math.sqrt(N)
    thr = crit if threshold is None else threshold
    return EstimatorReport(name, float(res.statistic), math.nan, N, thr, 0.0, "below",
                           extra={"critical_95": crit, "p_value": float(res.pvalue)})


def ks_two_sample(x, y, threshold: float | None = None, name: str = "ks2") -> EstimatorReport:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    res = sps.ks_2samp(x, y)
    crit = KS_COEFF_95 * math.sqrt((x.size + y.size) / (x.size * y.size))
    thr = crit if threshold is None else threshold
    return EstimatorReport(name, float(res.statistic), math.nan, x.size + y.size, thr, 0.0, "below",
                           extra={"critical_95": crit, "p_value": float(res.pvalue)})


def ratio_of_means(x, y, name: str, rel_tol: float, target: float = 1.0) -> EstimatorReport:
    """``mean(x)/mean(y)`` for independent samples, SE by the delta method."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    mx, sx = jackknife_mean_se(x)
    my, sy = jackknife_mean_se(y)
    r = mx / my
    se = abs(r) * math.hypot(sx / mx, sy / my)
    return EstimatorReport(name, r, se, x.size + y.size, target, rel_tol * abs(target), "within")


# ----------------------------------------------------------------------------
# quadratic variation and the residual Brownian motion
# ----------------------------------------------------------------------------

def _qv_final(series, t: float | None) -> tuple[np.ndarray, float]:
    vals, times = [], None
    for ts in series:
        k = ts.times.size - 1 if t is None else int(np.argmin(np.abs(ts.times - t)))
        vals.append(ts.qv[k])
        times = ts.times[k]
    return np.asarray(vals, dtype=float), float(times)


def qv_convergence(series: Sequence, a: float, t: float | None = None, k_se: float = 3.0) -> EstimatorReport:
    """``E|<M>_t - a t|`` across the ensemble (always >= 0)."""
    qv, tt = _qv_final(series, t)
    if np.any(np.isnan(qv)):
        raise ValueError("quadratic variation was not recorded")
    est, se = jackknife_mean_se(np.abs(qv - a * tt))
    return EstimatorReport("qv_abs_deviation", est, se, qv.size, 0.0, k_se * se, "within",
                           extra={"t": tt})


def qv_mean_check(series: Sequence, a: float, t: float | None = None, k_se: float = 3.0,
                  rel_floor: float = 0.05) -> EstimatorReport:
    """``mean(<M>_t / t)`` against ``a`` with tolerance ``max(k_se SE, rel_floor a)``."""
    qv, tt = _qv_final(series, t)
    est, se = jackknife_mean_se(qv / tt)
    tol = max(k_se * se, rel_floor * a)
    return EstimatorReport("qv_mean_rate", est, se, qv.size, a, tol, "within", extra={"t": tt})


def residual_W(times, paths, a: float, theta: float) -> np.ndarray:
    """``W_t = y_t - y_0 + 2a int_0^t (theta y_s + y_s^3) ds`` by the trapezoid rule.

    ``paths`` has shape ``(n_traj, n_times)``; the first column is ``t = times[0]``.
    """
    y = np.asarray(paths, dtype=float)
    t = np.asarray(times, dtype=float)
    drift = theta * y + y**3
    dt = np.diff(t)
    integral = np.concatenate([np.zeros((y.shape[0], 1)),
                               np.cumsum(0.5 * (drift[:, 1:] + drift[:, :-1]) * dt, axis=1)], axis=1)
    return y - y[:, :1] + 2.0 * a * integral


def residual_brownian_check(times, paths, a: float, theta: float, rel_tol: float | None = None,
                            k_se: float = 3.0, n_boot: int = 200, seed: int = 0) -> EstimatorReport:
    """Regression of ``Var[W_t]`` on ``t - t_0`` through the origin; target slope ``a``.

    SE by bootstrap over trajectories. Flags ``coarse_grid`` when halving the
    integration grid moves ``W`` at the final time by more than 10% of
    ``sqrt(a t)`` (mean absolute shift), and reports ``E[W_T]`` with its SE.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(paths, dtype=float)
    if y.shape[0] < 2 or t.size < 3:
        raise ValueError("need >= 2 trajectories and >= 3 grid times")
    W = residual_W(t, y, a, theta)
    s = t - t[0]

    def slope(Wm):
        v = Wm[:, 1:].var(axis=0, ddof=1)
        return float(np.sum(s[1:] * v) / np.sum(s[1:] ** 2))

    est = slope(W)
    rng = np.random.default_rng(seed)
    boots = [slope(W[rng.integers(0, W.shape[0], W.shape[0])]) for _ in range(n_boot)]
    se = float(np.std(boots, ddof=1))
    flags = []
    coarse = residual_W(t[::2], y[:, ::2], a, theta)[:, -1]
    fine_at = W[:, ::2][:, -1]
    shift = float(np.mean(np.abs(coarse - fine_at)))
    scale = math.sqrt(max(a * s[::2][-1], 1e-300))
    if shift > 0.1 * scale:
        flags.append("coarse_grid")
    mean_W, se_W = jackknife_mean_se(W[:, -1])
    tol = rel_tol * a if rel_tol is not None else k_se * se
    return EstimatorReport("residual_brownian_slope", est, se, W.shape[0], a, tol, "within", flags=flags,
                           extra={"mean_W_T": mean_W, "se_mean_W_T": se_W, "refinement_shift": shift})


# ----------------------------------------------------------------------------
# covariances
# ----------------------------------------------------------------------------

@dataclass
class CovarianceReport:
    labels: list
    cov: np.ndarray
    se: np.ndarray
    n: int

    def z_scores(self, target) -> np.ndarray:
        return (self.cov - np.asarray(target)) / self.se

    def entry(self, i, j) -> tuple[float, float]:
        return float(self.cov[i, j]), float(self.se[i, j])

    def check(self, i, j, target: float, name: str, k_se: float = 3.0) -> EstimatorReport:
        c, se = self.entry(i, j)
        return EstimatorReport(name, c, se, self.n, target, k_se * se, "within")

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "cov": self.cov.tolist(), "se": self.se.tolist(), "n": self.n}


def covariance_estimator(samples, labels: Sequence[str] | None = None, min_samples: int = 200) -> CovarianceReport:
    """Sample covariance matrix of the columns of ``samples`` with per-entry SEs.

    The SE of entry ``(i, j)`` is the standard error of the mean of the
    centred products ``(x_i - mean_i)(x_j - mean_j)``.
    """
    X = np.asarray(samples, dtype=float)
    N, d = X.shape
    if N < min_samples:
        raise ValueError(f"need at least {min_samples} samples per cell, got {N}")
    Xc = X - X.mean(axis=0)
    prod = Xc[:, :, None] * Xc[:, None, :]
    cov = prod.sum(axis=0) / (N - 1)
    se = prod.std(axis=0, ddof=1) / math.sqrt(N)
    labels = list(labels) if labels is not None else [str(i) for i in range(d)]
    return CovarianceReport(labels, cov, se, N)


# ----------------------------------------------------------------------------
# concentration
# ----------------------------------------------------------------------------

def concentration_check(samples, weights, alpha: float, k_se: float = 3.0) -> EstimatorReport:
    """MC estimate of ``E exp(alpha (n^{-1/2} sum a_i eta^m_i)^2)`` against ``16 exp(8 alpha ||a||^2)``.

    ``samples`` is a stack of occupation vectors; averaging is done in log
    space. ``heavy_tail`` is flagged when one draw carries more than 10% of the sum.
    """
    occ = np.asarray(samples, dtype=float)
    a = np.asarray(weights, dtype=float)
    n = occ.shape[-1]
    amax = float(np.max(np.abs(a))) if a.size else 0.0
    if amax > 0 and alpha > 1.0 / (4.0 * amax**2) + 1e-15:
        raise ValueError("alpha must not exceed 1/(4 ||a||_inf^2)")
    xm = occ - occ.mean(axis=-1, keepdims=True)
    X = xm @ a / math.sqrt(n)
    v = alpha * X**2
    N = v.size
    log_mean = float(logsumexp(v) - math.log(N))
    vmax = float(v.max())
    w = np.exp(v - vmax)
    est = math.exp(log_mean)
    se = float(np.std(w, ddof=1) * math.exp(vmax) / math.sqrt(N)) if N > 1 else math.nan
    flags = ["heavy_tail"] if w.max() / w.sum() > 0.1 and N > 10 else []
    bound = 16.0 * math.exp(8.0 * alpha * amax**2)
    return EstimatorReport("concentration", est, se, N, bound, k_se * se, "upper", flags=flags,
                           extra={"log_estimate": log_mean, "alpha": alpha})


# ----------------------------------------------------------------------------
# calibration on synthetic null data
# ----------------------------------------------------------------------------

def calibrate(seed: int = 20240601) -> list[EstimatorReport]:
    """Run the estimators on data drawn from their own null hypotheses."""
    from .limits import SdeParams, sde_simulate

    rng = np.random.default_rng(seed)
    reports = []
    z = rng.standard_normal(10**6)
    reports.append(moment_ci(z, 2, 1.0, name="calib_normal_m2"))
    reports.append(moment_ci(z, 4, 3.0, name="calib_normal_m4"))
    reports.append(ks_distance(rng.standard_normal(10**4), sps.norm.cdf, name="calib_ks_normal"))
    reports.append(ks_distance(rng.random(10**4), sps.uniform.cdf, name="calib_ks_uniform"))
    p = SdeParams(a=1.0, theta=0.0, h=1e-3, T=1.0)
    path = sde_simulate(p, np.zeros(2000), rng, record_times=np.linspace(0, 1, 101))
    reports.append(residual_brownian_check(path.times, path.values.T, 1.0, 0.0, seed=seed))
    x = rng.standard_normal((400, 3))
    cov = covariance_estimator(x)
    reports.append(cov.check(0, 0, 1.0, "calib_cov_diag"))
    reports.append(cov.check(0, 1, 0.0, "calib_cov_offdiag"))
    return reports
