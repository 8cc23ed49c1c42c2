"""Limit objects: the cubic magnetisation SDE, its stationary law, the
initial laws ``mu_b``, the reaction-diffusion PDE and the Gaussian fast field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .lattice import vprime

QUAD_HALF_WIDTH = 6.0
DIVERGENCE_LIMIT = 1e3


# ----------------------------------------------------------------------------
# SDE
# ----------------------------------------------------------------------------

class SdeDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class SdeParams:
    """``dY = -2 a theta Y dt - 2 a Y^3 dt + sqrt(a) dW`` integrated with step ``h`` up to ``T``."""

    a: float
    theta: float = 0.0
    h: float = 1e-3
    T: float = 1.0

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("a must be >= 0")
        if self.h <= 0 or self.T <= 0:
            raise ValueError("h and T must be positive")
        if self.h > self.T:
            raise ValueError("h must not exceed T")

    def drift(self, y):
        return -2.0 * self.a * (self.theta * y + y**3)

    def stable_step(self, y_max: float) -> float:
        return 0.01 / (1.0 + self.a * (abs(self.theta) + y_max**2))


@dataclass
class SdePath:
    times: np.ndarray
    values: np.ndarray  # shape (len(times), n_paths)
    substeps: int = 0   # extra substeps taken by the stability guard

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def sde_simulate(params: SdeParams, y0, rng: np.random.Generator, record_times=None,
                 adaptive: bool = True) -> SdePath:
    """Euler-Maruyama for a vector of independent paths started at ``y0``.

    The fixed grid is ``k h``; when ``adaptive`` is set and ``h`` exceeds the
    stability bound ``0.01/(1 + a(|theta| + max Y^2))`` a step is split into
    equal substeps, each with its own Brownian increment. ``record_times``
    (default: every grid point) must lie on the step grid.
    """
    y = np.array(np.atleast_1d(y0), dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("initial value must be finite")
    n_steps = int(round(params.T / params.h))
    h = params.T / n_steps
    if record_times is None:
        rec_idx = np.arange(n_steps + 1)
    else:
        rec_idx = np.rint(np.asarray(record_times, dtype=float) / h).astype(int)
        if np.any(np.abs(rec_idx * h - np.asarray(record_times)) > 1e-9 * max(1.0, params.T)):
            raise ValueError("record_times must lie on the step grid")
        if np.any(rec_idx < 0) or np.any(rec_idx > n_steps):
            raise ValueError("record_times outside [0, T]")
    out = np.empty((rec_idx.size, y.size))
    wanted = {}
    for j, k in enumerate(rec_idx):
        wanted.setdefault(int(k), []).append(j)
    sqrt_a = math.sqrt(params.a)
    extra = 0
    for j in wanted.get(0, []):
        out[j] = y
    for k in range(1, n_steps + 1):
        m = 1
        if adaptive:
            bound = params.stable_step(float(np.max(np.abs(y))))
            if h > bound:
                m = int(math.ceil(h / bound))
                extra += m - 1
        dt = h / m
        for _ in range(m):
            y = y + params.drift(y) * dt + sqrt_a * math.sqrt(dt) * rng.standard_normal(y.size)
        if np.max(np.abs(y)) > DIVERGENCE_LIMIT:
            raise SdeDivergence(f"|Y| exceeded {DIVERGENCE_LIMIT} at t={k * h:.4g} (h={h})")
        for j in wanted.get(k, []):
            out[j] = y
    return SdePath(rec_idx * h, out, extra)


def _normaliser(logf, lo=-QUAD_HALF_WIDTH, hi=QUAD_HALF_WIDTH) -> float:
    val, _ = integrate.quad(lambda x: math.exp(logf(x)), lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def sde_stationary_density(x, theta: float):
    """``exp(-2 theta x^2 - x^4) / Z(theta)``, the zero-flux solution of the Fokker-Planck equation."""
    Z = _normaliser(lambda s: -2 * theta * s * s - s**4)
    x = np.asarray(x, dtype=float)
    return np.exp(-2 * theta * x**2 - x**4) / Z


def stationary_flux(x, theta: float, a: float):
    """Probability flux ``(a/2) rho' - drift * rho`` of the stationary density (zero when stationary)."""
    x = np.asarray(x, dtype=float)
    rho = sde_stationary_density(x, theta)
    drho = rho * (-4 * theta * x - 4 * x**3)
    drift = -2 * a * (theta * x + x**3)
    return 0.5 * a * drho - drift * rho


def mu_b_density(x, b: float):
    """``exp(-(4/3) x^4 + b x^2) / Z_b``."""
    Z = _normaliser(lambda s: -(4.0 / 3.0) * s**4 + b * s * s)
    x = np.asarray(x, dtype=float)
    return np.exp(-(4.0 / 3.0) * x**4 + b * x**2) / Z


def z_quartic(c4: float, c2: float = 0.0) -> float:
    """``int exp(-c4 x^4 + c2 x^2) dx`` on the real line (adaptive quadrature)."""
    val, _ = integrate.quad(lambda s: math.exp(-c4 * s**4 + c2 * s * s), -np.inf, np.inf,
                            epsabs=1e-14, epsrel=1e-13)
    return val


def z_quartic_closed(c4: float) -> float:
    """``int exp(-c4 x^4) dx = 2 Gamma(5/4) c4^{-1/4}``."""
    return 2.0 * special.gamma(1.25) * c4 ** -0.25


def density_cdf(density, lo=-QUAD_HALF_WIDTH, hi=QUAD_HALF_WIDTH, points: int = 20001):
    """Tabulated CDF of a density on ``[lo, hi]`` (cumulative Simpson), as a callable."""
    xs = np.linspace(lo, hi, points)
    pdf = density(xs)
    cdf = integrate.cumulative_simpson(pdf, x=xs, initial=0.0)
    cdf = np.maximum.accumulate(cdf / cdf[-1])

    def F(x):
        return np.interp(x, xs, cdf, left=0.0, right=1.0)

    F.grid = xs
    F.values = cdf
    return F


def sample_density(density, rng: np.random.Generator, size: int, lo=-QUAD_HALF_WIDTH, hi=QUAD_HALF_WIDTH):
    """Inverse-CDF sampling from a tabulated density."""
    F = density_cdf(density, lo, hi)
    u = rng.random(size)
    return np.interp(u, F.values, F.grid)


def mu_b_sample(b: float, rng: np.random.Generator, size: int) -> np.ndarray:
    return sample_density(lambda x: mu_b_density(x, b), rng, size)


def moment(density, p: int) -> float:
    val, _ = integrate.quad(lambda s: s**p * float(density(s)), -QUAD_HALF_WIDTH, QUAD_HALF_WIDTH,
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


# ----------------------------------------------------------------------------
# hydrodynamic PDE
# ----------------------------------------------------------------------------

class PdeStepRejected(RuntimeError):
    pass


@dataclass
class PdeState:
    """Grid values ``u(j/G)`` at ``time``, with the L2 history of ``u - 1/2`` on the record grid."""

    values: np.ndarray
    time: float
    record_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    l2_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    profiles: np.ndarray | None = None
    rejected_steps: int = 0

    @property
    def G(self) -> int:
        return self.values.size

    @property
    def mass(self) -> float:
        return float(self.values.mean())


def _reaction(u, dt, a, gamma):
    """RK4 step of ``du/dt = -a V'(u)``."""
    f = lambda v: -a * vprime(v, gamma)
    k1 = f(u)
    k2 = f(u + 0.5 * dt * k1)
    k3 = f(u + 0.5 * dt * k2)
    k4 = f(u + dt * k3)
    return u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def pde_solve(rho0, a: float, gamma: float, t_end: float, dt: float = 1e-4,
              record_times=None, keep_profiles: bool = False, eps: float = 1e-9) -> PdeState:
    """Strang splitting for ``u_t = u_xx - a V'(u)`` on the unit torus.

    Diffusion is applied exactly in Fourier space (``exp(-4 pi^2 k^2 dt)`` per
    mode), the reaction by RK4 half steps. A step whose result leaves
    ``[-eps, 1+eps]`` is retried with half the step size.
    """
    u = np.array(rho0, dtype=float)
    if u.ndim != 1 or u.size < 2:
        raise ValueError("rho0 must be a 1-d profile")
    if np.any(u < -eps) or np.any(u > 1 + eps):
        raise ValueError("rho0 must take values in [0, 1]")
    if t_end < 0 or dt <= 0:
        raise ValueError("t_end must be >= 0 and dt > 0")
    G = u.size
    k = np.fft.rfftfreq(G, d=1.0 / G)
    rec = np.sort(np.asarray([] if record_times is None else record_times, dtype=float))
    l2 = np.empty(rec.size)
    profiles = np.empty((rec.size, G)) if keep_profiles else None
    r = 0
    t = 0.0
    rejected = 0

    def record(v, idx):
        l2[idx] = float(np.mean((v - 0.5) ** 2))
        if profiles is not None:
            profiles[idx] = v

    while r < rec.size and rec[r] <= 0.0:
        record(u, r)
        r += 1
    while t < t_end - 1e-15:
        target = t_end if r >= rec.size else min(t_end, rec[r])
        h = min(dt, target - t)
        while True:
            v = _reaction(u, 0.5 * h, a, gamma)
            vh = np.fft.rfft(v) * np.exp(-4.0 * np.pi**2 * k**2 * h)
            v = np.fft.irfft(vh, n=G)
            v = _reaction(v, 0.5 * h, a, gamma)
            if np.all(v >= -eps) and np.all(v <= 1 + eps):
                break
            rejected += 1
            h *= 0.5
            if h < 1e-14:
                raise PdeStepRejected("step size underflow: solution leaves [0, 1]")
        u = v
        t += h
        if r < rec.size and abs(t - rec[r]) <= 1e-12 * max(1.0, t):
            t = rec[r]
            while r < rec.size and rec[r] <= t + 1e-12:
                record(u, r)
                r += 1
    return PdeState(u, t, rec, l2, profiles, rejected)


def cosine_profile(G: int, base: float = 0.5, amp: float = 0.3, k: int = 1) -> np.ndarray:
    return base + amp * np.cos(2 * np.pi * k * np.arange(G) / G)


def box_smooth(values, half_width: int) -> np.ndarray:
    """Periodic moving average over ``2 half_width + 1`` neighbouring sites."""
    v = np.asarray(values, dtype=float)
    w = 2 * half_width + 1
    kernel = np.zeros(v.size)
    kernel[:half_width + 1] = 1.0
    if half_width:
        kernel[-half_width:] = 1.0
    return np.real(np.fft.ifft(np.fft.fft(v) * np.fft.fft(kernel))) / w


def l1_distance(u, v) -> float:
    """``int |u - v| dx`` for two profiles on the same uniform grid of the unit torus."""
    return float(np.mean(np.abs(np.asarray(u, float) - np.asarray(v, float))))


def decay_bound(t, l2_initial: float | None = None):
    """``1/(4t + ||u_0 - 1/2||^{-2})`` if the initial norm is given, else ``1/(2t)``."""
    t = np.asarray(t, dtype=float)
    if l2_initial is None:
        return 1.0 / (2.0 * t)
    return 1.0 / (4.0 * t + 1.0 / l2_initial)


# ----------------------------------------------------------------------------
# Gaussian fast field
# ----------------------------------------------------------------------------

def fast_field_variance(k, a: float):
    """``1/4 + a/(8 pi^2 k^2)`` for the basis element of frequency ``k``."""
    k = np.asarray(k, dtype=float)
    return 0.25 + a / (8.0 * np.pi**2 * k**2)


def gaussian_fast_field(K: int, a: float, rng: np.random.Generator, n_times: int = 1) -> np.ndarray:
    """Independent centred Gaussians for the cos/sin basis modes ``k = 1..K``.

    Returns shape ``(n_times, 2, K)``: axis 1 is (cos, sin). Draws at distinct
    times are independent (the field is white in time).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    sd = np.sqrt(fast_field_variance(np.arange(1, K + 1), a))
    return rng.standard_normal((n_times, 2, K)) * sd
