"""Reference and initial measures on configurations.

Every measure is described by a small frozen dataclass (a "spec") with a
canonical string form, e.g. ``"product:0.5"``, ``"u-tilted:theta=0"``,
``"g-tilted:delta=0.45,b=1"`` or ``"ising:b=0,c=2"``. Weights are handled in
log space throughout; binomials go through ``gammaln``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields
from functools import lru_cache

import numpy as np
from numba import njit
from scipy import integrate
from scipy.special import gammaln, logsumexp, rel_entr, xlogy

from .lattice import Configuration, derived_gamma

LOG2 = math.log(2.0)
ENUMERATION_MAX_N = 20
TAYLOR_GAMMA = 1e-6


class ConvergenceWarning(UserWarning):
    """Raised (as a warning) when the two-chain MCMC diagnostic fails."""


# ----------------------------------------------------------------------------
# specs
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Product:
    """Bernoulli product measure with density ``rho``."""

    rho: float = 0.5
    tag = "product"

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")

    def __str__(self):
        return f"product:{_fmt(self.rho)}"


@dataclass(frozen=True)
class ProductProfile:
    """Inhomogeneous product measure with ``rho(x) = base + amp cos(2 pi k x)``."""

    base: float = 0.5
    amp: float = 0.0
    k: int = 1
    tag = "profile"

    def __post_init__(self):
        if not (0.0 <= self.base - abs(self.amp) and self.base + abs(self.amp) <= 1.0):
            raise ValueError("profile must stay within [0, 1]")

    def densities(self, n: int) -> np.ndarray:
        return self.base + self.amp * np.cos(2 * np.pi * self.k * np.arange(n) / n)

    def __str__(self):
        return f"profile:base={_fmt(self.base)},amp={_fmt(self.amp)},k={self.k}"


@dataclass(frozen=True)
class Canonical:
    """Uniform measure on configurations with exactly ``m`` particles."""

    m: int
    tag = "canonical"

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be >= 0")

    def __str__(self):
        return f"canonical:m={self.m}"


@dataclass(frozen=True)
class UTilted:
    """``exp(n U(mag/n))`` tilt of the uniform measure; ``gamma`` derived from ``(n, theta)``."""

    theta: float = 0.0
    tag = "u-tilted"

    def __str__(self):
        return f"u-tilted:theta={_fmt(self.theta)}"


@dataclass(frozen=True)
class GTilted:
    """Pair tilt ``exp((1/2n) sum_{i!=j} g_{i-j} eta_bar_i eta_bar_j)`` of the uniform measure."""

    delta: float
    b: float
    L: int = 10_000
    tag = "g-tilted"

    def __post_init__(self):
        if not -1.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (-1, 1)")
        if self.b < 0:
            raise ValueError("b must be >= 0")

    def __str__(self):
        s = f"g-tilted:delta={_fmt(self.delta)},b={_fmt(self.b)}"
        return s if self.L == 10_000 else s + f",L={self.L}"


@dataclass(frozen=True)
class CanonicalG:
    """:class:`GTilted` conditioned on ``m`` particles."""

    m: int
    delta: float
    b: float
    L: int = 10_000
    tag = "canonical-g"

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be >= 0")
        GTilted(self.delta, self.b, self.L)

    def __str__(self):
        s = f"canonical-g:m={self.m},delta={_fmt(self.delta)},b={_fmt(self.b)}"
        return s if self.L == 10_000 else s + f",L={self.L}"


@dataclass(frozen=True)
class IsingInit:
    """Mean-field Ising law ``exp(c n M^2 + b sqrt(n) M^2)`` with ``M = mag/n``."""

    b: float = 0.0
    c: float = 2.0
    tag = "ising"

    def __str__(self):
        return f"ising:b={_fmt(self.b)},c={_fmt(self.c)}"


MeasureSpec = Product | ProductProfile | Canonical | UTilted | GTilted | CanonicalG | IsingInit
_SPEC_TYPES = {cls.tag: cls for cls in (Product, ProductProfile, Canonical, UTilted, GTilted, CanonicalG, IsingInit)}


def _fmt(x: float) -> str:
    return repr(float(x)) if not float(x).is_integer() else str(int(x))


def parse_measure(text: str):
    """Parse the canonical string form of a measure spec."""
    text = text.strip()
    tag, _, rest = text.partition(":")
    cls = _SPEC_TYPES.get(tag)
    if cls is None:
        raise ValueError(f"unknown measure {tag!r}; expected one of {sorted(_SPEC_TYPES)}")
    kwargs = {}
    types = {f.name: f.type for f in fields(cls)}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        if "=" not in item:
            if cls is Product and not kwargs:
                kwargs["rho"] = float(item)
                continue
            raise ValueError(f"malformed measure parameter {item!r} in {text!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in types:
            raise ValueError(f"unknown parameter {key!r} for measure {tag!r}")
        kwargs[key] = int(value) if types[key] == "int" else float(value)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValueError(f"incomplete measure spec {text!r}: {exc}") from None


def spec_warnings(spec) -> list[str]:
    """Non-fatal range remarks (e.g. ``c > 2`` for the Ising initial law)."""
    out = []
    if isinstance(spec, IsingInit) and spec.c > 2:
        out.append(
            f"ising c={spec.c} > 2: the magnetisation limit theorem only covers c <= 2 "
            "(the law concentrates away from zero and the relative-entropy bound fails)"
        )
    return out


def check_size(spec, n: int) -> None:
    if isinstance(spec, (Canonical, CanonicalG)) and not 0 <= spec.m <= n:
        raise ValueError(f"m={spec.m} outside 0..{n}")
    if isinstance(spec, UTilted):
        derived_gamma(n, spec.theta)


# ----------------------------------------------------------------------------
# potential U
# ----------------------------------------------------------------------------

def potential_U(rho_bar, gamma: float, deriv: int = 0):
    """``U(r) = (1/gamma)[(1+2 gamma r) log(1+2 gamma r) + (1-2 gamma r) log(1-2 gamma r)]``.

    ``deriv`` selects ``U`` (0), ``U'`` (1) or ``U''`` (2). For
    ``|gamma| < 1e-6`` the series ``4 gamma r^2 + (8/3) gamma^3 r^4`` (and its
    derivatives) is used.
    """
    r = np.asarray(rho_bar, dtype=float)
    if abs(gamma) < TAYLOR_GAMMA:
        g = gamma
        if deriv == 0:
            out = 4 * g * r**2 + (8.0 / 3.0) * g**3 * r**4
        elif deriv == 1:
            out = 8 * g * r + (32.0 / 3.0) * g**3 * r**3
        elif deriv == 2:
            out = 8 * g + 32.0 * g**3 * r**2
        else:
            raise ValueError("deriv must be 0, 1 or 2")
    else:
        x = 2.0 * gamma * r
        with np.errstate(divide="ignore"):
            if deriv == 0:
                # (1+x)log(1+x) + (1-x)log(1-x) without cancellation for small x
                inside = np.abs(x) < 1.0
                xs = np.where(inside, x, 0.0)
                stable = 2.0 * xs * np.arctanh(xs) + np.log1p(-xs * xs)
                out = np.where(inside, stable, xlogy(1 + x, 1 + x) + xlogy(1 - x, 1 - x)) / gamma
            elif deriv == 1:
                out = 2.0 * (np.log1p(x) - np.log1p(-x))
            elif deriv == 2:
                out = 8.0 * gamma / (1.0 - x * x)
            else:
                raise ValueError("deriv must be 0, 1 or 2")
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------------
# magnetisation marginals
# ----------------------------------------------------------------------------

def log_binom(n: int, k):
    k = np.asarray(k, dtype=float)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def _slice_log_weight(spec, n: int, k):
    """Per-configuration log weight as a function of the particle count ``k`` only."""
    k = np.asarray(k, dtype=float)
    if isinstance(spec, Product):
        return xlogy(k, spec.rho) + xlogy(n - k, 1.0 - spec.rho)
    if isinstance(spec, Canonical):
        return np.where(k == spec.m, 0.0, -np.inf)
    if isinstance(spec, UTilted):
        gamma = derived_gamma(n, spec.theta)
        return n * potential_U(k / n - 0.5, gamma) - n * LOG2
    if isinstance(spec, IsingInit):
        M = (k - n / 2.0) / n
        return spec.c * n * M**2 + spec.b * math.sqrt(n) * M**2 - n * LOG2
    raise TypeError(f"{type(spec).__name__} is not a function of the particle count")


@dataclass(frozen=True)
class MagnetisationMarginal:
    """Law of the particle count ``k``: ``log_w[k] = (per-config log weight) + log C(n, k)``."""

    n: int
    log_w: np.ndarray
    log_Z: float

    @classmethod
    def of(cls, spec, n: int) -> "MagnetisationMarginal":
        check_size(spec, n)
        k = np.arange(n + 1)
        log_w = np.asarray(_slice_log_weight(spec, n, k), dtype=float) + log_binom(n, k)
        return cls(n, log_w, float(logsumexp(log_w)))

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_w - self.log_Z)

    def Y_values(self) -> np.ndarray:
        return (np.arange(self.n + 1) - self.n / 2.0) / self.n**0.75

    def expect(self, f) -> float:
        """``E[f(k)]``."""
        return float(self.probs @ f(np.arange(self.n + 1)))

    def sample(self, rng: np.random.Generator, size=None):
        cdf = np.cumsum(self.probs)
        cdf /= cdf[-1]
        u = rng.random(size)
        return np.searchsorted(cdf, u, side="right").clip(0, self.n)


@dataclass(frozen=True)
class PartitionZ:
    log_Z: float
    Z: float
    scaled: float  # n^{-1/4} Z


def partition_Z_U(n: int, theta: float) -> PartitionZ:
    """``Z = sum_k exp(n U(k/n - 1/2)) C(n,k) 2^{-n}`` and ``n^{-1/4} Z``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    marg = MagnetisationMarginal.of(UTilted(theta), n)
    return PartitionZ(marg.log_Z, math.exp(marg.log_Z), math.exp(marg.log_Z - 0.25 * math.log(n)))


def z_u_limit(theta: float) -> float:
    """``sqrt(2/pi) int exp(-2 theta x^2 - x^4) dx`` by adaptive quadrature."""
    val, _ = integrate.quad(lambda x: math.exp(-2 * theta * x * x - x**4), -np.inf, np.inf,
                            epsabs=1e-13, epsrel=1e-12)
    return math.sqrt(2.0 / math.pi) * val


# ----------------------------------------------------------------------------
# birth and death reduction
# ----------------------------------------------------------------------------

def birth_death(rho, gamma: float):
    """Average birth and death rates ``B(rho), D(rho)`` of the magnetisation chain."""
    rho = np.asarray(rho, dtype=float)
    if np.any((rho < 0) | (rho > 1)):
        raise ValueError("rho must lie in [0, 1]")
    s = 2.0 * rho - 1.0
    B = (1.0 - rho) * (1.0 + gamma * s) ** 2
    D = rho * (1.0 - gamma * s) ** 2
    if np.ndim(B) == 0:
        return float(B), float(D)
    return B, D


def detailed_balance_residual(n: int, theta: float, k):
    """``log[pi(k+1)/pi(k)] - log[B(k/n)/D((k+1)/n)]`` with ``pi(k) ~ e^{n U_0(k/n)} C(n,k)``."""
    k = np.asarray(k)
    if np.any((k < 0) | (k >= n)):
        raise ValueError("need 0 <= k < n")
    gamma = derived_gamma(n, theta)
    kf = k.astype(float)
    log_ratio = n * (potential_U((kf + 1) / n - 0.5, gamma) - potential_U(kf / n - 0.5, gamma))
    log_ratio = log_ratio + np.log((n - kf) / (kf + 1))
    B, _ = birth_death(kf / n, gamma)
    _, D = birth_death((kf + 1) / n, gamma)
    out = log_ratio - (np.log(B) - np.log(D))
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------------
# log weights
# ----------------------------------------------------------------------------

def _as_array(config) -> np.ndarray:
    if isinstance(config, Configuration):
        return config.occupations
    return np.asarray(config)


def pair_matrix(n: int, delta: float, b: float, L: int = 10_000) -> np.ndarray:
    """Circulant ``g_{i-j}`` with zero diagonal."""
    from .kernel_g import g_table

    table = g_table(n, delta, b, L)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    G = table[idx]
    np.fill_diagonal(G, 0.0)
    return G


def _pair_energy(occ: np.ndarray, G: np.ndarray) -> np.ndarray:
    x = occ.astype(float) - 0.5
    n = G.shape[0]
    return 0.5 / n * np.einsum("...i,...i->...", x @ G, x)


def log_weight(spec, config):
    """Unnormalised log density w.r.t. counting measure (``-inf`` off the support).

    ``config`` may be a :class:`Configuration` or an occupation array whose last
    axis is the lattice.
    """
    occ = _as_array(config)
    n = occ.shape[-1]
    k = occ.sum(axis=-1)
    if isinstance(spec, (Product, Canonical, UTilted, IsingInit)):
        check_size(spec, n)
        out = _slice_log_weight(spec, n, k)
    elif isinstance(spec, ProductProfile):
        rho = spec.densities(n)
        out = (xlogy(occ, rho) + xlogy(1 - occ, 1 - rho)).sum(axis=-1)
    elif isinstance(spec, GTilted):
        out = _pair_energy(occ, pair_matrix(n, spec.delta, spec.b, spec.L)) - n * LOG2
    elif isinstance(spec, CanonicalG):
        check_size(spec, n)
        e = _pair_energy(occ, pair_matrix(n, spec.delta, spec.b, spec.L)) - n * LOG2
        out = np.where(k == spec.m, e, -np.inf)
    else:
        raise TypeError(f"unsupported measure spec {spec!r}")
    return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)


def all_states(n: int) -> np.ndarray:
    """All ``2^n`` occupation vectors; row ``s`` has site ``i`` equal to bit ``i`` of ``s``."""
    if n > 24:
        raise ValueError("state enumeration limited to n <= 24")
    s = np.arange(2**n, dtype=np.int64)[:, None]
    return ((s >> np.arange(n)) & 1).astype(np.uint8)


def log_weights_all(spec, n: int, chunk: int = 1 << 16) -> np.ndarray:
    """``log_weight`` of every state in index order."""
    states_total = 2**n
    out = np.empty(states_total)
    for s in range(0, states_total, chunk):
        idx = np.arange(s, min(s + chunk, states_total), dtype=np.int64)[:, None]
        occ = ((idx >> np.arange(n)) & 1).astype(np.uint8)
        out[s:s + idx.shape[0]] = log_weight(spec, occ)
    return out


def probabilities_all(spec, n: int) -> np.ndarray:
    lw = log_weights_all(spec, n)
    return np.exp(lw - logsumexp(lw))


@lru_cache(maxsize=16)
def _enumeration_cdf(spec, n: int) -> np.ndarray:
    cdf = np.cumsum(probabilities_all(spec, n))
    cdf /= cdf[-1]
    cdf.setflags(write=False)
    return cdf


# ----------------------------------------------------------------------------
# Metropolis for the pair-tilted measures
# ----------------------------------------------------------------------------

@njit(cache=True)
def _metropolis(x, G, field, n_steps, conserve, rng):
    """Single-site flips (or, with ``conserve``, random pair exchanges) targeting the pair tilt.

    ``x`` holds ``eta_bar`` in ``{-1/2, +1/2}`` and ``field[i] = sum_{j != i} G[i,j] x[j]``.
    Returns the number of accepted moves.
    """
    n = x.size
    accepted = 0
    for _ in range(n_steps):
        if not conserve:
            i = int(rng.random() * n)
            dx = -2.0 * x[i]
            dlog = dx * field[i] / n
            if dlog >= 0.0 or rng.random() < math.exp(dlog):
                x[i] += dx
                for j in range(n):
                    field[j] += G[j, i] * dx
                accepted += 1
        else:
            i = int(rng.random() * n)
            j = int(rng.random() * n)
            if x[i] == x[j]:
                continue
            dxi = -2.0 * x[i]
            dxj = -2.0 * x[j]
            dlog = (dxi * field[i] + dxj * field[j] + G[i, j] * dxi * dxj) / n
            if dlog >= 0.0 or rng.random() < math.exp(dlog):
                x[i] += dxi
                x[j] += dxj
                for k in range(n):
                    field[k] += G[k, i] * dxi + G[k, j] * dxj
                accepted += 1
    return accepted


@dataclass
class ChainDiagnostic:
    """Two-chain agreement of the nearest-neighbour two-point estimator."""

    estimate_a: float
    estimate_b: float
    se_a: float
    se_b: float
    burn_in_sweeps: int
    converged: bool


def _two_point(x: np.ndarray) -> float:
    return float(np.mean(x * np.roll(x, -1)))


def _batch_se(values: np.ndarray, n_batches: int = 20) -> float:
    batches = np.array_split(values, n_batches)
    means = np.array([b.mean() for b in batches])
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def metropolis_sample(spec, n: int, rng: np.random.Generator, burn_in_sweeps: int | None = None,
                      diag_sweeps: int = 200) -> tuple[Configuration, ChainDiagnostic]:
    """Two independent chains; returns the final state of the first and the diagnostic.

    Burn-in defaults to ``50 n`` sweeps of ``n`` proposals each.
    """
    conserve = isinstance(spec, CanonicalG)
    G = pair_matrix(n, spec.delta, spec.b, spec.L)
    if burn_in_sweeps is None:
        burn_in_sweeps = 50 * n
    results = []
    finals = []
    for _ in range(2):
        if conserve:
            start = sample(Canonical(spec.m), n, rng)
        else:
            start = sample(Product(0.5), n, rng)
        x = start.occupations.astype(float) - 0.5
        field = G @ x
        _metropolis(x, G, field, burn_in_sweeps * n, conserve, rng)
        trace = np.empty(diag_sweeps)
        for s in range(diag_sweeps):
            _metropolis(x, G, field, n, conserve, rng)
            trace[s] = _two_point(x)
        results.append((trace.mean(), _batch_se(trace)))
        finals.append(x)
    (ea, sa), (eb, sb) = results
    ok = abs(ea - eb) <= 3.0 * math.hypot(sa, sb) + 1e-12
    diag = ChainDiagnostic(float(ea), float(eb), float(sa), float(sb), burn_in_sweeps, bool(ok))
    config = Configuration((finals[0] + 0.5).round().astype(np.uint8))
    return config, diag


# ----------------------------------------------------------------------------
# sampling
# ----------------------------------------------------------------------------

def sample(spec, n: int, rng: np.random.Generator) -> Configuration:
    """Draw one configuration from ``spec`` on ``n`` sites.

    Count-only measures draw ``k`` from the exact magnetisation marginal and
    then a uniform ``k``-subset; pair-tilted measures use exact enumeration for
    ``n <= 20`` and Metropolis otherwise (a :class:`ConvergenceWarning` flags a
    failed two-chain diagnostic).
    """
    check_size(spec, n)
    if isinstance(spec, Product):
        return Configuration((rng.random(n) < spec.rho).astype(np.uint8))
    if isinstance(spec, ProductProfile):
        return Configuration((rng.random(n) < spec.densities(n)).astype(np.uint8))
    if isinstance(spec, Canonical):
        occ = np.zeros(n, dtype=np.uint8)
        occ[rng.permutation(n)[:spec.m]] = 1
        return Configuration(occ, spec.m)
    if isinstance(spec, (UTilted, IsingInit)):
        k = int(_marginal(spec, n).sample(rng))
        return sample(Canonical(k), n, rng)
    if isinstance(spec, (GTilted, CanonicalG)):
        if n <= ENUMERATION_MAX_N:
            state = int(np.searchsorted(_enumeration_cdf(spec, n), rng.random(), side="right"))
            return Configuration.from_index(min(state, 2**n - 1), n)
        config, diag = metropolis_sample(spec, n, rng)
        if not diag.converged:
            warnings.warn(f"Metropolis diagnostic failed for {spec}: {diag}", ConvergenceWarning)
        return config
    raise TypeError(f"unsupported measure spec {spec!r}")


@lru_cache(maxsize=32)
def _marginal(spec, n: int) -> MagnetisationMarginal:
    return MagnetisationMarginal.of(spec, n)


def sample_counts(spec, n: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorised draw of particle counts for count-only measures."""
    return np.asarray(_marginal(spec, n).sample(rng, size))


# ----------------------------------------------------------------------------
# relative entropy
# ----------------------------------------------------------------------------

def relative_entropy(p, q) -> float:
    """``sum p log(p/q)``; ``inf`` when ``p`` is not absolutely continuous w.r.t. ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions must share a state space")
    return float(np.sum(rel_entr(p, q)))
