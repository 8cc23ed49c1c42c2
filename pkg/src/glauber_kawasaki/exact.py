"""Exact master-equation computations on all ``2^n`` states (``n <= 14``).

States are indexed so that site ``i`` is bit ``i`` of the index, matching
:meth:`Configuration.from_index` and :func:`measures.all_states`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse, stats
from scipy.special import logsumexp

from .engine import ClockMode
from .lattice import Params, glauber_rates
from .measures import all_states, log_weights_all

MAX_N = 14
TAIL_TOL = 1e-12
CHUNK_LAMBDA_T = 50.0
MAX_TERMS = 10_000
H_TOL = 1e-12  # accuracy assumed for relative entropies of evolved laws


@dataclass(frozen=True)
class Transitions:
    """Off-diagonal rates in coordinate form: ``rate[k]`` for ``src[k] -> dst[k]``."""

    src: np.ndarray
    dst: np.ndarray
    rate: np.ndarray

    def matrix(self, size: int) -> sparse.csr_matrix:
        Q = sparse.coo_matrix((self.rate, (self.src, self.dst)), shape=(size, size)).tocsr()
        exit_rates = np.asarray(Q.sum(axis=1)).ravel()
        return (Q - sparse.diags(exit_rates)).tocsr()


def exchange_transitions(n: int) -> Transitions:
    """Unit-rate exchanges across every bond ``(i, i+1)``; equal occupations are skipped."""
    s = np.arange(2**n, dtype=np.int64)
    src, dst = [], []
    for i in range(n):
        j = (i + 1) % n
        differ = ((s >> i) & 1) != ((s >> j) & 1)
        src.append(s[differ])
        dst.append(s[differ] ^ ((1 << i) | (1 << j)))
    src = np.concatenate(src)
    return Transitions(src, np.concatenate(dst), np.ones(src.size))


def glauber_transitions(n: int, gamma: float) -> Transitions:
    """Flips of every site at rate ``c(tau_i eta)``."""
    s = np.arange(2**n, dtype=np.int64)
    rates = glauber_rates(all_states(n), gamma)  # (2^n, n)
    src = np.repeat(s, n)
    dst = (s[:, None] ^ (1 << np.arange(n, dtype=np.int64))[None, :]).ravel()
    return Transitions(src, dst, rates.ravel())


@dataclass
class ExactGenerator:
    """Rate matrices (row = source state) of the exchange and Glauber parts and of the full chain.

    ``Q`` is ``speed (n^2 Q_ex + a Q_G)`` with ``speed = sqrt(n)`` on the
    accelerated clock and 1 on the hydrodynamic clock.
    """

    params: Params
    mode: ClockMode
    ex: Transitions
    glauber: Transitions
    Q_ex: sparse.csr_matrix
    Q_G: sparse.csr_matrix
    Q: sparse.csr_matrix
    speed: float
    Lambda: float

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def size(self) -> int:
        return 2**self.params.n


def build_generator(params: Params, mode: ClockMode = ClockMode.ACCELERATED) -> ExactGenerator:
    n = params.n
    if n > MAX_N:
        raise ValueError(f"exact generator limited to n <= {MAX_N}, got {n}")
    ex = exchange_transitions(n)
    gl = glauber_transitions(n, params.gamma)
    size = 2**n
    Q_ex = ex.matrix(size)
    Q_G = gl.matrix(size)
    speed = math.sqrt(n) if mode is ClockMode.ACCELERATED else 1.0
    Q = (speed * (n**2 * Q_ex + params.a * Q_G)).tocsr()
    Lambda = float(np.max(-Q.diagonal())) if size else 0.0
    return ExactGenerator(params, mode, ex, gl, Q_ex, Q_G, Q, speed, max(Lambda, 1e-300))


# ----------------------------------------------------------------------------
# evolution
# ----------------------------------------------------------------------------

@dataclass
class ExactDistribution:
    probs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if np.any(self.probs < -1e-15):
            raise ValueError("probabilities must be non-negative")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {self.probs.sum()!r}, not 1")

    @classmethod
    def from_spec(cls, spec, n: int) -> "ExactDistribution":
        lw = log_weights_all(spec, n)
        return cls(np.exp(lw - logsumexp(lw)))

    @classmethod
    def point(cls, index: int, n: int) -> "ExactDistribution":
        p = np.zeros(2**n)
        p[index] = 1.0
        return cls(p)

    def expect(self, values) -> float:
        return float(self.probs @ np.asarray(values, dtype=float))


class TruncationBudgetExceeded(RuntimeError):
    pass


def _poisson_cutoff(mu: float, tol: float = TAIL_TOL) -> int:
    k = int(stats.poisson.isf(tol, mu)) + 1
    if k > MAX_TERMS:
        raise TruncationBudgetExceeded(f"uniformization needs {k} terms for Lambda*h={mu}")
    return k


def evolve(dist: ExactDistribution, gen: ExactGenerator, t: float) -> ExactDistribution:
    """``dist * exp(t Q)`` by uniformization, in chunks with ``Lambda h <= 50``.

    Each chunk truncates the Poisson series where its tail drops below 1e-12.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    p = dist.probs.copy()
    if t == 0:
        return ExactDistribution(p, dist.time)
    Lam = gen.Lambda
    n_chunks = max(1, int(math.ceil(Lam * t / CHUNK_LAMBDA_T)))
    h = t / n_chunks
    mu = Lam * h
    K = _poisson_cutoff(mu)
    weights = stats.poisson.pmf(np.arange(K + 1), mu)
    PT = (sparse.identity(gen.size, format="csr") + gen.Q / Lam).T.tocsr()
    for _ in range(n_chunks):
        term = p
        acc = weights[0] * term
        for k in range(1, K + 1):
            term = PT @ term
            acc += weights[k] * term
        p = acc
    p = np.maximum(p, 0.0)
    p /= p.sum()
    return ExactDistribution(p, dist.time + t)


def evolve_reference(dist: ExactDistribution, gen: ExactGenerator, t: float) -> np.ndarray:
    """Independent route through ``scipy.sparse.linalg.expm_multiply`` (for cross-checks)."""
    from scipy.sparse.linalg import expm_multiply

    return expm_multiply(gen.Q.T * t, dist.probs)


# ----------------------------------------------------------------------------
# adjoints and the carre du champ
# ----------------------------------------------------------------------------

def _ref_probs(ref, n: int) -> np.ndarray:
    if isinstance(ref, np.ndarray):
        return ref
    lw = log_weights_all(ref, n)
    if np.any(~np.isfinite(lw)):
        raise ValueError("reference measure must charge every state")
    return np.exp(lw - logsumexp(lw))


@dataclass(frozen=True)
class AdjointOne:
    exclusion: np.ndarray
    glauber: np.ndarray

    def total(self, params: Params) -> np.ndarray:
        """``(n^2 L^{*,ex} + a L^{*,G}) 1`` (without the clock factor)."""
        return params.n**2 * self.exclusion + params.a * self.glauber


def _adjoint_part(tr: Transitions, nu: np.ndarray) -> np.ndarray:
    incoming = np.bincount(tr.dst, weights=tr.rate * nu[tr.src], minlength=nu.size)
    outgoing = np.bincount(tr.src, weights=tr.rate, minlength=nu.size)
    return incoming / nu - outgoing


def adjoint_one(gen: ExactGenerator, ref) -> AdjointOne:
    """``L^* 1`` w.r.t. ``ref`` for the exchange and Glauber parts (unit rates, no clock factor).

    ``(L^* 1)(eta) = sum_{eta'} r(eta' -> eta) nu(eta')/nu(eta) - sum_{eta'} r(eta -> eta')``.
    """
    nu = _ref_probs(ref, gen.n)
    return AdjointOne(_adjoint_part(gen.ex, nu), _adjoint_part(gen.glauber, nu))


def nn_correlation(n: int) -> np.ndarray:
    """``sum_i eta_bar_i eta_bar_{i+1}`` for every state."""
    x = all_states(n).astype(float) - 0.5
    return np.sum(x * np.roll(x, -1, axis=1), axis=1)


@dataclass(frozen=True)
class CarreDuChamp:
    exclusion: float
    glauber: float

    def total(self, params: Params) -> float:
        """``Gamma_n = n^2 Gamma^ex + a Gamma^G``."""
        return params.n**2 * self.exclusion + params.a * self.glauber


def _dirichlet(tr: Transitions, nu: np.ndarray, root: np.ndarray) -> float:
    return 0.5 * float(np.sum(nu[tr.src] * tr.rate * (root[tr.dst] - root[tr.src]) ** 2))


def carre_du_champ(f: np.ndarray, gen: ExactGenerator, ref) -> CarreDuChamp:
    """``Gamma^ex = 1/2 sum_i int (sqrt f(eta^{i,i+1}) - sqrt f)^2 dnu`` and the Glauber analogue with weight ``c``."""
    nu = _ref_probs(ref, gen.n)
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("density must be non-negative")
    root = np.sqrt(f)
    return CarreDuChamp(_dirichlet(gen.ex, nu, root), _dirichlet(gen.glauber, nu, root))


def carre_du_champ_generator_form(f: np.ndarray, gen: ExactGenerator, ref) -> CarreDuChamp:
    """Same quantity via ``1/2 int (L f - 2 sqrt f L sqrt f) dnu``."""
    nu = _ref_probs(ref, gen.n)
    f = np.asarray(f, dtype=float)
    root = np.sqrt(f)

    def part(Q):
        return 0.5 * float(nu @ (Q @ f - 2.0 * root * (Q @ root)))

    return CarreDuChamp(part(gen.Q_ex), part(gen.Q_G))


# ----------------------------------------------------------------------------
# entropy production
# ----------------------------------------------------------------------------

def density(dist: ExactDistribution, nu: np.ndarray) -> np.ndarray:
    return dist.probs / nu


def relative_entropy_to(dist: ExactDistribution, nu: np.ndarray) -> float:
    p = dist.probs
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / nu[mask])))


def entropy_derivative(dist: ExactDistribution, gen: ExactGenerator, nu: np.ndarray) -> float:
    """Exact ``d/dt H(mu_t | nu) = sum (mu Q)(eta) log(mu/nu)(eta)``."""
    p = dist.probs
    dp = gen.Q.T @ p
    mask = p > 0
    if np.any((~mask) & (dp != 0)):
        return -math.inf
    return float(np.sum(dp[mask] * np.log(p[mask] / nu[mask])))


def magnetisation_Y(n: int) -> np.ndarray:
    return (all_states(n).sum(axis=1) - n / 2.0) / n**0.75


def free_energy(dist: ExactDistribution, nu: np.ndarray, n: int, kappa: float) -> float:
    """``H(f | nu) + kappa sqrt(n) int Y^2 f dnu``."""
    return relative_entropy_to(dist, nu) + kappa * math.sqrt(n) * dist.expect(magnetisation_Y(n) ** 2)


@dataclass
class EntropyPoint:
    t: float
    H: float
    dH_fd: float
    fd_error: float
    dH_exact: float
    gamma_n: float
    source: float
    rhs: float
    margin: float
    holds: bool
    conclusive: bool
    free_energy: float | None = None


@dataclass
class EntropyReport:
    points: list = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return all(p.holds for p in self.points)

    @property
    def min_margin(self) -> float:
        return min(p.margin for p in self.points)

    def rows(self) -> list[dict]:
        return [p.__dict__ for p in self.points]


def _five_point(values, h):
    fm2, fm1, _, fp1, fp2 = values
    return (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h)


def entropy_production_check(mu0: ExactDistribution, ref, gen: ExactGenerator, t_grid,
                             h: float | None = None, kappa: float | None = None,
                             max_refine: int = 6) -> EntropyReport:
    """Check ``H' <= -2 sqrt(n) Gamma_n + sqrt(n) int f L^* 1 dnu`` on ``t_grid``.

    ``H'`` is a five-point central difference; its error is estimated from the
    difference with the stencil at twice the step (divided by 15) plus the
    propagated ``H_TOL`` accuracy of the entropy values. The step is
    halved until that error is below 1% of the margin or ``max_refine`` halvings
    have been tried, after which the point is marked inconclusive. The exact
    derivative is reported alongside.
    """
    n = gen.n
    params = gen.params
    nu = _ref_probs(ref, n)
    adj = adjoint_one(gen, nu).total(params)
    sq = math.sqrt(n) if gen.mode is ClockMode.ACCELERATED else 1.0
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    if h is None:
        h = 1e-3 * max(float(t_grid.min()), 1e-3)
    report = EntropyReport()
    cur = mu0
    for t in t_grid:
        if t - 4 * h < 0:
            raise ValueError("grid times must exceed four stencil steps")
        step = h
        for attempt in range(max_refine + 1):
            base = evolve(cur, gen, t - 4 * step - cur.time) if t - 4 * step > cur.time else evolve(mu0, gen, t - 4 * step)
            vals = [relative_entropy_to(base, nu)]
            d = base
            for _ in range(8):
                d = evolve(d, gen, step)
                vals.append(relative_entropy_to(d, nu))
            # vals[k] = H(t - 4 step + k step)
            center = vals[4]
            d1 = _five_point([vals[2], vals[3], vals[4], vals[5], vals[6]], step)
            d2 = _five_point([vals[0], vals[2], vals[4], vals[6], vals[8]], 2 * step)
            # truncation (Richardson) plus propagated error of the H values
            err = abs(d1 - d2) / 15.0 + 1.5 * H_TOL / step
            mid = evolve(base, gen, 4 * step)
            f = density(mid, nu)
            gamma_n = carre_du_champ(f, gen, nu).total(params)
            source = float(np.sum(mid.probs * adj))
            rhs = -2.0 * sq * gamma_n + sq * source
            margin = rhs - d1
            conclusive = err <= 0.01 * abs(margin)
            if conclusive or attempt == max_refine:
                break
            step *= 0.5
        exact = entropy_derivative(mid, gen, nu)
        fe = free_energy(mid, nu, n, kappa) if kappa is not None else None
        report.points.append(EntropyPoint(
            float(t), center, d1, err, exact, gamma_n, source, rhs, margin,
            holds=bool(d1 <= rhs + err), conclusive=bool(conclusive), free_energy=fe))
        cur = mid
    return report


# ----------------------------------------------------------------------------
# distances
# ----------------------------------------------------------------------------

def tv_distance(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p, float) - np.asarray(q, float))))


def empirical_distribution(indices, n: int) -> np.ndarray:
    counts = np.bincount(np.asarray(indices, dtype=np.int64), minlength=2**n)
    return counts / counts.sum()


def state_indices(occupations: np.ndarray) -> np.ndarray:
    """Row-wise state index (site ``i`` = bit ``i``) of a stack of occupation vectors."""
    occ = np.asarray(occupations, dtype=np.int64)
    return occ @ (1 << np.arange(occ.shape[-1], dtype=np.int64))
