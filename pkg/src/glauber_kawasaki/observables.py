"""Scalar and field observables of a configuration.

Most functions accept either a :class:`Configuration` or a raw occupation
array; raw arrays may be stacked along a leading axis (one row per snapshot),
in which case the observable is evaluated row-wise.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lattice import Configuration, Params, glauber_rates


def _occ(config) -> np.ndarray:
    if isinstance(config, Configuration):
        return config.occupations
    return np.asarray(config)


# ----------------------------------------------------------------------------
# test functions
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """A test function on the unit torus.

    Either a closed-form basis element (``kind`` in ``{"const", "cos", "sin"}``
    with frequency ``k``; ``cos``/``sin`` carry the ``sqrt(2)`` normalisation)
    or a tabulated vector of values ``H(i/n)``.
    """

    __test__ = False  # keep pytest from collecting this class

    kind: str
    k: int = 0
    table: np.ndarray | None = field(default=None, compare=False)

    @classmethod
    def constant(cls) -> "TestFunction":
        return cls("const")

    @classmethod
    def cos(cls, k: int) -> "TestFunction":
        if k < 1:
            raise ValueError("basis frequency must be >= 1")
        return cls("cos", k)

    @classmethod
    def sin(cls, k: int) -> "TestFunction":
        if k < 1:
            raise ValueError("basis frequency must be >= 1")
        return cls("sin", k)

    @classmethod
    def tabulated(cls, values) -> "TestFunction":
        return cls("table", 0, np.asarray(values, dtype=float))

    def values(self, n: int) -> np.ndarray:
        x = np.arange(n) / n
        if self.kind == "const":
            return np.ones(n)
        if self.kind == "cos":
            return math.sqrt(2.0) * np.cos(2 * np.pi * self.k * x)
        if self.kind == "sin":
            return math.sqrt(2.0) * np.sin(2 * np.pi * self.k * x)
        if self.table.size != n:
            raise ValueError(f"tabulated test function has {self.table.size} values, need {n}")
        return self.table

    def mean(self, n: int | None = None) -> float:
        """Mean of ``H``: exact for basis elements, discrete mean for tables."""
        if self.kind == "const":
            return 1.0
        if self.kind in ("cos", "sin"):
            return 0.0
        return float(self.table.mean())


def field_Y34(config, H: TestFunction) -> np.ndarray | float:
    """Density fluctuation field with magnetisation scaling, ``n^{-3/4} sum_i H(i/n) eta_bar_i``."""
    occ = _occ(config)
    n = occ.shape[-1]
    out = (occ - 0.5) @ H.values(n) / n**0.75
    return float(out) if np.ndim(out) == 0 else out


def field_fast(config, H: TestFunction) -> np.ndarray | float:
    """Density field with Gaussian scaling, ``n^{-1/2} sum_i H(i/n) eta_bar_i``."""
    occ = _occ(config)
    n = occ.shape[-1]
    out = (occ - 0.5) @ H.values(n) / math.sqrt(n)
    return float(out) if np.ndim(out) == 0 else out


def centered_mean_zero(config) -> np.ndarray:
    """``eta_bar_i - M`` with ``M`` the mean of ``eta_bar``; sums to zero."""
    occ = _occ(config)
    n = occ.shape[-1]
    m = occ.sum(axis=-1, keepdims=True)
    return occ - m / n


# ----------------------------------------------------------------------------
# W statistics
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class WSpec:
    """Parameters of a homogeneous polynomial statistic ``W^{J,phi}_p``.

    ``phi`` is either a full tensor of shape ``(n,)*p`` or a low-rank form given
    as a list of rank-one terms, each a tuple of ``p`` vectors of length ``n``
    (``phi = sum_r u_r (x) v_r (x) ...``). Entries on coinciding indices are
    ignored: only tuples where the points ``i_1 + J`` and ``i_2, ..., i_p`` are
    pairwise distinct contribute.
    """

    J: tuple
    p: int
    phi: object

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.p > 4:
            raise ValueError("W statistics are limited to p <= 4")
        object.__setattr__(self, "J", tuple(sorted(set(int(j) for j in self.J))))
        if not self.J:
            raise ValueError("J must be non-empty")
        if isinstance(self.phi, np.ndarray):
            if self.phi.ndim != self.p:
                raise ValueError("phi must have p axes")
            if self.p >= 3:
                swapped = np.swapaxes(self.phi, 1, 2)
                if not np.allclose(swapped, self.phi):
                    raise ValueError("phi must be symmetric in its last p-1 indices")

    @property
    def low_rank(self) -> bool:
        return not isinstance(self.phi, np.ndarray)


def _distinct_mask(n: int, J: tuple, p: int) -> np.ndarray:
    """Boolean tensor over ``(i_1, ..., i_p)``: True iff ``i_1+J, i_2, ..., i_p`` are pairwise distinct."""
    idx = np.indices((n,) * p)
    mask = np.ones((n,) * p, dtype=bool)
    for a in range(1, p):
        for j in J:
            mask &= idx[a] != (idx[0] + j) % n
        for b in range(a + 1, p):
            mask &= idx[a] != idx[b]
    return mask


def w_statistic(config, spec: WSpec) -> float:
    """``n^{-(p-1)} sum eta^m_{i_1+J} eta^m_{i_2} ... eta^m_{i_p} phi_{i_1...i_p}`` over distinct index tuples."""
    x = centered_mean_zero(config).astype(float)
    n = x.size
    if len(set(j % n for j in spec.J)) != len(spec.J):
        raise ValueError("offsets in J are not distinct modulo n")
    head = np.ones(n)
    for j in spec.J:
        head = head * np.roll(x, -j)
    p = spec.p
    if not spec.low_rank:
        mask = _distinct_mask(n, spec.J, p)
        total = np.where(mask, spec.phi, 0.0)
        total = np.tensordot(head, total, axes=([0], [0]))
        for _ in range(p - 1):
            total = np.tensordot(x, total, axes=([0], [0]))
        return float(total) / n ** (p - 1)
    value = 0.0
    for term in spec.phi:
        if len(term) != p:
            raise ValueError("each rank-one term needs p factors")
        value += _rank_one_distinct_sum(head, x, spec.J, [np.asarray(f, float) for f in term])
    return value / n ** (p - 1)


def _rank_one_distinct_sum(head, x, J, factors) -> float:
    """Distinct-index sum for ``phi = f_1 (x) ... (x) f_p`` by inclusion-exclusion (p <= 3)."""
    n = x.size
    p = len(factors)
    A = head * factors[0]
    if p == 1:
        return float(A.sum())
    offsets = np.array(J)
    # points excluded for the free indices: T(i_1) = i_1 + J
    T = (np.arange(n)[:, None] + offsets[None, :]) % n
    if p == 2:
        y = x * factors[1]
        return float(A @ (y.sum() - y[T].sum(axis=1)))
    if p == 3:
        y = x * factors[1]
        z = x * factors[2]
        Y = y.sum() - y[T].sum(axis=1)
        Z = z.sum() - z[T].sum(axis=1)
        D = (y * z).sum() - (y * z)[T].sum(axis=1)
        return float(A @ (Y * Z - D))
    return _rank_one_bruteforce(head, x, J, factors)


def _rank_one_bruteforce(head, x, J, factors) -> float:
    n = x.size
    p = len(factors)
    mask = _distinct_mask(n, tuple(J), p)
    tensor = head * factors[0]
    for f in factors[1:]:
        tensor = np.multiply.outer(tensor, x * f)
    return float(np.where(mask, tensor, 0.0).sum())


# ----------------------------------------------------------------------------
# quadratic variation
# ----------------------------------------------------------------------------

def qv_rate(config, params: Params):
    """Instantaneous quadratic-variation rate ``(a/n) sum_i c(tau_i eta)`` on the accelerated clock."""
    occ = _occ(config)
    rates = glauber_rates(occ, params.gamma)
    out = params.a * rates.mean(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------------
# measures on the torus
# ----------------------------------------------------------------------------

@dataclass
class DiscreteMeasure:
    """Finite positive measure on the unit torus: atoms ``weights`` at ``positions``."""

    positions: np.ndarray
    weights: np.ndarray

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def integrate(self, f) -> float:
        """``mu(f)`` for a callable ``f`` or a table of values at the atoms."""
        values = f(self.positions) if callable(f) else np.asarray(f, dtype=float)
        return float(self.weights @ values)

    def fourier(self, k: int) -> tuple[float, float]:
        phase = 2 * np.pi * k * self.positions
        return float(self.weights @ np.cos(phase)), float(self.weights @ np.sin(phase))

    @classmethod
    def from_density(cls, values) -> "DiscreteMeasure":
        """Midpoint-rule discretisation of an absolutely continuous measure on a uniform grid."""
        values = np.asarray(values, dtype=float)
        G = values.size
        return cls(np.arange(G) / G, values / G)

    @classmethod
    def zero(cls) -> "DiscreteMeasure":
        return cls(np.zeros(0), np.zeros(0))

    @classmethod
    def dirac(cls, x: float, mass: float = 1.0) -> "DiscreteMeasure":
        return cls(np.array([x % 1.0]), np.array([mass]))


def empirical_measure(config) -> DiscreteMeasure:
    """Atoms of mass ``1/n`` at ``i/n`` for every occupied site."""
    occ = _occ(config)
    n = occ.size
    sites = np.flatnonzero(occ)
    return DiscreteMeasure(sites / n, np.full(sites.size, 1.0 / n))


@dataclass(frozen=True)
class WeakDistance:
    value: float
    tail_bound: float


def weak_distance(mu1: DiscreteMeasure, mu2: DiscreteMeasure, K: int = 40) -> WeakDistance:
    """Truncated weak-convergence metric ``sum_{k=1}^K 2^{-(k+1)} (|d cos_k| + |d sin_k|)``.

    The neglected tail is at most ``2^{1-K} (mass_1 + mass_2)``.
    """
    total = 0.0
    for k in range(1, K + 1):
        c1, s1 = mu1.fourier(k)
        c2, s2 = mu2.fourier(k)
        total += 2.0 ** -(k + 1) * (abs(c1 - c2) + abs(s1 - s2))
    return WeakDistance(total, 2.0 ** (1 - K) * (mu1.mass + mu2.mass))


# ----------------------------------------------------------------------------
# selection strings
# ----------------------------------------------------------------------------

def parse_selection(name: str):
    """Validate an observable selection string; returns ``(kind, TestFunction | None)``.

    Accepted: ``"Y"``, ``"M"``, ``"density"``, ``"qv"``, ``"qv_rate"``,
    ``"field:cos:k"``, ``"field:sin:k"``, ``"fast:cos:k"``, ``"fast:sin:k"``.
    """
    if name in ("Y", "M", "density", "qv", "qv_rate"):
        return name, None
    parts = name.split(":")
    if len(parts) == 3 and parts[0] in ("field", "fast") and parts[1] in ("cos", "sin"):
        k = int(parts[2])
        H = TestFunction.cos(k) if parts[1] == "cos" else TestFunction.sin(k)
        return parts[0], H
    raise ValueError(f"unknown observable selection {name!r}")


def evaluate_selection(name: str, snapshots: np.ndarray, params: Params, qv=None) -> np.ndarray:
    """Evaluate a selection string on a stack of snapshots (one row per time)."""
    kind, H = parse_selection(name)
    occ = np.asarray(snapshots)
    n = occ.shape[-1]
    if kind == "Y":
        return (occ.sum(axis=-1) - n / 2) / n**0.75
    if kind == "M":
        return (occ.sum(axis=-1) - n / 2) / n
    if kind == "density":
        return occ.sum(axis=-1) / n
    if kind == "qv":
        if qv is None:
            raise ValueError("qv selected but not tracked")
        return np.asarray(qv, dtype=float)
    if kind == "qv_rate":
        return np.asarray(qv_rate(occ, params), dtype=float)
    if kind == "field":
        return np.asarray(field_Y34(occ, H), dtype=float)
    return np.asarray(field_fast(occ, H), dtype=float)
