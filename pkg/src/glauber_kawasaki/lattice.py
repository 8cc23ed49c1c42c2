"""Configurations on the discrete torus and the Glauber jump rate.

A configuration is an occupation vector ``eta`` in {0,1}^n, indexed modulo n.
Spin and centred views are ``sigma = 2*eta - 1`` and ``eta_bar = eta - 1/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def derived_gamma(n: int, theta: float) -> float:
    """Return the critical-window coupling ``(1 - theta/sqrt(n)) / 2``."""
    if n < 1:
        raise ValueError(f"lattice size must be >= 1, got {n}")
    gamma = 0.5 * (1.0 - theta / math.sqrt(n))
    if not -1.0 < gamma < 1.0:
        raise ValueError(
            f"gamma={gamma} outside (-1, 1) for n={n}, theta={theta}"
        )
    return gamma


@dataclass(frozen=True)
class Params:
    """Model parameters ``(n, a, theta)`` with the derived coupling ``gamma``."""

    n: int
    a: float
    theta: float = 0.0
    gamma: float = field(init=False)

    def __post_init__(self):
        if self.n < 4:
            raise ValueError(f"n must be >= 4, got {self.n}")
        if self.a < 0:
            raise ValueError(f"reaction strength a must be >= 0, got {self.a}")
        object.__setattr__(self, "gamma", derived_gamma(self.n, self.theta))

    @classmethod
    def from_gamma(cls, n: int, a: float, gamma: float) -> "Params":
        """Build parameters by inverting ``gamma = (1 - theta/sqrt(n))/2``."""
        return cls(n=n, a=a, theta=(1.0 - 2.0 * gamma) * math.sqrt(n))

    def to_dict(self) -> dict:
        return {"n": self.n, "a": self.a, "theta": self.theta, "gamma": self.gamma}


def rate_table(gamma: float) -> np.ndarray:
    """Glauber rates indexed by the neighbourhood code ``4*eta[i-1] + 2*eta[i] + eta[i+1]``."""
    table = np.empty(8)
    for code in range(8):
        left = 2 * ((code >> 2) & 1) - 1
        mid = 2 * ((code >> 1) & 1) - 1
        right = 2 * (code & 1) - 1
        table[code] = 1.0 - gamma * mid * (left + right) + gamma * gamma * left * right
    return table


def vprime(rho, gamma: float):
    """Derivative of the reaction potential, ``-(2g-1)(2rho-1) + g^2 (2rho-1)^3``."""
    x = 2.0 * np.asarray(rho, dtype=float) - 1.0
    return x * (1.0 - 2.0 * gamma + gamma * gamma * x * x)


class Configuration:
    """Occupation vector on the torus with a cached particle count.

    Occupations are held as a ``uint8`` numpy array (one byte per site) so that
    reads and toggles are O(1) and the array can be handed to compiled kernels
    without conversion. Transforms return new configurations.
    """

    __slots__ = ("_occ", "_m")

    def __init__(self, occupations, m: int | None = None):
        occ = np.asarray(occupations, dtype=np.uint8)
        if occ.ndim != 1:
            raise ValueError("occupations must be one-dimensional")
        if occ.size and occ.max() > 1:
            raise ValueError("occupations must be 0 or 1")
        self._occ = occ.copy()
        self._occ.setflags(write=False)
        self._m = int(occ.sum()) if m is None else int(m)

    # construction helpers
    @classmethod
    def empty(cls, n: int) -> "Configuration":
        return cls(np.zeros(n, dtype=np.uint8), 0)

    @classmethod
    def full(cls, n: int) -> "Configuration":
        return cls(np.ones(n, dtype=np.uint8), n)

    @classmethod
    def alternating(cls, n: int, first: int = 1) -> "Configuration":
        occ = ((np.arange(n) + (1 - first)) % 2 == 0).astype(np.uint8)
        return cls(occ)

    @classmethod
    def from_bits(cls, bits: str) -> "Configuration":
        """Parse a string such as ``"0010"`` (site 0 first)."""
        return cls(np.array([int(b) for b in bits], dtype=np.uint8))

    @classmethod
    def from_index(cls, index: int, n: int) -> "Configuration":
        """Configuration whose site ``i`` holds bit ``i`` of ``index``."""
        return cls(((index >> np.arange(n)) & 1).astype(np.uint8))

    # views
    @property
    def n(self) -> int:
        return self._occ.size

    @property
    def m(self) -> int:
        return self._m

    @property
    def occupations(self) -> np.ndarray:
        return self._occ

    @property
    def sigma(self) -> np.ndarray:
        return 2 * self._occ.astype(np.int8) - 1

    @property
    def eta_bar(self) -> np.ndarray:
        return self._occ - 0.5

    def __getitem__(self, i: int) -> int:
        return int(self._occ[i % self.n])

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self._occ, other._occ))

    def __hash__(self) -> int:
        return hash((self.n, self._occ.tobytes()))

    def __repr__(self) -> str:
        bits = "".join(map(str, self._occ[:64]))
        return f"Configuration({bits}{'...' if self.n > 64 else ''}, m={self.m})"

    def bits(self) -> str:
        return "".join(map(str, self._occ))

    def index(self) -> int:
        """Inverse of :meth:`from_index` (site ``i`` is bit ``i``)."""
        return int(np.dot(self._occ.astype(np.int64), 1 << np.arange(self.n, dtype=np.int64)))

    # transforms
    def flip(self, i: int) -> "Configuration":
        occ = self._occ.copy()
        i %= self.n
        occ[i] ^= 1
        return Configuration(occ, self._m + (1 if occ[i] else -1))

    def swap(self, i: int) -> "Configuration":
        i %= self.n
        j = (i + 1) % self.n
        if self._occ[i] == self._occ[j]:
            return self
        occ = self._occ.copy()
        occ[i], occ[j] = occ[j], occ[i]
        return Configuration(occ, self._m)

    def translate(self, k: int) -> "Configuration":
        """Return ``tau_k eta``, i.e. ``(tau_k eta)_j = eta_{j+k}``."""
        return Configuration(np.roll(self._occ, -k), self._m)

    def complement(self) -> "Configuration":
        return Configuration(1 - self._occ, self.n - self._m)

    # serialization
    def to_hex(self) -> str:
        """Hex string ``"<n>:<hex>"`` of the packed bit vector (site 0 = MSB of byte 0)."""
        return f"{self.n}:{np.packbits(self._occ).tobytes().hex()}"

    @classmethod
    def from_hex(cls, text: str) -> "Configuration":
        n_str, hex_str = text.split(":", 1)
        n = int(n_str)
        packed = np.frombuffer(bytes.fromhex(hex_str), dtype=np.uint8)
        occ = np.unpackbits(packed)[:n]
        if occ.size != n:
            raise ValueError(f"hex payload too short for n={n}")
        return cls(occ)


def apply_flip(config: Configuration, i: int) -> Configuration:
    """Toggle site ``i``."""
    return config.flip(i)


def apply_swap(config: Configuration, i: int) -> Configuration:
    """Exchange the occupations of sites ``i`` and ``i+1``."""
    return config.swap(i)


def glauber_rate(config: Configuration, i: int, gamma: float) -> float:
    """Rate ``c(tau_i eta)`` for flipping site ``i``."""
    n = config.n
    occ = config.occupations
    code = 4 * int(occ[(i - 1) % n]) + 2 * int(occ[i % n]) + int(occ[(i + 1) % n])
    return float(rate_table(gamma)[code])


def glauber_rates(occ: np.ndarray, gamma: float) -> np.ndarray:
    """Vector of ``c(tau_i eta)`` for all sites, for a raw occupation array (or stack of them)."""
    occ = np.asarray(occ, dtype=np.int64)
    codes = 4 * np.roll(occ, 1, axis=-1) + 2 * occ + np.roll(occ, -1, axis=-1)
    return rate_table(gamma)[codes]


@dataclass(frozen=True)
class MagnetisationStats:
    m: int
    mag_sum: float
    Y: float
    M: float


def magnetisation_stats(config: Configuration) -> MagnetisationStats:
    """Particle count, centred sum ``m - n/2``, ``Y = (m - n/2)/n^{3/4}`` and ``M = (m - n/2)/n``."""
    n = config.n
    mag = config.m - n / 2.0
    return MagnetisationStats(config.m, mag, mag / n**0.75, mag / n)
