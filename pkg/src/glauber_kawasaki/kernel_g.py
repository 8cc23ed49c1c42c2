"""The translation-invariant pair kernel ``g_{delta,b}`` and its Fourier modes.

``g(x) = lambda_0 + sum_{l>=1} lambda_l * 2 cos(2 pi l x)`` where, for every
mode, ``c = lambda_l`` is the smaller root of

    (pi^2 l^2 + b/2) c^2 - (4 pi^2 l^2 + 2 b (1 + 2 delta)) c + 16 delta b = 0.

The discriminant is the perfect square ``(4 pi^2 l^2 + 2 b (1 - 2 delta))^2``,
so the roots are real for all parameters. The smaller root is evaluated as
``c_- = (constant term) / (leading coeff * c_+)`` to avoid cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

DEFAULT_L = 10_000


def _quadratic(ell, delta, b):
    """Coefficients ``(qa, qb, qc)`` of the per-mode quadratic (arrays broadcast)."""
    ell = np.asarray(ell, dtype=float)
    p2 = math.pi**2 * ell**2
    qa = p2 + b / 2.0
    qb = -(4.0 * p2 + 2.0 * b * (1.0 + 2.0 * delta))
    qc = 16.0 * delta * b * np.ones_like(ell)
    return qa, qb, qc


def _roots(ell, delta: float, b: float):
    ell = np.asarray(ell, dtype=float)
    if b < 0:
        raise ValueError("b must be >= 0")
    qa, qb, qc = _quadratic(ell, delta, b)
    disc = qb * qb - 4.0 * qa * qc
    scale = qb * qb + 4.0 * np.abs(qa * qc) + 1.0
    if np.any(disc < -1e-12 * scale):
        raise ArithmeticError("negative discriminant in the per-mode quadratic")
    sq = np.sqrt(np.maximum(disc, 0.0))
    lam_minus = np.zeros_like(ell)
    lam_plus = np.zeros_like(ell)
    ok = qa > 0
    lam_plus[ok] = (-qb[ok] + sq[ok]) / (2.0 * qa[ok])
    lam_minus[ok] = qc[ok] / (qa[ok] * lam_plus[ok])
    # l = 0: the roots are {8 delta, 4} for every b > 0; at b = 0 the quadratic
    # vanishes identically and the b -> 0+ limit is kept.
    zero = ell == 0
    lam_minus[zero] = min(8.0 * delta, 4.0)
    lam_plus[zero] = max(8.0 * delta, 4.0)
    if delta == 0.0 or b == 0.0:
        lam_minus[ell > 0] = 0.0
    return lam_minus, lam_plus


def mode_coefficient(ell: int, delta: float, b: float) -> tuple[float, float]:
    """Smaller and larger roots ``(lambda_minus, lambda_plus)`` of the mode-``ell`` quadratic."""
    if ell < 0:
        raise ValueError("ell must be >= 0")
    lm, lp = _roots(np.array([ell]), delta, b)
    return float(lm[0]), float(lp[0])


def mode_coefficients(L: int, delta: float, b: float) -> np.ndarray:
    """``lambda_minus`` for ``ell = 0..L``."""
    return _roots(np.arange(L + 1), delta, b)[0]


def residual(ell, c, delta: float, b: float):
    """``c (-4 pi^2 l^2 - 2b(1+2 delta)) + 16 delta b + (pi^2 l^2 + b/2) c^2``."""
    qa, qb, qc = _quadratic(ell, delta, b)
    return qb * c + qc + qa * c * c


@dataclass(frozen=True)
class KernelG:
    """Truncated cosine series of ``g_{delta,b}``; immutable once built."""

    delta: float
    b: float
    L: int = DEFAULT_L
    coeffs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not -1.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (-1, 1)")
        if self.b < 0:
            raise ValueError("b must be >= 0")
        if self.L < 1:
            raise ValueError("truncation L must be >= 1")
        c = mode_coefficients(self.L, self.delta, self.b)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def lambda0(self) -> float:
        return float(self.coeffs[0])

    @property
    def modes(self) -> np.ndarray:
        """``lambda_minus_ell`` for ``ell = 1..L``."""
        return self.coeffs[1:]

    def tail_constant(self) -> float:
        """``lim l^2 lambda_l``, Richardson-extrapolated from ``l = L`` and ``L/2``."""
        L = self.L
        h = max(L // 2, 1)
        a1 = L**2 * self.coeffs[L]
        a2 = h**2 * self.coeffs[h]
        # l^2 lambda_l = C (1 - b/(2 pi^2 l^2) + ...)
        return float((L**2 * a1 - h**2 * a2) / (L**2 - h**2)) if L != h else float(a1)

    def tail_bound(self) -> float:
        """Bound on ``sum_{l>L} 2 lambda_l`` using ``lambda_l <= 8 b delta/(2 pi^2 l^2)`` for large l."""
        if self.delta == 0.0 or self.b == 0.0:
            return 0.0
        ell = self.L
        C = max(abs(self.tail_constant()), 16.0 * abs(self.delta) * self.b / (2 * math.pi**2))
        # sum_{l>L} 1/l^2 <= 1/L
        return 2.0 * C * 1.05 / ell

    def __call__(self, x):
        return evaluate_g(x, self)


def evaluate_g(x, kernel: KernelG):
    """``lambda_0 + sum_{l=1}^L lambda_l 2 cos(2 pi l x)``; scalar or array input."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    modes = kernel.modes
    out = np.full(xs.shape, kernel.lambda0)
    ell = np.arange(1, kernel.L + 1)
    chunk = max(1, 2_000_000 // max(kernel.L, 1))
    flat = xs.ravel()
    res = out.ravel()
    for s in range(0, flat.size, chunk):
        phase = 2.0 * np.pi * np.outer(flat[s:s + chunk], ell)
        res[s:s + chunk] += 2.0 * np.cos(phase) @ modes
    res = res.reshape(xs.shape)
    return float(res[0]) if np.ndim(x) == 0 else res


def evaluate_g_derivative(x, kernel: KernelG, resum: bool = True):
    """``g'(x)`` for ``x`` in ``(0, 1)``.

    With ``resum`` the ``C/l^2`` tail is summed in closed form
    (``sum_l sin(2 pi l x)/l = pi (1 - 2x)/2`` on ``(0,1)``) and only the rapidly
    decaying remainder is truncated at ``L``; otherwise the raw partial sum is used.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    ell = np.arange(1, kernel.L + 1)
    modes = kernel.modes
    C = kernel.tail_constant() if resum else 0.0
    rem = modes - C / ell**2
    out = -np.sin(2 * np.pi * np.outer(xs, ell)) @ (4 * np.pi * ell * rem)
    out -= 2.0 * np.pi**2 * C * (1.0 - 2.0 * xs)
    return float(out[0]) if np.ndim(x) == 0 else out


def weak_form_residual(kernel: KernelG, ell) -> np.ndarray | float:
    """Per-mode residual of the weak form at ``c = lambda_minus_ell``."""
    ell_arr = np.atleast_1d(np.asarray(ell))
    if np.any(ell_arr > kernel.L) or np.any(ell_arr < 0):
        raise ValueError("mode outside the stored range 0..L")
    r = residual(ell_arr, kernel.coeffs[ell_arr], kernel.delta, kernel.b)
    return float(r[0]) if np.ndim(ell) == 0 else r


@dataclass(frozen=True)
class JumpReport:
    measured: float
    target: float
    rel_error: float
    naive: float


def jump_condition_check(kernel: KernelG) -> JumpReport:
    """Measure ``g'(0+) - g'(1-)`` against ``-16 delta b``.

    The one-sided derivatives are taken at ``x = 1/L`` and ``1 - 1/L`` from the
    tail-resummed derivative series; ``naive`` is the Fejer-weighted raw partial
    sum at the same points, kept for comparison (it is biased by the Gibbs factor
    ``Si(2 pi)/(pi/2)`` because ``x L`` is held fixed).
    """
    if kernel.L < 2:
        raise ValueError("need L >= 2")
    target = -16.0 * kernel.delta * kernel.b
    x = 1.0 / kernel.L
    d = evaluate_g_derivative(np.array([x, 1 - x]), kernel, resum=True)
    measured = float(d[0] - d[1])
    ell = np.arange(1, kernel.L + 1)
    w = 1.0 - ell / (kernel.L + 1.0)
    raw = -np.sin(2 * np.pi * np.outer([x, 1 - x], ell)) @ (w * 4 * np.pi * ell * kernel.modes)
    naive = float(raw[0] - raw[1])
    rel = abs(measured - target) / abs(target) if target != 0 else abs(measured)
    return JumpReport(measured, target, rel, naive)


def l2_norm(kernel: KernelG, centred: bool = False) -> float:
    """``||g||_2`` (or ``||g^0||_2``) from Parseval."""
    s = 2.0 * float(np.sum(kernel.modes**2))
    if not centred:
        s += kernel.lambda0**2
    return math.sqrt(s)


def covariance_identity_gap(ell, delta: float, b: float):
    """``(4 - lambda_l)^{-1} - (1/4 + b/(8 pi^2 l^2))`` for ``l >= 1``.

    Vanishes identically at ``delta = 1/2``; away from it the gap is
    ``O(|1 - 2 delta| / l^2)``.
    """
    ell = np.asarray(ell, dtype=float)
    lm, _ = _roots(ell, delta, b)
    return 1.0 / (4.0 - lm) - (0.25 + b / (8.0 * math.pi**2 * ell**2))


@lru_cache(maxsize=64)
def _g_table_cached(n: int, delta: float, b: float, L: int) -> np.ndarray:
    kernel = KernelG(delta, b, L)
    t = np.asarray(evaluate_g(np.arange(n) / n, kernel))
    t.setflags(write=False)
    return t


def g_table(n: int, delta: float, b: float, L: int = DEFAULT_L) -> np.ndarray:
    """``g(d/n)`` for ``d = 0..n-1`` (so ``g_{i,j} = table[(i - j) % n]``)."""
    return _g_table_cached(int(n), float(delta), float(b), int(L))
