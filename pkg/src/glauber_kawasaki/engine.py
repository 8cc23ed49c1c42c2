"""Exact continuous-time simulation of the exclusion + Glauber chain.

Two independent Poisson streams are superposed:

* swaps: every bond ``(i, i+1)`` rings at rate ``n^2`` (times ``sqrt(n)`` on the
  accelerated clock); a ring exchanges the two occupations, which is a no-op
  when they agree;
* flips: every site rings at rate ``a * cmax`` (times ``sqrt(n)``) and the flip
  is accepted with probability ``c(tau_i eta) / cmax`` where ``cmax`` is the
  largest of the three Glauber rates.

Each event consumes one standard exponential (the waiting time) followed by one
uniform. The integer part of the scaled uniform selects the bond or site and its
fractional part is the thinning variate, so :func:`step` and :func:`simulate`
consume the random stream identically.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .lattice import Configuration, Params, rate_table

DEFAULT_MAX_EVENTS = 10**10

SWAP, FLIP_ACCEPTED, FLIP_REJECTED = 0, 1, 2
_EVENT_NAMES = {SWAP: "swap", FLIP_ACCEPTED: "flip_accepted", FLIP_REJECTED: "flip_rejected"}

# counter slots
_C_EVENTS, _C_SWAPS, _C_FLIP_ATTEMPTS, _C_FLIPS = 0, 1, 2, 3


class ClockMode(enum.Enum):
    """Accelerated runs the generator ``sqrt(n) L_n``; hydrodynamic runs ``L_n``."""

    ACCELERATED = "accelerated"
    HYDRODYNAMIC = "hydrodynamic"


class Event(NamedTuple):
    kind: str
    site: int


def stream_rates(params: Params, mode: ClockMode) -> tuple[float, float, float]:
    """Per-bond swap rate, per-site flip-attempt rate and the thinning bound ``cmax``."""
    cmax = (1.0 + abs(params.gamma)) ** 2
    if cmax <= 0.0:
        raise ValueError("maximal Glauber rate must be positive")
    speed = math.sqrt(params.n) if mode is ClockMode.ACCELERATED else 1.0
    return speed * params.n**2, speed * params.a * cmax, cmax


def split_seed(base_seed: int, k: int) -> np.random.SeedSequence:
    """Seed for trajectory ``k``: ``SeedSequence(entropy=base_seed, spawn_key=(k,))``.

    This equals ``SeedSequence(base_seed).spawn(k + 1)[k]`` and is independent
    of how many other trajectories are drawn.
    """
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(k,))


def trajectory_rng(base_seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(split_seed(base_seed, k)))


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.default_rng(seed)


# ----------------------------------------------------------------------------
# compiled kernels
# ----------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _spin(v):
    return 2 * np.int64(v) - 1


@njit(cache=True, inline="always")
def _apply_event(occ, n, u, p_swap, table, cmax, sums, track):
    """Apply the event selected by uniform ``u``; return ``(kind, site)``.

    ``sums`` holds the nearest and next-nearest spin correlation sums
    ``S1 = sum sigma_i sigma_{i+1}``, ``S2 = sum sigma_i sigma_{i+2}``, updated
    only when ``track`` is set.
    """
    if u < p_swap:
        x = u / p_swap * n
        i = int(x)
        if i >= n:
            i = n - 1
        j = i + 1
        if j == n:
            j = 0
        a = occ[i]
        b = occ[j]
        if track and a != b:
            im = i - 1 if i > 0 else n - 1
            im2 = im - 1 if im > 0 else n - 1
            jp = j + 1 if j < n - 1 else 0
            jp2 = jp + 1 if jp < n - 1 else 0
            d = _spin(b) - _spin(a)
            sums[0] += d * (_spin(occ[im]) - _spin(occ[jp]))
            sums[1] += d * (_spin(occ[im2]) + _spin(occ[jp])) - d * (_spin(occ[im]) + _spin(occ[jp2]))
        occ[i] = b
        occ[j] = a
        return SWAP, i
    y = (u - p_swap) / (1.0 - p_swap) * n
    i = int(y)
    if i >= n:
        i = n - 1
    v = y - i
    im = i - 1 if i > 0 else n - 1
    ip = i + 1 if i < n - 1 else 0
    if v * cmax < table[4 * occ[im] + 2 * occ[i] + occ[ip]]:
        if track:
            im2 = im - 1 if im > 0 else n - 1
            ip2 = ip + 1 if ip < n - 1 else 0
            s = _spin(occ[i])
            sums[0] -= 2 * s * (_spin(occ[im]) + _spin(occ[ip]))
            sums[1] -= 2 * s * (_spin(occ[im2]) + _spin(occ[ip2]))
        occ[i] = 1 - occ[i]
        return FLIP_ACCEPTED, i
    return FLIP_REJECTED, i


@njit(cache=True)
def _correlation_sums(occ, sums):
    n = occ.size
    s1 = 0
    s2 = 0
    for i in range(n):
        s = _spin(occ[i])
        s1 += s * _spin(occ[(i + 1) % n])
        s2 += s * _spin(occ[(i + 2) % n])
    sums[0] = s1
    sums[1] = s2


def _make_run(track: bool):
    """Compile the trajectory kernel with ``track`` frozen as a constant."""

    @njit(cache=True, nogil=True)
    def _run(occ, lam, p_swap, table, cmax, gamma, grid, rng, snaps, rate_int,
             counters, max_events, next_time):
        """Advance ``occ`` over ``grid``; returns ``(status, rows_written, next_time)``.

        ``rate_int[k]`` receives ``int_0^{grid[k]} sum_i c(tau_i eta_s) ds`` when
        ``track`` is set. Status 0 means the grid was covered, 1 that the event
        budget ran out (rows from the failing grid point on are left untouched).
        The event logic repeats :func:`_apply_event` inline (a call per event
        costs several times the event itself) and, when tracking, updates the
        correlation sums without branching on whether the swap is a no-op.
        """
        n = occ.size
        nf = float(n)
        inv_lam = 1.0 / lam
        q_flip = 1.0 - p_swap
        sums = np.zeros(2, dtype=np.int64)
        _correlation_sums(occ, sums)
        s1 = sums[0]
        s2 = sums[1]
        gg = gamma * gamma
        t = 0.0
        t_mark = 0.0  # time of the last change of the rate sum
        integral = 0.0
        events = counters[_C_EVENTS]
        swaps = counters[_C_SWAPS]
        attempts = counters[_C_FLIP_ATTEMPTS]
        flips = counters[_C_FLIPS]
        status = 0
        rows = grid.size
        if next_time < 0.0:
            next_time = rng.standard_exponential() * inv_lam
        for k in range(grid.size):
            g = grid[k]
            budget = max_events - events
            local = 0
            while next_time <= g:
                if local >= budget:
                    status = 1
                    break
                t = next_time
                u = rng.random()
                local += 1
                if u < p_swap:
                    i = int(u / p_swap * nf)
                    if i >= n:
                        i = n - 1
                    j = i + 1
                    if j == n:
                        j = 0
                    a = occ[i]
                    b = occ[j]
                    if track:
                        integral += (n - 2.0 * gamma * s1 + gg * s2) * (t - t_mark)
                        t_mark = t
                        im = i - 1 if i > 0 else n - 1
                        im2 = im - 1 if im > 0 else n - 1
                        jp = j + 1 if j < n - 1 else 0
                        jp2 = jp + 1 if jp < n - 1 else 0
                        d = 2 * (np.int64(b) - np.int64(a))
                        s1 += d * (2 * np.int64(occ[im]) - 2 * np.int64(occ[jp]))
                        s2 += d * (2 * np.int64(occ[im2]) + 2 * np.int64(occ[jp])
                                   - 2 * np.int64(occ[im]) - 2 * np.int64(occ[jp2]))
                    occ[i] = b
                    occ[j] = a
                    swaps += 1
                else:
                    y = (u - p_swap) / q_flip * nf
                    i = int(y)
                    if i >= n:
                        i = n - 1
                    v = y - i
                    im = i - 1 if i > 0 else n - 1
                    ip = i + 1 if i < n - 1 else 0
                    attempts += 1
                    if v * cmax < table[4 * occ[im] + 2 * occ[i] + occ[ip]]:
                        if track:
                            integral += (n - 2.0 * gamma * s1 + gg * s2) * (t - t_mark)
                            t_mark = t
                            im2 = im - 1 if im > 0 else n - 1
                            ip2 = ip + 1 if ip < n - 1 else 0
                            sp = 2 * np.int64(occ[i]) - 1
                            s1 -= 2 * sp * (2 * np.int64(occ[im]) + 2 * np.int64(occ[ip]) - 2)
                            s2 -= 2 * sp * (2 * np.int64(occ[im2]) + 2 * np.int64(occ[ip2]) - 2)
                        occ[i] = 1 - occ[i]
                        flips += 1
                next_time = t + rng.standard_exponential() * inv_lam
            events += local
            if status == 1:
                rows = k
                break
            for j in range(n):
                snaps[k, j] = occ[j]
            if track:
                rate_int[k] = integral + (n - 2.0 * gamma * s1 + gg * s2) * (g - t_mark)
        counters[_C_EVENTS] = events
        counters[_C_SWAPS] = swaps
        counters[_C_FLIP_ATTEMPTS] = attempts
        counters[_C_FLIPS] = flips
        return status, rows, next_time

    return _run


_run_plain = _make_run(False)
_run_tracked = _make_run(True)


@njit(cache=True)
def _one_event(occ, lam, p_swap, table, cmax, rng):
    dt = rng.standard_exponential() / lam
    u = rng.random()
    sums = np.zeros(2, dtype=np.int64)
    kind, site = _apply_event(occ, occ.size, u, p_swap, table, cmax, sums, False)
    return dt, kind, site


# ----------------------------------------------------------------------------
# single steps
# ----------------------------------------------------------------------------

@dataclass
class SimState:
    """Current configuration, clock and random stream of one trajectory."""

    config: Configuration
    time: float = 0.0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    counters: dict = field(default_factory=lambda: {
        "events": 0, "swaps": 0, "flip_attempts": 0, "flips_accepted": 0})


def step(state: SimState, params: Params, mode: ClockMode = ClockMode.ACCELERATED):
    """Perform one event of the superposed streams.

    Returns ``(new_state, dt, Event)``. The input state's configuration is left
    untouched; its random stream is advanced.
    """
    if state.config.n != params.n:
        raise ValueError("configuration size does not match params.n")
    swap_rate, flip_rate, cmax = stream_rates(params, mode)
    n = params.n
    lam = n * (swap_rate + flip_rate)
    occ = state.config.occupations.copy()
    dt, kind, site = _one_event(occ, lam, n * swap_rate / lam, rate_table(params.gamma), cmax, state.rng)
    counters = dict(state.counters)
    counters["events"] += 1
    if kind == SWAP:
        counters["swaps"] += 1
    else:
        counters["flip_attempts"] += 1
        counters["flips_accepted"] += kind == FLIP_ACCEPTED
    new = SimState(Configuration(occ), state.time + dt, state.rng, counters)
    return new, dt, Event(_EVENT_NAMES[kind], int(site))


# ----------------------------------------------------------------------------
# trajectories
# ----------------------------------------------------------------------------

@dataclass
class TimeSeries:
    """Observables recorded on a fixed time grid for one trajectory.

    ``snapshots`` holds the occupation vector at every grid time (rows), so any
    observable can be evaluated after the fact. ``qv`` is the integrated
    quadratic variation ``int_0^t (a/n) sum_i c(tau_i eta_s) ds`` (NaN when not
    tracked).
    """

    times: np.ndarray
    records: dict
    snapshots: np.ndarray
    qv: np.ndarray
    params: Params
    mode: ClockMode
    seed: object = None
    counters: dict = field(default_factory=dict)
    truncated: bool = False

    def __getitem__(self, name: str) -> np.ndarray:
        return self.records[name]

    def columns(self) -> list[str]:
        return ["t", *self.records]

    def to_csv(self, path_or_buffer=None) -> str:
        """One row per grid time; columns ``t`` then each recorded observable."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns())
        for k, t in enumerate(self.times):
            writer.writerow([repr(float(t))] + [repr(float(self.records[c][k])) for c in self.records])
        text = buf.getvalue()
        if path_or_buffer is not None:
            if hasattr(path_or_buffer, "write"):
                path_or_buffer.write(text)
            else:
                with open(path_or_buffer, "w", newline="") as fh:
                    fh.write(text)
        return text

    def summary(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "mode": self.mode.value,
            "seed": _seed_repr(self.seed),
            "counters": {k: int(v) for k, v in self.counters.items()},
            "truncated": bool(self.truncated),
            "n_times": int(self.times.size),
            "columns": self.columns(),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if seed is None:
        return None
    return repr(seed)


def simulate(params: Params, mode: ClockMode, initial: Configuration, grid: Sequence[float],
             observables: Sequence[str] = ("Y",), seed=None,
             max_events: int = DEFAULT_MAX_EVENTS, track_qv: bool | None = None) -> TimeSeries:
    """Run one trajectory from ``initial`` and record ``observables`` on ``grid``.

    Each grid row holds the state just after the last event at or before that
    time. The quadratic-variation integral is tracked when ``"qv"`` is selected
    (or ``track_qv`` is forced on); tracking costs a few integer updates per
    event. A run that exhausts ``max_events`` returns the rows it reached, NaN
    elsewhere, with ``truncated=True``.
    """
    from .observables import evaluate_selection

    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-d sequence")
    if grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing and start at t >= 0")
    if initial.n != params.n:
        raise ValueError("initial configuration size does not match params.n")
    if track_qv is None:
        track_qv = "qv" in observables
    rng = _as_generator(seed)
    swap_rate, flip_rate, cmax = stream_rates(params, mode)
    n = params.n
    lam = n * (swap_rate + flip_rate)
    occ = initial.occupations.copy()
    snaps = np.zeros((grid.size, n), dtype=np.uint8)
    rate_int = np.full(grid.size, np.nan)
    counters = np.zeros(4, dtype=np.int64)
    kernel = _run_tracked if track_qv else _run_plain
    status, rows, _ = kernel(occ, lam, n * swap_rate / lam, rate_table(params.gamma), cmax,
                             params.gamma, grid, rng, snaps, rate_int, counters,
                             int(max_events), -1.0)
    truncated = status != 0
    qv = params.a / n * rate_int
    counter_dict = {
        "events": int(counters[_C_EVENTS]),
        "swaps": int(counters[_C_SWAPS]),
        "flip_attempts": int(counters[_C_FLIP_ATTEMPTS]),
        "flips_accepted": int(counters[_C_FLIPS]),
    }
    valid = np.arange(grid.size) < rows
    records = {}
    for name in observables:
        values = evaluate_selection(name, snaps, params, qv=qv)
        values = np.where(valid, values, np.nan)
        records[name] = values
    return TimeSeries(grid, records, snaps, qv, params, mode, seed=seed if not isinstance(seed, np.random.Generator) else None,
                      counters=counter_dict, truncated=truncated)


def ensemble(params: Params, mode: ClockMode, init, n_traj: int, grid: Sequence[float],
             base_seed: int, observables: Sequence[str] = ("Y",), max_events: int = DEFAULT_MAX_EVENTS,
             track_qv: bool | None = None, workers: int = 1) -> list[TimeSeries]:
    """Run ``n_traj`` independent trajectories.

    Trajectory ``k`` draws its initial configuration from ``init`` (a
    :class:`~glauber_kawasaki.measures.MeasureSpec` or a fixed
    :class:`Configuration`) and then its dynamics from the stream seeded by
    ``split_seed(base_seed, k)``. Output order is by ``k`` whatever ``workers`` is.
    """
    from .measures import sample

    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")

    def one(k):
        seq = split_seed(base_seed, k)
        rng = np.random.Generator(np.random.PCG64(seq))
        start = init if isinstance(init, Configuration) else sample(init, params.n, rng)
        ts = simulate(params, mode, start, grid, observables, seed=rng,
                      max_events=max_events, track_qv=track_qv)
        ts.seed = seq
        return ts

    if workers <= 1:
        return [one(k) for k in range(n_traj)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n_traj)))


def stack(series: Sequence[TimeSeries], name: str) -> np.ndarray:
    """Array of shape ``(n_traj, n_times)`` for one recorded observable."""
    return np.vstack([ts.records[name] for ts in series])
