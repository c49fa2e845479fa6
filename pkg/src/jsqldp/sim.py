"""Exact discrete-event simulation of the weighted JSQ network.

Arrival streams and autonomous per-server service clocks are independent
Poisson processes; a service tick removes a customer only when one is
present, but is always counted.  Each clock draws from its own Philox
counter-based stream keyed by (seed, clock id), so runs are reproducible
bit-for-bit across platforms.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .piecewise import PiecewisePath
from .topology import Topology


class TieRule(enum.Enum):
    LOWEST_INDEX = "lowest"
    UNIFORM_RANDOM = "uniform"


@dataclass
class SamplePath:
    """Unscaled event history of one run at scale n.

    Row j of each array is the state just after the j-th event (row 0 is the
    initial state).  ``queues`` is the queue-length vector; ``arrivals``,
    ``services``, ``departures`` and ``routed`` are the cumulative counters
    per stream, per server, per server and per (server, stream) pair.
    """

    n: int
    seed: int
    times: np.ndarray
    queues: np.ndarray       # (E+1, K)
    arrivals: np.ndarray     # (E+1, M)
    services: np.ndarray     # (E+1, K)
    departures: np.ndarray   # (E+1, K)
    routed: np.ndarray       # (E+1, K, M)
    horizon: float           # unscaled

    @property
    def K(self) -> int:
        return self.queues.shape[1]

    @property
    def M(self) -> int:
        return self.arrivals.shape[1]


def _clock_rng(seed: int, clock_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, clock_id], dtype=np.uint64)))


def _weighted_argmin(q: np.ndarray, mults: list[tuple[int, int]]) -> list[int]:
    """Servers attaining the minimal weighted queue length, exactly.

    ``mults`` holds (server, integer multiplier) pairs with Q_k / w_km
    proportional to Q_k * multiplier, so ties are decided in integer
    arithmetic.
    """
    best = None
    out: list[int] = []
    for k, c in mults:
        v = int(q[k]) * c
        if best is None or v < best:
            best = v
            out = [k]
        elif v == best:
            out.append(k)
    return out


def simulate(
    topology: Topology,
    n: int,
    T: float,
    seed: int,
    tie_rule: TieRule = TieRule.LOWEST_INDEX,
    q0_scaled=None,
) -> SamplePath:
    """Run the n-th system on unscaled time [0, n*T].

    The initial queue vector is floor(n * q0_scaled).  Identical arguments
    reproduce identical paths.
    """
    if n < 1:
        raise ValueError("scale must be >= 1")
    K, M = topology.K, topology.M
    q0_scaled = np.zeros(K) if q0_scaled is None else np.asarray(q0_scaled, dtype=float)
    horizon = n * T
    q = np.floor(n * q0_scaled).astype(np.int64)
    mults = [sorted(topology.level_multipliers(m).items()) for m in range(M)]
    # clocks 0..M-1: arrivals, M..M+K-1: services, M+K: tie breaking
    gens = [_clock_rng(seed, c) for c in range(M + K)]
    tie_gen = _clock_rng(seed, M + K)
    rates = np.concatenate([topology.lam, topology.mu])
    next_time = np.array(
        [
            gens[c].exponential(1.0 / rates[c]) if rates[c] > 0 else math.inf
            for c in range(M + K)
        ]
    )
    times = [0.0]
    q_hist = [q.copy()]
    A = np.zeros(M, dtype=np.int64)
    B = np.zeros(K, dtype=np.int64)
    D = np.zeros(K, dtype=np.int64)
    E = np.zeros((K, M), dtype=np.int64)
    A_hist, B_hist, D_hist, E_hist = [A.copy()], [B.copy()], [D.copy()], [E.copy()]
    while True:
        c = int(np.argmin(next_time))
        t = next_time[c]
        if t > horizon:
            break
        next_time[c] = t + gens[c].exponential(1.0 / rates[c])
        if c < M:
            m = c
            A[m] += 1
            cands = _weighted_argmin(q, mults[m])
            if len(cands) == 1 or tie_rule is TieRule.LOWEST_INDEX:
                k = cands[0]
            else:
                k = cands[int(tie_gen.integers(len(cands)))]
            E[k, m] += 1
            q[k] += 1
        else:
            k = c - M
            B[k] += 1
            if q[k] > 0:
                q[k] -= 1
                D[k] += 1
        times.append(t)
        q_hist.append(q.copy())
        A_hist.append(A.copy())
        B_hist.append(B.copy())
        D_hist.append(D.copy())
        E_hist.append(E.copy())
    return SamplePath(
        n=n,
        seed=seed,
        times=np.array(times),
        queues=np.array(q_hist),
        arrivals=np.array(A_hist),
        services=np.array(B_hist),
        departures=np.array(D_hist),
        routed=np.array(E_hist),
        horizon=horizon,
    )


def audit(path: SamplePath, topology: Topology) -> None:
    """Check the exact balance identities at every event; raises on failure."""
    K = path.K
    q0 = path.queues[0]
    routed_in = path.routed.sum(axis=2)  # incidence sums: off-support entries are 0
    recon = q0[None, :] + routed_in - path.departures
    if not np.array_equal(recon, path.queues):
        raise AssertionError("queue balance identity violated")
    per_stream = path.routed.sum(axis=1)
    if not np.array_equal(per_stream, path.arrivals):
        raise AssertionError("arrival routing identity violated")
    for arr in (path.arrivals, path.services, path.departures):
        if np.any(np.diff(arr, axis=0) < 0):
            raise AssertionError("counters must be nondecreasing")
    if np.any(path.queues < 0):
        raise AssertionError("queues must be nonnegative")
    # departures only at service jumps with a customer present
    dB = np.diff(path.services, axis=0)
    dD = np.diff(path.departures, axis=0)
    if np.any(dD > dB):
        raise AssertionError("departure without a service jump")
    pre = path.queues[:-1]
    if np.any((dD == 1) & (pre <= 0)):
        raise AssertionError("departure from an empty queue")
    if np.any((dB == 1) & (pre > 0) & (dD == 0)):
        raise AssertionError("service jump with customer present must depart")


def scale_path(path: SamplePath, grid_step: float = 1e-3) -> PiecewisePath:
    """Scaled queue path Q(n t)/n sampled on a uniform grid of scaled time.

    The underlying step path is right-continuous; sampling keeps the value
    in force at each grid time.
    """
    T = path.horizon / path.n
    ts = np.arange(0.0, T + grid_step / 2, grid_step)
    idx = np.searchsorted(path.times, ts * path.n, side="right") - 1
    vals = path.queues[idx] / path.n
    if len(ts) < 2:
        ts = np.array([0.0, T if T > 0 else 1.0])
        vals = np.vstack([vals, vals])
    return PiecewisePath(ts, vals)


def scale_counters(path: SamplePath, grid_step: float = 1e-3) -> dict[str, np.ndarray]:
    """All scaled processes sampled on a uniform grid, for CSV export."""
    T = path.horizon / path.n
    ts = np.arange(0.0, T + grid_step / 2, grid_step)
    idx = np.searchsorted(path.times, ts * path.n, side="right") - 1
    return {
        "t": ts,
        "Q": path.queues[idx] / path.n,
        "A": path.arrivals[idx] / path.n,
        "B": path.services[idx] / path.n,
        "D": path.departures[idx] / path.n,
        "E": path.routed[idx] / path.n,
    }


def terminal_statistics(
    topology: Topology,
    n: int,
    T: float,
    seed: int,
    tie_rule: TieRule = TieRule.LOWEST_INDEX,
    q0_scaled=None,
) -> tuple[np.ndarray, np.ndarray]:
    """(terminal queue vector, running max per queue), without recording.

    Same dynamics as ``simulate`` but O(1) memory; used by the rare-event
    estimator's generic path.
    """
    K, M = topology.K, topology.M
    q0_scaled = np.zeros(K) if q0_scaled is None else np.asarray(q0_scaled, dtype=float)
    horizon = n * T
    q = np.floor(n * q0_scaled).astype(np.int64)
    qmax = q.copy()
    mults = [sorted(topology.level_multipliers(m).items()) for m in range(M)]
    gens = [_clock_rng(seed, c) for c in range(M + K)]
    tie_gen = _clock_rng(seed, M + K)
    rates = np.concatenate([topology.lam, topology.mu])
    next_time = np.array(
        [
            gens[c].exponential(1.0 / rates[c]) if rates[c] > 0 else math.inf
            for c in range(M + K)
        ]
    )
    while True:
        c = int(np.argmin(next_time))
        t = next_time[c]
        if t > horizon:
            break
        next_time[c] = t + gens[c].exponential(1.0 / rates[c])
        if c < M:
            cands = _weighted_argmin(q, mults[c])
            if len(cands) == 1 or tie_rule is TieRule.LOWEST_INDEX:
                k = cands[0]
            else:
                k = cands[int(tie_gen.integers(len(cands)))]
            q[k] += 1
            if q[k] > qmax[k]:
                qmax[k] = q[k]
        else:
            k = c - M
            if q[k] > 0:
                q[k] -= 1
    return q, qmax
