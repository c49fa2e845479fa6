"""Network description: servers, arrival streams, admissible sets, weights, rates.

External formats use 1-based server/stream indices; everything internal is
0-based.  Weights are kept as exact rationals so that tie detection in the
simulator can use integer arithmetic.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm

import numpy as np


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    """Validated, immutable network description.

    K single-server queues, M arrival streams.  Stream m may join any queue
    in ``admissible[m]``; queue k carries weight ``weights[(k, m)]`` for that
    stream.  ``lam`` and ``mu`` are the nominal arrival and service rates.
    """

    K: int
    M: int
    admissible: tuple[frozenset[int], ...]
    weights: dict[tuple[int, int], Fraction]
    lam: np.ndarray
    mu: np.ndarray
    incidence: tuple[frozenset[int], ...] = field(init=False)

    def __post_init__(self):
        if self.K < 1 or self.M < 1:
            raise TopologyError("K and M must be positive")
        if len(self.admissible) != self.M:
            raise TopologyError("admissible must have one entry per stream")
        for m, s in enumerate(self.admissible):
            if not s:
                raise TopologyError(f"empty admissible set for stream {m + 1}")
            if any(k < 0 or k >= self.K for k in s):
                raise TopologyError(f"server index out of range in S_{m + 1}")
        for (k, m), w in self.weights.items():
            if k not in self.admissible[m]:
                raise TopologyError(
                    f"weight given for pair (server {k + 1}, stream {m + 1}) "
                    "outside the admissible set"
                )
            if w <= 0:
                raise TopologyError("weights must be positive")
        for m, s in enumerate(self.admissible):
            for k in s:
                if (k, m) not in self.weights:
                    raise TopologyError(
                        f"missing weight for (server {k + 1}, stream {m + 1})"
                    )
        lam = np.asarray(self.lam, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        if lam.shape != (self.M,) or mu.shape != (self.K,):
            raise TopologyError("rate vector dimensions do not match K, M")
        if np.any(~np.isfinite(lam)) or np.any(lam < 0):
            raise TopologyError("arrival rates must be finite and nonnegative")
        if np.any(~np.isfinite(mu)) or np.any(mu <= 0):
            raise TopologyError("service rates must be finite and positive")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)
        incidence = tuple(
            frozenset(m for m in range(self.M) if k in self.admissible[m])
            for k in range(self.K)
        )
        object.__setattr__(self, "incidence", incidence)

    def weight(self, k: int, m: int) -> float:
        return float(self.weights[(k, m)])

    def level_multipliers(self, m: int) -> dict[int, int]:
        """Integer c_k with Q_k / w_km proportional to Q_k * c_k across S_m.

        Used for exact weighted-queue comparisons on integer queue lengths.
        """
        numerators = [self.weights[(k, m)].numerator for k in self.admissible[m]]
        common = lcm(*numerators)
        return {
            k: common // self.weights[(k, m)].numerator * self.weights[(k, m)].denominator
            for k in self.admissible[m]
        }

    def weighted_levels(self, x: np.ndarray, m: int) -> dict[int, float]:
        """x_k / w_km for k in S_m."""
        return {k: float(x[k]) / self.weight(k, m) for k in self.admissible[m]}

    def to_dict(self) -> dict:
        """External (1-based) representation."""
        return {
            "K": self.K,
            "M": self.M,
            "admissible": [sorted(k + 1 for k in s) for s in self.admissible],
            "weights": [
                {str(k + 1): _frac_str(self.weights[(k, m)]) for k in sorted(s)}
                for m, s in enumerate(self.admissible)
            ],
            "lambda": list(map(float, self.lam)),
            "mu": list(map(float, self.mu)),
        }


def _frac_str(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def _parse_weight(v) -> Fraction:
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        return Fraction(str(v))
    raise TopologyError(f"cannot parse weight {v!r}")


def validate(raw: dict) -> Topology:
    """Build a Topology from an external (1-based) dict description.

    Expected fields: K, M, admissible (list of server-index lists, one per
    stream), weights (list of {server: weight} maps, one per stream; may be
    omitted for all-ones), lambda (list of M rates), mu (list of K rates).
    """
    try:
        K = int(raw["K"])
        M = int(raw["M"])
        adm_raw = raw["admissible"]
        lam = raw["lambda"]
        mu = raw["mu"]
    except KeyError as exc:
        raise TopologyError(f"missing required field {exc}") from exc
    if len(adm_raw) != M:
        raise TopologyError("admissible must have one entry per stream")
    admissible = tuple(frozenset(int(k) - 1 for k in s) for s in adm_raw)
    weights: dict[tuple[int, int], Fraction] = {}
    w_raw = raw.get("weights")
    if w_raw is None:
        for m, s in enumerate(admissible):
            for k in s:
                weights[(k, m)] = Fraction(1)
    else:
        if len(w_raw) != M:
            raise TopologyError("weights must have one entry per stream")
        for m, table in enumerate(w_raw):
            for key, v in table.items():
                k = int(key) - 1
                if k not in admissible[m]:
                    raise TopologyError(
                        f"weight given for pair (server {k + 1}, stream {m + 1}) "
                        "outside the admissible set"
                    )
                weights[(k, m)] = _parse_weight(v)
    return Topology(
        K=K,
        M=M,
        admissible=admissible,
        weights=weights,
        lam=np.asarray(lam, dtype=float),
        mu=np.asarray(mu, dtype=float),
    )


def load(path: str) -> Topology:
    with open(path) as fh:
        return validate(json.load(fh))


def dump(topology: Topology, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(topology.to_dict(), fh, indent=2)
        fh.write("\n")
