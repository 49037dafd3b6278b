"""Single-server queue with state-dependent arrival and service rates.

In state k the arrival rate is ``(v + k)^beta * lam`` and the service rate is
``k^alpha * mu`` (zero in state 0). The stationary distribution of this
birth-death chain is ECOMP(v, lam/mu, alpha, beta); this module computes it
exactly on a truncated state space and estimates it by simulation.

Simulation uses an exact event-driven (Gillespie) scheme compiled with
numba. Its random numbers come from numba's internal MT19937 generator,
seeded per call, so a given seed reproduces the same trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numba
import numpy as np
from scipy.special import logsumexp

from .distribution import EcompDist, EcompParams
from .errors import StateCapExceeded

__all__ = [
    "QueueSpec",
    "SteadyStateEstimate",
    "SteadyStateMethod",
    "default_state_cap",
    "rates",
    "simulate_ctmc",
    "solve_truncated",
    "total_variation",
]

HARD_STATE_CAP = 100_000


def default_state_cap(params: EcompParams, tail: float = 1e-10) -> int:
    """Smallest K with P(X >= K) < tail, clipped to [10, HARD_STATE_CAP]."""
    dist = EcompDist(params)
    cdf = np.cumsum(dist.pmf_table(dist.truncation_point))
    # survival(K) = 1 - cdf(K-1)
    below = np.flatnonzero(1.0 - cdf < tail)
    k = int(below[0]) + 1 if below.size else dist.truncation_point
    while k > 1 and dist.survival(k - 1) < tail:
        k -= 1
    while dist.survival(k) >= tail and k < HARD_STATE_CAP:
        k += 1
    return int(min(max(k, 10), HARD_STATE_CAP))


@dataclass(frozen=True)
class QueueSpec:
    lam: float
    mu: float
    v: float
    alpha: float
    beta: float
    state_cap: int | None = None

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ValueError(f"rates must be positive, got lam={self.lam}, mu={self.mu}")
        params = self.params  # validates the induced ECOMP point
        if self.state_cap is None:
            object.__setattr__(self, "state_cap", default_state_cap(params))
        if self.state_cap < 10:
            raise ValueError(f"state_cap must be >= 10, got {self.state_cap}")

    @property
    def p(self) -> float:
        return self.lam / self.mu

    @property
    def params(self) -> EcompParams:
        return EcompParams(self.v, self.p, self.alpha, self.beta)


def rates(spec: QueueSpec, k):
    """(arrival, service) rates in state ``k`` (scalar or array)."""
    k_arr = np.asarray(k, dtype=float)
    arrival = (spec.v + k_arr) ** spec.beta * spec.lam
    with np.errstate(divide="ignore"):
        service = np.where(k_arr > 0, np.power(np.maximum(k_arr, 1.0), spec.alpha) * spec.mu, 0.0)
    if np.ndim(k) == 0:
        return float(arrival), float(service)
    return arrival, service


class SteadyStateMethod(str, Enum):
    EXACT_TRUNCATED = "exact_truncated"
    SIMULATED_CTMC = "simulated_ctmc"


@dataclass
class SteadyStateEstimate:
    occupancy: np.ndarray
    method: SteadyStateMethod
    sim_time: float | None = None
    residual: float | None = None
    events: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.occupancy)), self.occupancy))


def _log_unnormalized(spec: QueueSpec, cap: int) -> np.ndarray:
    # log q_{k+1} - log q_k = log(arrival_k / service_{k+1})
    k = np.arange(cap, dtype=float)
    steps = math.log(spec.lam / spec.mu) + spec.beta * np.log(spec.v + k) - spec.alpha * np.log1p(k)
    return np.concatenate(([0.0], np.cumsum(steps)))


def solve_truncated(spec: QueueSpec) -> SteadyStateEstimate:
    """Stationary distribution on states 0..state_cap by the product-form recursion."""
    log_q = _log_unnormalized(spec, spec.state_cap)
    occ = np.exp(log_q - logsumexp(log_q))
    arrival, service = rates(spec, np.arange(spec.state_cap + 1))
    flow_up = occ[:-1] * arrival[:-1]
    flow_down = occ[1:] * service[1:]
    scale = np.maximum(np.maximum(flow_up, flow_down), np.finfo(float).tiny)
    residual = float(np.max(np.abs(flow_up - flow_down) / scale))
    return SteadyStateEstimate(occ, SteadyStateMethod.EXACT_TRUNCATED, residual=residual)


@numba.njit(cache=True)
def _gillespie(arrival, service, horizon, burn_in, seed):
    np.random.seed(seed)
    cap = arrival.shape[0] - 1
    occ = np.zeros(cap + 1)
    t = 0.0
    k = 0
    events = 0
    while True:
        a = arrival[k]
        total = a + service[k]
        t_next = t - math.log(1.0 - np.random.random()) / total
        lo = max(t, burn_in)
        hi = min(t_next, horizon)
        if hi > lo:
            occ[k] += hi - lo
        if t_next >= horizon:
            return occ, events, True
        t = t_next
        events += 1
        if np.random.random() * total < a:
            k += 1
            if k > cap:
                return occ, events, False
        else:
            k -= 1


def simulate_ctmc(
    spec: QueueSpec,
    horizon: float,
    seed: int = 0,
    burn_in_fraction: float = 0.2,
    hard_cap: int = HARD_STATE_CAP,
) -> SteadyStateEstimate:
    """Time-weighted state occupancy of one simulated trajectory from state 0.

    Time before ``burn_in_fraction * horizon`` is discarded. If the chain
    leaves 0..state_cap the cap is doubled (up to ``hard_cap``) and the same
    seeded trajectory is replayed.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    if not 0 <= burn_in_fraction < 1:
        raise ValueError(f"burn_in_fraction must lie in [0, 1), got {burn_in_fraction}")
    cap = spec.state_cap
    burn = burn_in_fraction * horizon
    seed32 = int(seed) & 0xFFFFFFFF
    while True:
        arrival, service = rates(spec, np.arange(cap + 1))
        occ, events, finished = _gillespie(arrival, service, float(horizon), burn, seed32)
        if finished:
            break
        if cap >= hard_cap:
            raise StateCapExceeded(f"trajectory left states 0..{cap} (hard limit {hard_cap})")
        cap = min(2 * cap, hard_cap)
    occ = occ / (horizon - burn)
    return SteadyStateEstimate(
        occ,
        SteadyStateMethod.SIMULATED_CTMC,
        sim_time=float(horizon),
        events=int(events),
        extra={"burn_in": burn, "state_cap": cap, "seed": int(seed)},
    )


def total_variation(p, q) -> float:
    """Total-variation distance between two pmfs, zero-padding the shorter one."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = max(len(p), len(q))
    p = np.pad(p, (0, n - len(p)))
    q = np.pad(q, (0, n - len(q)))
    return 0.5 * float(np.abs(p - q).sum())
