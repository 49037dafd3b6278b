"""Log-domain evaluation of the ``mS`` hypergeometric-type series.

The general series is

    S = sum_k {(a1)_k}^beta (a2)_k ... (am)_k p^k / ({(b)_k}^alpha k!)

and the ECOMP normalizer is the special case ``m = 1, b = 1`` with the
lower exponent equal to ``alpha - 1``, i.e. ``sum_k {(v)_k}^beta p^k / (k!)^alpha``.

Terms are accumulated in the log domain block by block. Summation stops at
the first index ``m`` where the successive-term ratio ``eps_m`` is below one,
no later ratio can exceed it, and the geometric tail bound
``term_{m+1} / (1 - eps_m)`` is at most ``rel_tol`` times the partial sum.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .errors import NonConvergent

__all__ = [
    "ConvergenceConfig",
    "LogNormalizer",
    "Method",
    "SeriesSpec",
    "approx_mean",
    "approx_variance",
    "ecomp_log_terms",
    "log_normalizer",
    "log_pochhammer",
    "log_series_asymptotic",
    "log_series_truncated",
]

_LOG_2PI = math.log(2.0 * math.pi)
_FIRST_BLOCK = 256


class Method(str, Enum):
    TRUNCATED = "truncated"
    ASYMPTOTIC = "asymptotic"


@dataclass(frozen=True)
class ConvergenceConfig:
    """Stopping rule and regime switch for normalizer evaluation.

    The Laplace approximation replaces truncation when ``p > 1``,
    ``0 < alpha - beta < 1`` and the terms peak beyond ``asymptotic_min_terms``
    (the peak sits near ``p^(1/(alpha-beta))``). Set ``use_asymptotic=False``
    to force truncation everywhere.
    """

    rel_tol: float = 1e-14
    max_terms: int = 200_000
    asymptotic_min_terms: float = 10_000
    use_asymptotic: bool = True

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if self.max_terms < 1:
            raise ValueError(f"max_terms must be >= 1, got {self.max_terms}")

    @classmethod
    def from_env(cls, **overrides) -> "ConvergenceConfig":
        """Default config, with ``ECOMP_MAX_TERMS`` honoured if set."""
        env = os.environ.get("ECOMP_MAX_TERMS")
        if env is not None and "max_terms" not in overrides:
            overrides["max_terms"] = int(env)
        return cls(**overrides)


@dataclass(frozen=True)
class LogNormalizer:
    log_value: float
    method: Method
    truncation_point: int | None = None
    relative_error_bound: float | None = None

    @property
    def is_approximate(self) -> bool:
        return self.method is Method.ASYMPTOTIC


def log_pochhammer(a, k):
    """log of the rising factorial ``(a)_k = Gamma(a + k) / Gamma(a)``.

    Works elementwise on arrays; ``k = 0`` gives exactly 0.
    """
    a_arr = np.asarray(a, dtype=float)
    if np.any(a_arr <= 0):
        raise ValueError(f"log_pochhammer needs a > 0, got {a}")
    k_arr = np.asarray(k)
    if np.any(k_arr < 0):
        raise ValueError(f"log_pochhammer needs k >= 0, got {k}")
    out = gammaln(a_arr + k_arr) - gammaln(a_arr)
    return float(out) if np.ndim(out) == 0 else out


def ecomp_log_terms(v: float, p: float, alpha: float, beta: float, k) -> np.ndarray:
    """``beta*log (v)_k - alpha*log k! + k*log p`` for an array of ``k``."""
    k = np.asarray(k, dtype=float)
    return beta * (gammaln(v + k) - gammaln(v)) - alpha * gammaln(k + 1.0) + k * math.log(p)


def ecomp_log_ratios(v: float, p: float, alpha: float, beta: float, k) -> np.ndarray:
    """``log P(k+1)/P(k) = log p + beta*log(v+k) - alpha*log(k+1)``."""
    k = np.asarray(k, dtype=float)
    return math.log(p) + beta * np.log(v + k) - alpha * np.log1p(k)


@dataclass(frozen=True)
class SeriesSpec:
    """Parameters of ``mS^beta_alpha(a1, a2..am; b; p)``.

    ``upper_beta_param`` is ``a1`` (carries exponent ``beta``), the extra
    upper parameters carry exponent 1, and ``lower_param`` is ``b`` with
    exponent ``alpha``.
    """

    upper_beta_param: float
    extra_upper_params: tuple[float, ...] = ()
    lower_param: float = 1.0
    alpha: float = 0.0
    beta: float = 1.0
    p: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "extra_upper_params", tuple(self.extra_upper_params))
        params = (self.upper_beta_param, self.lower_param, *self.extra_upper_params)
        if any(not x > 0 for x in params):
            raise ValueError(f"all Pochhammer arguments must be > 0, got {params}")
        if not self.p > 0:
            raise ValueError(f"p must be > 0, got {self.p}")

    @classmethod
    def ecomp(cls, v: float, p: float, alpha: float, beta: float) -> "SeriesSpec":
        """The ECOMP normalizer ``1S^beta_{alpha-1}(v; 1; p)``."""
        return cls(v, (), 1.0, alpha - 1.0, beta, p)

    def log_terms(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        a1, b = self.upper_beta_param, self.lower_param
        out = self.beta * (gammaln(a1 + k) - gammaln(a1))
        for a in self.extra_upper_params:
            out = out + (gammaln(a + k) - gammaln(a))
        out = out - self.alpha * (gammaln(b + k) - gammaln(b))
        return out - gammaln(k + 1.0) + k * math.log(self.p)

    def log_ratios(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        out = math.log(self.p) + self.beta * np.log(self.upper_beta_param + k)
        for a in self.extra_upper_params:
            out = out + np.log(a + k)
        return out - self.alpha * np.log(self.lower_param + k) - np.log1p(k)

    def _factors(self):
        """(exponent, offset) pairs of the term ratio, as factors (offset + k)^exponent."""
        factors = [(self.beta, self.upper_beta_param), (-self.alpha, self.lower_param), (-1.0, 1.0)]
        factors += [(1.0, a) for a in self.extra_upper_params]
        return factors


@dataclass(frozen=True)
class _RatioEnvelope:
    """Upper bound on every term ratio from index ``m`` on.

    The ratio is ``p * prod (x_i + k)^c_i`` with ``sum c_i = -decay <= 0``.
    Rewriting it as ``p (k+1)^-decay * prod ((x_i + k)/(k + 1))^c_i`` makes
    each factor monotone in k with limit 1, so its supremum over ``k >= m``
    is ``max(value at m, 1)``. Past ``k0`` the ratio itself is
    non-increasing and the exact ratio at ``m`` is used instead.
    """

    log_p: float
    decay: float
    factors: tuple[tuple[float, float], ...]
    k0: float

    @classmethod
    def build(cls, factors, p: float) -> "_RatioEnvelope":
        merged: dict[float, float] = {}
        for c, x in factors:
            merged[x] = merged.get(x, 0.0) + c
        pos = [(c, x) for x, c in merged.items() if c > 0]
        neg = [(-c, x) for x, c in merged.items() if c < 0]
        sum_pos = sum(c for c, _ in pos)
        sum_neg = sum(c for c, _ in neg)
        excess = sum_pos - sum_neg
        if excess > 1e-12:
            raise ValueError("series diverges: term ratio grows without bound")
        # log-derivative sum c/(x+k) < 0 once sum_pos/(xmin+k) < sum_neg/(ymax+k)
        if not pos:
            k0 = 0.0
        else:
            xmin = min(x for _, x in pos)
            ymax = max(x for _, x in neg)
            if excess < -1e-12:
                k0 = max(0.0, (sum_pos * ymax - sum_neg * xmin) / (sum_neg - sum_pos))
            else:
                k0 = 0.0 if sum_neg * xmin >= sum_pos * ymax else math.inf
        shape = tuple((c, x) for x, c in merged.items() if x != 1.0 and c != 0.0)
        return cls(math.log(p), max(0.0, -excess), shape, k0)

    def log_bound(self, k: np.ndarray, log_ratio: np.ndarray) -> np.ndarray:
        out = self.log_p - self.decay * np.log1p(k)
        for c, x in self.factors:
            out = out + np.maximum(c * (np.log(x + k) - np.log1p(k)), 0.0)
        return np.where(k >= self.k0, np.minimum(log_ratio, out), out)


@dataclass
class _Summed:
    normalizer: LogNormalizer
    log_terms: np.ndarray


def _sum_truncated(
    log_terms: Callable[[np.ndarray], np.ndarray],
    log_ratios: Callable[[np.ndarray], np.ndarray],
    envelope: _RatioEnvelope,
    cfg: ConvergenceConfig,
) -> _Summed:
    log_tol = math.log(cfg.rel_tol)
    pieces = []
    running = -math.inf
    start = 0
    size = _FIRST_BLOCK
    while start < cfg.max_terms:
        stop = min(start + size, cfg.max_terms)
        k = np.arange(start, stop + 1, dtype=float)
        # overflowing terms (divergent series) become nan and are caught below
        with np.errstate(invalid="ignore", over="ignore"):
            lt = log_terms(k)
            head = lt[:-1]
            # partial[i] = log sum of terms 0..start+i
            partial = np.logaddexp.accumulate(np.concatenate(([running], head)))[1:]
        log_eps = envelope.log_bound(k[:-1], log_ratios(k[:-1]))
        ok = log_eps < 0.0
        log_bound = np.full_like(head, math.inf)
        # term_{m+1} / (1 - eps_m) relative to the partial sum
        log_bound[ok] = lt[1:][ok] - np.log(-np.expm1(log_eps[ok])) - partial[ok]
        hit = np.flatnonzero(ok & (log_bound <= log_tol))
        if hit.size:
            i = int(hit[0])
            pieces.append(head[: i + 1])
            norm = LogNormalizer(
                log_value=float(partial[i]),
                method=Method.TRUNCATED,
                truncation_point=start + i,
                relative_error_bound=float(math.exp(log_bound[i])),
            )
            return _Summed(norm, np.concatenate(pieces))
        if not np.all(np.isfinite(partial)):
            raise NonConvergent("series terms are not finite")
        pieces.append(head)
        running = float(partial[-1])
        start = stop
        size *= 2
    raise NonConvergent(
        f"tail bound did not reach rel_tol={cfg.rel_tol:g} within max_terms={cfg.max_terms}"
    )


def log_series_truncated(spec: SeriesSpec, cfg: ConvergenceConfig | None = None) -> LogNormalizer:
    """Truncated log-sum of ``spec`` with a rigorous relative tail bound."""
    cfg = cfg or ConvergenceConfig()
    envelope = _RatioEnvelope.build(spec._factors(), spec.p)
    return _sum_truncated(spec.log_terms, spec.log_ratios, envelope, cfg).normalizer


def _ecomp_summed(v, p, alpha, beta, cfg: ConvergenceConfig) -> _Summed:
    envelope = _RatioEnvelope.build([(beta, v), (-alpha, 1.0)], p)
    return _sum_truncated(
        lambda k: ecomp_log_terms(v, p, alpha, beta, k),
        lambda k: ecomp_log_ratios(v, p, alpha, beta, k),
        envelope,
        cfg,
    )


def log_series_asymptotic(v: float, p: float, alpha: float, beta: float) -> LogNormalizer:
    """Laplace-method approximation of the ECOMP normalizer (log scale).

    log S ~ (1 - alpha + (2v-1) beta) / (2d) * log p + d p^(1/d)
            - (d-1)/2 * log(2 pi) - log(d)/2 - beta * log Gamma(v),   d = alpha - beta

    The ``Gamma(v)^beta`` term converts Gamma(v+k)^beta into (v)_k^beta.
    """
    d = alpha - beta
    if not d > 0:
        raise ValueError(f"asymptotic formula needs alpha > beta, got alpha={alpha}, beta={beta}")
    if not (p > 0 and v > 0):
        raise ValueError("asymptotic formula needs v > 0 and p > 0")
    log_p = math.log(p)
    value = (
        (1.0 - alpha + (2.0 * v - 1.0) * beta) / (2.0 * d) * log_p
        + d * math.exp(log_p / d)
        - 0.5 * (d - 1.0) * _LOG_2PI
        - 0.5 * math.log(d)
        - beta * math.lgamma(v)
    )
    return LogNormalizer(log_value=value, method=Method.ASYMPTOTIC)


def _use_asymptotic(p: float, alpha: float, beta: float, cfg: ConvergenceConfig) -> bool:
    d = alpha - beta
    if not (cfg.use_asymptotic and p > 1.0 and 0.0 < d < 1.0):
        return False
    return math.log(p) / d > math.log(cfg.asymptotic_min_terms)


def log_normalizer(params, cfg: ConvergenceConfig | None = None) -> LogNormalizer:
    """log of ``sum_k {(v)_k}^beta p^k / (k!)^alpha`` for validated params."""
    cfg = cfg or ConvergenceConfig.from_env()
    v, p, alpha, beta = params.v, params.p, params.alpha, params.beta
    if _use_asymptotic(p, alpha, beta, cfg):
        return log_series_asymptotic(v, p, alpha, beta)
    return _ecomp_summed(v, p, alpha, beta, cfg).normalizer


def approx_mean(params) -> float:
    """Mean implied by the asymptotic normalizer: d/dlog p of its log."""
    d = params.alpha - params.beta
    if not d > 0:
        raise ValueError("approx_mean needs alpha > beta")
    return params.p ** (1.0 / d) + (1.0 - params.alpha + (2.0 * params.v - 1.0) * params.beta) / (2.0 * d)


def approx_variance(params) -> float:
    """Derivative of ``approx_mean`` in log p, i.e. ``p^(1/d) / d``."""
    d = params.alpha - params.beta
    if not d > 0:
        raise ValueError("approx_variance needs alpha > beta")
    return params.p ** (1.0 / d) / d
