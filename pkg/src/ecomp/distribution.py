"""The ECOMP(v, p, alpha, beta) distribution.

    P(X = k) = {(v)_k}^beta p^k / ((k!)^alpha S),   S = 1S^beta_{alpha-1}(v; 1; p)

defined for ``alpha > beta, p > 0`` or ``alpha = beta, 0 < p < 1`` (v > 0).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import BimodalRegionWarning, InvalidParameterSpace, NonConvergent
from .series import (
    ConvergenceConfig,
    Method,
    SeriesSpec,
    _ecomp_summed,
    approx_mean,
    approx_variance,
    ecomp_log_ratios,
    ecomp_log_terms,
    log_pochhammer,
    log_series_asymptotic,
    log_series_truncated,
)
from .series import _use_asymptotic

__all__ = [
    "Dispersion",
    "DispersionClass",
    "EcompDist",
    "EcompParams",
    "ModeInfo",
    "ModeKind",
    "SpecialCase",
    "dispersion_class",
    "from_exponential_combination",
    "from_special_case",
    "validate",
]

DUAL_MODE_RTOL = 1e-9


@dataclass(frozen=True)
class EcompParams:
    v: float
    p: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("v", "p", "alpha", "beta"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidParameterSpace(f"{name} must be finite, got {value}", clause=f"{name} finite")
            object.__setattr__(self, name, value)
        if not self.v > 0:
            raise InvalidParameterSpace(f"v must be > 0, got {self.v}", clause="v > 0")
        if not self.p > 0:
            raise InvalidParameterSpace(f"p must be > 0, got {self.p}", clause="p > 0")
        if self.alpha < self.beta:
            raise InvalidParameterSpace(
                f"alpha must be >= beta, got alpha={self.alpha}, beta={self.beta}",
                clause="alpha >= beta",
            )
        if self.alpha == self.beta and not self.p < 1:
            raise InvalidParameterSpace(
                f"alpha = beta requires 0 < p < 1, got p={self.p}",
                clause="alpha = beta requires 0 < p < 1",
            )

    def astuple(self) -> tuple[float, float, float, float]:
        return (self.v, self.p, self.alpha, self.beta)


def validate(v, p, alpha, beta) -> EcompParams:
    """Return validated parameters or raise :class:`InvalidParameterSpace`."""
    return EcompParams(v, p, alpha, beta)


class ModeKind(str, Enum):
    UNIQUE_AT_ZERO = "unique_at_zero"
    UNIQUE_INTERIOR = "unique_interior"
    DUAL = "dual"


@dataclass(frozen=True)
class ModeInfo:
    modes: tuple[int, ...]
    kind: ModeKind


class Dispersion(str, Enum):
    OVER = "over"
    UNDER = "under"
    EQUI = "equi"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class DispersionClass:
    """Dispersion relative to Poisson, plus the COM-Poisson and GCOMP baselines."""

    vs_poisson: Dispersion
    vs_comp: Dispersion = Dispersion.UNDETERMINED
    vs_gcomp: Dispersion = Dispersion.UNDETERMINED


def _is_poisson(params: EcompParams) -> bool:
    return (params.beta == 0 and params.alpha == 1) or (params.v == 1 and params.alpha == params.beta)


def dispersion_class(params: EcompParams) -> DispersionClass:
    """Classify dispersion from the weighted-Poisson parameter regions.

    Only the listed regions are classified; anything else is UNDETERMINED.
    """
    a, b = params.alpha, params.beta
    if _is_poisson(params):
        vs_poisson = Dispersion.EQUI
    elif 0 < b <= a <= 1:
        vs_poisson = Dispersion.OVER
    elif (a <= 1 and b < 0) or (a > 1 and b > 0) or (a > 1 and b < 0):
        vs_poisson = Dispersion.UNDER
    else:
        vs_poisson = Dispersion.UNDETERMINED

    if b == 0:
        vs_comp = Dispersion.EQUI
    elif a >= b > 0:
        vs_comp = Dispersion.OVER
    elif b < 0:
        vs_comp = Dispersion.UNDER
    else:
        vs_comp = Dispersion.UNDETERMINED

    if a == 1:
        vs_gcomp = Dispersion.EQUI
    elif b <= a < 1:
        vs_gcomp = Dispersion.OVER
    elif 1 < b <= a:
        vs_gcomp = Dispersion.UNDER
    else:
        vs_gcomp = Dispersion.UNDETERMINED
    return DispersionClass(vs_poisson, vs_comp, vs_gcomp)


class EcompDist:
    """An ECOMP distribution with its normalizer evaluated once.

    Instances are immutable; lazily built tables are cached on first use.
    """

    def __init__(self, params: EcompParams, cfg: ConvergenceConfig | None = None):
        if not isinstance(params, EcompParams):
            params = EcompParams(*params)
        self.params = params
        self.cfg = cfg or ConvergenceConfig.from_env()
        v, p, a, b = params.astuple()
        if _use_asymptotic(p, a, b, self.cfg):
            self.log_norm = log_series_asymptotic(v, p, a, b)
            self._log_terms = None
        else:
            summed = _ecomp_summed(v, p, a, b, self.cfg)
            self.log_norm = summed.normalizer
            self._log_terms = summed.log_terms
        self._survival_cache: dict[int, float] = {}

    @classmethod
    def from_values(cls, v, p, alpha, beta, cfg=None) -> "EcompDist":
        return cls(EcompParams(v, p, alpha, beta), cfg)

    def __repr__(self):
        v, p, a, b = self.params.astuple()
        return f"EcompDist(v={v:g}, p={p:g}, alpha={a:g}, beta={b:g})"

    @property
    def is_approximate(self) -> bool:
        return self.log_norm.method is Method.ASYMPTOTIC

    @property
    def truncation_point(self) -> int:
        self._require_table()
        return len(self._log_terms) - 1

    def _require_table(self):
        if self._log_terms is None:
            raise NonConvergent(
                "normalizer is asymptotic for these parameters; "
                "probability tables would need too many terms"
            )

    # -- probabilities -------------------------------------------------

    def log_pmf(self, k):
        """Log-probability at ``k`` (scalar or array); ``-inf`` for k < 0."""
        k_arr = np.asarray(k)
        v, p, a, b = self.params.astuple()
        safe = np.where(k_arr >= 0, k_arr, 0)
        out = ecomp_log_terms(v, p, a, b, safe) - self.log_norm.log_value
        out = np.where(k_arr >= 0, out, -np.inf)
        return float(out) if out.ndim == 0 else out

    def pmf(self, k):
        return np.exp(self.log_pmf(k))

    def pmf_recurrence_step(self, k: int, pk: float) -> float:
        """P(X = k+1) from P(X = k) via the two-term recurrence."""
        v, p, a, b = self.params.astuple()
        return pk * p * (v + k) ** b / (k + 1.0) ** a

    @cached_property
    def _pmf_table(self) -> np.ndarray:
        self._require_table()
        return np.exp(self._log_terms - self.log_norm.log_value)

    @cached_property
    def _cdf_table(self) -> np.ndarray:
        return np.minimum(np.cumsum(self._pmf_table), 1.0)

    def pmf_table(self, kmax: int) -> np.ndarray:
        """pmf at 0..kmax."""
        table = self._pmf_table
        if kmax < len(table):
            return table[: kmax + 1].copy()
        return self.pmf(np.arange(kmax + 1))

    def log_survival(self, t: int) -> float:
        """log P(X >= t), summed from ``t`` upward as its own series."""
        t = int(t)
        if t <= 0:
            return 0.0
        if t not in self._survival_cache:
            v, p, a, b = self.params.astuple()
            # sum_{j>=0} term_{t+j} / term_t = 2S^beta_alpha(v+t, 1; t+1; p)
            tail = SeriesSpec(v + t, (1.0,), t + 1.0, a, b, p)
            log_tail = log_series_truncated(tail, self.cfg).log_value
            self._survival_cache[t] = min(0.0, float(self.log_pmf(t)) + log_tail)
        return self._survival_cache[t]

    def survival(self, t: int) -> float:
        """P(X >= t)."""
        return math.exp(self.log_survival(t))

    def cdf(self, t: int) -> float:
        """P(X <= t)."""
        t = int(t)
        if t < 0:
            return 0.0
        table = self._cdf_table
        if t < len(table) and table[t] < 0.5:
            return float(table[t])
        return 1.0 - self.survival(t + 1)

    def hazard(self, t: int) -> float:
        """Failure rate P(X = t) / P(X >= t)."""
        return math.exp(float(self.log_pmf(t)) - self.log_survival(t))

    # -- moments ---------------------------------------------------------

    def factorial_moment(self, r: int) -> float:
        """E[X (X-1) ... (X-r+1)] from the shifted series 1S(v+r; r+1; p)."""
        if r < 1:
            raise ValueError(f"factorial moment order must be >= 1, got {r}")
        v, p, a, b = self.params.astuple()
        shifted = log_series_truncated(SeriesSpec(v + r, (), r + 1.0, a - 1.0, b, p), self.cfg)
        log_mu = (
            b * log_pochhammer(v, r)
            + r * math.log(p)
            + shifted.log_value
            - (a - 1.0) * math.lgamma(r + 1.0)
            - self.log_norm.log_value
        )
        return math.exp(log_mu)

    @cached_property
    def _moment_log_pmf(self) -> np.ndarray:
        """log pmf extended until k^2 P(k) is negligible against the total.

        The normalizer stops once the *probability* tail is below rel_tol;
        second moments weight that tail by k^2, so more terms are kept here.
        """
        self._require_table()
        v, p, a, b = self.params.astuple()
        log_norm = self.log_norm.log_value
        pieces = [self._log_terms - log_norm]
        start = len(self._log_terms)
        size = max(64, start)
        cutoff = math.log(1e-18)
        while start < self.cfg.max_terms:
            k = np.arange(start, start + size, dtype=float)
            lp = ecomp_log_terms(v, p, a, b, k) - log_norm
            pieces.append(lp)
            weighted = lp + 2.0 * np.log(k)
            ratio = ecomp_log_ratios(v, p, a, b, k[-1])
            if weighted[-1] < cutoff and weighted.max() < cutoff + 20 and ratio < -0.01:
                break
            start += size
            size *= 2
        return np.concatenate(pieces)

    def mean_variance(self) -> tuple[float, float]:
        """Mean and variance; asymptotic approximations when ``is_approximate``."""
        if self.is_approximate:
            return approx_mean(self.params), approx_variance(self.params)
        w = np.exp(self._moment_log_pmf)
        k = np.arange(len(w), dtype=float)
        mean = float(np.dot(w, k))
        var = float(np.dot(w, (k - mean) ** 2))
        return mean, var

    def mean(self) -> float:
        return self.mean_variance()[0]

    def variance(self) -> float:
        return self.mean_variance()[1]

    # -- shape -----------------------------------------------------------

    def log_ratio(self, k):
        """log P(k+1)/P(k)."""
        return ecomp_log_ratios(*self.params.astuple(), k)

    def delta_eta(self, t):
        """P(t+1)/P(t) - P(t+2)/P(t+1); positive everywhere means log-concave."""
        t = np.asarray(t, dtype=float)
        return np.exp(self.log_ratio(t)) - np.exp(self.log_ratio(t + 1.0))

    def mode_structure(self) -> ModeInfo:
        """Mode(s) from the sign change of the ratio P(k+1)/P(k).

        For v >= 1 the first k with P(k+1) <= P(k) is the mode (two
        adjacent modes when the ratio equals 1). If the ratio rises above 1
        again later, or v < 1, the pmf table is scanned instead.
        """
        if self.params.v < 1:
            warnings.warn(
                "v < 1: the pmf may be bimodal with a mode at zero; using an exhaustive scan",
                BimodalRegionWarning,
                stacklevel=2,
            )
            return self._scan_modes()
        lr = self.log_ratio(np.arange(self._ratio_horizon(), dtype=float))
        below = np.flatnonzero(lr <= DUAL_MODE_RTOL)
        if below.size == 0:
            raise NonConvergent("pmf ratio stays above 1 over the evaluated range")
        k = int(below[0])
        if np.any(lr[k + 1 :] > DUAL_MODE_RTOL):
            warnings.warn(
                "pmf ratio crosses 1 more than once (not log-concave); using an exhaustive scan",
                BimodalRegionWarning,
                stacklevel=2,
            )
            return self._scan_modes()
        if abs(lr[k]) <= DUAL_MODE_RTOL:
            return ModeInfo((k, k + 1), ModeKind.DUAL)
        if k == 0:
            return ModeInfo((0,), ModeKind.UNIQUE_AT_ZERO)
        return ModeInfo((k,), ModeKind.UNIQUE_INTERIOR)

    def _ratio_horizon(self) -> int:
        if self._log_terms is not None:
            return len(self._log_terms) + 1
        return self.cfg.max_terms

    def _scan_modes(self) -> ModeInfo:
        self._require_table()
        lp = self._log_terms
        top = int(np.argmax(lp))
        ties = np.flatnonzero(np.abs(lp - lp[top]) <= DUAL_MODE_RTOL)
        if ties.size == 2 and ties[1] - ties[0] == 1:
            return ModeInfo((int(ties[0]), int(ties[1])), ModeKind.DUAL)
        if top == 0:
            return ModeInfo((0,), ModeKind.UNIQUE_AT_ZERO)
        return ModeInfo((top,), ModeKind.UNIQUE_INTERIOR)

    def dispersion_class(self) -> DispersionClass:
        return dispersion_class(self.params)


# -- constructors ---------------------------------------------------------


class SpecialCase(str, Enum):
    COMP = "comp"
    COMNB = "comnb"
    GCOMP = "gcomp"
    NB = "nb"
    POISSON = "poisson"
    NGNB = "ngnb"


def special_case_params(kind, **args) -> EcompParams:
    """ECOMP embedding of a named sub-family.

    Argument names: COMP(p, nu), COMNB(v, p, alpha), GCOMP(v, p, beta),
    NB(v, p), POISSON(p), NGNB(v, gamma, p).
    """
    kind = SpecialCase(kind.lower() if isinstance(kind, str) else kind)
    if kind is SpecialCase.COMP:
        return EcompParams(1.0, args["p"], args["nu"], 0.0)
    if kind is SpecialCase.COMNB:
        return EcompParams(args["v"], args["p"], args["alpha"], 1.0)
    if kind is SpecialCase.GCOMP:
        return EcompParams(args["v"], args["p"], 1.0, args["beta"])
    if kind is SpecialCase.NB:
        return EcompParams(args["v"], args["p"], 1.0, 1.0)
    if kind is SpecialCase.POISSON:
        return EcompParams(1.0, args["p"], 1.0, 0.0)
    return EcompParams(args["v"], args["p"], args["gamma"], args["gamma"])


def from_special_case(kind, cfg: ConvergenceConfig | None = None, **args) -> EcompDist:
    return EcompDist(special_case_params(kind, **args), cfg)


def from_exponential_combination(nb_v, nb_lambda, comp_mu, comp_theta, beta, cfg=None) -> EcompDist:
    """NB(v, lambda)^beta * COMP(mu, theta)^(1-beta), renormalized."""
    p = nb_lambda**beta * comp_mu ** (1.0 - beta)
    alpha = comp_theta * (1.0 - beta) + beta
    return EcompDist(EcompParams(nb_v, p, alpha, beta), cfg)

