"""Maximum-likelihood fitting of ECOMP and its sub-families to frequency tables.

The (alpha, beta) exponents are profiled on a grid: at each grid point the
likelihood is maximized over (log v, log p) with L-BFGS-B using the
exponential-family score. The best grid points are then polished with
Nelder-Mead over all free parameters.

A right-censored tail bin ("T or more") enters the likelihood through
log P(X >= T).
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import optimize, stats
from scipy.special import digamma, gammaln, logsumexp

from .distribution import EcompDist, EcompParams
from .errors import (
    DataTooSparse,
    DegenerateCells,
    InvalidParameterSpace,
    NoConvergence,
    NonConvergent,
)
from .series import ConvergenceConfig

__all__ = [
    "FitConfig",
    "FitResult",
    "FrequencyTable",
    "LRTest",
    "Model",
    "fit",
    "goodness_of_fit",
    "log_likelihood",
    "lr_test_vs_nb",
    "score",
]

LOG_V_BOUNDS = (math.log(1e-3), math.log(1e3))
LOG_P_MIN = -15.0
BOUNDARY_GAP = 1e-3


# -- data ------------------------------------------------------------------


@dataclass(frozen=True)
class FrequencyTable:
    """Observed frequencies of counts 0..max, plus an optional "T or more" bin.

    Counts missing from the input are stored with frequency 0, so ``counts``
    is always ``0, 1, ..., max``.
    """

    counts: tuple[int, ...]
    frequencies: tuple[int, ...]
    tail: tuple[int, int] | None = None

    def __post_init__(self):
        if len(self.counts) != len(self.frequencies):
            raise ValueError("counts and frequencies differ in length")
        if any(f < 0 for f in self.frequencies):
            raise ValueError("frequencies must be >= 0")
        if list(self.counts) != list(range(len(self.counts))):
            raise ValueError("counts must be 0..max; use FrequencyTable.from_pairs")
        if self.tail is not None:
            threshold, freq = self.tail
            if threshold != len(self.counts) or freq < 0:
                raise ValueError(
                    f"tail threshold must equal max count + 1 ({len(self.counts)}), got {threshold}"
                )
        if self.total < 1:
            raise ValueError("table is empty (total frequency 0)")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]], tail: tuple[int, int] | None = None):
        pairs = [(int(c), int(f)) for c, f in pairs]
        counts = [c for c, _ in pairs]
        if any(c < 0 for c in counts):
            raise ValueError("counts must be >= 0")
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError("counts must be strictly increasing")
        top = counts[-1] if counts else -1
        if tail is not None:
            threshold, freq = int(tail[0]), int(tail[1])
            if threshold <= top:
                raise ValueError(f"tail threshold {threshold} must exceed the largest count {top}")
            top = threshold - 1
            tail = (threshold, freq)
        freqs = [0] * (top + 1)
        for c, f in pairs:
            freqs[c] = f
        return cls(tuple(range(top + 1)), tuple(freqs), tail)

    @classmethod
    def from_observations(cls, x) -> "FrequencyTable":
        x = np.asarray(x, dtype=np.int64)
        if x.size == 0 or np.any(x < 0):
            raise ValueError("observations must be a non-empty array of counts >= 0")
        freqs = np.bincount(x)
        return cls(tuple(range(len(freqs))), tuple(int(f) for f in freqs))

    @classmethod
    def read_csv(cls, path) -> "FrequencyTable":
        """Parse ``count,frequency`` rows; a final ``T+,f`` row declares the tail.

        A header row is detected by a non-numeric first field.
        """
        text = Path(path).read_text()
        return cls.parse_csv(text)

    @classmethod
    def parse_csv(cls, text: str) -> "FrequencyTable":
        rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
        if rows and not rows[0][0].strip().rstrip("+").isdigit():
            rows = rows[1:]
        if not rows:
            raise ValueError("no data rows")
        pairs, tail = [], None
        for i, row in enumerate(rows):
            if len(row) < 2:
                raise ValueError(f"row {i + 1}: expected 'count,frequency', got {row}")
            key, freq = row[0].strip(), int(row[1])
            if key.endswith("+"):
                if i != len(rows) - 1:
                    raise ValueError("the tail row 'T+' must be last")
                tail = (int(key[:-1]), freq)
            else:
                pairs.append((int(key), freq))
        return cls.from_pairs(pairs, tail)

    def to_csv(self) -> str:
        lines = ["count,frequency"] + [f"{c},{f}" for c, f in zip(self.counts, self.frequencies)]
        if self.tail is not None:
            lines.append(f"{self.tail[0]}+,{self.tail[1]}")
        return "\n".join(lines) + "\n"

    @property
    def total(self) -> int:
        return int(sum(self.frequencies) + (self.tail[1] if self.tail else 0))

    @property
    def n_cells(self) -> int:
        """Goodness-of-fit cells: one per count, plus the tail bin."""
        return len(self.counts) + (1 if self.tail else 0)

    def observed(self) -> np.ndarray:
        """Frequencies aligned with the goodness-of-fit cells."""
        obs = list(self.frequencies)
        if self.tail is not None:
            obs.append(self.tail[1])
        return np.asarray(obs, dtype=float)

    def mean(self) -> float:
        """Sample mean, counting tail observations at the threshold."""
        s = sum(c * f for c, f in zip(self.counts, self.frequencies))
        if self.tail:
            s += self.tail[0] * self.tail[1]
        return s / self.total


# -- models ----------------------------------------------------------------


class Model(str, Enum):
    ECOMP = "ecomp"
    COMNB = "comnb"
    GCOMP = "gcomp"
    NB = "nb"
    COMP = "comp"
    POISSON = "poisson"

    @property
    def fixed(self) -> dict[str, float]:
        return _FIXED[self]

    @property
    def n_free(self) -> int:
        return 4 - len(self.fixed)

    @property
    def profiled(self) -> tuple[str, ...]:
        return tuple(n for n in ("alpha", "beta") if n not in self.fixed)

    @property
    def inner(self) -> tuple[str, ...]:
        return tuple(n for n in ("v", "p") if n not in self.fixed)


_FIXED = {
    Model.ECOMP: {},
    Model.COMNB: {"beta": 1.0},
    Model.GCOMP: {"alpha": 1.0},
    Model.NB: {"alpha": 1.0, "beta": 1.0},
    Model.COMP: {"v": 1.0, "beta": 0.0},
    Model.POISSON: {"v": 1.0, "alpha": 1.0, "beta": 0.0},
}


@dataclass(frozen=True)
class FitConfig:
    """Profile grid, optimizer and restart settings.

    The (alpha, beta) grid is ``arange(grid_min, grid_max + step/2, step)``
    in each profiled coordinate, keeping points with ``alpha >= beta +
    min_gap`` plus the diagonal ``alpha = beta`` (where p < 1 is enforced).
    """

    model: Model = Model.ECOMP
    grid_min: float = -3.0
    grid_max: float = 3.0
    grid_step: float = 0.25
    min_gap: float = 0.01
    inner_tol: float = 1e-10
    inner_maxiter: int = 200
    multistart: int = 2
    polish: bool = True
    polish_top: int = 3
    seed: int = 0
    series: ConvergenceConfig = field(default_factory=lambda: ConvergenceConfig.from_env(use_asymptotic=False))

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if self.multistart < 1:
            raise ValueError("multistart must be >= 1")
        if not self.grid_step > 0 or self.grid_max < self.grid_min:
            raise ValueError("invalid grid specification")

    def grid(self) -> list[tuple[float, float]]:
        fixed = self.model.fixed
        axis = np.round(np.arange(self.grid_min, self.grid_max + self.grid_step / 2, self.grid_step), 10)
        alphas = [fixed["alpha"]] if "alpha" in fixed else list(axis)
        betas = [fixed["beta"]] if "beta" in fixed else list(axis)
        points = []
        for a in alphas:
            for b in betas:
                if a == b or a >= b + self.min_gap:
                    points.append((float(a), float(b)))
        if not points:
            raise ValueError(f"grid has no admissible (alpha, beta) points for model {self.model.value}")
        return sorted(points)


@dataclass
class FitResult:
    model: Model
    params: EcompParams
    loglik: float
    n_free: int
    expected: np.ndarray
    chisq: float
    df: int
    p_value: float
    converged: bool
    boundary: bool
    profile_trace: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def aic(self) -> float:
        return 2.0 * self.n_free - 2.0 * self.loglik


# -- likelihood --------------------------------------------------------------


def _dist(params: EcompParams, cfg: ConvergenceConfig | None) -> EcompDist:
    return EcompDist(params, cfg or ConvergenceConfig.from_env(use_asymptotic=False))


def _loglik_from_dist(dist: EcompDist, data: FrequencyTable) -> float:
    counts = np.asarray(data.counts)
    freqs = np.asarray(data.frequencies, dtype=float)
    lp = dist.log_pmf(counts)
    used = freqs > 0
    if np.any(np.isneginf(lp[used])):
        return -math.inf
    total = float(np.dot(freqs[used], lp[used]))
    if data.tail is not None and data.tail[1] > 0:
        total += data.tail[1] * dist.log_survival(data.tail[0])
    return total


def log_likelihood(params: EcompParams, data: FrequencyTable, cfg: ConvergenceConfig | None = None) -> float:
    """Sum of f_i log P(i) over cells, plus f_tail log P(X >= T)."""
    return _loglik_from_dist(_dist(params, cfg), data)


def _conditional_tail_means(log_w: np.ndarray, suff: np.ndarray, threshold: int) -> np.ndarray:
    tail = log_w[threshold:]
    if tail.size == 0:
        return suff[:, -1]
    return suff[:, threshold:] @ np.exp(tail - logsumexp(tail))


def score(params: EcompParams, data: FrequencyTable, cfg: ConvergenceConfig | None = None) -> np.ndarray:
    """Gradient of the log-likelihood in (log v, log p, alpha, beta).

    Exponential-family form: observed sufficient statistics (with the tail
    bin contributing its conditional expectation given X >= T) minus N times
    their expectation.
    """
    return _score_from_dist(_dist(params, cfg), data)


def _score_from_dist(dist: EcompDist, data: FrequencyTable) -> np.ndarray:
    v, _, _, beta = dist.params.astuple()
    log_w = dist._moment_log_pmf
    k = np.arange(len(log_w), dtype=float)
    w = np.exp(log_w - logsumexp(log_w))
    # sufficient statistics: k, log (v)_k, log k!, and d/dlog v of log (v)_k
    suff = np.vstack(
        [
            k,
            gammaln(v + k) - gammaln(v),
            gammaln(k + 1.0),
            v * (digamma(v + k) - digamma(v)),
        ]
    )
    counts = np.asarray(data.counts)
    freqs = np.asarray(data.frequencies, dtype=float)
    observed = suff[:, counts] @ freqs
    if data.tail is not None and data.tail[1] > 0:
        observed = observed + data.tail[1] * _conditional_tail_means(log_w, suff, data.tail[0])
    d_k, d_logpoch, d_logfact, d_v = observed - data.total * (suff @ w)
    return np.array([beta * d_v, d_k, -d_logfact, d_logpoch])


def expected_frequencies(params: EcompParams, data: FrequencyTable, cfg=None) -> np.ndarray:
    """N P(i) per count cell; the final cell (tail bin, or largest count) takes P(X >= T)."""
    dist = _dist(params, cfg)
    n = data.total
    probs = list(dist.pmf(np.asarray(data.counts)))
    last = data.tail[0] if data.tail is not None else data.counts[-1]
    if data.tail is not None:
        probs.append(dist.survival(last))
    else:
        probs[-1] = dist.survival(last)
    return n * np.asarray(probs)


def pearson_chisq(observed, expected) -> float:
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    if np.any(expected < 1e-8):
        bad = np.flatnonzero(expected < 1e-8).tolist()
        raise DegenerateCells(f"cells {bad} have expected frequency below 1e-8")
    return float(np.sum((observed - expected) ** 2 / expected))


def goodness_of_fit(result: FitResult, data: FrequencyTable) -> tuple[float, int, float]:
    """Pearson chi-square, df = cells - 1 - free parameters, upper-tail p-value."""
    chisq = pearson_chisq(data.observed(), result.expected)
    df = data.n_cells - 1 - result.n_free
    p_value = float(stats.chi2.sf(chisq, df)) if df > 0 else math.nan
    return chisq, df, p_value


# -- optimization --------------------------------------------------------------


@dataclass
class _Candidate:
    alpha: float
    beta: float
    inner: np.ndarray
    loglik: float


class _Problem:
    """Negative log-likelihood for one model and dataset, tolerant of bad points."""

    def __init__(self, data: FrequencyTable, cfg: FitConfig):
        self.data = data
        self.cfg = cfg
        self.model = cfg.model
        self.n = data.total
        self.evals = 0

    def params(self, inner, alpha, beta) -> EcompParams:
        values = dict(self.model.fixed)
        values.setdefault("alpha", alpha)
        values.setdefault("beta", beta)
        for name, x in zip(self.model.inner, inner):
            values[name] = math.exp(x)
        return EcompParams(values["v"], values["p"], values["alpha"], values["beta"])

    def too_long(self, params: EcompParams) -> bool:
        """True when the series would peak beyond the term budget (p^(1/d) large)."""
        if params.p <= 1.0:
            return False
        d = params.alpha - params.beta
        return d <= 0 or math.log(params.p) / d > math.log(self.cfg.series.max_terms / 8)

    def loglik(self, inner, alpha, beta) -> float:
        self.evals += 1
        try:
            params = self.params(inner, alpha, beta)
            if self.too_long(params):
                return -math.inf
            return log_likelihood(params, self.data, self.cfg.series)
        except (InvalidParameterSpace, NonConvergent, ValueError, FloatingPointError):
            return -math.inf

    def inner_bounds(self, alpha, beta):
        d = alpha - beta
        if d <= 0:
            log_p_max = math.log1p(-1e-9)
        else:
            # keep the series length near p^(1/d) within the term budget
            log_p_max = min(20.0, d * math.log(self.cfg.series.max_terms / 8))
        bounds = []
        for name in self.model.inner:
            bounds.append(LOG_V_BOUNDS if name == "v" else (LOG_P_MIN, log_p_max))
        return bounds

    def _value_and_grad(self, x, alpha, beta):
        self.evals += 1
        try:
            params = self.params(x, alpha, beta)
            if self.too_long(params):
                raise NonConvergent("series too long")
            dist = _dist(params, self.cfg.series)
            ll = _loglik_from_dist(dist, self.data)
            if not math.isfinite(ll):
                raise NonConvergent("non-finite likelihood")
            g_full = _score_from_dist(dist, self.data)
        except (InvalidParameterSpace, NonConvergent, ValueError, FloatingPointError):
            return 1e10, np.zeros_like(x)
        index = {"v": 0, "p": 1}
        g = np.array([g_full[index[n]] for n in self.model.inner])
        return -ll / self.n, -g / self.n

    def maximize_inner(self, alpha, beta, starts) -> _Candidate | None:
        bounds = self.inner_bounds(alpha, beta)
        best = None
        for x0 in starts:
            x0 = np.clip(np.asarray(x0, dtype=float), [b[0] for b in bounds], [b[1] for b in bounds])
            res = optimize.minimize(
                self._value_and_grad,
                x0,
                args=(alpha, beta),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": self.cfg.inner_maxiter, "ftol": self.cfg.inner_tol, "gtol": 1e-8},
            )
            ll = self.loglik(res.x, alpha, beta)
            if math.isfinite(ll) and (best is None or ll > best.loglik):
                best = _Candidate(alpha, beta, np.array(res.x), ll)
        return best

    def default_starts(self, rng, alpha, beta):
        log_mean = math.log(max(self.data.mean(), 0.05))
        bounds = self.inner_bounds(alpha, beta)
        base = []
        for name, (lo, hi) in zip(self.model.inner, bounds):
            base.append(0.0 if name == "v" else min(log_mean, hi - 1e-6))
        starts = [np.array(base)]
        for _ in range(self.cfg.multistart - 1):
            starts.append(np.array([rng.uniform(max(lo, -3.0), min(hi, 3.0)) for lo, hi in bounds]))
        return starts

    def full_vector(self, cand: _Candidate) -> np.ndarray:
        x = list(cand.inner)
        if "alpha" in self.model.profiled:
            x.append(cand.alpha)
        if "beta" in self.model.profiled:
            x.append(cand.beta)
        return np.array(x)

    def split(self, x) -> tuple[np.ndarray, float, float]:
        n_inner = len(self.model.inner)
        inner = np.asarray(x[:n_inner])
        rest = list(x[n_inner:])
        alpha = rest.pop(0) if "alpha" in self.model.profiled else self.model.fixed["alpha"]
        beta = rest.pop(0) if "beta" in self.model.profiled else self.model.fixed["beta"]
        return inner, alpha, beta

    def polish(self, cand: _Candidate) -> _Candidate:
        def objective(x):
            inner, alpha, beta = self.split(x)
            if alpha < beta:
                return math.inf
            ll = self.loglik(inner, alpha, beta)
            return -ll / self.n if math.isfinite(ll) else math.inf

        x0 = self.full_vector(cand)
        simplex = [x0] + [x0 + np.eye(len(x0))[i] * 0.05 for i in range(len(x0))]
        res = optimize.minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "initial_simplex": np.array(simplex),
                "xatol": 1e-7,
                "fatol": 1e-12,
                "maxiter": 4000,
                "maxfev": 8000,
            },
        )
        inner, alpha, beta = self.split(res.x)
        ll = self.loglik(inner, alpha, beta)
        if math.isfinite(ll) and ll > cand.loglik:
            return _Candidate(alpha, beta, np.asarray(inner), ll)
        return cand


def fit(data: FrequencyTable, cfg: FitConfig | None = None, **overrides) -> FitResult:
    """Profile-likelihood fit of ``cfg.model`` to ``data``."""
    if cfg is None:
        cfg = FitConfig(**overrides)
    elif overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    model = cfg.model
    if data.total < model.n_free + 1:
        raise DataTooSparse(f"N={data.total} is too small for {model.n_free} free parameters")
    problem = _Problem(data, cfg)
    rng = np.random.default_rng(cfg.seed)

    trace: list[tuple[float, float, float]] = []
    candidates: list[_Candidate] = []
    previous = None
    for alpha, beta in cfg.grid():
        starts = problem.default_starts(rng, alpha, beta)
        if previous is not None:
            starts.insert(0, previous.inner)
        cand = problem.maximize_inner(alpha, beta, starts)
        trace.append((alpha, beta, cand.loglik if cand else -math.inf))
        if cand is not None:
            candidates.append(cand)
            previous = cand
    if not candidates:
        raise NoConvergence(f"no grid point produced a finite likelihood for model {model.value}")

    # highest loglik first; ties broken lexicographically on (alpha, beta)
    candidates.sort(key=lambda c: (-c.loglik, c.alpha, c.beta))
    best = candidates[0]
    if cfg.polish and model.profiled:
        polished = [problem.polish(c) for c in candidates[: cfg.polish_top]]
        polished.sort(key=lambda c: (-c.loglik, c.alpha, c.beta))
        best = polished[0]
    # a final inner pass at the polished exponents
    refined = problem.maximize_inner(best.alpha, best.beta, [best.inner])
    if refined is not None and refined.loglik >= best.loglik:
        best = refined
    converged = math.isfinite(best.loglik)

    params = problem.params(best.inner, best.alpha, best.beta)
    expected = expected_frequencies(params, data, cfg.series)
    result = FitResult(
        model=model,
        params=params,
        loglik=best.loglik,
        n_free=model.n_free,
        expected=expected,
        chisq=math.nan,
        df=data.n_cells - 1 - model.n_free,
        p_value=math.nan,
        converged=converged,
        boundary=_on_boundary(params, problem),
        profile_trace=trace,
    )
    try:
        result.chisq, result.df, result.p_value = goodness_of_fit(result, data)
    except DegenerateCells:
        pass
    return result


def _on_boundary(params: EcompParams, problem: _Problem) -> bool:
    if params.alpha - params.beta <= BOUNDARY_GAP and problem.model.profiled:
        return True
    bounds = problem.inner_bounds(params.alpha, params.beta)
    values = {"v": math.log(params.v), "p": math.log(params.p)}
    for name, (lo, hi) in zip(problem.model.inner, bounds):
        if values[name] <= lo + 1e-6 or values[name] >= hi - 1e-6:
            return True
    return False


# -- likelihood-ratio test ---------------------------------------------------------


@dataclass
class LRTest:
    """LR test of NB (alpha = beta = 1) against ECOMP.

    ``p_value`` uses the 50:50 mixture of chi2(1) and chi2(2): the null
    point lies on the alpha = beta face of the ECOMP parameter space.
    ``p_value_chi2`` is the plain chi2(df) tail.
    """

    statistic: float
    df: int
    p_value: float
    p_value_chi2: float
    ecomp: FitResult
    nb: FitResult


def lr_test_vs_nb(data: FrequencyTable, cfg: FitConfig | None = None, ecomp: FitResult | None = None) -> LRTest:
    """``ecomp`` may be a previously computed ECOMP fit of ``data`` to avoid refitting."""
    base = cfg or FitConfig()
    if ecomp is None:
        ecomp = fit(data, dataclasses.replace(base, model=Model.ECOMP))
    nb = fit(data, dataclasses.replace(base, model=Model.NB))
    stat = max(0.0, 2.0 * (ecomp.loglik - nb.loglik))
    p_chi2 = float(stats.chi2.sf(stat, 2))
    p_mix = 0.5 * float(stats.chi2.sf(stat, 1)) + 0.5 * p_chi2
    return LRTest(stat, 2, p_mix, p_chi2, ecomp, nb)
