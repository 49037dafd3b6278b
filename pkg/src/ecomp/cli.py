"""Command-line interface: ``ecomp {fit,pmf,moments,sample,queue}``.

Every command builds a report dict. ``--format machine`` prints it as one
JSON document with stable keys; ``--format table`` (the default) prints
aligned text tables. Exit codes: 0 ok, 2 input or parameter error, 3
numerical failure.

The bundled Corbet butterfly table is available as the input ``@corbet``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import warnings
from importlib import resources

import numpy as np

from . import __version__
from .distribution import EcompDist, EcompParams
from .errors import (
    DataTooSparse,
    DegenerateCells,
    InvalidParameterSpace,
    NoConvergence,
    NonConvergent,
    StateCapExceeded,
)
from .fitting import FitConfig, FrequencyTable, Model, fit, lr_test_vs_nb
from .queue import QueueSpec, simulate_ctmc, solve_truncated, total_variation
from .sampler import SamplerState
from .series import ConvergenceConfig

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

BUNDLED = {"@corbet": "corbet.csv"}


class _Failure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# -- input helpers -----------------------------------------------------------


def _read_input(path: str) -> tuple[str, str]:
    """Return (csv text, source label)."""
    if path in BUNDLED:
        text = resources.files("ecomp").joinpath("data", BUNDLED[path]).read_text()
        return text, f"bundled:{BUNDLED[path]}"
    if path == "-":
        return sys.stdin.read(), "stdin"
    try:
        with open(path) as fh:
            return fh.read(), path
    except OSError as exc:
        raise _Failure(EXIT_INPUT, f"cannot read {path}: {exc.strerror}") from exc


def _digest(text: str) -> str:
    return "sha256:" + hashlib.sha256(text.encode()).hexdigest()


def _params(args) -> EcompParams:
    missing = [flag for flag, val in (("-v", args.nu), ("-p", args.p), ("-a", args.alpha), ("-b", args.beta)) if val is None]
    if missing:
        raise _Failure(EXIT_INPUT, f"missing parameter flags: {' '.join(missing)}")
    return EcompParams(args.nu, args.p, args.alpha, args.beta)


def _series_cfg(args) -> ConvergenceConfig:
    overrides = {}
    if getattr(args, "tol", None) is not None:
        overrides["rel_tol"] = args.tol
    return ConvergenceConfig.from_env(**overrides)


def _grid(spec: str | None) -> dict:
    if spec is None:
        return {}
    try:
        lo, hi, step = (float(x) for x in spec.split(":"))
    except ValueError as exc:
        raise _Failure(EXIT_INPUT, f"--grid expects MIN:MAX:STEP, got {spec!r}") from exc
    return {"grid_min": lo, "grid_max": hi, "grid_step": step}


def _params_dict(params: EcompParams) -> dict:
    return {"v": params.v, "p": params.p, "alpha": params.alpha, "beta": params.beta}


def _finite(x):
    """JSON has no inf/nan; map them to strings."""
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


# -- commands ------------------------------------------------------------------


def cmd_fit(args) -> dict:
    text, source = _read_input(args.input)
    try:
        data = FrequencyTable.parse_csv(text)
    except ValueError as exc:
        raise _Failure(EXIT_INPUT, f"input parse error: {exc}") from exc
    cfg_kwargs = {"model": Model(args.model), "seed": args.seed, "series": ConvergenceConfig.from_env(use_asymptotic=False)}
    if args.tol is not None:
        cfg_kwargs["inner_tol"] = args.tol
    cfg_kwargs.update(_grid(args.grid))
    try:
        cfg = FitConfig(**cfg_kwargs)
    except ValueError as exc:
        raise _Failure(EXIT_INPUT, f"invalid fit configuration: {exc}") from exc

    try:
        result = fit(data, cfg)
    except DataTooSparse as exc:
        raise _Failure(EXIT_INPUT, str(exc)) from exc
    except (NoConvergence, NonConvergent) as exc:
        raise _Failure(EXIT_NUMERIC, f"fit stage failed: {exc}") from exc
    if not result.converged:
        raise _Failure(EXIT_NUMERIC, "fit stage failed: optimizer did not converge")

    cells = [str(c) for c in data.counts] + ([f"{data.tail[0]}+"] if data.tail else [])
    report = {
        "command": "fit",
        "source": source,
        "input_digest": _digest(text),
        "model": result.model.value,
        "n": data.total,
        "params": _params_dict(result.params),
        "loglik": result.loglik,
        "n_free": result.n_free,
        "aic": result.aic,
        "chisq": _finite(result.chisq),
        "df": result.df,
        "p_value": _finite(result.p_value),
        "boundary": result.boundary,
        "table": [
            {"count": c, "observed": int(o), "expected": float(e)}
            for c, o, e in zip(cells, data.observed(), result.expected)
        ],
    }
    if result.model is Model.ECOMP and not args.no_lr:
        try:
            lr = lr_test_vs_nb(data, cfg, ecomp=result)
        except (NoConvergence, NonConvergent) as exc:
            raise _Failure(EXIT_NUMERIC, f"likelihood-ratio stage failed: {exc}") from exc
        report["lr_test_vs_nb"] = {
            "statistic": lr.statistic,
            "df": lr.df,
            "p_value": lr.p_value,
            "p_value_chi2": lr.p_value_chi2,
            "nb_loglik": lr.nb.loglik,
        }
    return report


def cmd_pmf(args) -> dict:
    params = _params(args)
    dist = EcompDist(params, _series_cfg(args))
    if dist.is_approximate:
        raise _Failure(EXIT_NUMERIC, "pmf stage failed: normalizer is only available asymptotically here")
    k = np.arange(args.kmax + 1)
    pmf = dist.pmf(k)
    rows = [
        {"k": int(i), "pmf": float(pmf[i]), "cdf": dist.cdf(int(i)), "hazard": dist.hazard(int(i))}
        for i in k
    ]
    return {
        "command": "pmf",
        "params": _params_dict(params),
        "log_normalizer": dist.log_norm.log_value,
        "method": dist.log_norm.method.value,
        "mode": list(dist.mode_structure().modes),
        "table": rows,
    }


def cmd_moments(args) -> dict:
    params = _params(args)
    dist = EcompDist(params, _series_cfg(args))
    mean, var = dist.mean_variance()
    report = {
        "command": "moments",
        "params": _params_dict(params),
        "approximate": dist.is_approximate,
        "mean": mean,
        "variance": var,
        "dispersion": dist.dispersion_class().vs_poisson.value,
    }
    if not dist.is_approximate:
        report["factorial_moments"] = {str(r): dist.factorial_moment(r) for r in range(1, args.order + 1)}
    return report


def cmd_sample(args) -> dict:
    params = _params(args)
    state = SamplerState(EcompDist(params, _series_cfg(args)), args.seed)
    draws = state.sample(args.n)
    return {
        "command": "sample",
        "params": _params_dict(params),
        "seed": args.seed,
        "generator": "PCG64",
        "n": args.n,
        "mean": float(draws.mean()),
        "draws": draws.tolist(),
    }


def cmd_queue(args) -> dict:
    if args.nu is None or args.alpha is None or args.beta is None:
        raise _Failure(EXIT_INPUT, "queue needs -v, -a and -b")
    spec = QueueSpec(args.lam, args.mu, args.nu, args.alpha, args.beta, state_cap=args.state_cap)
    exact = solve_truncated(spec)
    sim = simulate_ctmc(spec, args.horizon / args.mu, seed=args.seed)
    dist = EcompDist(spec.params)
    n = max(len(exact.occupancy), len(sim.occupancy))
    analytic = dist.pmf(np.arange(n))
    kmax = args.kmax if args.kmax is not None else min(n - 1, 30)
    rows = []
    for k in range(kmax + 1):
        rows.append(
            {
                "k": k,
                "simulated": float(sim.occupancy[k]) if k < len(sim.occupancy) else 0.0,
                "exact": float(exact.occupancy[k]) if k < len(exact.occupancy) else 0.0,
                "analytic": float(analytic[k]),
            }
        )
    return {
        "command": "queue",
        "spec": {"lambda": spec.lam, "mu": spec.mu, "v": spec.v, "alpha": spec.alpha, "beta": spec.beta},
        "state_cap": spec.state_cap,
        "horizon": sim.sim_time,
        "seed": args.seed,
        "events": sim.events,
        "residual": exact.residual,
        "tv_sim_exact": total_variation(sim.occupancy, exact.occupancy),
        "tv_sim_analytic": total_variation(sim.occupancy, analytic),
        "tv_exact_analytic": total_variation(exact.occupancy, analytic),
        "table": rows,
    }


# -- rendering -----------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _render_rows(rows: list[dict]) -> list[str]:
    if not rows:
        return []
    keys = list(rows[0])
    cells = [[_fmt(r[k]) for k in keys] for r in rows]
    widths = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(keys)]
    lines = ["  ".join(k.rjust(w) for k, w in zip(keys, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return lines


def render_table(report: dict) -> str:
    lines = []
    scalars = {k: v for k, v in report.items() if k not in ("table", "draws") and not isinstance(v, dict)}
    width = max(len(k) for k in scalars) if scalars else 0
    for key, value in scalars.items():
        if isinstance(value, list):
            value = " ".join(_fmt(x) for x in value)
        lines.append(f"{key.ljust(width)}  {_fmt(value)}")
    for key, value in report.items():
        if isinstance(value, dict):
            lines.append(f"[{key}]")
            inner = max(len(k) for k in value)
            lines += [f"  {k.ljust(inner)}  {_fmt(v)}" for k, v in value.items()]
    if "table" in report:
        lines.append("")
        lines += _render_rows(report["table"])
    if "draws" in report:
        lines.append("draws  " + " ".join(str(x) for x in report["draws"]))
    return "\n".join(lines)


def render_machine(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False)


# -- argument parsing ----------------------------------------------------------


def _add_params(p: argparse.ArgumentParser, with_p: bool = True):
    p.add_argument("-v", "--nu", type=float, help="shape v > 0")
    if with_p:
        p.add_argument("-p", type=float, help="rate parameter p > 0")
    p.add_argument("-a", "--alpha", type=float, help="factorial exponent alpha")
    p.add_argument("-b", "--beta", type=float, help="Pochhammer exponent beta")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=None, help="series rel_tol (fit: inner optimizer tolerance)")
    p.add_argument("--format", choices=("table", "machine"), default="table")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecomp", description="Extended COM-Poisson count distribution tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model to a count,frequency CSV (use @corbet for the bundled table)")
    p.add_argument("input")
    p.add_argument("--model", choices=[m.value for m in Model], default="ecomp")
    p.add_argument("--grid", help="profile grid MIN:MAX:STEP for alpha and beta")
    p.add_argument("--no-lr", action="store_true", help="skip the likelihood-ratio test against NB")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("pmf", help="pmf, cdf and hazard table")
    _add_params(p)
    p.add_argument("--kmax", type=int, default=20)
    _add_common(p)
    p.set_defaults(func=cmd_pmf)

    p = sub.add_parser("moments", help="mean, variance and factorial moments")
    _add_params(p)
    p.add_argument("-r", "--order", type=int, default=2, help="highest factorial moment")
    _add_common(p)
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("sample", help="draw random variates")
    _add_params(p)
    p.add_argument("-n", type=int, default=10)
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("queue", help="simulate the state-dependent queue and compare with the pmf")
    _add_params(p, with_p=False)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--horizon", type=float, default=1e5, help="simulated time in units of 1/mu")
    p.add_argument("--state-cap", type=int, default=None)
    p.add_argument("--kmax", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_queue)
    return parser


def _check_args(args):
    for name, low in (("kmax", 0), ("order", 1), ("n", 1)):
        value = getattr(args, name, None)
        if value is not None and value < low:
            raise _Failure(EXIT_INPUT, f"--{name} must be >= {low}, got {value}")
    if getattr(args, "tol", None) is not None and not 0 < args.tol < 1:
        raise _Failure(EXIT_INPUT, f"--tol must lie in (0, 1), got {args.tol}")
    if getattr(args, "horizon", None) is not None and not args.horizon > 0:
        raise _Failure(EXIT_INPUT, f"--horizon must be > 0, got {args.horizon}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        _check_args(args)
        try:
            max_terms = ConvergenceConfig.from_env().max_terms
        except ValueError as exc:
            raise _Failure(EXIT_INPUT, f"ECOMP_MAX_TERMS: {exc}") from exc
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report = args.func(args)
        notes = sorted({str(w.message) for w in caught})
        if notes:
            report["warnings"] = notes
        report["max_terms"] = max_terms
    except _Failure as exc:
        print(f"ecomp {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except InvalidParameterSpace as exc:
        print(f"ecomp {args.command}: invalid parameters, violates '{exc.clause}': {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, DegenerateCells) as exc:
        print(f"ecomp {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NonConvergent, NoConvergence, StateCapExceeded, FloatingPointError) as exc:
        print(f"ecomp {args.command}: numerical failure in {args.command} stage: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out = render_machine(report) if args.format == "machine" else render_table(report)
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
