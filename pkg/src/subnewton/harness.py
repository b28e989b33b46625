"""Experiment front-end: config files, solver dispatch, trace CSVs, and the
sampling-bound verification / exact-vs-sampled comparison reports.

Config files are flat ``key = value`` text ('#' starts a comment); unknown
keys are rejected. Exit codes are a stable contract:
0 converged, 2 not-converged, 4 verification failure, 3 config error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (Array, ConfigurationError, HessianOperator, NonFiniteError,
                   OptimalityTolerances, SolveResult)
from .cubic_reg import ARCConfig, run_arc
from .problems import (LOSSES, FiniteSumProblem, QuarticSaddle, generate_synthetic,
                       load_dataset)
from .sampling import (SampleScheme, build_subsampled_hessian, resolve_scheme,
                       verify_concentration)
from .trust_region import TRConfig, exact_hessian_source, run_tr

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_CONFIG_ERROR = 3
EXIT_VERIFICATION_FAILURE = 4

TRACE_COLUMNS = ("t", "F", "grad_norm", "lambda_min_est", "radius_or_sigma",
                 "rho", "accepted", "sample_size", "step_norm", "eps_t")

_HESSIAN_MODES = {
    "exact": None,
    "uniform": "uniform_with_replacement",
    "uniform_wor": "uniform_without_replacement",
    "nonuniform": "nonuniform",
    "intrinsic": "nonuniform_intrinsic",
}


@dataclass
class ExperimentConfig:
    """Validated experiment description (see ``configs/`` for an example)."""

    problem: str = "biweight"
    data: str | None = None
    format: str = "csv"
    n: int = 1000
    d: int = 50
    skew: float = 1.0
    k_max_target: float | None = None
    noise: float = 0.1
    data_seed: int = 0
    solver: str = "tr"
    arc_mode: str = "standard"
    hessian: str = "exact"
    eps_g: float = 1e-4
    eps_h: float = 1e-2
    delta: float = 0.1
    eta: float = 0.2
    gamma: float = 2.0
    alpha: float = 0.5
    nu: float | None = None
    zeta: float = 0.25
    sigma0: float = 1.0
    radius0: float = 1.0
    l_estimate: float | None = None
    sigma_min: float = 1e-12
    max_iters: int = 500
    seed: int = 0
    x0_scale: float = 0.0
    eps_cap: float = 0.9
    out: str = "trace.csv"
    trials: int = 20
    verify_eps: str = "0.5,0.35,0.25"
    verify_delta: str = "0.1"
    verify_trials: int = 400

    def __post_init__(self) -> None:
        if self.problem not in ("quartic", *LOSSES):
            raise ConfigurationError(f"unknown problem {self.problem!r}")
        if self.solver not in ("tr", "arc"):
            raise ConfigurationError(f"solver must be tr or arc, got {self.solver!r}")
        if self.arc_mode not in ("standard", "optimal"):
            raise ConfigurationError(f"unknown arc_mode {self.arc_mode!r}")
        if self.hessian not in _HESSIAN_MODES:
            raise ConfigurationError(f"unknown hessian mode {self.hessian!r}")
        if self.problem == "quartic" and self.hessian != "exact":
            raise ConfigurationError("the quartic test problem has no finite-sum "
                                     "structure to sub-sample")
        if not (0.0 < self.eps_cap <= 1.0):
            raise ConfigurationError("eps_cap must lie in (0, 1]")


_FIELD_TYPES = {f.name: f for f in dataclass_fields(ExperimentConfig)}
_OPTIONAL_FLOATS = {"k_max_target", "nu", "l_estimate"}
_INT_KEYS = {"n", "d", "data_seed", "max_iters", "seed", "trials", "verify_trials"}
_STR_KEYS = {"problem", "data", "format", "solver", "arc_mode", "hessian", "out",
             "verify_eps", "verify_delta"}


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}: line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _FIELD_TYPES:
            raise ConfigurationError(f"{source}: line {lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, value, source, lineno)
    return ExperimentConfig(**values)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), source=str(path))


def _coerce(key: str, value: str, source: str, lineno: int) -> object:
    try:
        if key in _STR_KEYS:
            return value
        if key in _INT_KEYS:
            return int(value)
        if key in _OPTIONAL_FLOATS:
            return None if value.lower() in ("none", "") else float(value)
        return float(value)
    except ValueError:
        raise ConfigurationError(
            f"{source}: line {lineno}: bad value {value!r} for key {key!r}") from None


# ---------------------------------------------------------------------------
# Problem / solver assembly
# ---------------------------------------------------------------------------

def build_problem(config: ExperimentConfig):
    if config.problem == "quartic":
        return QuarticSaddle()
    if config.data is not None:
        return load_dataset(config.data, fmt=config.format, loss=config.problem)
    return generate_synthetic(config.problem, config.n, config.d,
                              rng_seed=config.data_seed, skew=config.skew,
                              k_max=config.k_max_target, noise=config.noise)


def build_hessian_source(config: ExperimentConfig, problem):
    mode = _HESSIAN_MODES[config.hessian]
    if mode is None:
        return exact_hessian_source(problem)
    if not isinstance(problem, FiniteSumProblem):
        raise ConfigurationError("sub-sampling requires a finite-sum problem")

    # Intrinsic-dimension sizing is only valid for eps <= 1/2.
    cap = min(config.eps_cap, 0.5) if mode == "nonuniform_intrinsic" else config.eps_cap

    def source(x: Array, eps: float, delta: float,
               rng: np.random.Generator) -> HessianOperator:
        eps_eff = min(eps, cap)
        scheme = resolve_scheme(problem, mode, eps_eff, delta, x=x)
        return build_subsampled_hessian(problem, x, scheme, rng_seed=rng)

    return source


def starting_point(config: ExperimentConfig, problem) -> Array:
    d = 2 if config.problem == "quartic" else problem.d
    if config.x0_scale == 0.0:
        return np.zeros(d)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed & 0xFFFFFFFF, 105]))
    return config.x0_scale * rng.standard_normal(d)


def run_solver(config: ExperimentConfig, problem, seed: int | None = None) -> SolveResult:
    seed = config.seed if seed is None else seed
    tol = OptimalityTolerances(eps_g=config.eps_g, eps_H=config.eps_h)
    source = build_hessian_source(config, problem)
    x0 = starting_point(config, problem)
    if config.solver == "tr":
        tr_config = TRConfig(tol=tol, delta0=config.radius0, eta=config.eta,
                             gamma=config.gamma, alpha=config.alpha, nu=config.nu,
                             max_iters=config.max_iters, delta_total=config.delta)
        return run_tr(problem, source, tr_config, x0, rng_seed=seed)
    l_estimate = config.l_estimate
    if l_estimate is None:
        l_estimate = _default_l_estimate(config, problem)
    arc_config = ARCConfig(tol=tol, sigma0=config.sigma0, eta=config.eta,
                           gamma=config.gamma, nu=config.nu, zeta=config.zeta,
                           l_estimate=l_estimate, mode=config.arc_mode,
                           max_iters=config.max_iters, delta_total=config.delta,
                           sigma_min=config.sigma_min)
    return run_arc(problem, source, arc_config, x0, rng_seed=seed)


def _default_l_estimate(config: ExperimentConfig, problem) -> float:
    if isinstance(problem, FiniteSumProblem):
        return problem.hessian_lipschitz_bound()
    # Quartic: iterates with F <= F(0,0) stay inside |x| <= sqrt(2); pad the
    # box for trial points.
    return problem.hessian_lipschitz_bound(box_radius=4.0)


# ---------------------------------------------------------------------------
# Trace emission
# ---------------------------------------------------------------------------

def format_trace(result: SolveResult, problem=None) -> str:
    """CSV rows for each iteration plus a '#'-prefixed summary footer."""
    lines = [",".join(TRACE_COLUMNS)]
    for r in result.records:
        lines.append(",".join((
            str(r.t), repr(r.f_value), repr(r.grad_norm),
            repr(r.lambda_min_estimate), repr(r.radius_or_sigma), repr(r.rho),
            "1" if r.accepted else "0", str(r.sample_size), repr(r.step_norm),
            repr(r.eps_t))))
    lines.append(f"# converged: {int(result.converged)}")
    lines.append(f"# message: {result.message}")
    lines.append(f"# f_final: {result.f_final!r}")
    lines.append(f"# grad_norm_final: {result.grad_norm_final!r}")
    lines.append(f"# lambda_min_estimate_final: {result.lambda_min_final!r}")
    lines.append(f"# eps_final: {result.eps_final!r}")
    lines.append(f"# iterations: {len(result.records)}")
    lines.append(f"# accepted: {result.n_accepted}")
    lines.append(f"# rejected: {result.n_rejected}")
    if problem is not None and hasattr(problem, "dense_hessian"):
        dim = result.x.shape[0]
        if dim <= 500:
            lam = float(np.linalg.eigvalsh(problem.dense_hessian(result.x))[0])
            lines.append(f"# lambda_min_dense_final: {lam!r}")
    eps_history = ",".join(repr(r.eps_t) for r in result.records)
    size_history = ",".join(str(r.sample_size) for r in result.records)
    lines.append(f"# eps_t_history: {eps_history}")
    lines.append(f"# sample_size_history: {size_history}")
    return "\n".join(lines) + "\n"


def run_experiment(config: ExperimentConfig, out_path: str | Path | None = None) -> int:
    """Run the configured solver and write the trace file. Returns exit code."""
    problem = build_problem(config)
    result = run_solver(config, problem)
    path = Path(out_path if out_path is not None else config.out)
    path.write_text(format_trace(result, problem=problem))
    print(f"wrote {path} ({len(result.records)} iterations, "
          f"converged={result.converged})")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# Sampling-bound verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationRow:
    mode: str
    epsilon: float
    delta: float
    sample_size: int
    capped: bool
    failure_rate: float
    negative_control: bool = False

    @property
    def passed(self) -> bool:
        if self.negative_control:
            return self.failure_rate > self.delta
        return self.failure_rate <= self.delta


def verify_bounds(config: ExperimentConfig) -> tuple[list[VerificationRow], bool]:
    """Monte-Carlo check of the prescribed sample sizes on a dense grid.

    Positive rows must fail with rate <= delta. When the grid contains a
    genuinely tight point -- uncapped prescription at least 100x beyond n, so
    that a quartered sample operates clearly outside the guarantee even
    accounting for the concentration bound's conservative constant -- a
    quarter of the capped size is run as a negative control and must fail
    more often than delta. With only loose grid points no control is emitted:
    a quartered size can legitimately still concentrate there.
    """
    problem = build_problem(config)
    if not isinstance(problem, FiniteSumProblem):
        raise ConfigurationError("verify-sampling needs a finite-sum problem")
    if problem.d > 500:
        raise ConfigurationError(
            f"d={problem.d} too large for dense verification (limit 500)")
    x = starting_point(config, problem)
    eps_grid = [float(v) for v in config.verify_eps.split(",") if v.strip()]
    delta_grid = [float(v) for v in config.verify_delta.split(",") if v.strip()]
    trials = config.verify_trials
    rows: list[VerificationRow] = []
    seed_stream = np.random.SeedSequence([config.seed & 0xFFFFFFFF, 771])
    tightest: SampleScheme | None = None
    for mode in ("uniform_without_replacement", "nonuniform"):
        for eps in eps_grid:
            for delta in delta_grid:
                scheme = resolve_scheme(problem, mode, eps, delta, x=x)
                prescribed = scheme.resolved_size
                uncapped = resolve_scheme(problem, mode, eps, delta, x=x,
                                          cap_at_n=False).resolved_size
                capped = uncapped > problem.n
                if (mode == "uniform_without_replacement"
                        and uncapped >= 100 * problem.n):
                    if tightest is None or eps < tightest.epsilon:
                        tightest = scheme
                rate = verify_concentration(problem, x, scheme, trials,
                                            rng_seed=np.random.default_rng(seed_stream.spawn(1)[0]))
                rows.append(VerificationRow(mode=mode, epsilon=eps, delta=delta,
                                            sample_size=prescribed, capped=capped,
                                            failure_rate=rate))
    if tightest is not None:
        control_size = max(tightest.resolved_size // 4, 1)
        control = SampleScheme(mode=tightest.mode, epsilon=tightest.epsilon,
                               delta=tightest.delta, resolved_size=control_size)
        rate = verify_concentration(problem, x, control, trials,
                                    rng_seed=np.random.default_rng(seed_stream.spawn(1)[0]))
        rows.append(VerificationRow(mode=tightest.mode, epsilon=tightest.epsilon,
                                    delta=tightest.delta, sample_size=control_size,
                                    capped=False, failure_rate=rate,
                                    negative_control=True))
    all_ok = all(row.passed for row in rows)
    return rows, all_ok


def format_verification(rows: Sequence[VerificationRow]) -> str:
    header = (f"{'mode':<30} {'eps':>6} {'delta':>6} {'|S|':>7} {'capped':>6} "
              f"{'fail_rate':>9} {'expect':>8} {'ok':>3}")
    lines = [header, "-" * len(header)]
    for row in rows:
        expect = f">{row.delta:g}" if row.negative_control else f"<={row.delta:g}"
        lines.append(f"{row.mode:<30} {row.epsilon:>6g} {row.delta:>6g} "
                     f"{row.sample_size:>7d} {str(row.capped):>6} "
                     f"{row.failure_rate:>9.4f} {expect:>8} "
                     f"{'yes' if row.passed else 'NO':>3}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Exact vs sampled comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonRun:
    seed: int
    hessian: str
    converged: bool
    iterations: int
    f_final: float
    grad_norm_final: float
    lambda_min_dense: float
    eps_final: float
    hessian_cost: int

    def optimal(self, eps_g: float, eps_h: float) -> bool:
        eps = self.eps_final if np.isfinite(self.eps_final) else 0.0
        return (self.grad_norm_final <= eps_g
                and self.lambda_min_dense >= -(eps + eps_h))


def compare_exact_vs_sampled(config: ExperimentConfig) -> tuple[list[ComparisonRun], str]:
    """Paired runs over ``trials`` seeds; reports terminal optimality and the
    per-iteration Hessian cost proxy (scalar-Hessian evaluations)."""
    problem = build_problem(config)
    if not isinstance(problem, FiniteSumProblem):
        raise ConfigurationError("compare needs a finite-sum problem")
    if config.hessian == "exact":
        raise ConfigurationError("compare needs a sampled hessian mode to "
                                 "pair against the exact runs")
    runs: list[ComparisonRun] = []
    for trial in range(config.trials):
        seed = config.seed + trial
        for hessian_mode in ("exact", config.hessian):
            variant = _with_updates(config, hessian=hessian_mode, seed=seed,
                                    x0_scale=config.x0_scale)
            result = run_solver(variant, problem, seed=seed)
            lam = float(np.linalg.eigvalsh(problem.dense_hessian(result.x))[0])
            cost = sum(r.sample_size for r in result.records)
            runs.append(ComparisonRun(
                seed=seed, hessian=hessian_mode, converged=result.converged,
                iterations=len(result.records), f_final=result.f_final,
                grad_norm_final=result.grad_norm_final, lambda_min_dense=lam,
                eps_final=result.eps_final if np.isfinite(result.eps_final) else 0.0,
                hessian_cost=cost))
    report = _format_comparison(runs, config)
    return runs, report


def _with_updates(config: ExperimentConfig, **updates) -> ExperimentConfig:
    kwargs = {f.name: getattr(config, f.name) for f in dataclass_fields(ExperimentConfig)}
    kwargs.update(updates)
    return ExperimentConfig(**kwargs)


def _format_comparison(runs: Sequence[ComparisonRun], config: ExperimentConfig) -> str:
    lines = [f"{'seed':>5} {'hessian':<12} {'conv':>4} {'iters':>5} "
             f"{'F_final':>13} {'|grad|':>10} {'lam_min':>10} {'cost':>10} {'opt':>4}"]
    lines.append("-" * len(lines[0]))
    for run in runs:
        lines.append(f"{run.seed:>5} {run.hessian:<12} {int(run.converged):>4} "
                     f"{run.iterations:>5} {run.f_final:>13.6e} "
                     f"{run.grad_norm_final:>10.3e} {run.lambda_min_dense:>10.3e} "
                     f"{run.hessian_cost:>10} "
                     f"{'yes' if run.optimal(config.eps_g, config.eps_h) else 'no':>4}")
    sampled = [r for r in runs if r.hessian != "exact"]
    exact = [r for r in runs if r.hessian == "exact"]
    if sampled:
        frac = sum(r.optimal(config.eps_g, config.eps_h) for r in sampled) / len(sampled)
        lines.append(f"# sampled runs meeting (eps_g, eps+eps_H)-optimality: "
                     f"{frac:.3f} (target >= {1.0 - config.delta:g})")
    if exact and sampled:
        cost_exact = sum(r.hessian_cost for r in exact)
        cost_sampled = sum(r.hessian_cost for r in sampled)
        if cost_exact:
            lines.append(f"# hessian cost ratio sampled/exact: "
                         f"{cost_sampled / cost_exact:.4f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="subnewton",
        description="Trust-region / cubic-regularization experiments with "
                    "sub-sampled Hessians")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run one solver and write a trace CSV")
    solve.add_argument("--config", required=True)
    solve.add_argument("--seed", type=int, default=None)
    solve.add_argument("--out", default=None)

    verify = sub.add_parser("verify-sampling",
                            help="Monte-Carlo check of the sampling bounds")
    verify.add_argument("--config", required=True)

    compare = sub.add_parser("compare",
                             help="paired exact-vs-sampled solver runs")
    compare.add_argument("--config", required=True)
    compare.add_argument("--trials", type=int, default=None)

    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command == "solve":
            if args.seed is not None:
                config = _with_updates(config, seed=args.seed)
            return run_experiment(config, out_path=args.out)
        if args.command == "verify-sampling":
            rows, all_ok = verify_bounds(config)
            print(format_verification(rows))
            return EXIT_OK if all_ok else EXIT_VERIFICATION_FAILURE
        if args.command == "compare":
            if args.trials is not None:
                config = _with_updates(config, trials=args.trials)
            _, report = compare_exact_vs_sampled(config)
            print(report)
            return EXIT_OK
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except NonFiniteError as exc:
        print(f"solver aborted: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
