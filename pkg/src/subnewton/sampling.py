"""Randomized Hessian sub-sampling: size prescriptions, operator construction,
failure-probability scheduling, and Monte-Carlo concentration checks.

Sample sizes follow the matrix-Bernstein prescriptions
    uniform      |S| >= 16 K_max^2 log(2d/delta) / eps^2
    non-uniform  |S| >=  4 K_hat^2 log(2d/delta) / eps^2
    intrinsic    |S| >= (16/3) K_hat^2 log(8t/delta) / eps^2
and the per-iteration failure probability is the total budget shrunk by the
relevant worst-case iteration count exponent.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import Array, ConfigurationError, HessianOperator, OptimalityTolerances
from .problems import FiniteSumProblem

logger = logging.getLogger(__name__)

MODES = ("uniform_with_replacement", "uniform_without_replacement",
         "nonuniform", "nonuniform_intrinsic")


@dataclass(frozen=True)
class SampleScheme:
    """Resolved sampling plan: mode, accuracy targets, and sample size."""

    mode: str
    epsilon: float
    delta: float
    resolved_size: int
    cap_at_n: bool = True

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown sampling mode {self.mode!r}")
        if self.resolved_size < 1:
            raise ConfigurationError("resolved_size must be at least 1")


def _check_tolerances(epsilon: float, delta: float) -> None:
    # epsilon = 1 is admitted as the degenerate limit of the prescriptions.
    if not (0.0 < epsilon <= 1.0):
        raise ConfigurationError(f"epsilon must lie in (0, 1], got {epsilon}")
    if not (0.0 < delta < 1.0):
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")


def uniform_sample_size(k_max: float, epsilon: float, delta: float, d: int) -> int:
    _check_tolerances(epsilon, delta)
    if k_max <= 0:
        raise ConfigurationError("k_max must be positive")
    return math.ceil(16.0 * k_max ** 2 * math.log(2.0 * d / delta) / epsilon ** 2)


def nonuniform_sample_size(k_hat: float, epsilon: float, delta: float, d: int) -> int:
    _check_tolerances(epsilon, delta)
    if k_hat <= 0:
        raise ConfigurationError("k_hat must be positive")
    return math.ceil(4.0 * k_hat ** 2 * math.log(2.0 * d / delta) / epsilon ** 2)


def intrinsic_sample_size(k_hat: float, epsilon: float, delta: float,
                          t_intrinsic: float) -> int:
    _check_tolerances(epsilon, delta)
    if epsilon > 0.5:
        raise ConfigurationError(
            f"intrinsic-dimension sizing requires eps <= 1/2, got {epsilon}")
    if t_intrinsic < 1.0:
        raise ConfigurationError("intrinsic dimension is at least 1")
    if k_hat <= 0:
        raise ConfigurationError("k_hat must be positive")
    return math.ceil(16.0 * k_hat ** 2 / 3.0
                     * math.log(8.0 * t_intrinsic / delta) / epsilon ** 2)


def per_iteration_delta(delta_total: float, tol: OptimalityTolerances,
                        schedule: str) -> float:
    """Shrink the total failure budget to a per-iteration one."""
    if not (0.0 < delta_total < 1.0):
        raise ConfigurationError(f"delta_total must lie in (0, 1), got {delta_total}")
    eg, eh = tol.eps_g, tol.eps_H
    if schedule == "tr_optimal":
        return delta_total * min(eg ** 2 * eh, eh ** 3)
    if schedule == "arc_standard":
        return delta_total * min(eg ** 2, eh ** 3)
    if schedule == "arc_optimal":
        return delta_total * min(eg ** 1.5, eh ** 3)
    raise ConfigurationError(f"unknown schedule {schedule!r}")


def nonuniform_distribution(problem: FiniteSumProblem, x: Array) -> Array:
    """p_i proportional to |f''(a_i'x)| * ||a_i||^2, summing to one.

    Falls back to the uniform distribution (with a logged warning) when all
    curvatures vanish, where the prescription is undefined.
    """
    second = problem.second_derivatives(x)
    weights = np.abs(second) * problem.row_sq_norms
    total = math.fsum(weights.tolist())
    if total <= 0.0:
        logger.warning("all per-row curvatures vanish at this point; "
                       "falling back to uniform sampling weights")
        return np.full(problem.n, 1.0 / problem.n)
    p = weights / total
    return p / math.fsum(p.tolist())


def intrinsic_dimension(problem: FiniteSumProblem, x: Array) -> float:
    """trace/spectral-norm of the curvature-weighted Gram matrix A'|B|A."""
    second = problem.second_derivatives(x)
    weights = np.abs(second) / problem.n
    dense = (problem.rows * weights[:, None]).T @ problem.rows
    dense = 0.5 * (dense + dense.T)
    norm = float(np.max(np.abs(np.linalg.eigvalsh(dense)))) if dense.size else 0.0
    if norm == 0.0:
        logger.warning("zero curvature matrix; intrinsic dimension set to 1")
        return 1.0
    t = float(np.trace(dense)) / norm
    return min(max(t, 1.0), float(problem.d))


def resolve_scheme(problem: FiniteSumProblem, mode: str, epsilon: float,
                   delta: float, x: Array | None = None,
                   cap_at_n: bool = True) -> SampleScheme:
    """Compute the prescribed sample size for a problem and wrap it up."""
    d = problem.d
    if mode in ("uniform_with_replacement", "uniform_without_replacement"):
        size = uniform_sample_size(problem.k_max, epsilon, delta, d)
    elif mode == "nonuniform":
        size = nonuniform_sample_size(problem.k_hat, epsilon, delta, d)
    elif mode == "nonuniform_intrinsic":
        if x is None:
            raise ConfigurationError("intrinsic sizing needs the evaluation point")
        t = intrinsic_dimension(problem, x)
        size = intrinsic_sample_size(problem.k_hat, epsilon, delta, t)
    else:
        raise ConfigurationError(f"unknown sampling mode {mode!r}")
    if cap_at_n and size > problem.n:
        logger.info("prescribed sample size %d exceeds n=%d; capping", size, problem.n)
        size = problem.n
    return SampleScheme(mode=mode, epsilon=epsilon, delta=delta,
                        resolved_size=size, cap_at_n=cap_at_n)


def _draw_indices(problem: FiniteSumProblem, x: Array, scheme: SampleScheme,
                  rng: np.random.Generator) -> tuple[Array, Array]:
    """Sorted index multiset plus the per-draw selection probabilities."""
    n = problem.n
    size = scheme.resolved_size
    if scheme.cap_at_n:
        size = min(size, n)
    if scheme.mode == "uniform_with_replacement":
        idx = rng.integers(0, n, size=size)
        p_sel = np.full(size, 1.0 / n)
    elif scheme.mode == "uniform_without_replacement":
        if size > n:
            raise ConfigurationError(
                "sampling without replacement needs resolved_size <= n")
        idx = rng.choice(n, size=size, replace=False)
        p_sel = np.full(size, 1.0 / n)
    else:
        p = nonuniform_distribution(problem, x)
        idx = rng.choice(n, size=size, replace=True, p=p)
        p_sel = p[idx]
    order = np.argsort(idx, kind="stable")
    return idx[order], p_sel[order]


def build_subsampled_hessian(problem: FiniteSumProblem, x: Array,
                             scheme: SampleScheme,
                             rng_seed: int | np.random.Generator = 0
                             ) -> HessianOperator:
    """Sub-sampled Hessian (1/(n|S|)) * sum_j (1/p_j) f''_j(a_j'x) a_j a_j'.

    Uniform weights collapse to the plain average of per-sample Hessians, so
    the spectral bound K_max holds deterministically; non-uniform weighting
    carries the bound K_hat + eps. A full sample drawn without replacement
    reproduces the exact Hessian, and is recorded as exact (accuracy 0).
    """
    rng = (rng_seed if isinstance(rng_seed, np.random.Generator)
           else np.random.default_rng(rng_seed))
    idx, p_sel = _draw_indices(problem, x, scheme, rng)
    second = problem.second_derivatives(x)
    size = idx.shape[0]
    weights = second[idx] / (problem.n * size * p_sel)
    rows = problem.rows[idx]

    def apply(v: Array) -> Array:
        return rows.T @ (weights * (rows @ v))

    exact_full = (scheme.mode == "uniform_without_replacement"
                  and size == problem.n)
    if scheme.mode.startswith("uniform"):
        norm_bound = problem.k_max
    else:
        norm_bound = problem.k_hat + scheme.epsilon
    accuracy = 0.0 if exact_full else scheme.epsilon
    return HessianOperator(apply=apply, dim=problem.d, norm_bound=norm_bound,
                           provenance="subsampled", accuracy=accuracy,
                           sample_size=size,
                           info={"indices": idx, "probabilities": p_sel,
                                 "scheme": scheme})


def verify_concentration(problem: FiniteSumProblem, x: Array,
                         scheme: SampleScheme, trials: int,
                         rng_seed: int | np.random.Generator = 0) -> float:
    """Fraction of independent draws with ||H - grad^2 F(x)|| > eps.

    Densifies every draw and measures the spectral norm of the difference by
    a dense symmetric eigendecomposition; desk scale only.
    """
    rng = (rng_seed if isinstance(rng_seed, np.random.Generator)
           else np.random.default_rng(rng_seed))
    exact = problem.dense_hessian(x)
    second = problem.second_derivatives(x)
    failures = 0
    for _ in range(trials):
        idx, p_sel = _draw_indices(problem, x, scheme, rng)
        size = idx.shape[0]
        weights = second[idx] / (problem.n * size * p_sel)
        rows = problem.rows[idx]
        dense = (rows * weights[:, None]).T @ rows
        diff = 0.5 * (dense + dense.T) - exact
        err = float(np.max(np.abs(np.linalg.eigvalsh(diff))))
        if err > scheme.epsilon:
            failures += 1
    return failures / trials
