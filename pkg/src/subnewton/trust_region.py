"""Trust-region driver with inexact Hessians and an adaptive accuracy schedule.

Per iteration: build (or reuse) an approximate Hessian at tolerance
eps_t = max(eps0, Delta_t), probe for negative curvature, test optimality,
solve the ball-constrained model on the span of the Cauchy and Eigen seeds,
then accept/reject with the multiplicative radius update. On rejected steps
the previous operator is reused whenever its recorded accuracy still meets
the shrunken tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .core import (Array, ConfigurationError, HessianOperator, IterationRecord,
                   Objective, OptimalityTolerances, SolveResult,
                   acceptance_ratio, ensure_finite, iteration_rng)
from .curvature import default_nu, probe_extreme
from .sampling import per_iteration_delta
from .subproblem import TRModel, tr_eigen_point, tr_subspace_solve

HessianSource = Callable[[Array, float, float, np.random.Generator], HessianOperator]

_PROBE_STREAM = 0
_HESSIAN_STREAM = 1


@dataclass(frozen=True)
class TRConfig:
    """Hyper-parameters of the trust-region driver.

    ``delta0`` is the initial radius. ``nu=None`` resolves the curvature
    quality from the first operator's norm bound. ``delta_total`` is the
    total failure-probability budget split across iterations for both the
    sub-sampling and the curvature probe. ``strict`` additionally enforces
    the theory-mode coupling eps_H <= sqrt(eps_g).
    """

    tol: OptimalityTolerances
    delta0: float = 1.0
    eta: float = 0.2
    gamma: float = 2.0
    alpha: float = 0.5
    nu: float | None = None
    max_iters: int = 200
    delta_total: float = 0.1
    strict: bool = False
    probe_matvecs: int | None = None

    def __post_init__(self) -> None:
        if not (self.delta0 > 0 and math.isfinite(self.delta0)):
            raise ConfigurationError(f"delta0 must be positive, got {self.delta0}")
        if not (0.0 < self.eta < 1.0):
            raise ConfigurationError(f"eta must lie in (0, 1), got {self.eta}")
        if self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must exceed 1, got {self.gamma}")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.nu is not None and not (0.0 < self.nu < 1.0):
            raise ConfigurationError(f"nu must lie in (0, 1), got {self.nu}")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be at least 1")
        if self.strict:
            self.tol.require_tr_strict()


def tr_tolerance(config: TRConfig, delta_t: float) -> float:
    """Hessian accuracy allowed at radius delta_t: max(alpha(1-eta)nu*eps_H, delta_t)."""
    if config.nu is None:
        raise ConfigurationError("tr_tolerance needs a resolved nu")
    if delta_t <= 0:
        raise ConfigurationError("delta_t must be positive")
    eps0 = config.alpha * (1.0 - config.eta) * config.nu * config.tol.eps_H
    return max(eps0, delta_t)


def exact_hessian_source(problem) -> HessianSource:
    """Adapter: ignore the accuracy request and hand out the exact operator."""

    def source(x: Array, eps: float, delta: float,
               rng: np.random.Generator) -> HessianOperator:
        return problem.exact_hessian_operator(x)

    return source


def run_tr(oracle: Objective, hessian_source: HessianSource, config: TRConfig,
           x0: Array, rng_seed: int = 0) -> SolveResult:
    """Iterate until (eps_g, eps_H)-optimality of the inexact model is certified,
    or max_iters is hit (flagged not-converged)."""
    x = np.asarray(x0, dtype=float).copy()
    ensure_finite(x, "starting point")
    tol = config.tol
    delta = config.delta0
    delta0_prob = per_iteration_delta(config.delta_total, tol, "tr_optimal")
    records: list[IterationRecord] = []
    hessian: HessianOperator | None = None
    converged = False
    message = "max_iters exhausted"
    f = grad_norm = lam_est = float("nan")
    eps_in_force = float("nan")

    for t in range(config.max_iters):
        f, grad = oracle.value_grad(x)
        ensure_finite(f, f"objective value at iteration {t}")
        ensure_finite(grad, f"gradient at iteration {t}")
        grad_norm = float(np.linalg.norm(grad))

        if config.nu is None:
            hessian = hessian_source(x, _provisional_tolerance(config, delta),
                                     delta0_prob, iteration_rng(rng_seed, _HESSIAN_STREAM, t))
            config = replace(config, nu=default_nu(hessian.norm_bound, tol.eps_H))
            if hessian.accuracy > tr_tolerance(config, delta):
                hessian = None  # provisional build too crude; rebuild below

        eps_t = tr_tolerance(config, delta)
        if hessian is None or hessian.accuracy > eps_t:
            hessian = hessian_source(x, eps_t, delta0_prob,
                                     iteration_rng(rng_seed, _HESSIAN_STREAM, t))
        eps_in_force = hessian.accuracy

        probe = probe_extreme(hessian, tol.eps_H, config.nu, delta0_prob,
                              rng_seed=iteration_rng(rng_seed, _PROBE_STREAM, t),
                              max_matvecs=config.probe_matvecs)
        lam_est = probe.rayleigh
        direction_found = probe.rayleigh <= -config.nu * tol.eps_H
        second_order_ok = probe.converged and not direction_found

        if grad_norm <= tol.eps_g and second_order_ok:
            converged = True
            message = "optimality certified"
            break

        model = TRModel(grad=grad, hessian=hessian, radius=delta)
        seeds: list[Array] = []
        nu_hat = eigen_norm = None
        if grad_norm > 0.0:
            seeds.extend([grad, hessian.apply(grad)])
        if direction_found:
            eigen = tr_eigen_point(model, probe.direction, config.nu)
            seeds.append(probe.direction)
            nu_hat = eigen.certificates.nu_hat
            eigen_norm = eigen.certificates.eigen_norm
        if not seeds:
            message = "no descent direction available (probe inconclusive at a "
            message += "first-order stationary point)"
            break

        solution = tr_subspace_solve(model, seeds, nu_hat=nu_hat,
                                     eigen_norm=eigen_norm)
        step = solution.step
        f_trial, _ = oracle.value_grad(x + step)
        ensure_finite(f_trial, f"trial objective value at iteration {t}")
        rho = acceptance_ratio(f, f_trial, -solution.model_value)
        accepted = rho >= config.eta

        records.append(IterationRecord(
            t=t, f_value=f, grad_norm=grad_norm, lambda_min_estimate=lam_est,
            radius_or_sigma=delta, rho=rho, accepted=accepted,
            sample_size=hessian.sample_size,
            step_norm=float(np.linalg.norm(step)), eps_t=eps_in_force))

        if accepted:
            x = x + step
            delta *= config.gamma
            hessian = None  # operator belongs to the previous iterate
        else:
            delta /= config.gamma

    if not converged:
        # The last accepted step may have moved x after its stats were taken.
        f, grad = oracle.value_grad(x)
        grad_norm = float(np.linalg.norm(grad))

    return SolveResult(x=x, records=tuple(records), converged=converged,
                       f_final=f, grad_norm_final=grad_norm,
                       lambda_min_final=lam_est, eps_final=eps_in_force,
                       message=message)


def _provisional_tolerance(config: TRConfig, delta: float) -> float:
    # nu <= 1, so this upper-bounds the resolved tolerance; used only for the
    # very first build when nu is still unknown.
    eps0 = config.alpha * (1.0 - config.eta) * config.tol.eps_H
    return max(eps0, delta)
