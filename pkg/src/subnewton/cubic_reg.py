"""Adaptive cubic-regularization driver with a fixed a-priori Hessian tolerance.

The accuracy the Hessian approximation must meet is computed once from the
target tolerances and a Hessian-Lipschitz estimate, and stays fixed for the
whole run; rejected steps therefore always reuse the previous operator. The
``standard`` mode solves the model on the small Cauchy/Eigen span, the
``optimal`` mode keeps enlarging a Krylov space until the model-gradient
inexactness test holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (Array, ConfigurationError, HessianOperator, IterationRecord,
                   Objective, OptimalityTolerances, SolveResult,
                   acceptance_ratio, ensure_finite, iteration_rng)
from .curvature import default_nu, probe_extreme
from .sampling import per_iteration_delta
from .subproblem import (CubicModel, arc_cauchy_point, arc_eigen_point,
                         arc_progressive_solve, arc_subspace_solve)
from .trust_region import HessianSource

_PROBE_STREAM = 0
_HESSIAN_STREAM = 1


@dataclass(frozen=True)
class ARCConfig:
    """Hyper-parameters of the cubic-regularization driver.

    ``l_estimate`` enters the fixed Hessian-accuracy formula; supplying a
    verified upper bound on the path Lipschitz constant keeps the
    sigma <= max(sigma0, 2*gamma*L) certificate assertable. ``sigma_min``
    guards the regularizer against underflow on long success streaks.
    """

    tol: OptimalityTolerances
    sigma0: float = 1.0
    eta: float = 0.2
    gamma: float = 2.0
    nu: float | None = None
    zeta: float = 0.25
    l_estimate: float = 1.0
    mode: str = "standard"
    max_iters: int = 200
    delta_total: float = 0.1
    sigma_min: float = 1e-12
    max_subspace_dim: int | None = None
    probe_matvecs: int | None = None

    def __post_init__(self) -> None:
        if not (self.sigma0 > 0 and math.isfinite(self.sigma0)):
            raise ConfigurationError(f"sigma0 must be positive, got {self.sigma0}")
        if not (0.0 < self.eta < 1.0):
            raise ConfigurationError(f"eta must lie in (0, 1), got {self.eta}")
        if self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must exceed 1, got {self.gamma}")
        if self.nu is not None and not (0.0 < self.nu < 1.0):
            raise ConfigurationError(f"nu must lie in (0, 1), got {self.nu}")
        if self.mode not in ("standard", "optimal"):
            raise ConfigurationError(f"mode must be standard or optimal, got {self.mode!r}")
        if self.mode == "optimal" and not (0.0 < self.zeta < 0.5):
            raise ConfigurationError(
                f"optimal mode needs zeta in (0, 1/2), got {self.zeta}")
        if self.l_estimate <= 0:
            raise ConfigurationError("l_estimate must be positive")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be at least 1")
        if self.sigma_min < 0:
            raise ConfigurationError("sigma_min must be nonnegative")


def arc_epsilon(config: ARCConfig, k_h: float) -> float:
    """Fixed Hessian accuracy for the whole run.

    eps = min( min(1/12, (1-eta)/6) * (sqrt(K^2 + 8 L eps_g) - K),
               min(1/6,  (1-eta)/3) * nu * eps_H )
    further reduced to zeta*eps_g in optimal mode.
    """
    if config.nu is None:
        raise ConfigurationError("arc_epsilon needs a resolved nu")
    if k_h < 0:
        raise ConfigurationError("k_h must be nonnegative")
    eta = config.eta
    surd = 8.0 * config.l_estimate * config.tol.eps_g
    branch_grad = min(1.0 / 12.0, (1.0 - eta) / 6.0) * (
        surd / (math.sqrt(k_h * k_h + surd) + k_h))
    branch_eig = min(1.0 / 6.0, (1.0 - eta) / 3.0) * config.nu * config.tol.eps_H
    eps = min(branch_grad, branch_eig)
    if config.mode == "optimal":
        eps = min(eps, config.zeta * config.tol.eps_g)
    return eps


def estimate_hessian_lipschitz(hessian_at: "callable", x0: Array,
                               rng_seed: int = 0, probes: int = 5,
                               step: float = 0.5) -> float:
    """Startup estimate of the Hessian Lipschitz constant near x0.

    Samples spectral-norm differences of the dense(-ified) Hessian across
    random segments: max ||H(x0 + t v) - H(x0)|| / t over unit directions v.
    A sampled maximum is a heuristic, not a verified bound -- problems with
    analytic bounds (e.g. the finite-sum losses) should prefer those, and
    sigma-cap assertions are only as good as the estimate. Desk scale only.
    """
    from .core import densify

    rng = np.random.default_rng(rng_seed)
    base = densify(hessian_at(x0))
    best = 0.0
    for _ in range(probes):
        v = rng.standard_normal(x0.shape[0])
        v /= np.linalg.norm(v)
        for t in (step, 2.0 * step):
            other = densify(hessian_at(x0 + t * v))
            diff = float(np.max(np.abs(np.linalg.eigvalsh(other - base))))
            best = max(best, diff / t)
    return best


def run_arc(oracle: Objective, hessian_source: HessianSource, config: ARCConfig,
            x0: Array, rng_seed: int = 0) -> SolveResult:
    """Iterate Algorithm-style sigma updates until optimality of the inexact
    model is certified, or max_iters is hit (flagged not-converged)."""
    x = np.asarray(x0, dtype=float).copy()
    ensure_finite(x, "starting point")
    tol = config.tol
    sigma = config.sigma0
    mode_tag = "arc_optimal" if config.mode == "optimal" else "arc_standard"
    delta0_prob = per_iteration_delta(config.delta_total, tol, mode_tag)
    records: list[IterationRecord] = []
    converged = False
    message = "max_iters exhausted"
    f = grad_norm = lam_est = float("nan")

    # Resolve nu and the fixed tolerance from a bootstrap operator.
    bootstrap = hessian_source(x, 0.5, delta0_prob,
                               iteration_rng(rng_seed, _HESSIAN_STREAM, 0))
    if config.nu is None:
        config = replace(config, nu=default_nu(bootstrap.norm_bound, tol.eps_H))
    eps_fixed = arc_epsilon(config, bootstrap.norm_bound)
    hessian: HessianOperator | None = (
        bootstrap if bootstrap.accuracy <= eps_fixed else None)
    eps_in_force = bootstrap.accuracy if hessian is not None else float("nan")

    for t in range(config.max_iters):
        f, grad = oracle.value_grad(x)
        ensure_finite(f, f"objective value at iteration {t}")
        ensure_finite(grad, f"gradient at iteration {t}")
        grad_norm = float(np.linalg.norm(grad))

        if hessian is None:
            hessian = hessian_source(x, eps_fixed, delta0_prob,
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

        model = CubicModel(grad=grad, hessian=hessian, sigma=sigma)
        seeds: list[Array] = []
        nu_hat = eigen_norm = None
        if grad_norm > 0.0:
            cauchy = arc_cauchy_point(model)
            seeds.append(cauchy.step)
        if direction_found:
            # The eigen seed joins the basis whenever it exists (ties between
            # the seed points resolve toward it, escaping saddles); the
            # subspace solution dominates both seeds anyway.
            eigen = arc_eigen_point(model, probe.direction, config.nu)
            seeds.append(eigen.step)
            nu_hat = eigen.certificates.nu_hat
            eigen_norm = eigen.certificates.eigen_norm
        if not seeds:
            message = "no descent direction available (probe inconclusive at a "
            message += "first-order stationary point)"
            break

        if config.mode == "optimal":
            solution = arc_progressive_solve(model, seeds, zeta=config.zeta,
                                             max_dim=config.max_subspace_dim,
                                             nu_hat=nu_hat, eigen_norm=eigen_norm)
        else:
            basis = list(seeds)
            if grad_norm > 0.0:
                basis.append(hessian.apply(grad))
            solution = arc_subspace_solve(model, basis, nu_hat=nu_hat,
                                          eigen_norm=eigen_norm)

        step = solution.step
        f_trial, _ = oracle.value_grad(x + step)
        ensure_finite(f_trial, f"trial objective value at iteration {t}")
        rho = acceptance_ratio(f, f_trial, -solution.model_value)
        accepted = rho >= config.eta

        records.append(IterationRecord(
            t=t, f_value=f, grad_norm=grad_norm, lambda_min_estimate=lam_est,
            radius_or_sigma=sigma, rho=rho, accepted=accepted,
            sample_size=hessian.sample_size,
            step_norm=float(np.linalg.norm(step)), eps_t=eps_in_force))

        if accepted:
            x = x + step
            sigma = max(sigma / config.gamma, config.sigma_min)
            hessian = None  # operator belongs to the previous iterate
        else:
            sigma = config.gamma * sigma
            # eps is fixed for the run, so the previous operator is reused.

    if not converged:
        f, grad = oracle.value_grad(x)
        grad_norm = float(np.linalg.norm(grad))

    return SolveResult(x=x, records=tuple(records), converged=converged,
                       f_final=f, grad_norm_final=grad_norm,
                       lambda_min_final=lam_est, eps_final=eps_in_force,
                       message=message)
