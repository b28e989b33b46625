"""Approximate extreme eigenpairs and negative-curvature directions.

The search runs Lanczos with full reorthogonalization on the shifted
positive-semidefinite operator K_H*I - H, whose top eigenpair corresponds to
the bottom of H. Desk-scale dimensions make full reorthogonalization cheap
and avoid ghost eigenvalues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .core import Array, ConfigurationError, HessianOperator

# Ritz pair counts as converged once ||Hu - theta*u|| <= RESIDUAL_RTOL * K_H.
RESIDUAL_RTOL = 1e-8


@dataclass(frozen=True)
class CurvatureResult:
    """A unit direction with its Rayleigh quotient <u, Hu> on the original H."""

    direction: Array
    rayleigh: float
    iterations_used: int
    converged: bool


def suggested_matvec_budget(dim: int, kappa: float, delta: float,
                            norm_bound: float) -> int:
    """Default matrix-vector budget: at least log(d/delta)*sqrt(K_H/kappa).

    Also at least dim: with full reorthogonalization the factorization is
    exact once the Krylov space fills the whole space, so allowing dim steps
    keeps desk-scale probes conclusive. Callers wanting the bare probabilistic
    budget can pass max_matvecs explicitly.
    """
    d = max(dim, 2)
    k = max(norm_bound, 1e-12)
    budget = math.log(d / delta) * math.sqrt(k / kappa)
    return max(int(math.ceil(budget)), dim, 8)


def lanczos_extreme(hessian: HessianOperator, kappa: float, delta: float,
                    max_matvecs: int | None = None,
                    rng_seed: int | np.random.Generator = 0) -> CurvatureResult:
    """Estimate the bottom eigenpair of H through the shifted operator.

    Starts from a normalized Gaussian vector and iterates until the top Ritz
    pair of the shifted tridiagonal has residual <= 1e-8 * K_H, the Krylov
    space becomes invariant, or the matvec budget runs out (converged=False;
    the caller decides what to do with an inconclusive probe).
    """
    if not (0.0 < kappa < 1.0):
        raise ConfigurationError(f"kappa must lie in (0, 1), got {kappa}")
    if not (0.0 < delta < 1.0):
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    rng = (rng_seed if isinstance(rng_seed, np.random.Generator)
           else np.random.default_rng(rng_seed))
    d = hessian.dim
    shift = hessian.norm_bound
    if max_matvecs is None:
        max_matvecs = suggested_matvec_budget(d, kappa, delta, shift)
    steps = min(max_matvecs, d)

    def shifted(v: Array) -> Array:
        return shift * v - hessian.apply(v)

    basis = np.zeros((d, steps))
    alphas = np.zeros(steps)
    betas = np.zeros(max(steps - 1, 0))

    q = rng.standard_normal(d)
    q /= np.linalg.norm(q)
    residual_tol = RESIDUAL_RTOL * max(shift, 1e-30)
    converged = False
    k = 0
    ritz_vec = None

    for k in range(steps):
        basis[:, k] = q
        w = shifted(q)
        alphas[k] = float(q @ w)
        w -= alphas[k] * q
        if k > 0:
            w -= betas[k - 1] * basis[:, k - 1]
        # Full reorthogonalization against everything seen so far.
        w -= basis[:, :k + 1] @ (basis[:, :k + 1].T @ w)

        theta, y = _top_ritz(alphas[:k + 1], betas[:k])
        beta_next = float(np.linalg.norm(w))
        residual = beta_next * abs(y[-1])
        ritz_vec = y
        if residual <= residual_tol or beta_next <= 1e-14 * max(shift, 1.0):
            converged = True
            break
        if k + 1 >= steps:
            # Full space reached: the tridiagonal factorization is exact.
            converged = k + 1 >= d
            break
        betas[k] = beta_next
        q = w / beta_next

    u = basis[:, :k + 1] @ ritz_vec
    u /= np.linalg.norm(u)
    rayleigh = hessian.quad(u)
    return CurvatureResult(direction=u, rayleigh=rayleigh,
                           iterations_used=k + 1, converged=converged)


def _top_ritz(alphas: Array, betas: Array) -> tuple[float, Array]:
    k = alphas.shape[0]
    if k == 1:
        return float(alphas[0]), np.ones(1)
    vals, vecs = eigh_tridiagonal(alphas, betas, select="i",
                                  select_range=(k - 1, k - 1))
    return float(vals[0]), vecs[:, 0]


def min_valid_nu(norm_bound: float, eps_H: float) -> float:
    """Smallest nu the budget rule admits: nu = 2*kappa >= 2K_H/(2K_H + eps_H)."""
    if eps_H <= 0:
        raise ConfigurationError("eps_H must be positive")
    k = max(norm_bound, 0.0)
    return 2.0 * k / (2.0 * k + eps_H)


def default_nu(norm_bound: float, eps_H: float) -> float:
    return max(min_valid_nu(norm_bound, eps_H), 0.5)


def probe_extreme(hessian: HessianOperator, eps_H: float, nu: float,
                  delta: float, rng_seed: int | np.random.Generator = 0,
                  max_matvecs: int | None = None) -> CurvatureResult:
    """Run the bottom-eigenpair probe with the nu = 2*kappa budget rule.

    Always returns the probe result; drivers gate on
    ``result.rayleigh <= -nu * eps_H`` themselves so the trace can record the
    lambda_min estimate even when no usable direction exists. Unlike
    negative_curvature_direction this does not enforce the nu floor: a nu
    below it only inflates the matvec budget, which is conservative.
    """
    if not (0.0 < nu < 1.0):
        raise ConfigurationError(f"nu must lie in (0, 1), got {nu}")
    return lanczos_extreme(hessian, kappa=nu / 2.0, delta=delta,
                           max_matvecs=max_matvecs, rng_seed=rng_seed)


def negative_curvature_direction(hessian: HessianOperator, eps_H: float,
                                 nu: float, delta: float,
                                 rng_seed: int | np.random.Generator = 0,
                                 max_matvecs: int | None = None
                                 ) -> CurvatureResult | None:
    """Search for u with <u,Hu> <= -nu*eps_H*||u||^2.

    Returns None exactly when the probe converged and found nothing
    sufficient (a certificate that lambda_min(H) > -eps_H up to the probe's
    guarantee). An unconverged probe whose best Rayleigh quotient is above
    the threshold is returned as-is with converged=False: inconclusive, and
    callers must not treat it as an optimality certificate.
    """
    _validate_nu(nu, hessian.norm_bound, eps_H)
    result = probe_extreme(hessian, eps_H, nu, delta, rng_seed=rng_seed,
                           max_matvecs=max_matvecs)
    if result.rayleigh <= -nu * eps_H:
        return result
    if not result.converged:
        return result
    return None


def _validate_nu(nu: float, norm_bound: float, eps_H: float) -> None:
    if not (0.0 < nu < 1.0):
        raise ConfigurationError(f"nu must lie in (0, 1), got {nu}")
    floor = min_valid_nu(norm_bound, eps_H)
    if nu < floor - 1e-12:
        raise ConfigurationError(
            f"nu={nu} violates nu >= 2K_H/(2K_H + eps_H) = {floor}")
