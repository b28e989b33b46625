import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subnewton.core import CertificateError
from subnewton.subproblem import (CubicModel, TRModel, arc_cauchy_point,
                                  arc_certificates, arc_eigen_point,
                                  arc_progressive_solve, arc_subspace_solve,
                                  tr_cauchy_point, tr_certificates,
                                  tr_eigen_point, tr_subspace_solve)

from conftest import dense_operator, random_symmetric


def tr_model(g, h, radius, norm_bound=None):
    return TRModel(grad=np.asarray(g, dtype=float),
                   hessian=dense_operator(h, norm_bound=norm_bound),
                   radius=radius)


def cubic_model(g, h, sigma, norm_bound=None):
    return CubicModel(grad=np.asarray(g, dtype=float),
                      hessian=dense_operator(h, norm_bound=norm_bound),
                      sigma=sigma)


def scan_tr_ray(model, points=10**6):
    """Best tau in [0, 1] for m(-tau * Delta * g/||g||) on a uniform grid."""
    g = model.grad
    gn = np.linalg.norm(g)
    ghg = float(g @ (model.hessian.apply(g))) / gn**2
    taus = np.linspace(0.0, 1.0, points)
    vals = -taus * model.radius * gn + 0.5 * (taus * model.radius) ** 2 * ghg
    k = int(np.argmin(vals))
    return taus[k], vals[k]


def scan_arc_ray(model, alpha_lo, alpha_hi, points=10**6):
    """Best alpha in [alpha_lo, alpha_hi] for m(-alpha * g) on a uniform grid."""
    g = model.grad
    gn = float(np.linalg.norm(g))
    ghg = float(g @ model.hessian.apply(g))
    alphas = np.linspace(alpha_lo, alpha_hi, points)
    vals = (-alphas * gn**2 + 0.5 * alphas**2 * ghg
            + model.sigma / 3.0 * (alphas * gn) ** 3)
    k = int(np.argmin(vals))
    return alphas[k], vals[k]


class TestTRCauchyPoint:
    def test_unconstrained_quadratic_minimum(self):
        sol = tr_cauchy_point(tr_model([1.0, 0.0], np.eye(2), 10.0))
        assert np.allclose(sol.step, [-1.0, 0.0], atol=1e-12)
        assert sol.model_value == pytest.approx(-0.5)
        assert sol.certificates.cauchy_met

    def test_negative_curvature_pushes_to_boundary(self):
        sol = tr_cauchy_point(tr_model([1.0, 0.0], -np.eye(2), 2.0))
        assert np.allclose(sol.step, [-2.0, 0.0], atol=1e-12)
        assert sol.model_value == pytest.approx(-4.0)

    def test_zero_gradient_rejected(self):
        with pytest.raises(ValueError):
            tr_cauchy_point(tr_model([0.0, 0.0], np.eye(2), 1.0))

    def test_matches_grid_scan(self, rng):
        for _ in range(10):
            model = tr_model(rng.standard_normal(5), random_symmetric(rng, 5), 1.0)
            sol = tr_cauchy_point(model)
            tau_star = np.linalg.norm(sol.step) / model.radius
            tau_grid, val_grid = scan_tr_ray(model)
            assert abs(tau_star - tau_grid) < 1e-6
            assert sol.model_value <= val_grid + 1e-9


class TestTREigenPoint:
    def test_orthogonal_gradient_sign_free(self):
        model = tr_model([1.0, 0.0], np.diag([1.0, -2.0]), 1.0)
        sol = tr_eigen_point(model, np.array([0.0, 1.0]))
        assert abs(sol.step[1]) == pytest.approx(1.0)
        assert sol.model_value == pytest.approx(-1.0)

    def test_sign_follows_negative_gradient(self):
        model = tr_model([0.0, 1.0], np.diag([1.0, -2.0]), 2.0)
        sol = tr_eigen_point(model, np.array([0.0, 1.0]))
        assert np.allclose(sol.step, [0.0, -2.0])
        assert sol.model_value == pytest.approx(-6.0)

    def test_nonnegative_curvature_rejected(self):
        model = tr_model([1.0, 0.0], np.eye(2), 1.0)
        with pytest.raises(CertificateError):
            tr_eigen_point(model, np.array([0.0, 1.0]))

    def test_realized_curvature_certificate(self, rng):
        for _ in range(20):
            h = random_symmetric(rng, 6)
            lam, q = np.linalg.eigh(h)
            if lam[0] >= 0:
                continue
            model = tr_model(rng.standard_normal(6), h, float(rng.uniform(0.2, 3.0)))
            sol = tr_eigen_point(model, q[:, 0])
            nu_hat = sol.certificates.nu_hat
            assert -sol.model_value >= 0.5 * nu_hat * model.radius**2 - 1e-9
            assert sol.certificates.eigen_met


class TestTRSubspace:
    def test_single_direction_reduces_to_cauchy(self, rng):
        h = random_symmetric(rng, 4)
        h = h @ h.T + 0.1 * np.eye(4)  # PSD
        g = rng.standard_normal(4)
        model = tr_model(g, h, 0.7)
        cauchy = tr_cauchy_point(model)
        sub = tr_subspace_solve(model, [g])
        assert sub.model_value == pytest.approx(cauchy.model_value, abs=1e-10)

    def test_full_2d_matches_brute_force(self, rng):
        for _ in range(8):
            h = random_symmetric(rng, 2)
            g = rng.standard_normal(2)
            radius = float(rng.uniform(0.3, 2.0))
            model = tr_model(g, h, radius)
            sol = tr_subspace_solve(model, [np.eye(2)[:, 0], np.eye(2)[:, 1]])
            # Dense brute force over the disk.
            grid = np.linspace(-radius, radius, 1500)
            xx, yy = np.meshgrid(grid, grid)
            pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
            pts = pts[np.linalg.norm(pts, axis=1) <= radius]
            vals = pts @ g + 0.5 * np.einsum("ij,jk,ik->i", pts, h, pts)
            assert sol.model_value <= float(vals.min()) + 1e-4
            assert np.linalg.norm(sol.step) <= radius * (1 + 1e-12)

    def test_dominates_both_seeds(self, rng):
        for _ in range(20):
            d = 6
            h = random_symmetric(rng, d)
            g = rng.standard_normal(d)
            radius = float(rng.uniform(0.2, 2.0))
            model = tr_model(g, h, radius)
            cauchy = tr_cauchy_point(model)
            basis = [g, model.hessian.apply(g)]
            seeds = [cauchy.model_value]
            lam, q = np.linalg.eigh(h)
            if lam[0] < 0:
                eigen = tr_eigen_point(model, q[:, 0])
                basis.append(q[:, 0])
                seeds.append(eigen.model_value)
            sol = tr_subspace_solve(model, basis)
            assert sol.model_value <= min(seeds) + 1e-9

    def test_hard_case(self):
        # Gradient orthogonal to the bottom eigenspace forces the boundary
        # solution with an added eigenvector component.
        h = np.diag([-2.0, 1.0])
        g = np.array([0.0, 0.5])
        model = tr_model(g, h, 1.0)
        sol = tr_subspace_solve(model, [np.eye(2)[:, 0], np.eye(2)[:, 1]])
        assert np.linalg.norm(sol.step) == pytest.approx(1.0, abs=1e-9)
        grid = np.linspace(-1, 1, 2001)
        xx, yy = np.meshgrid(grid, grid)
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        pts = pts[np.linalg.norm(pts, axis=1) <= 1.0]
        vals = pts @ g + 0.5 * np.einsum("ij,jk,ik->i", pts, h, pts)
        assert sol.model_value <= float(vals.min()) + 1e-4

    def test_rank_deficient_basis_dropped(self, rng):
        h = random_symmetric(rng, 3)
        g = rng.standard_normal(3)
        model = tr_model(g, h, 1.0)
        sol_a = tr_subspace_solve(model, [g, 2.0 * g, g + 1e-15 * np.ones(3)])
        sol_b = tr_subspace_solve(model, [g])
        assert sol_a.model_value == pytest.approx(sol_b.model_value, abs=1e-10)


class TestARCCauchyPoint:
    def test_zero_hessian_analytic_root(self):
        sol = arc_cauchy_point(cubic_model([1.0, 0.0], np.zeros((2, 2)), 1.0,
                                           norm_bound=0.0))
        assert np.allclose(sol.step, [-1.0, 0.0], atol=1e-12)
        assert sol.model_value == pytest.approx(-2.0 / 3.0)

    def test_identity_hessian_golden_root(self):
        sol = arc_cauchy_point(cubic_model([1.0, 0.0], np.eye(2), 1.0))
        alpha = (np.sqrt(5.0) - 1.0) / 2.0
        assert np.linalg.norm(sol.step) == pytest.approx(alpha, abs=1e-12)
        assert -sol.model_value >= 1.0 / (2.0 * np.sqrt(3.0)) - 1e-12
        assert sol.certificates.cauchy_met

    def test_grid_scan_global_minimality(self, rng):
        for _ in range(10):
            model = cubic_model(rng.standard_normal(5), random_symmetric(rng, 5),
                                float(rng.uniform(0.05, 5.0)))
            sol = arc_cauchy_point(model)
            gn = float(np.linalg.norm(model.grad))
            alpha_star = np.linalg.norm(sol.step) / gn
            # 1e6 points over a unit-width window: spacing < 1e-6 in alpha.
            lo = max(0.0, alpha_star - 0.5)
            alpha_grid, val_grid = scan_arc_ray(model, lo, lo + 1.0)
            assert abs(alpha_star - alpha_grid) <= 1e-6 * max(1.0, alpha_star)
            assert sol.model_value <= val_grid + 1e-9

    def test_step_norm_lower_bound(self, rng):
        # ||s_C|| >= (sqrt(K^2 + 4 sigma ||g||) - K) / (2 sigma)
        for _ in range(20):
            model = cubic_model(rng.standard_normal(4), random_symmetric(rng, 4),
                                float(rng.uniform(0.1, 4.0)))
            sol = arc_cauchy_point(model)
            k = model.hessian.norm_bound
            gn = float(np.linalg.norm(model.grad))
            lower = (np.sqrt(k * k + 4 * model.sigma * gn) - k) / (2 * model.sigma)
            assert np.linalg.norm(sol.step) >= lower * (1 - 1e-12)


class TestARCEigenPoint:
    def test_near_zero_gradient_analytic(self):
        model = cubic_model([1e-16, 0.0], np.diag([1.0, -2.0]), 1.0)
        sol = arc_eigen_point(model, np.array([0.0, 1.0]))
        assert np.linalg.norm(sol.step) == pytest.approx(2.0, abs=1e-9)
        assert sol.model_value == pytest.approx(-4.0 / 3.0, abs=1e-9)

    def test_sign_choice_by_gradient(self):
        model = cubic_model([0.0, 1.0], np.diag([1.0, -2.0]), 1.0)
        sol = arc_eigen_point(model, np.array([0.0, 1.0]))
        assert sol.step[1] < 0
        # 1-D grid cross-check.
        alphas = np.linspace(-4, 4, 10**6)
        vals = alphas + 0.5 * (-2.0) * alphas**2 + (1.0 / 3.0) * np.abs(alphas) ** 3
        assert sol.model_value <= float(vals.min()) + 1e-9

    def test_sigma_step_inequality(self, rng):
        # sigma * ||s_E|| >= nu_hat always.
        for _ in range(20):
            h = random_symmetric(rng, 5)
            lam, q = np.linalg.eigh(h)
            if lam[0] >= 0:
                continue
            model = cubic_model(rng.standard_normal(5), h,
                                float(rng.uniform(0.1, 5.0)))
            sol = arc_eigen_point(model, q[:, 0])
            nu_hat = sol.certificates.nu_hat
            assert model.sigma * np.linalg.norm(sol.step) >= nu_hat * (1 - 1e-12)
            assert sol.certificates.eigen_met

    def test_grid_cross_check(self, rng):
        for _ in range(8):
            h = random_symmetric(rng, 4)
            lam, q = np.linalg.eigh(h)
            if lam[0] >= 0:
                continue
            model = cubic_model(rng.standard_normal(4), h, 1.0)
            sol = arc_eigen_point(model, q[:, 0])
            span = 3.0 * np.linalg.norm(sol.step) + 1.0
            alphas = np.linspace(-span, span, 10**6)
            b = float(model.grad @ q[:, 0])
            vals = (b * alphas + 0.5 * lam[0] * alphas**2
                    + model.sigma / 3.0 * np.abs(alphas) ** 3)
            assert sol.model_value <= float(vals.min()) + 1e-8


class TestARCSubspace:
    def test_gradient_span_with_psd_matches_cauchy(self, rng):
        h = random_symmetric(rng, 4)
        h = h @ h.T + 0.05 * np.eye(4)
        g = rng.standard_normal(4)
        model = cubic_model(g, h, 0.8)
        cauchy = arc_cauchy_point(model)
        sub = arc_subspace_solve(model, [g])
        assert sub.model_value == pytest.approx(cauchy.model_value, abs=1e-10)

    def test_full_2d_matches_grid(self, rng):
        for _ in range(6):
            h = random_symmetric(rng, 2)
            g = rng.standard_normal(2)
            model = cubic_model(g, h, float(rng.uniform(0.3, 2.0)))
            sol = arc_subspace_solve(model, [np.eye(2)[:, 0], np.eye(2)[:, 1]])
            grid = np.linspace(-3.0, 3.0, 1500)
            xx, yy = np.meshgrid(grid, grid)
            pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
            norms = np.linalg.norm(pts, axis=1)
            vals = (pts @ g + 0.5 * np.einsum("ij,jk,ik->i", pts, h, pts)
                    + model.sigma / 3.0 * norms**3)
            assert sol.model_value <= float(vals.min()) + 1e-4

    def test_dominates_seeds(self, rng):
        for _ in range(20):
            d = 5
            h = random_symmetric(rng, d)
            g = rng.standard_normal(d)
            model = cubic_model(g, h, float(rng.uniform(0.1, 3.0)))
            cauchy = arc_cauchy_point(model)
            basis = [cauchy.step, g, model.hessian.apply(g)]
            seeds = [cauchy.model_value]
            lam, q = np.linalg.eigh(h)
            if lam[0] < 0:
                eigen = arc_eigen_point(model, q[:, 0])
                basis.append(eigen.step)
                seeds.append(eigen.model_value)
            sol = arc_subspace_solve(model, basis)
            assert sol.model_value <= min(seeds) + 1e-9

    def test_hard_case_zero_gradient_component(self):
        # Pure negative-curvature reduced problem: g = 0 along the bottom
        # eigenvector; the exact solve lands at ||v|| = |lambda|/sigma.
        h = np.diag([-1.5, 2.0])
        g = np.array([0.0, 1.0])
        model = cubic_model(g, h, 0.5)
        sol = arc_subspace_solve(model, [np.eye(2)[:, 0], np.eye(2)[:, 1]])
        grid = np.linspace(-5.0, 5.0, 3000)
        xx, yy = np.meshgrid(grid, grid)
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        norms = np.linalg.norm(pts, axis=1)
        vals = (pts @ g + 0.5 * np.einsum("ij,jk,ik->i", pts, h, pts)
                + model.sigma / 3.0 * norms**3)
        assert sol.model_value <= float(vals.min()) + 1e-3


class TestARCProgressive:
    def test_exact_at_full_dimension(self, rng):
        for _ in range(5):
            h = random_symmetric(rng, 2)
            g = rng.standard_normal(2)
            model = cubic_model(g, h, 1.0)
            cauchy = arc_cauchy_point(model)
            sol = arc_progressive_solve(model, [cauchy.step], zeta=1e-9)
            assert sol.certificates.cond5_met
            assert sol.model_grad_norm <= 1e-8

    def test_terminates_early_on_quadratic_dominant(self, rng):
        d = 30
        h = random_symmetric(rng, d)
        h = h @ h.T + np.eye(d)  # PD, sigma tiny: essentially Newton
        g = rng.standard_normal(d)
        model = cubic_model(g, h, 1e-6)
        cauchy = arc_cauchy_point(model)
        sol = arc_progressive_solve(model, [cauchy.step], zeta=0.4, max_dim=d)
        assert sol.certificates.cond5_met
        # Certificate inequality re-derived from scratch.
        fresh = arc_certificates(model, sol.step, zeta=0.4)
        assert fresh.cond5_met == sol.certificates.cond5_met

    def test_long_step_branch_arithmetic(self, rng):
        # For ||s|| >= 1 the bound reduces to zeta * ||s||^2.
        h = np.diag([-2.0, 1.0])
        g = np.array([1e-12, 0.0])
        model = cubic_model(g, h, 0.4)  # eigen step length 2/0.4 = 5 >= 1
        lam, q = np.linalg.eigh(h)
        eigen = arc_eigen_point(model, q[:, 0])
        sol = arc_progressive_solve(model, [eigen.step], zeta=0.3)
        sn = float(np.linalg.norm(sol.step))
        assert sn >= 1.0
        bound = 0.3 * max(sn**2, min(1.0, sn) * float(np.linalg.norm(g)))
        assert bound == pytest.approx(0.3 * sn**2)
        assert sol.model_grad_norm <= bound * (1 + 1e-9)


class TestCertificateChecker:
    def test_stored_flags_rederivable(self, rng):
        for _ in range(20):
            d = 5
            h = random_symmetric(rng, d)
            g = rng.standard_normal(d)
            tr = tr_model(g, h, float(rng.uniform(0.2, 2.0)))
            sol = tr_cauchy_point(tr)
            fresh = tr_certificates(tr, sol.step)
            assert fresh.cauchy_met == sol.certificates.cauchy_met
            assert fresh.cauchy_slack == pytest.approx(sol.certificates.cauchy_slack,
                                                       abs=1e-12)
            arc = cubic_model(g, h, float(rng.uniform(0.1, 2.0)))
            sol2 = arc_cauchy_point(arc)
            fresh2 = arc_certificates(arc, sol2.step)
            assert fresh2.cauchy_met == sol2.certificates.cauchy_met

    @given(scale=st.floats(0.1, 10.0))
    @settings(max_examples=30, deadline=None)
    def test_cauchy_certificate_scales(self, scale):
        model = cubic_model([scale, 0.0], np.eye(2), 1.0)
        sol = arc_cauchy_point(model)
        assert sol.certificates.cauchy_met
