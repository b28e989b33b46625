import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subnewton.core import (CertificateError, ConfigurationError, NonFiniteError,
                            OptimalityTolerances, acceptance_ratio,
                            check_first_order, check_second_order, densify,
                            operator_from_dense, symmetry_defect)
from subnewton.curvature import negative_curvature_direction

from conftest import dense_operator, random_symmetric


class TestCheckFirstOrder:
    def test_zero_gradient(self):
        tol = OptimalityTolerances(eps_g=0.1, eps_H=0.1)
        assert check_first_order(np.zeros(2), tol)

    def test_boundary_inclusive(self):
        # 3-4-5 triangle: the norm is exactly 0.5.
        tol = OptimalityTolerances(eps_g=0.5, eps_H=0.1)
        assert check_first_order(np.array([0.3, 0.4]), tol)

    def test_large_gradient(self):
        tol = OptimalityTolerances(eps_g=0.5, eps_H=0.1)
        assert not check_first_order(np.array([1.0, 0.0]), tol)

    def test_non_finite_rejected(self):
        tol = OptimalityTolerances(eps_g=0.5, eps_H=0.1)
        with pytest.raises(NonFiniteError):
            check_first_order(np.array([np.nan, 0.0]), tol)


class TestCheckSecondOrder:
    @staticmethod
    def probe(hessian, eps_h):
        from subnewton.curvature import min_valid_nu
        nu = min(0.999, max(0.9, min_valid_nu(hessian.norm_bound, eps_h) + 1e-9))
        return negative_curvature_direction(hessian, eps_h, nu=nu, delta=0.01,
                                            rng_seed=7)

    def test_identity_is_optimal(self):
        tol = OptimalityTolerances(eps_g=0.1, eps_H=0.1)
        assert check_second_order(dense_operator(np.eye(3)), tol, self.probe)

    def test_explicit_negative_eigenvector(self):
        tol = OptimalityTolerances(eps_g=0.1, eps_H=0.5)
        op = dense_operator(np.diag([1.0, -1.0]))
        assert not check_second_order(op, tol, self.probe)

    def test_agrees_with_dense_eigendecomposition(self, rng):
        # Filter out the nu-gap band (-eps_H, -nu*eps_H] where the probe is
        # allowed to disagree with the exact test.
        tol = OptimalityTolerances(eps_g=0.1, eps_H=0.3)
        checked = 0
        for _ in range(30):
            h = random_symmetric(rng, 10)
            lam_min = float(np.linalg.eigvalsh(h)[0])
            if -tol.eps_H * 1.05 < lam_min < -tol.eps_H * 0.85:
                continue
            op = dense_operator(h)
            expected = lam_min >= -tol.eps_H
            assert check_second_order(op, tol, self.probe) == expected
            checked += 1
        assert checked >= 20


class TestAcceptanceRatio:
    def test_exact_model(self):
        assert acceptance_ratio(1.0, 0.5, 0.5) == 1.0

    def test_increase_gives_negative_rho(self):
        assert acceptance_ratio(1.0, 1.2, 0.5) == pytest.approx(-0.4)

    def test_nonpositive_model_decrease_rejected(self):
        with pytest.raises(CertificateError):
            acceptance_ratio(1.0, 0.5, 0.0)
        with pytest.raises(CertificateError):
            acceptance_ratio(1.0, 0.5, -1.0)

    @given(f_old=st.floats(-100, 100), drop=st.floats(-50, 50),
           decrease=st.floats(1e-6, 100), c=st.floats(1e-3, 1e3))
    @settings(max_examples=100, deadline=None)
    def test_scale_equivariance(self, f_old, drop, decrease, c):
        f_new = f_old - drop
        rho = acceptance_ratio(f_old, f_new, decrease)
        rho_scaled = acceptance_ratio(c * f_old, c * f_new, c * decrease)
        # The subtraction's cancellation bounds the achievable agreement.
        atol = 1e-12 * (1.0 + abs(f_old) + abs(f_new)) / decrease
        assert rho_scaled == pytest.approx(rho, rel=1e-9, abs=4 * atol)

    def test_quadratic_objective_has_unit_ratio(self, rng):
        # For F(x) = 0.5 x'Ax + b'x with the exact Hessian, the quadratic
        # model is exact, so rho = 1 for any step.
        a = random_symmetric(rng, 5)
        b = rng.standard_normal(5)
        x = rng.standard_normal(5)
        s = rng.standard_normal(5)

        def f(p):
            return 0.5 * p @ a @ p + b @ p

        grad = a @ x + b
        model_value = grad @ s + 0.5 * s @ a @ s
        rho = acceptance_ratio(f(x), f(x + s), -model_value) if model_value < 0 else None
        if rho is not None:
            assert rho == pytest.approx(1.0, rel=1e-9)


class TestOperators:
    def test_symmetry_probe(self, rng):
        for _ in range(5):
            op = dense_operator(random_symmetric(rng, 8))
            assert symmetry_defect(op, rng, probes=20) < 1e-10

    def test_densify_roundtrip(self, rng):
        h = random_symmetric(rng, 6)
        assert np.allclose(densify(dense_operator(h)), h, atol=1e-12)

    def test_norm_bound_default_is_spectral_norm(self, rng):
        h = random_symmetric(rng, 7)
        op = operator_from_dense(h)
        assert op.norm_bound == pytest.approx(np.max(np.abs(np.linalg.eigvalsh(h))))

    def test_norm_bound_holds_on_probes(self, rng):
        h = random_symmetric(rng, 9)
        op = operator_from_dense(h)
        for _ in range(20):
            v = rng.standard_normal(9)
            assert np.linalg.norm(op(v)) <= op.norm_bound * np.linalg.norm(v) * (1 + 1e-12)


class TestTolerances:
    def test_range_validation(self):
        with pytest.raises(ConfigurationError):
            OptimalityTolerances(eps_g=0.0, eps_H=0.1)
        with pytest.raises(ConfigurationError):
            OptimalityTolerances(eps_g=0.1, eps_H=1.5)

    def test_strict_coupling(self):
        OptimalityTolerances(eps_g=1e-4, eps_H=1e-2).require_tr_strict()
        with pytest.raises(ConfigurationError):
            OptimalityTolerances(eps_g=1e-4, eps_H=0.5).require_tr_strict()
