"""Spline basis construction and design-matrix contracts."""

import datetime as dt

import numpy as np
import pytest

from hospcast.engine.design import (
    CenteredSplineBlock,
    DesignMatrix,
    PenaltyGroup,
    SplineBasis,
    build_spline_basis,
    second_difference_penalty,
)
from hospcast.errors import ValidationError


class TestSplineBasis:
    def test_column_count_70_day_span_weekly_knots(self):
        # 70 daily observations, 7-day spacing: 10 knots spanning the data
        # (round(69/7) + 1 wait: construction rule), columns = knots + 2.
        basis = build_spline_basis(np.arange(70.0), 7)
        assert len(basis.knots) == 10
        assert basis.n_columns == 12

    def test_partition_of_unity(self):
        basis = build_spline_basis(np.arange(70.0), 7)
        t = np.linspace(0, 69, 211)
        rows = basis.design(t)
        assert np.allclose(rows.sum(axis=1), 1.0, atol=1e-9)

    def test_penalty_annihilates_linear_coefficients(self):
        n = 9
        P = second_difference_penalty(n)
        linear = 2.0 + 0.3 * np.arange(n)
        assert linear @ P @ linear == pytest.approx(0.0, abs=1e-12)

    def test_penalty_positive_semidefinite(self):
        P = second_difference_penalty(12)
        assert np.all(np.linalg.eigvalsh(P) >= -1e-12)

    def test_span_too_short_rejected(self):
        with pytest.raises(ValidationError, match=">= 4"):
            build_spline_basis(np.arange(10.0), 7)

    def test_derivative_matches_finite_differences(self):
        basis = build_spline_basis(np.arange(60.0), 7)
        rng = np.random.default_rng(1)
        coef = rng.normal(size=basis.n_columns)
        t = np.array([5.0, 20.0, 41.5, 58.0])
        h = 1e-6
        numeric = (basis.design(t + h) @ coef - basis.design(t - h) @ coef) / (2 * h)
        analytic = basis.derivative(t) @ coef
        assert np.allclose(analytic, numeric, atol=1e-5)

    def test_derivative_defined_at_right_boundary(self):
        basis = build_spline_basis(np.arange(60.0), 7)
        d = basis.derivative(np.array([59.0]))
        assert np.all(np.isfinite(d))

    def test_evaluation_outside_span_rejected(self):
        basis = SplineBasis(0.0, 10.0, 2.0)
        with pytest.raises(ValidationError):
            basis.design(np.array([11.0]))


class TestCenteredSplineBlock:
    def test_constraint_removes_constant_direction(self):
        t = np.arange(56.0)
        block = CenteredSplineBlock(build_spline_basis(t, 7), t)
        X = block.design(t)
        assert X.shape[1] == block.basis.n_columns - 1
        # No coefficient vector can reproduce a non-zero constant exactly:
        # the training-mean of every represented function is zero.
        assert np.allclose(X.mean(axis=0), 0.0, atol=1e-9)

    def test_affine_additions_never_change_penalty(self):
        t = np.arange(56.0)
        basis = build_spline_basis(t, 7)
        block = CenteredSplineBlock(basis, t)
        X = block.design(t)
        rng = np.random.default_rng(4)
        coef = rng.normal(size=block.n_columns)
        # Represent an affine function of t inside the constrained block.
        affine = 1.7 - 0.3 * t
        affine_coef, *_ = np.linalg.lstsq(X, affine - affine.mean(), rcond=None)
        assert np.allclose(X @ affine_coef, affine - affine.mean(), atol=1e-8)
        p0 = coef @ block.penalty @ coef
        p1 = (coef + affine_coef) @ block.penalty @ (coef + affine_coef)
        assert p1 == pytest.approx(p0, abs=1e-9)
        assert affine_coef @ block.penalty @ affine_coef == pytest.approx(0.0, abs=1e-10)


class TestDesignMatrix:
    def test_all_zero_column_rejected(self):
        X = np.ones((5, 2))
        X[:, 1] = 0.0
        with pytest.raises(ValidationError, match="all-zero"):
            DesignMatrix(X, ["a", "b"], unpenalized=[0, 1])

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            DesignMatrix(np.ones((4, 2)), ["a", "a"], unpenalized=[0, 1])

    def test_non_finite_rejected(self):
        X = np.ones((4, 2))
        X[0, 0] = np.nan
        with pytest.raises(ValidationError, match="non-finite"):
            DesignMatrix(X, ["a", "b"], unpenalized=[0, 1])

    def test_partition_must_cover_columns(self):
        with pytest.raises(ValidationError, match="partition"):
            DesignMatrix(np.ones((4, 2)), ["a", "b"], unpenalized=[0])

    def test_penalty_assembly(self):
        X = np.column_stack([np.ones(6), np.arange(6.0), np.arange(6.0) ** 2])
        g = PenaltyGroup("ridge", np.array([1, 2]), np.eye(2))
        dm = DesignMatrix(X, ["i", "t", "t2"], unpenalized=[0], groups=[g])
        S = dm.penalty_total({"ridge": 2.5})
        expected = np.zeros((3, 3))
        expected[1, 1] = expected[2, 2] = 2.5
        assert np.allclose(S, expected)
