"""Coordinate-descent LASSO: selection, limits, KKT conditions."""

import datetime as dt

import numpy as np
import pytest

from hospcast.engine.design import DesignMatrix
from hospcast.engine.lasso import fit_lasso, quasipoisson_deviance
from hospcast.errors import ValidationError

D = dt.date


def lasso_design(columns, labels, n_unpenalized=1, start=D(2022, 1, 1)):
    """Design with a leading intercept and lasso-tagged feature columns."""
    n = len(columns[0])
    X = np.column_stack([np.ones(n)] + list(columns))
    dates = [start + dt.timedelta(days=i) for i in range(n)]
    return DesignMatrix(
        X,
        ["intercept"] + labels,
        unpenalized=list(range(n_unpenalized)),
        lasso=list(range(n_unpenalized, X.shape[1])),
        row_dates=dates,
    )


class TestSelection:
    def test_signal_kept_noise_dropped(self):
        rng = np.random.default_rng(42)
        n = 200
        x1 = np.sin(np.arange(n) / 20.0) + 0.1 * rng.normal(size=n)
        x2 = rng.normal(size=n)
        y = np.exp(2.0 * x1)
        dm = lasso_design([x1, x2], ["x1", "x2"])
        fit = fit_lasso(dm, y, n_folds=4)
        beta = dict(zip(fit.labels, fit.coefficients))
        assert beta["x2"] == pytest.approx(0.0, abs=1e-8)
        assert beta["x1"] == pytest.approx(2.0, rel=0.10)

    def test_huge_lambda_zeroes_everything(self):
        rng = np.random.default_rng(1)
        n = 80
        x1 = rng.normal(size=n)
        y = np.exp(0.5 + 0.8 * x1)
        dm = lasso_design([x1], ["x1"])
        with pytest.warns(UserWarning):
            fit = fit_lasso(dm, y, lambda_path=np.array([1e9, 2e9]), n_folds=3)
        assert fit.coefficients[dm.col("x1")] == 0.0

    def test_duplicated_column_splits_weight(self):
        rng = np.random.default_rng(5)
        n = 150
        x1 = np.cos(np.arange(n) / 15.0) + 0.05 * rng.normal(size=n)
        y = np.exp(1.5 * x1 + 0.02 * rng.normal(size=n))
        single = fit_lasso(lasso_design([x1], ["x1"]), y, n_folds=4)
        dup = fit_lasso(lasso_design([x1, x1.copy()], ["x1", "x1b"]), y, n_folds=4)
        b1 = single.coefficients[single.labels.index("x1")]
        pair = (
            dup.coefficients[dup.labels.index("x1")]
            + dup.coefficients[dup.labels.index("x1b")]
        )
        assert pair == pytest.approx(b1, rel=0.10)

    def test_all_zero_path_warns(self):
        rng = np.random.default_rng(9)
        n = 60
        x1 = rng.normal(size=n)
        y = np.exp(1.0 + 0.0 * x1 + 0.001 * rng.normal(size=n))
        dm = lasso_design([x1], ["x1"])
        with pytest.warns(UserWarning, match="intercept-only"):
            fit = fit_lasso(dm, y, lambda_path=np.array([50.0, 80.0]), n_folds=3)
        assert fit.all_zero_path


class TestKKT:
    def test_kkt_conditions_at_selected_lambda(self):
        rng = np.random.default_rng(17)
        n = 180
        cols = [rng.normal(size=n) for _ in range(6)]
        eta = 0.7 * cols[0] - 0.4 * cols[1]
        y = np.exp(eta + 0.05 * rng.normal(size=n))
        dm = lasso_design(cols, [f"x{j}" for j in range(6)])
        fit = fit_lasso(dm, y, n_folds=4)
        assert fit.kkt_zero_violation <= 1e-8
        assert fit.kkt_active_violation <= 1e-8


class TestContracts:
    def test_offset_fixed_coefficient(self):
        # Doubling the offset divides the fitted mean by nothing: the
        # offset passes straight through with coefficient 1.
        rng = np.random.default_rng(3)
        n = 90
        x1 = np.sin(np.arange(n) / 10.0)
        off = np.log(np.full(n, 250.0))
        y = 250.0 * np.exp(1.2 * x1)
        X = np.column_stack([np.ones(n), x1])
        dm = DesignMatrix(
            X,
            ["intercept", "x1"],
            unpenalized=[0],
            lasso=[1],
            offset=off,
            row_dates=[D(2022, 1, 1) + dt.timedelta(days=i) for i in range(n)],
        )
        fit = fit_lasso(dm, y, n_folds=3)
        eta = fit.linear_predictor(X, off)
        assert np.allclose(np.exp(eta), y, rtol=0.05)
        assert abs(fit.coefficients[0]) < 0.05

    def test_non_positive_response_rejected(self):
        dm = lasso_design([np.arange(10.0) + 1], ["x1"])
        with pytest.raises(ValidationError, match="positive"):
            fit_lasso(dm, np.zeros(10), n_folds=2)

    def test_requires_row_dates(self):
        X = np.column_stack([np.ones(10), np.arange(10.0) + 1])
        dm = DesignMatrix(X, ["i", "x"], unpenalized=[0], lasso=[1])
        with pytest.raises(ValidationError, match="row dates"):
            fit_lasso(dm, np.ones(10), n_folds=2)

    def test_deviance_zero_at_perfect_fit(self):
        y = np.array([2.0, 5.0, 9.0])
        assert quasipoisson_deviance(y, y) == pytest.approx(0.0, abs=1e-12)
