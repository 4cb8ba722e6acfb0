"""Growth-rate extrapolation models: recovery and forecast structure."""

import datetime as dt
import math

import numpy as np
import pytest

from hospcast.errors import ValidationError
from hospcast.models.univariate import (
    UnivariateModelSpec,
    fit_baseline,
    fit_hgam,
    predict_log_mean,
)
from hospcast.synthgen import WaveScenario, generate

D = dt.date


def exponential_panel(rates, baselines, span=70, theta=math.inf, seed=0, weekday=None):
    """One region, one trust per rate, exact or noisy exponentials."""
    n_trusts = len(rates)
    sc = WaveScenario(
        name="exp",
        n_regions=n_trusts,
        trusts_per_region=1,
        span_days=span,
        rate_schedules=tuple(((0, r),) for r in rates),
        baseline_log_levels=tuple(math.log(b) for b in baselines),
        weekday_multipliers=weekday or (1.0,) * 7,
        theta=theta,
        seed=seed,
    )
    return generate(sc).admissions


def shared_trend_panel(n_trusts, rate, span=70, theta=math.inf, seed=0, flip_last=False):
    rates = [rate] * n_trusts
    if flip_last:
        rates[-1] = -rate
    sc = WaveScenario(
        name="shared",
        n_regions=1,
        trusts_per_region=n_trusts,
        span_days=span,
        rate_schedules=(tuple((0, r) for r in [rate]),),
        baseline_log_levels=tuple(math.log(60.0) for _ in range(n_trusts)),
        weekday_multipliers=(1.0,) * 7,
        theta=theta,
        seed=seed,
    )
    data = generate(sc)
    if flip_last:
        # Replace the last trust's counts with an opposite trend.
        import numpy as np
        from hospcast.domain import AdmissionPanel, AdmissionSeries

        series = dict(data.admissions.series)
        last = sorted(series)[-1]
        t = np.arange(span)
        mu = 60.0 * np.exp(rate * (span - 1)) * np.exp(-rate * t)
        series[last] = AdmissionSeries(last, series[last].region_id,
                                       series[last].start_date, np.rint(mu))
        return AdmissionPanel(series)
    return data.admissions


class TestBaseline:
    def test_recovers_growth_rate_exactly(self):
        panel = exponential_panel([0.05], [50.0])
        fit = fit_baseline(panel, UnivariateModelSpec("baseline", 7, 56))
        assert fit.s1("T0101") == pytest.approx(0.05, abs=0.01)

    def test_flat_data_zero_growth(self):
        panel = exponential_panel([0.0], [40.0])
        fit = fit_baseline(panel)
        assert fit.s1("T0101") == pytest.approx(0.0, abs=0.01)

    def test_two_trusts_no_pooling(self):
        panel = shared_trend_panel(2, 0.04, flip_last=True)
        fit = fit_baseline(panel)
        trusts = sorted(panel.trust_ids)
        assert fit.s1(trusts[0]) == pytest.approx(0.04, abs=0.012)
        assert fit.s1(trusts[1]) == pytest.approx(-0.04, abs=0.012)


class TestHGAM:
    def test_shared_trend_deviations_near_zero(self):
        panel = shared_trend_panel(4, 0.05, theta=200.0, seed=5)
        fit = fit_hgam(panel)
        rf = fit.regions["R1"]
        # With one shared exponential, per-trust log-mean deviations from
        # the regional trend stay small across the window.
        t = np.arange(fit.spec.train_window_days, dtype=float)
        for trust in panel.trust_ids:
            dev_cols = [
                i for i, l in enumerate(rf.model.labels) if l.startswith(f"s({trust})")
            ]
            from hospcast.engine.design import CenteredSplineBlock, build_spline_basis

            dev = CenteredSplineBlock(build_spline_basis(t, 14), t)
            contribution = dev.design(t) @ rf.model.coefficients[dev_cols]
            assert np.max(np.abs(contribution)) < 0.05
        s1s = [fit.s1(t) for t in panel.trust_ids]
        assert np.allclose(s1s, 0.05, atol=0.015)

    def test_outlier_trust_absorbed_by_deviation(self):
        panel = shared_trend_panel(4, 0.03, flip_last=True)
        fit = fit_hgam(panel)
        trusts = sorted(panel.trust_ids)
        # Majority trend recovered for the first trusts, outlier flipped.
        assert fit.s1(trusts[0]) == pytest.approx(0.03, abs=0.015)
        assert fit.s1(trusts[-1]) == pytest.approx(-0.03, abs=0.015)
        # Held-out check: forecasts stay close to each trust's own trend.
        horizon = [panel.end_date + dt.timedelta(days=k) for k in range(1, 8)]
        for trust, rate in [(trusts[0], 0.03), (trusts[-1], -0.03)]:
            lm = predict_log_mean(fit, trust, horizon)
            base = predict_log_mean(fit, trust, [panel.end_date + dt.timedelta(days=1)])
            slope = (lm[-1] - lm[0]) / 6.0
            assert slope == pytest.approx(rate, abs=0.015)

    def test_single_trust_region_rejected(self):
        panel = exponential_panel([0.02], [30.0])
        with pytest.raises(ValidationError, match=">= 2 trusts"):
            fit_hgam(panel)

    def test_agreement_with_baseline_on_homogeneous_data(self):
        panel = shared_trend_panel(3, 0.045, theta=300.0, seed=9)
        hg = fit_hgam(panel)
        bl = fit_baseline(panel)
        for trust in panel.trust_ids:
            assert abs(hg.s1(trust) - bl.s1(trust)) < 0.02


class TestPredictLogMean:
    def test_closed_form_extrapolation(self):
        panel = exponential_panel([0.05], [50.0])
        fit = fit_baseline(panel)
        rf = fit.regions[fit.region_ids[0]]
        t_max = fit.t_max
        lm0 = predict_log_mean(fit, "T0101", [t_max + dt.timedelta(days=1)])
        lm7 = predict_log_mean(fit, "T0101", [t_max + dt.timedelta(days=8)])
        s1 = fit.s1("T0101")
        wd1 = rf.weekday_effect(t_max + dt.timedelta(days=1))
        wd8 = rf.weekday_effect(t_max + dt.timedelta(days=8))
        assert lm7[0] - wd8 - (lm0[0] - wd1) == pytest.approx(7 * s1, abs=1e-9)

    def test_affine_in_horizon_without_weekday(self):
        panel = exponential_panel([0.03], [45.0])
        fit = fit_baseline(panel)
        rf = fit.regions[fit.region_ids[0]]
        dates = [fit.t_max + dt.timedelta(days=k) for k in range(1, 22)]
        lm = predict_log_mean(fit, "T0101", dates)
        wd = np.array([rf.weekday_effect(d) for d in dates])
        detrended = lm - wd
        second_diff = np.diff(detrended, n=2)
        assert np.allclose(second_diff, 0.0, atol=1e-10)

    def test_past_dates_rejected(self):
        panel = exponential_panel([0.03], [45.0])
        fit = fit_baseline(panel)
        with pytest.raises(ValidationError, match="not after"):
            predict_log_mean(fit, "T0101", [fit.t_max])

    def test_weekday_effects_sum_near_zero(self):
        panel = exponential_panel(
            [0.02], [80.0], theta=100.0, weekday=(0.95, 1.05, 1.05, 1.0, 1.0, 0.95, 1.0)
        )
        fit = fit_baseline(panel)
        rf = fit.regions[fit.region_ids[0]]
        effects = [
            rf.model.coefficient(f"wday:{w}")
            for w in ["mon", "tue", "wed", "thu", "fri", "sat", "sun"]
        ]
        assert abs(np.mean(effects)) < 0.05


class TestSpecValidation:
    def test_window_must_cover_knots(self):
        with pytest.raises(ValidationError):
            UnivariateModelSpec("baseline", knot_spacing_days=14, train_window_days=28)

    def test_unknown_variant(self):
        with pytest.raises(ValidationError):
            UnivariateModelSpec("quadratic")
