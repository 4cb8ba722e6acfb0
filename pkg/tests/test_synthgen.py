"""Synthetic scenario generator: determinism, moments, lead structure."""

import math

import numpy as np
import pytest

from hospcast.domain import map_indicators_to_trusts
from hospcast.errors import ValidationError
from hospcast.smoothing import detect_wave_phases
from hospcast.synthgen import (
    IndicatorSpec,
    WaveScenario,
    bundled_scenarios,
    generate,
)


def simple_scenario(**overrides):
    base = dict(
        name="test",
        n_regions=1,
        trusts_per_region=2,
        span_days=70,
        rate_schedules=(((0, 0.0),),),
        baseline_log_levels=(math.log(40.0), math.log(25.0)),
        weekday_multipliers=(1.0,) * 7,
        theta=math.inf,
        indicators=(),
        seed=3,
    )
    base.update(overrides)
    return WaveScenario(**base)


class TestGenerate:
    def test_no_noise_constant_at_baseline(self):
        data = generate(simple_scenario())
        assert np.all(data.admissions.series["T0101"].counts == 40)
        assert np.all(data.admissions.series["T0102"].counts == 25)

    def test_determinism(self):
        sc = simple_scenario(theta=8.0, indicators=(IndicatorSpec("g", 5, 0.1),))
        a, b = generate(sc), generate(sc)
        for t in a.admissions.trust_ids:
            assert np.array_equal(
                a.admissions.series[t].counts, b.admissions.series[t].counts
            )
        for key in a.indicators.series:
            assert np.array_equal(
                a.indicators.series[key].values, b.indicators.series[key].values
            )

    def test_weekly_ratio_matches_growth_rate(self):
        sc = simple_scenario(
            rate_schedules=(((0, 0.1),),),
            baseline_log_levels=(math.log(200.0), math.log(200.0)),
            theta=50.0,
        )
        data = generate(sc)
        national = data.admissions.national().astype(float)
        ratios = national[7:] / national[:-7]
        assert np.median(ratios) == pytest.approx(math.exp(0.7), rel=0.10)

    def test_mean_matches_truth(self):
        sc = simple_scenario(
            span_days=400,
            baseline_log_levels=(math.log(50.0), math.log(50.0)),
            theta=10.0,
        )
        data = generate(sc)
        for t in data.admissions.trust_ids:
            counts = data.admissions.series[t].counts
            mu = np.exp(data.truth_log_means[t])
            assert counts.mean() == pytest.approx(mu.mean(), rel=0.02)

    def test_lead_via_cross_correlation(self):
        delta = 10
        sc = simple_scenario(
            n_regions=1,
            trusts_per_region=1,
            span_days=120,
            rate_schedules=(((0, 0.04), (60, -0.04)),),
            baseline_log_levels=(math.log(80.0),),
            indicators=(IndicatorSpec("g", delta, 0.0),),
        )
        data = generate(sc)
        trust_panel = map_indicators_to_trusts(data.indicators, data.catchment)
        x = trust_panel.get("T0101", "g").values
        y = np.exp(data.truth_log_means["T0101"])
        lags = range(0, 21)
        corr = [np.corrcoef(x[: len(x) - k], y[k:])[0, 1] for k in lags]
        assert abs(int(np.argmax(corr)) - delta) <= 1

    def test_catchment_includes_split_ltlas(self):
        data = generate(simple_scenario())
        split = [l for l in data.catchment.ltla_ids if l.count("T") > 1]
        assert split, "expected at least one split LTLA"


class TestBundledScenarios:
    def test_ba45_peak_in_band(self):
        data = generate(bundled_scenarios(seed=1)["ba45-like"])
        national = data.admissions.national()
        weekly = np.convolve(national, np.ones(7) / 7, mode="valid")
        assert 1000 <= weekly.max() <= 1400

    def test_winter_peak_about_half(self):
        scenarios = bundled_scenarios(seed=1)
        ba45 = generate(scenarios["ba45-like"]).admissions.national()
        winter = generate(scenarios["winter-like"]).admissions.national()
        smooth = lambda y: np.convolve(y, np.ones(7) / 7, mode="valid").max()
        assert smooth(winter) == pytest.approx(smooth(ba45) / 2, rel=0.30)

    def test_flat_scenario_has_no_wave(self):
        data = generate(bundled_scenarios(seed=1)["flat"])
        with pytest.raises(ValidationError):
            detect_wave_phases(data.admissions.national(), data.scenario.start_date)

    def test_all_scenarios_generate(self):
        for name, sc in bundled_scenarios(seed=2).items():
            data = generate(sc)
            assert data.admissions.national().min() >= 0, name
