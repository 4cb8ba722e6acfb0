"""Synthetic multi-trust admission waves with known ground truth.

Real admissions and syndromic feeds are access-controlled, so desk-scale
evaluation runs on generated data: piecewise-exponential regional trends,
per-trust baselines, day-of-week multipliers, negative-binomial counts,
and leading indicators built from the future mean so their lead time is
exact by construction. An infinite dispersion disables count noise.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import (
    AdmissionPanel,
    AdmissionSeries,
    CatchmentEntry,
    CatchmentMap,
    IndicatorPanel,
    IndicatorSeries,
    date_range,
)
from .engine.sampling import derive_seed, sample_negative_binomial
from .errors import ValidationError

# Geometric mean 1, so weekly totals stay on the trend level.
DEFAULT_WEEKDAY_MULTIPLIERS = (0.95, 1.05, 1.05, 1.0, 1.0, 0.95, 1.0)

SCENARIO_START = dt.date(2022, 3, 6)  # a Sunday


@dataclass(frozen=True)
class IndicatorSpec:
    """One synthetic leading indicator: value(t) ~ scale * mean(t + lead)."""

    indicator_id: str
    lead_days: int
    noise_sd: float = 0.0
    scale: float = 1.0


@dataclass(frozen=True)
class WaveScenario:
    name: str
    n_regions: int
    trusts_per_region: int
    span_days: int
    rate_schedules: tuple[tuple[tuple[int, float], ...], ...]  # per region: (start_day, rate/day)
    baseline_log_levels: tuple[float, ...]  # per trust
    weekday_multipliers: tuple[float, ...] = DEFAULT_WEEKDAY_MULTIPLIERS
    theta: float = 15.0  # inf -> deterministic rounded means
    indicators: tuple[IndicatorSpec, ...] = ()
    seed: int = 0
    start_date: dt.date = SCENARIO_START

    def __post_init__(self):
        if len(self.baseline_log_levels) != self.n_regions * self.trusts_per_region:
            raise ValidationError("one baseline log-level per trust required")
        if len(self.rate_schedules) != self.n_regions:
            raise ValidationError("one rate schedule per region required")
        if len(self.weekday_multipliers) != 7:
            raise ValidationError("seven weekday multipliers required")
        if any(m <= 0 for m in self.weekday_multipliers):
            raise ValidationError("weekday multipliers must be positive")
        if not self.theta > 0:
            raise ValidationError("theta must be positive")
        for schedule in self.rate_schedules:
            if any(not math.isfinite(r) for _, r in schedule):
                raise ValidationError("rates must be finite")

    @property
    def trust_ids(self) -> list[str]:
        return [
            f"T{r + 1:02d}{k + 1:02d}"
            for r in range(self.n_regions)
            for k in range(self.trusts_per_region)
        ]

    def region_of(self, trust_index: int) -> str:
        return f"R{trust_index // self.trusts_per_region + 1}"


@dataclass(frozen=True)
class SyntheticData:
    scenario: WaveScenario
    admissions: AdmissionPanel
    indicators: IndicatorPanel  # LTLA level
    catchment: CatchmentMap
    truth_log_means: dict[str, np.ndarray]  # per trust, over the span

    @property
    def dates(self) -> list[dt.date]:
        return date_range(self.scenario.start_date, self.scenario.span_days)


def _cumulative_growth(schedule, n_days: int) -> np.ndarray:
    """Integral of the piecewise-constant rate: G[0] = 0."""
    rates = np.zeros(n_days)
    ordered = sorted(schedule)
    for i, (start_day, rate) in enumerate(ordered):
        end = ordered[i + 1][0] if i + 1 < len(ordered) else n_days
        rates[max(0, start_day) : max(0, end)] = rate
    return np.concatenate([[0.0], np.cumsum(rates)])[:n_days]


def _weekday_factors(scenario: WaveScenario, n_days: int) -> np.ndarray:
    start_wd = scenario.start_date.weekday()
    mult = np.asarray(scenario.weekday_multipliers)
    return mult[(start_wd + np.arange(n_days)) % 7]


def _trust_means(scenario: WaveScenario, n_days: int) -> dict[str, np.ndarray]:
    """Trust mean trajectories including weekday effects, length n_days."""
    wday = _weekday_factors(scenario, n_days)
    means = {}
    for i, trust in enumerate(scenario.trust_ids):
        region_idx = i // scenario.trusts_per_region
        growth = _cumulative_growth(scenario.rate_schedules[region_idx], n_days)
        means[trust] = np.exp(scenario.baseline_log_levels[i] + growth) * wday
    return means


def _build_catchment(scenario: WaveScenario) -> CatchmentMap:
    """One LTLA per trust, plus a shared LTLA per trust pair as split cases."""
    entries = []
    trusts = scenario.trust_ids
    for i, trust in enumerate(trusts):
        pop = 150_000.0 + 25_000.0 * (i % 7)
        entries.append(CatchmentEntry(f"L-{trust}", trust, 1.0, pop))
    for i in range(0, len(trusts) - 1, 4):
        a, b = trusts[i], trusts[i + 1]
        if a[:3] == b[:3]:  # only split within a region
            entries.append(CatchmentEntry(f"L-{a}-{b}", a, 0.6, 80_000.0))
            entries.append(CatchmentEntry(f"L-{a}-{b}", b, 0.4, 80_000.0))
    return CatchmentMap(entries)


def generate(scenario: WaveScenario) -> SyntheticData:
    """Generate admissions, LTLA indicators, catchment, and truth log-means.

    Deterministic for a fixed seed; per-trust and per-indicator streams use
    derived seeds so output is independent of iteration order.
    """
    n = scenario.span_days
    max_lead = max((s.lead_days for s in scenario.indicators), default=0)
    means_ext = _trust_means(scenario, n + max_lead)
    catchment = _build_catchment(scenario)

    series = {}
    truth = {}
    for i, trust in enumerate(scenario.trust_ids):
        mu = means_ext[trust][:n]
        truth[trust] = np.log(mu)
        if math.isinf(scenario.theta):
            counts = np.rint(mu).astype(np.int64)
        else:
            rng = np.random.default_rng(derive_seed(scenario.seed, "adm", trust))
            counts = sample_negative_binomial(mu, scenario.theta, rng)
        series[trust] = AdmissionSeries(
            trust, scenario.region_of(i), scenario.start_date, counts
        )
    admissions = AdmissionPanel(series)

    # Indicators live at LTLA level; each LTLA's intensity follows the
    # weighted mean of its trusts' future means, so the lead is exact.
    by_ltla: dict[str, list[CatchmentEntry]] = {}
    for e in catchment.entries:
        by_ltla.setdefault(e.ltla_id, []).append(e)
    ind_series = {}
    for spec in scenario.indicators:
        for ltla_id, entries in sorted(by_ltla.items()):
            wsum = sum(e.weight for e in entries)
            base = np.zeros(n)
            for e in entries:
                led = means_ext[e.trust_id][spec.lead_days : spec.lead_days + n]
                base += e.weight * led
            base = spec.scale * base / wsum
            if spec.noise_sd > 0:
                rng = np.random.default_rng(
                    derive_seed(scenario.seed, "ind", spec.indicator_id, ltla_id)
                )
                base = base * np.exp(rng.normal(0.0, spec.noise_sd, size=n))
            ind_series[(ltla_id, spec.indicator_id)] = IndicatorSeries(
                ltla_id, spec.indicator_id, scenario.start_date, base
            )
    indicators = IndicatorPanel(ind_series)
    return SyntheticData(scenario, admissions, indicators, catchment, truth)


def write_truth(path, data: SyntheticData) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "trust_id", "true_log_mean"])
        for trust in sorted(data.truth_log_means):
            for date, v in zip(data.dates, data.truth_log_means[trust]):
                w.writerow([date.isoformat(), trust, repr(float(v))])


# ---------------------------------------------------------------------------
# Bundled scenarios
# ---------------------------------------------------------------------------

CANONICAL_INDICATORS = (
    IndicatorSpec("google-trends", lead_days=10, noise_sd=0.10, scale=1.3),
    IndicatorSpec("111-calls", lead_days=7, noise_sd=0.10, scale=0.8),
    IndicatorSpec("111-online", lead_days=8, noise_sd=0.12, scale=1.1),
)


def _spread_baselines(rng: np.random.Generator, n: int, center: float) -> tuple[float, ...]:
    return tuple(center + rng.uniform(-0.35, 0.35, size=n))


def bundled_scenarios(
    seed: int = 0,
    n_regions: int = 2,
    trusts_per_region: int = 8,
    theta: float = 15.0,
) -> dict[str, WaveScenario]:
    """Named desk-scale scenarios.

    ba45-like: fast rise to a national peak in the low thousands per day
    and a slow decay over roughly 14 weeks. winter-like: slower rise from
    a higher floor to about half that peak over roughly 10 weeks. flat and
    exponential are structural edge cases.
    """
    n_trusts = n_regions * trusts_per_region
    rng = np.random.default_rng(derive_seed(seed, "baselines"))
    # Calibrated so the mean national peak sits near 1200/day at 16 trusts.
    peak_per_trust = 1200.0 / n_trusts
    ba45_growth = -0.01 * 56 + 0.055 * 29
    ba45_base = math.log(peak_per_trust) - ba45_growth
    winter_per_trust = 250.0 / n_trusts
    scenarios = {}
    scenarios["ba45-like"] = WaveScenario(
        name="ba45-like",
        n_regions=n_regions,
        trusts_per_region=trusts_per_region,
        span_days=168,
        rate_schedules=tuple(
            ((0, -0.01), (56 + 2 * r, 0.055), (85 + 2 * r, 0.0), (95 + 2 * r, -0.022),)
            for r in range(n_regions)
        ),
        baseline_log_levels=_spread_baselines(rng, n_trusts, ba45_base),
        theta=theta,
        indicators=CANONICAL_INDICATORS,
        seed=seed,
    )
    scenarios["winter-like"] = WaveScenario(
        name="winter-like",
        n_regions=n_regions,
        trusts_per_region=trusts_per_region,
        span_days=154,
        rate_schedules=tuple(
            ((0, 0.0), (56 + 2 * r, 0.025), (91 + 2 * r, 0.0), (98 + 2 * r, -0.018),)
            for r in range(n_regions)
        ),
        baseline_log_levels=_spread_baselines(rng, n_trusts, math.log(winter_per_trust)),
        theta=theta,
        indicators=CANONICAL_INDICATORS,
        seed=derive_seed(seed, "winter"),
    )
    scenarios["flat"] = WaveScenario(
        name="flat",
        n_regions=n_regions,
        trusts_per_region=trusts_per_region,
        span_days=126,
        rate_schedules=tuple(((0, 0.0),) for _ in range(n_regions)),
        baseline_log_levels=_spread_baselines(rng, n_trusts, math.log(30.0)),
        theta=theta,
        indicators=CANONICAL_INDICATORS,
        seed=derive_seed(seed, "flat"),
    )
    scenarios["exponential"] = WaveScenario(
        name="exponential",
        n_regions=n_regions,
        trusts_per_region=trusts_per_region,
        span_days=98,
        rate_schedules=tuple(((0, 0.05),) for _ in range(n_regions)),
        baseline_log_levels=_spread_baselines(rng, n_trusts, math.log(15.0)),
        theta=theta,
        indicators=CANONICAL_INDICATORS,
        seed=derive_seed(seed, "exponential"),
    )
    return scenarios
