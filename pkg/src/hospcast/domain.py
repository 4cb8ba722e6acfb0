"""Core domain types and CSV ingestion.

Holds the geographic hierarchy (Trusts nested in Regions), daily admission
series, leading-indicator panels keyed by (geography, indicator), and the
probabilistic catchment mapping that links local-authority geographies to
Trusts with population weights.

All types are immutable after construction and safe to share between
concurrent tasks.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

ONE_DAY = dt.timedelta(days=1)

WEIGHT_SUM_TOL = 1e-9


def parse_date(text: str) -> dt.date:
    """Parse an ISO-8601 calendar date. The engine is timezone-free."""
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError as exc:
        raise ValidationError(f"bad date {text!r}: {exc}") from None


def date_range(start: dt.date, n: int) -> list[dt.date]:
    return [start + dt.timedelta(days=i) for i in range(n)]


@dataclass(frozen=True)
class Geography:
    """Trust identity and its Region parent.

    Every trust belongs to exactly one region; the set of regions is fixed
    for a run.
    """

    trust_id: str
    region_id: str
    name: str = ""


@dataclass(frozen=True)
class AdmissionSeries:
    """Daily admission counts for one Trust over a contiguous date span."""

    trust_id: str
    region_id: str
    start_date: dt.date
    counts: np.ndarray  # non-negative integers, one per day

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size == 0:
            raise ValidationError(f"trust {self.trust_id}: empty admission series")
        if np.any(counts < 0):
            raise ValidationError(f"trust {self.trust_id}: negative admission count")
        object.__setattr__(self, "counts", counts)
        self.counts.setflags(write=False)

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=len(self.counts) - 1)

    @property
    def dates(self) -> list[dt.date]:
        return date_range(self.start_date, len(self.counts))

    def index_of(self, date: dt.date) -> int:
        i = (date - self.start_date).days
        if not 0 <= i < len(self.counts):
            raise ValidationError(f"date {date} outside series span of trust {self.trust_id}")
        return i

    def window(self, start: dt.date, end: dt.date) -> np.ndarray:
        """Counts on [start, end] inclusive."""
        return self.counts[self.index_of(start) : self.index_of(end) + 1]


class AdmissionPanel:
    """A set of AdmissionSeries sharing one date span, plus the hierarchy."""

    def __init__(self, series: dict[str, AdmissionSeries]):
        if not series:
            raise ValidationError("no admission series")
        spans = {(s.start_date, s.end_date) for s in series.values()}
        if len(spans) > 1:
            raise ValidationError(f"span mismatch across trusts: {sorted(spans)}")
        self.series = dict(sorted(series.items()))
        first = next(iter(self.series.values()))
        self.start_date = first.start_date
        self.end_date = first.end_date

    @property
    def trust_ids(self) -> list[str]:
        return list(self.series)

    @property
    def region_ids(self) -> list[str]:
        return sorted({s.region_id for s in self.series.values()})

    def region_of(self, trust_id: str) -> str:
        return self.series[trust_id].region_id

    def trusts_in_region(self, region_id: str) -> list[str]:
        return [t for t, s in self.series.items() if s.region_id == region_id]

    def dates(self) -> list[dt.date]:
        return date_range(self.start_date, (self.end_date - self.start_date).days + 1)

    def national(self) -> np.ndarray:
        """Daily national totals."""
        return np.sum([s.counts for s in self.series.values()], axis=0)

    def regional(self, region_id: str) -> np.ndarray:
        trusts = self.trusts_in_region(region_id)
        if not trusts:
            raise ValidationError(f"unknown region {region_id!r}")
        return np.sum([self.series[t].counts for t in trusts], axis=0)

    def restrict(self, last_date: dt.date) -> "AdmissionPanel":
        """Panel truncated to dates <= last_date."""
        n = (last_date - self.start_date).days + 1
        if n <= 0:
            raise ValidationError(f"no data on or before {last_date}")
        return AdmissionPanel(
            {
                t: AdmissionSeries(s.trust_id, s.region_id, s.start_date, s.counts[:n])
                for t, s in self.series.items()
            }
        )


@dataclass(frozen=True)
class IndicatorSeries:
    """Daily values of one indicator for one geography (LTLA or Trust)."""

    geography_id: str
    indicator_id: str
    start_date: dt.date
    values: np.ndarray  # non-negative reals

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValidationError(
                f"indicator {self.indicator_id}/{self.geography_id}: empty series"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError(
                f"indicator {self.indicator_id}/{self.geography_id}: non-finite value"
            )
        object.__setattr__(self, "values", values)
        self.values.setflags(write=False)

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=len(self.values) - 1)

    def value_at(self, date: dt.date) -> float:
        i = (date - self.start_date).days
        if not 0 <= i < len(self.values):
            raise ValidationError(
                f"date {date} outside indicator {self.indicator_id}/{self.geography_id}"
            )
        return float(self.values[i])


class IndicatorPanel:
    """Indicator series keyed by (geography_id, indicator_id)."""

    def __init__(self, series: dict[tuple[str, str], IndicatorSeries]):
        self.series = dict(sorted(series.items()))

    @property
    def indicator_ids(self) -> list[str]:
        return sorted({k[1] for k in self.series})

    @property
    def geography_ids(self) -> list[str]:
        return sorted({k[0] for k in self.series})

    def get(self, geography_id: str, indicator_id: str) -> IndicatorSeries:
        try:
            return self.series[(geography_id, indicator_id)]
        except KeyError:
            raise ValidationError(
                f"no indicator series for ({geography_id!r}, {indicator_id!r})"
            ) from None


@dataclass(frozen=True)
class CatchmentEntry:
    ltla_id: str
    trust_id: str
    weight: float
    ltla_population: float


class CatchmentMap:
    """Probabilistic LTLA-to-Trust mapping with LTLA populations.

    Weights for each LTLA sum to 1; a Trust's catchment population is the
    weight-by-population sum over its contributing LTLAs.
    """

    def __init__(self, entries: list[CatchmentEntry]):
        if not entries:
            raise ValidationError("empty catchment map")
        pops: dict[str, float] = {}
        sums: dict[str, float] = {}
        for e in entries:
            if not 0.0 <= e.weight <= 1.0:
                raise ValidationError(
                    f"ltla {e.ltla_id}: weight {e.weight} outside [0, 1]"
                )
            if e.ltla_population <= 0:
                raise ValidationError(f"ltla {e.ltla_id}: non-positive population")
            prev = pops.setdefault(e.ltla_id, e.ltla_population)
            if prev != e.ltla_population:
                raise ValidationError(f"ltla {e.ltla_id}: inconsistent population")
            sums[e.ltla_id] = sums.get(e.ltla_id, 0.0) + e.weight
        for ltla_id, s in sorted(sums.items()):
            if abs(s - 1.0) > WEIGHT_SUM_TOL:
                raise ValidationError(
                    f"ltla {ltla_id}: weights sum to {s!r}, expected 1"
                )
        self.entries = sorted(entries, key=lambda e: (e.ltla_id, e.trust_id))
        self._by_trust: dict[str, list[CatchmentEntry]] = {}
        for e in self.entries:
            self._by_trust.setdefault(e.trust_id, []).append(e)

    @property
    def ltla_ids(self) -> list[str]:
        return sorted({e.ltla_id for e in self.entries})

    @property
    def trust_ids(self) -> list[str]:
        return sorted(self._by_trust)

    def catchment_population(self, trust_id: str) -> float:
        """Expected population served by the Trust (the log-offset term)."""
        try:
            entries = self._by_trust[trust_id]
        except KeyError:
            raise ValidationError(f"unknown trust {trust_id!r} in catchment map") from None
        p = sum(e.weight * e.ltla_population for e in entries)
        if p <= 0:
            raise ValidationError(f"trust {trust_id}: zero catchment population")
        return p


@dataclass(frozen=True)
class WaveWindow:
    """One phase (growth, peak or decline) of a named epidemic wave.

    Start and end dates are both Sundays; phases within a wave tile it
    contiguously.
    """

    wave_name: str
    phase: str  # growth | peak | decline
    start_date: dt.date
    end_date: dt.date

    def __post_init__(self):
        if self.phase not in ("growth", "peak", "decline"):
            raise ValidationError(f"unknown phase {self.phase!r}")
        if self.start_date >= self.end_date:
            raise ValidationError(
                f"{self.wave_name}/{self.phase}: start {self.start_date} "
                f"not before end {self.end_date}"
            )

    def contains(self, date: dt.date) -> bool:
        """Half-open membership [start, end)."""
        return self.start_date <= date < self.end_date


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

ADMISSIONS_HEADER = ["date", "trust_id", "region_id", "admissions"]
INDICATORS_HEADER = ["date", "geography_id", "indicator_id", "value"]
CATCHMENT_HEADER = ["ltla_id", "trust_id", "weight", "ltla_population"]

# Indicator feeds drop out sporadically; gaps this short are interpolated.
MAX_INDICATOR_GAP_DAYS = 3


def _read_rows(path, expected_header):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if header != expected_header:
            raise ValidationError(
                f"{path}: header {header} does not match {expected_header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise ValidationError(f"{path}:{lineno}: expected {len(expected_header)} fields")
            yield lineno, row


def load_admissions(path) -> AdmissionPanel:
    """Load admissions.csv into an AdmissionPanel.

    Rejects date gaps, negative counts, missing or conflicting region ids,
    and trusts whose spans disagree; errors carry the offending row number.
    """
    raw: dict[str, list[tuple[dt.date, int, int]]] = {}
    regions: dict[str, str] = {}
    for lineno, (date_s, trust, region, value_s) in _read_rows(path, ADMISSIONS_HEADER):
        date = parse_date(date_s)
        if not region.strip():
            raise ValidationError(f"{path}:{lineno}: unknown region for trust {trust!r}")
        if trust in regions and regions[trust] != region:
            raise ValidationError(
                f"{path}:{lineno}: unknown region: trust {trust!r} maps to both "
                f"{regions[trust]!r} and {region!r}"
            )
        regions[trust] = region
        try:
            value = int(value_s)
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: bad count {value_s!r}") from None
        if value < 0:
            raise ValidationError(f"{path}:{lineno}: negative count {value}")
        raw.setdefault(trust, []).append((date, value, lineno))

    series = {}
    for trust, rows in raw.items():
        rows.sort(key=lambda r: r[0])
        dates = [r[0] for r in rows]
        for prev, cur, (_, _, lineno) in zip(dates, dates[1:], rows[1:]):
            if cur == prev:
                raise ValidationError(f"{path}:{lineno}: duplicate date {cur} for trust {trust}")
            if cur - prev != ONE_DAY:
                raise ValidationError(
                    f"{path}:{lineno}: date gap for trust {trust}: {prev} -> {cur}"
                )
        series[trust] = AdmissionSeries(
            trust, regions[trust], dates[0], np.array([r[1] for r in rows])
        )
    return AdmissionPanel(series)


def load_indicators(path) -> IndicatorPanel:
    """Load indicators.csv into an IndicatorPanel.

    Gaps of up to MAX_INDICATOR_GAP_DAYS consecutive days are filled by
    linear interpolation; longer gaps are rejected.
    """
    raw: dict[tuple[str, str], list[tuple[dt.date, float, int]]] = {}
    for lineno, (date_s, geo, ind, value_s) in _read_rows(path, INDICATORS_HEADER):
        date = parse_date(date_s)
        try:
            value = float(value_s)
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: bad value {value_s!r}") from None
        if not np.isfinite(value):
            raise ValidationError(f"{path}:{lineno}: non-finite value")
        if value < 0:
            raise ValidationError(f"{path}:{lineno}: negative indicator value")
        raw.setdefault((geo, ind), []).append((date, value, lineno))

    series = {}
    for (geo, ind), rows in raw.items():
        rows.sort(key=lambda r: r[0])
        dates = [r[0] for r in rows]
        values = [r[1] for r in rows]
        full_dates = date_range(dates[0], (dates[-1] - dates[0]).days + 1)
        filled = np.full(len(full_dates), np.nan)
        for d, v in zip(dates, values):
            i = (d - dates[0]).days
            if not np.isnan(filled[i]):
                raise ValidationError(f"{path}: duplicate date {d} for ({geo}, {ind})")
            filled[i] = v
        gap = 0
        for v in filled:
            if np.isnan(v):
                gap += 1
                if gap > MAX_INDICATOR_GAP_DAYS:
                    raise ValidationError(
                        f"{path}: gap longer than {MAX_INDICATOR_GAP_DAYS} days "
                        f"for ({geo}, {ind})"
                    )
            else:
                gap = 0
        idx = np.arange(len(filled))
        known = ~np.isnan(filled)
        filled = np.interp(idx, idx[known], filled[known])
        series[(geo, ind)] = IndicatorSeries(geo, ind, dates[0], filled)
    return IndicatorPanel(series)


def load_catchment(path) -> CatchmentMap:
    """Load catchment.csv, validating per-LTLA weight sums."""
    entries = []
    for lineno, (ltla, trust, weight_s, pop_s) in _read_rows(path, CATCHMENT_HEADER):
        try:
            weight = float(weight_s)
            pop = float(pop_s)
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: bad number") from None
        if not 0.0 <= weight <= 1.0:
            raise ValidationError(f"{path}:{lineno}: weight {weight} outside [0, 1]")
        entries.append(CatchmentEntry(ltla, trust, weight, pop))
    return CatchmentMap(entries)


def write_admissions(path, panel: AdmissionPanel) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ADMISSIONS_HEADER)
        for trust_id, s in panel.series.items():
            for date, count in zip(s.dates, s.counts):
                w.writerow([date.isoformat(), trust_id, s.region_id, int(count)])


def write_indicators(path, panel: IndicatorPanel) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(INDICATORS_HEADER)
        for (geo, ind), s in panel.series.items():
            for i, v in enumerate(s.values):
                date = s.start_date + dt.timedelta(days=i)
                w.writerow([date.isoformat(), geo, ind, repr(float(v))])


def write_catchment(path, cmap: CatchmentMap) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CATCHMENT_HEADER)
        for e in cmap.entries:
            w.writerow([e.ltla_id, e.trust_id, repr(e.weight), repr(e.ltla_population)])


# ---------------------------------------------------------------------------
# Catchment operations
# ---------------------------------------------------------------------------


def catchment_population(cmap: CatchmentMap, trust_id: str) -> float:
    return cmap.catchment_population(trust_id)


def map_indicators_to_trusts(panel: IndicatorPanel, cmap: CatchmentMap) -> IndicatorPanel:
    """Aggregate an LTLA-level panel to Trust level.

    Uses the population-weighted mean, so signals keep their intensity
    scale across trusts of different sizes:

        trust value(t) = sum_l w(l->T) * pop_l * value_l(t) / p_T
    """
    known = set(cmap.ltla_ids)
    unmapped = sorted({g for g in panel.geography_ids if g not in known})
    if unmapped:
        raise ValidationError(f"unmapped LTLAs in indicator panel: {unmapped}")

    out: dict[tuple[str, str], IndicatorSeries] = {}
    for indicator_id in panel.indicator_ids:
        ltla_series = {
            geo: panel.series[(geo, indicator_id)]
            for geo in panel.geography_ids
            if (geo, indicator_id) in panel.series
        }
        spans = {(s.start_date, s.end_date) for s in ltla_series.values()}
        if len(spans) > 1:
            raise ValidationError(
                f"indicator {indicator_id}: LTLA series spans differ: {sorted(spans)}"
            )
        for trust_id in cmap.trust_ids:
            entries = [
                e
                for e in cmap._by_trust[trust_id]
                if e.ltla_id in ltla_series and e.weight > 0
            ]
            if not entries:
                continue
            p = sum(e.weight * e.ltla_population for e in entries)
            acc = np.zeros(len(next(iter(ltla_series.values())).values))
            for e in entries:
                acc += e.weight * e.ltla_population * ltla_series[e.ltla_id].values
            start = next(iter(ltla_series.values())).start_date
            out[(trust_id, indicator_id)] = IndicatorSeries(
                trust_id, indicator_id, start, acc / p
            )
    return IndicatorPanel(out)
