"""Leading-indicator models: a lagged LASSO trend stage feeding a
changepoint-corrected count model.

Stage one regresses smoothed admissions on smoothed, lagged indicators
(lags of horizon + 0..l_max days, national slopes plus region
interactions, catchment population as a fixed log offset) and produces a
positive trend for the training span and up to horizon days ahead. Stage
two fits admission counts per region on the log trend, with separate
slopes before and after a changepoint near the end of the window so the
recent relationship drives the forecast.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from ..domain import AdmissionPanel, CatchmentMap, IndicatorPanel
from ..engine.design import DesignMatrix, PenaltyGroup
from ..engine.lasso import LassoFit, fit_lasso
from ..engine.negbin import FittedModel, fit_penalized_nb
from ..errors import ValidationError
from ..smoothing import LOG_FLOOR, loess_values
from .univariate import WEEKDAY_LABELS

VALID_HORIZONS = (7, 14, 21)


@dataclass(frozen=True)
class LagDesignSpec:
    """Configuration of the lagged indicator regression."""

    horizon_days: int
    indicator_ids: tuple[str, ...]
    max_extra_lag_days: int = 7
    region_interactions: bool = True
    loess_span_days: int = 21
    changepoint_days: int = 14

    def __post_init__(self):
        if self.horizon_days not in VALID_HORIZONS:
            raise ValidationError(
                f"horizon must be one of {VALID_HORIZONS}, got {self.horizon_days}"
            )
        if self.max_extra_lag_days < 0:
            raise ValidationError("max_extra_lag_days must be >= 0")
        if not self.indicator_ids:
            raise ValidationError("at least one indicator required")

    @property
    def lags(self) -> list[int]:
        return [self.horizon_days + l for l in range(self.max_extra_lag_days + 1)]


class LagDesignBuilder:
    """Assembles stage-one rows for training and forecast dates.

    Indicator series are LOESS-smoothed over their history up to the last
    training day, then standardized per (trust, indicator) on the training
    window so LASSO shrinkage is scale-fair across trusts.
    """

    def __init__(
        self,
        panel: AdmissionPanel,
        trust_indicators: IndicatorPanel,
        catchment: CatchmentMap,
        spec: LagDesignSpec,
    ):
        self.spec = spec
        self.t_max = panel.end_date
        self.train_start = panel.start_date
        self.trusts = panel.trust_ids
        self.regions = panel.region_ids
        self.region_of = {t: panel.region_of(t) for t in self.trusts}
        self.log_pop = {
            t: float(np.log(catchment.catchment_population(t))) for t in self.trusts
        }

        max_lag = max(spec.lags)
        required_start = self.train_start - dt.timedelta(days=max_lag)
        self._series: dict[tuple[str, str], tuple[dt.date, np.ndarray]] = {}
        for trust in self.trusts:
            for ind in spec.indicator_ids:
                s = trust_indicators.get(trust, ind)
                if s.start_date > required_start:
                    raise ValidationError(
                        f"indicator {ind}/{trust} starts {s.start_date}; history "
                        f"back to {required_start} required "
                        f"({max_lag} days before the training window)"
                    )
                if s.end_date < self.t_max:
                    raise ValidationError(
                        f"indicator {ind}/{trust} ends {s.end_date}, "
                        f"before the training end {self.t_max}"
                    )
                # Use no data after t_max: smooth only the visible history.
                # The log keeps epidemic-scale indicators affine in the
                # log-mean, so the regression extrapolates stably past the
                # training range of the raw signal.
                upto = (self.t_max - s.start_date).days + 1
                smoothed = np.log(
                    np.maximum(loess_values(s.values[:upto], spec.loess_span_days), 0.0)
                    + 1e-6
                )
                lo = (self.train_start - s.start_date).days
                hi = (self.t_max - s.start_date).days + 1
                mean = smoothed[lo:hi].mean()
                sd = smoothed[lo:hi].std()
                if sd <= 1e-8 * (abs(mean) + 1.0):
                    # A constant indicator carries no signal; dividing by a
                    # dust-sized sd would amplify rounding noise instead.
                    std = np.zeros_like(smoothed)
                else:
                    std = (smoothed - mean) / sd
                self._series[(trust, ind)] = (s.start_date, std)

        self.column_labels: list[str] = []
        self._region_cols = {r: len(self.column_labels) + i for i, r in enumerate(self.regions)}
        self.column_labels.extend(f"region:{r}" for r in self.regions)
        self._trust_cols = {}
        for r in self.regions:
            for trust in panel.trusts_in_region(r)[1:]:
                self._trust_cols[trust] = len(self.column_labels)
                self.column_labels.append(f"trust:{trust}")
        self._indicator_cols: list[tuple[str, int, str | None]] = []
        for ind in spec.indicator_ids:
            for lag in spec.lags:
                self._indicator_cols.append((ind, lag, None))
                self.column_labels.append(f"{ind}:lag{lag}")
        if spec.region_interactions:
            for ind in spec.indicator_ids:
                for lag in spec.lags:
                    for r in self.regions:
                        self._indicator_cols.append((ind, lag, r))
                        self.column_labels.append(f"{ind}:lag{lag}:{r}")
        self.n_unpenalized = len(self.regions) + len(self._trust_cols)

    def indicator_value(self, trust: str, ind: str, date: dt.date) -> float:
        start, values = self._series[(trust, ind)]
        i = (date - start).days
        if i < 0 or i >= len(values):
            raise ValidationError(
                f"indicator {ind}/{trust}: no value on {date} (reach exceeded)"
            )
        return float(values[i])

    def rows(self, pairs: list[tuple[str, dt.date]]) -> tuple[np.ndarray, np.ndarray]:
        """Design rows and offsets for (trust, date) pairs, date <= t_max + h."""
        reach = self.t_max + dt.timedelta(days=self.spec.horizon_days)
        p = len(self.column_labels)
        X = np.zeros((len(pairs), p))
        offset = np.zeros(len(pairs))
        base = self.n_unpenalized
        for i, (trust, date) in enumerate(pairs):
            if date > reach:
                raise ValidationError(
                    f"date {date} beyond indicator reach {reach} "
                    f"(horizon {self.spec.horizon_days} days)"
                )
            region = self.region_of[trust]
            X[i, self._region_cols[region]] = 1.0
            if trust in self._trust_cols:
                X[i, self._trust_cols[trust]] = 1.0
            offset[i] = self.log_pop[trust]
            for k, (ind, lag, r) in enumerate(self._indicator_cols):
                if r is not None and r != region:
                    continue
                X[i, base + k] = self.indicator_value(
                    trust, ind, date - dt.timedelta(days=lag)
                )
        return X, offset

    def training_design(self) -> DesignMatrix:
        pairs = [(t, d) for t in self.trusts for d in _dates(self.train_start, self.t_max)]
        X, offset = self.rows(pairs)
        return DesignMatrix(
            X,
            self.column_labels,
            unpenalized=list(range(self.n_unpenalized)),
            lasso=list(range(self.n_unpenalized, len(self.column_labels))),
            offset=offset,
            row_dates=[d for _, d in pairs],
            row_ids=[t for t, _ in pairs],
        )


def _dates(start: dt.date, end: dt.date) -> list[dt.date]:
    return [start + dt.timedelta(days=i) for i in range((end - start).days + 1)]


def build_lagged_design(
    panel: AdmissionPanel,
    trust_indicators: IndicatorPanel,
    catchment: CatchmentMap,
    spec: LagDesignSpec,
) -> DesignMatrix:
    """The stage-one training design (see LagDesignBuilder for layout)."""
    return LagDesignBuilder(panel, trust_indicators, catchment, spec).training_design()


@dataclass
class TrendFit:
    """Stage-one result: selected coefficients and the positive trend."""

    lasso: LassoFit
    trend: dict[str, np.ndarray]  # per trust, train_start..t_max+h
    start_date: dt.date
    reach: dt.date

    def trend_at(self, trust: str, date: dt.date) -> float:
        i = (date - self.start_date).days
        values = self.trend[trust]
        if i < 0 or i >= len(values):
            raise ValidationError(f"no trend value for {trust} on {date}")
        return float(values[i])


def fit_trend(
    builder: LagDesignBuilder,
    smoothed_log_admissions: dict[str, np.ndarray],
    n_folds: int = 4,
    lambda_path: np.ndarray | None = None,
) -> TrendFit:
    """Fit the lagged LASSO and evaluate the trend through t_max + h.

    `smoothed_log_admissions` maps trust to log(u(H)) over the training
    window; forecast-period trend values use indicator data at or before
    t_max only, because every lag is at least the horizon.
    """
    design = builder.training_design()
    y = np.concatenate(
        [np.exp(smoothed_log_admissions[t]) for t in builder.trusts]
    )
    lasso = fit_lasso(design, y, lambda_path=lambda_path, n_folds=n_folds)

    reach = builder.t_max + dt.timedelta(days=builder.spec.horizon_days)
    all_dates = _dates(builder.train_start, reach)
    trend = {}
    for trust in builder.trusts:
        X, offset = builder.rows([(trust, d) for d in all_dates])
        trend[trust] = np.exp(lasso.linear_predictor(X, offset))
    return TrendFit(lasso, trend, builder.train_start, reach)


class CorrectionRegionFit:
    """Stage-two fit for one region plus forecast-row construction."""

    def __init__(self, region_id, model, trusts, t_max, reach, trend_fit, labels):
        self.region_id = region_id
        self.model = model
        self.trusts = trusts
        self.t_max = t_max
        self.reach = reach
        self._trend = trend_fit
        self._labels = labels
        self._trust_cols = {
            t: labels.index(f"trust:{t}") for t in trusts
        }
        self._recent_col = labels.index("log_trend_recent")
        self._wday_cols = {
            w: labels.index(f"wday:{lbl}") for w, lbl in enumerate(WEEKDAY_LABELS)
        }

    def forecast_design(self, trust: str, dates: list[dt.date]) -> np.ndarray:
        if trust not in self._trust_cols:
            raise ValidationError(f"trust {trust!r} not in region {self.region_id}")
        rows = np.zeros((len(dates), len(self.model.coefficients)))
        for i, date in enumerate(dates):
            if date <= self.t_max:
                raise ValidationError(f"forecast date {date} not after {self.t_max}")
            if date > self.reach:
                raise ValidationError(
                    f"date {date} beyond indicator reach {self.reach}"
                )
            rows[i, 0] = 1.0  # intercept
            rows[i, self._trust_cols[trust]] = 1.0
            rows[i, self._recent_col] = np.log(self._trend.trend_at(trust, date))
            rows[i, self._wday_cols[date.weekday()]] = 1.0
        return rows


def fit_correction(
    panel: AdmissionPanel,
    trend_fit: TrendFit,
    changepoint_days: int = 14,
) -> dict[str, CorrectionRegionFit]:
    """Fit the changepoint count model per region on the stage-one trend.

    The log trend enters with separate coefficients before and after
    t_max - changepoint_days; forecasts use the recent-side coefficient.
    """
    t_max = panel.end_date
    span = (t_max - panel.start_date).days
    if span <= changepoint_days:
        raise ValidationError(
            f"training span of {span} days is shorter than the "
            f"changepoint offset c={changepoint_days}"
        )
    threshold = t_max - dt.timedelta(days=changepoint_days)
    out = {}
    for region in panel.region_ids:
        trusts = panel.trusts_in_region(region)
        dates = panel.dates()
        pairs = [(t, d) for t in trusts for d in dates]
        n = len(pairs)
        p = 3 + len(trusts) + 7
        X = np.zeros((n, p))
        labels = (
            ["intercept", "log_trend_hist", "log_trend_recent"]
            + [f"trust:{t}" for t in trusts]
            + [f"wday:{w}" for w in WEEKDAY_LABELS]
        )
        y = np.zeros(n, dtype=int)
        for i, (trust, date) in enumerate(pairs):
            log_trend = np.log(trend_fit.trend_at(trust, date))
            X[i, 0] = 1.0
            if date < threshold:
                X[i, 1] = log_trend
            else:
                X[i, 2] = log_trend
            X[i, 3 + trusts.index(trust)] = 1.0
            X[i, 3 + len(trusts) + date.weekday()] = 1.0
            y[i] = panel.series[trust].counts[(date - panel.start_date).days]
        groups = [
            PenaltyGroup("trust", np.arange(3, 3 + len(trusts)), np.eye(len(trusts))),
            PenaltyGroup("wday", np.arange(3 + len(trusts), p), np.eye(7)),
        ]
        dm = DesignMatrix(
            X,
            labels,
            unpenalized=[0, 1, 2],
            groups=groups,
            row_dates=[d for _, d in pairs],
            row_ids=[t for t, _ in pairs],
        )
        model = fit_penalized_nb(dm, y)
        out[region] = CorrectionRegionFit(
            region, model, trusts, t_max, trend_fit.reach, trend_fit, labels
        )
    return out


@dataclass
class IndicatorFit:
    """The full two-stage pipeline for one horizon."""

    spec: LagDesignSpec
    trend: TrendFit
    corrections: dict[str, CorrectionRegionFit]
    t_max: dt.date

    @property
    def reach(self) -> dt.date:
        return self.trend.reach

    @property
    def regions(self) -> dict[str, CorrectionRegionFit]:
        return self.corrections

    @property
    def region_ids(self) -> list[str]:
        return sorted(self.corrections)

    def region_fit_of(self, trust: str) -> CorrectionRegionFit:
        for rf in self.corrections.values():
            if trust in rf.trusts:
                return rf
        raise ValidationError(f"trust {trust!r} not in any fitted region")


def fit_indicator_model(
    panel: AdmissionPanel,
    trust_indicators: IndicatorPanel,
    catchment: CatchmentMap,
    spec: LagDesignSpec,
    n_folds: int = 4,
    lambda_path: np.ndarray | None = None,
) -> IndicatorFit:
    """Run both stages on a training panel (data after its end is unused)."""
    builder = LagDesignBuilder(panel, trust_indicators, catchment, spec)
    smoothed = {}
    for trust in panel.trust_ids:
        u = loess_values(panel.series[trust].counts.astype(float), spec.loess_span_days)
        smoothed[trust] = np.log(np.maximum(u, LOG_FLOOR))
    trend = fit_trend(builder, smoothed, n_folds=n_folds, lambda_path=lambda_path)
    corrections = fit_correction(panel, trend, spec.changepoint_days)
    return IndicatorFit(spec, trend, corrections, panel.end_date)


def forecast_indicator_model(
    fit: IndicatorFit, dates: list[dt.date]
) -> dict[str, np.ndarray]:
    """Per-trust forecast log-means at dates within t_max + h."""
    out = {}
    for region in fit.region_ids:
        rf = fit.corrections[region]
        for trust in rf.trusts:
            X = rf.forecast_design(trust, dates)
            out[trust] = X @ rf.model.coefficients
    return out
