"""Univariate growth-rate models: independent per-trust splines
("baseline") and the hierarchical variant with a shared regional trend
plus per-trust deviation splines.

Both fit log-link negative-binomial regressions per region and forecast
by holding the instantaneous exponential growth rate fixed beyond the
last training day: the log-mean continues affinely in the horizon with
slope equal to the fitted spline derivative at the end of the window,
with day-of-week effects frozen at their fitted values.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from ..domain import AdmissionPanel
from ..engine.design import (
    CenteredSplineBlock,
    DesignMatrix,
    PenaltyGroup,
    build_spline_basis,
    fullrank_penalty,
)
from ..engine.negbin import FittedModel, fit_penalized_nb
from ..errors import ValidationError

WEEKDAY_LABELS = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"]

VARIANTS = ("baseline", "hierarchical")


@dataclass(frozen=True)
class UnivariateModelSpec:
    variant: str = "hierarchical"
    knot_spacing_days: int = 7
    train_window_days: int = 56

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.train_window_days < 4 * self.knot_spacing_days:
            raise ValidationError(
                "train_window_days must be at least 4x knot_spacing_days"
            )


class RegionFit:
    """One region's fitted model plus the rows needed to extrapolate.

    Forecast rows are affine in the horizon h: a base row at the last
    training day (weekday columns zeroed), plus h times the spline
    derivative row, plus the target date's weekday indicator.
    """

    def __init__(
        self,
        region_id: str,
        model: FittedModel,
        trusts: list[str],
        t_max: dt.date,
        base_rows: dict[str, np.ndarray],
        deriv_rows: dict[str, np.ndarray],
        wday_cols: dict[int, int],
    ):
        self.region_id = region_id
        self.model = model
        self.trusts = trusts
        self.t_max = t_max
        self._base_rows = base_rows
        self._deriv_rows = deriv_rows
        self._wday_cols = wday_cols

    def forecast_design(self, trust: str, dates: list[dt.date]) -> np.ndarray:
        if trust not in self._base_rows:
            raise ValidationError(f"trust {trust!r} not in region {self.region_id}")
        rows = np.empty((len(dates), len(self.model.coefficients)))
        for i, date in enumerate(dates):
            h = (date - self.t_max).days
            if h <= 0:
                raise ValidationError(f"forecast date {date} not after {self.t_max}")
            row = self._base_rows[trust] + h * self._deriv_rows[trust]
            row = row.copy()
            row[self._wday_cols[date.weekday()]] = 1.0
            rows[i] = row
        return rows

    def s1(self, trust: str) -> float:
        """Instantaneous exponential growth rate at the end of training."""
        return float(self._deriv_rows[trust] @ self.model.coefficients)

    def weekday_effect(self, date: dt.date) -> float:
        col = self._wday_cols[date.weekday()]
        return float(self.model.coefficients[col])


@dataclass
class UnivariateFit:
    spec: UnivariateModelSpec
    t_max: dt.date
    regions: dict[str, RegionFit]

    @property
    def region_ids(self) -> list[str]:
        return sorted(self.regions)

    def region_fit_of(self, trust: str) -> RegionFit:
        for rf in self.regions.values():
            if trust in rf.trusts:
                return rf
        raise ValidationError(f"trust {trust!r} not in any fitted region")

    def s1(self, trust: str) -> float:
        return self.region_fit_of(trust).s1(trust)


def _region_design(panel: AdmissionPanel, region_id: str, spec: UnivariateModelSpec):
    trusts = panel.trusts_in_region(region_id)
    dates = panel.dates()
    T = len(dates)
    t = np.arange(T, dtype=float)
    n = len(trusts) * T

    row_trusts = [trust for trust in trusts for _ in range(T)]
    row_dates = [d for _ in trusts for d in dates]
    row_t = np.tile(t, len(trusts))

    cols: list[np.ndarray] = []
    labels: list[str] = []
    groups: list[PenaltyGroup] = []

    cols.append(np.ones(n))
    labels.append("intercept")

    trust_cols = np.zeros((n, len(trusts)))
    for j, trust in enumerate(trusts):
        trust_cols[j * T : (j + 1) * T, j] = 1.0
    start = len(labels)
    cols.append(trust_cols)
    labels.extend(f"trust:{trust}" for trust in trusts)
    groups.append(
        PenaltyGroup("trust", np.arange(start, start + len(trusts)), np.eye(len(trusts)))
    )

    wday = np.zeros((n, 7))
    for i, d in enumerate(row_dates):
        wday[i, d.weekday()] = 1.0
    start = len(labels) + len(trusts) - 1  # recompute below from running count

    def col_count():
        return sum(c.shape[1] if c.ndim == 2 else 1 for c in cols)

    start = col_count()
    cols.append(wday)
    labels.extend(f"wday:{w}" for w in WEEKDAY_LABELS)
    groups.append(PenaltyGroup("wday", np.arange(start, start + 7), np.eye(7)))

    deriv_parts: dict[str, dict[int, np.ndarray]] = {trust: {} for trust in trusts}
    base_spline: dict[str, dict[int, np.ndarray]] = {trust: {} for trust in trusts}

    if spec.variant == "hierarchical":
        if len(trusts) < 2:
            raise ValidationError(
                f"region {region_id}: >= 2 trusts required for the hierarchical variant"
            )
        shared = CenteredSplineBlock(build_spline_basis(t, spec.knot_spacing_days), t)
        start = col_count()
        cols.append(np.tile(shared.design(t), (len(trusts), 1)))
        width = shared.n_columns
        labels.extend(f"s(region):{j}" for j in range(width))
        groups.append(
            PenaltyGroup("trend_region", np.arange(start, start + width), shared.penalty)
        )
        end_row_val = shared.design(np.array([t[-1]]))[0]
        end_row_der = shared.derivative(np.array([t[-1]]))[0]
        for trust in trusts:
            base_spline[trust][start] = end_row_val
            deriv_parts[trust][start] = end_row_der

        dev = CenteredSplineBlock(
            build_spline_basis(t, 2 * spec.knot_spacing_days), t
        )
        width = dev.n_columns
        start = col_count()
        dev_block = np.zeros((n, width * len(trusts)))
        dev_design = dev.design(t)
        for j, trust in enumerate(trusts):
            dev_block[j * T : (j + 1) * T, j * width : (j + 1) * width] = dev_design
            labels.extend(f"s({trust}):{k}" for k in range(width))
            off = start + j * width
            base_spline[trust][off] = dev.design(np.array([t[-1]]))[0]
            deriv_parts[trust][off] = dev.derivative(np.array([t[-1]]))[0]
        cols.append(dev_block)
        groups.append(
            PenaltyGroup(
                "trend_dev",
                np.arange(start, start + width * len(trusts)),
                block_diag(*[fullrank_penalty(dev.penalty)] * len(trusts)),
                init_lambda=10.0,
            )
        )
    else:
        own = CenteredSplineBlock(build_spline_basis(t, spec.knot_spacing_days), t)
        width = own.n_columns
        start = col_count()
        block = np.zeros((n, width * len(trusts)))
        own_design = own.design(t)
        for j, trust in enumerate(trusts):
            block[j * T : (j + 1) * T, j * width : (j + 1) * width] = own_design
            labels.extend(f"s({trust}):{k}" for k in range(width))
            off = start + j * width
            base_spline[trust][off] = own.design(np.array([t[-1]]))[0]
            deriv_parts[trust][off] = own.derivative(np.array([t[-1]]))[0]
        cols.append(block)
        groups.append(
            PenaltyGroup(
                "trend",
                np.arange(start, start + width * len(trusts)),
                block_diag(*[own.penalty] * len(trusts)),
            )
        )

    X = np.column_stack(cols)
    dm = DesignMatrix(
        X,
        labels,
        unpenalized=[0],
        groups=groups,
        row_dates=row_dates,
        row_ids=row_trusts,
    )
    y = np.concatenate([panel.series[trust].counts for trust in trusts])

    p = X.shape[1]
    wday_cols = {w: labels.index(f"wday:{lbl}") for w, lbl in enumerate(WEEKDAY_LABELS)}
    base_rows, deriv_rows = {}, {}
    for j, trust in enumerate(trusts):
        base = np.zeros(p)
        base[0] = 1.0
        base[labels.index(f"trust:{trust}")] = 1.0
        for off, seg in base_spline[trust].items():
            base[off : off + len(seg)] = seg
        deriv = np.zeros(p)
        for off, seg in deriv_parts[trust].items():
            deriv[off : off + len(seg)] = seg
        base_rows[trust] = base
        deriv_rows[trust] = deriv
    return dm, y, base_rows, deriv_rows, wday_cols, trusts


def _fit(panel: AdmissionPanel, spec: UnivariateModelSpec) -> UnivariateFit:
    window = spec.train_window_days
    n_days = (panel.end_date - panel.start_date).days + 1
    if n_days < window:
        raise ValidationError(
            f"{n_days} days of data, {window} required for the training window"
        )
    train_start = panel.end_date - dt.timedelta(days=window - 1)
    train = panel.restrict(panel.end_date)
    train = AdmissionPanel(
        {
            trust: type(s)(s.trust_id, s.region_id, train_start, s.counts[-window:])
            for trust, s in train.series.items()
        }
    )
    regions = {}
    for region_id in train.region_ids:
        dm, y, base_rows, deriv_rows, wday_cols, trusts = _region_design(
            train, region_id, spec
        )
        model = fit_penalized_nb(dm, y)
        regions[region_id] = RegionFit(
            region_id, model, trusts, train.end_date, base_rows, deriv_rows, wday_cols
        )
    return UnivariateFit(spec, train.end_date, regions)


def fit_baseline(panel: AdmissionPanel, spec: UnivariateModelSpec | None = None) -> UnivariateFit:
    """Independent per-trust splines, fit region-by-region."""
    spec = spec or UnivariateModelSpec(variant="baseline")
    if spec.variant != "baseline":
        spec = UnivariateModelSpec("baseline", spec.knot_spacing_days, spec.train_window_days)
    return _fit(panel, spec)


def fit_hgam(panel: AdmissionPanel, spec: UnivariateModelSpec | None = None) -> UnivariateFit:
    """Shared regional spline plus per-trust deviation splines."""
    spec = spec or UnivariateModelSpec(variant="hierarchical")
    if spec.variant != "hierarchical":
        spec = UnivariateModelSpec(
            "hierarchical", spec.knot_spacing_days, spec.train_window_days
        )
    return _fit(panel, spec)


def predict_log_mean(fit: UnivariateFit, trust: str, dates: list[dt.date]) -> np.ndarray:
    """Forecast log-means beyond the training window."""
    rf = fit.region_fit_of(trust)
    X = rf.forecast_design(trust, dates)
    return X @ rf.model.coefficients
