"""Series smoothing and wave-phase utilities.

LOESS here is local linear regression with tricube weights over a fixed
window measured in days, evaluated at every point of a daily series. The
wave-phase detector segments a national admission series into growth, peak
and decline windows delimited by troughs around the smoothed maximum, with
all boundaries snapped to Sundays for weekly-forecast alignment.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .domain import WaveWindow
from .errors import ValidationError

# Smoothed admissions are floored so log(u(H)) stays defined at zero counts.
LOG_FLOOR = 0.5


@dataclass(frozen=True)
class SmoothedSeries:
    """A smoothed daily series aligned with its input dates."""

    start_date: dt.date
    values: np.ndarray
    span_days: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValidationError("smoothed series contains non-finite values")
        object.__setattr__(self, "values", values)
        self.values.setflags(write=False)

    def value_at(self, date: dt.date) -> float:
        i = (date - self.start_date).days
        if not 0 <= i < len(self.values):
            raise ValidationError(f"date {date} outside smoothed series")
        return float(self.values[i])


def _tricube(dist: np.ndarray, scale: float) -> np.ndarray:
    u = np.clip(dist / scale, 0.0, 1.0)
    return (1.0 - u**3) ** 3


def loess_values(series: np.ndarray, span_days: int) -> np.ndarray:
    """Local linear tricube-weighted fit at every index of a daily series.

    The window is `span_days` points centered on the target index,
    truncated at the series boundaries; weights use the tricube kernel
    scaled by the largest in-window distance.
    """
    y = np.asarray(series, dtype=float)
    n = len(y)
    if span_days < 7:
        raise ValidationError(f"span_days {span_days} below minimum of 7")
    if n < span_days:
        raise ValidationError(f"series length {n} shorter than span {span_days}")
    half = span_days // 2
    t = np.arange(n, dtype=float)
    out = np.empty(n)
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        tt = t[lo:hi] - i
        w = _tricube(np.abs(tt), max(np.abs(tt).max(), 1.0))
        # Weighted linear fit: value at the center is the intercept.
        sw = w.sum()
        st = (w * tt).sum()
        stt = (w * tt * tt).sum()
        sy = (w * y[lo:hi]).sum()
        sty = (w * tt * y[lo:hi]).sum()
        denom = sw * stt - st * st
        if denom <= 0:
            out[i] = sy / sw
        else:
            out[i] = (stt * sy - st * sty) / denom
    return out


def loess_smooth(
    series: np.ndarray,
    span_days: int = 21,
    start_date: dt.date = dt.date(2000, 1, 2),
    floor: float | None = LOG_FLOOR,
) -> SmoothedSeries:
    """Smooth a daily series, flooring the result for downstream logs.

    Pass floor=None to get the raw local-linear fit (used by tests that
    exercise shift equivariance).
    """
    values = loess_values(series, span_days)
    if floor is not None:
        values = np.maximum(values, floor)
    return SmoothedSeries(start_date, values, span_days)


def moving_average(series: np.ndarray, window: int = 7) -> np.ndarray:
    """Centered moving mean; the ends use whatever window is available."""
    y = np.asarray(series, dtype=float)
    n = len(y)
    if n < window:
        raise ValidationError(f"series length {n} shorter than window {window}")
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(y)])
    lo = np.maximum(0, np.arange(n) - half)
    hi = np.minimum(n, np.arange(n) + half + 1)
    return (csum[hi] - csum[lo]) / (hi - lo)


def hospitalisation_ratio(series: np.ndarray, t: int) -> float:
    """Weekly growth diagnostic H(t) / H(t-7); NaN when the denominator is 0."""
    y = np.asarray(series, dtype=float)
    if t < 7 or t >= len(y):
        raise ValidationError(f"t={t} needs 7 days of history within the series")
    if y[t - 7] == 0:
        return float("nan")
    return float(y[t] / y[t - 7])


def preceding_sunday(date: dt.date) -> dt.date:
    """The latest Sunday on or before `date`."""
    return date - dt.timedelta(days=(date.weekday() + 1) % 7)


def following_sunday(date: dt.date) -> dt.date:
    """The earliest Sunday on or after `date`."""
    return date + dt.timedelta(days=(6 - date.weekday()) % 7)


def detect_wave_phases(
    national_series: np.ndarray,
    start_date: dt.date,
    offset_days: int = 14,
    peak_window_days: int = 14,
    wave_name: str = "wave",
) -> list[WaveWindow]:
    """Segment one admission wave into growth / peak / decline windows.

    The 7-day moving average locates the wave peak and the troughs on
    either side of it. The wave starts `offset_days` before the leading
    trough (snapped back to a Sunday) and ends at the trailing trough
    (snapped forward); the peak phase is `peak_window_days` centered on
    the smoothed maximum, snapped outward to Sundays.
    """
    ma = moving_average(national_series, 7)
    n = len(ma)
    if n < 15:
        raise ValidationError("series too short for phase detection")
    peak_i = int(np.argmax(ma))
    if peak_i == 0 or peak_i == n - 1:
        raise ValidationError("no interior maximum in the smoothed series")
    trough_before = int(np.argmin(ma[: peak_i + 1]))
    trough_after = peak_i + int(np.argmin(ma[peak_i:]))
    if trough_before == peak_i or trough_after == peak_i:
        raise ValidationError("no interior maximum: wave lacks a trough on one side")

    day = lambda i: start_date + dt.timedelta(days=int(i))
    wave_start = preceding_sunday(day(trough_before) - dt.timedelta(days=offset_days))
    wave_end = following_sunday(day(trough_after))
    half = peak_window_days // 2
    peak_start = preceding_sunday(day(peak_i) - dt.timedelta(days=half))
    peak_end = following_sunday(day(peak_i) + dt.timedelta(days=half))
    if not wave_start < peak_start < peak_end < wave_end:
        raise ValidationError(
            f"degenerate phase layout: {wave_start} {peak_start} {peak_end} {wave_end}"
        )
    return [
        WaveWindow(wave_name, "growth", wave_start, peak_start),
        WaveWindow(wave_name, "peak", peak_start, peak_end),
        WaveWindow(wave_name, "decline", peak_end, wave_end),
    ]
