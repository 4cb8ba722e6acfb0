"""Design matrices for penalized regression.

A design matrix carries, besides the numeric columns, the penalty structure
each fitter needs: unpenalized columns, ridge- or spline-penalized groups
(each group shares one smoothing parameter), and L1-penalized columns for
the LASSO stage. Spline blocks are cubic B-splines with evenly spaced knots
and a second-order difference penalty on the coefficients; sum-to-zero
constraints are absorbed by reparameterization so spline blocks never
collide with intercepts.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import null_space

from ..errors import ValidationError

SPLINE_DEGREE = 3


def second_difference_penalty(n: int) -> np.ndarray:
    """Penalty matrix D2'D2 scaled to unit spectral norm.

    Second differences annihilate constant and linear coefficient
    sequences, so the penalty null space is exactly the affine functions.
    """
    if n < 3:
        raise ValidationError(f"penalty needs >= 3 coefficients, got {n}")
    d2 = np.diff(np.eye(n), n=2, axis=0)
    p = d2.T @ d2
    return p / np.linalg.eigvalsh(p)[-1]


def fullrank_penalty(p: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Penalty with its null space additionally penalized at unit scale.

    Deviation smooths in a hierarchical fit need this: their unpenalized
    affine directions would otherwise be exactly confounded with the
    shared trend, and at high smoothing the whole deviation shrinks away
    rather than reverting to a free linear trend.
    """
    eigvals, eigvecs = np.linalg.eigh(p)
    null = eigvecs[:, eigvals < tol]
    return p + null @ null.T


class SplineBasis:
    """Cubic B-spline basis over a day grid with evenly spaced knots."""

    def __init__(self, t_min: float, t_max: float, knot_spacing_days: float):
        span = float(t_max) - float(t_min)
        if span <= 0:
            raise ValidationError("spline span must be positive")
        n_knots = int(round(span / knot_spacing_days))
        if n_knots < 4:
            raise ValidationError(
                f"span of {span:.0f} days fits only {n_knots} knots at "
                f"{knot_spacing_days}-day spacing; >= 4 required"
            )
        breaks = np.linspace(t_min, t_max, n_knots)
        step = breaks[1] - breaks[0]
        pad_lo = t_min - step * np.arange(SPLINE_DEGREE, 0, -1)
        pad_hi = t_max + step * np.arange(1, SPLINE_DEGREE + 1)
        self.t_min = float(t_min)
        self.t_max = float(t_max)
        self.knots = breaks
        self._full_knots = np.concatenate([pad_lo, breaks, pad_hi])
        self.n_columns = len(self._full_knots) - SPLINE_DEGREE - 1

    def design(self, t: np.ndarray) -> np.ndarray:
        """Basis values at times t (within [t_min, t_max])."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < self.t_min - 1e-9) or np.any(t > self.t_max + 1e-9):
            raise ValidationError("spline evaluated outside its knot span")
        t = np.clip(t, self.t_min, self.t_max)
        return BSpline.design_matrix(t, self._full_knots, SPLINE_DEGREE).toarray()

    def derivative(self, t: np.ndarray) -> np.ndarray:
        """First-derivative rows dB_j/dt at times t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        t = np.clip(t, self.t_min, self.t_max)
        spl = BSpline(self._full_knots, np.eye(self.n_columns), SPLINE_DEGREE)
        return spl.derivative()(t)

    def penalty(self) -> np.ndarray:
        return second_difference_penalty(self.n_columns)


def build_spline_basis(times: np.ndarray, knot_spacing_days: float) -> SplineBasis:
    """Basis covering the observed times with evenly spaced knots."""
    times = np.asarray(times, dtype=float)
    return SplineBasis(times.min(), times.max(), knot_spacing_days)


class CenteredSplineBlock:
    """A spline block with the sum-to-zero constraint absorbed.

    The raw basis can represent constants (partition of unity), which
    would be confounded with intercept and dummy columns and leave the
    penalized information singular. Projecting onto the null space of the
    training-mean constraint removes that direction from both the design
    block and the penalty.
    """

    def __init__(self, basis: SplineBasis, train_t: np.ndarray):
        self.basis = basis
        b = basis.design(np.asarray(train_t, dtype=float))
        c = b.mean(axis=0)
        self.transform = null_space(c[None, :])  # (k, k-1)
        self.n_columns = self.transform.shape[1]
        self.penalty = self.transform.T @ basis.penalty() @ self.transform

    def design(self, t: np.ndarray) -> np.ndarray:
        return self.basis.design(t) @ self.transform

    def derivative(self, t: np.ndarray) -> np.ndarray:
        return self.basis.derivative(t) @ self.transform


@dataclass(frozen=True)
class PenaltyGroup:
    """Columns sharing one quadratic penalty and one smoothing parameter."""

    name: str
    cols: np.ndarray  # column indices into the design
    matrix: np.ndarray  # PSD penalty block, unit spectral norm
    init_lambda: float = 1.0

    def __post_init__(self):
        cols = np.asarray(self.cols, dtype=int)
        object.__setattr__(self, "cols", cols)
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (len(cols), len(cols)):
            raise ValidationError(f"group {self.name}: penalty shape mismatch")
        if not np.allclose(m, m.T, atol=1e-10):
            raise ValidationError(f"group {self.name}: penalty not symmetric")
        object.__setattr__(self, "matrix", m)


class DesignMatrix:
    """Observations-by-columns regression design with penalty tags.

    Column partition: `unpenalized` indices, `lasso` indices, and the
    columns of each PenaltyGroup; every column belongs to exactly one.
    The optional offset enters the linear predictor with coefficient 1.
    Row dates and row ids support time-blocked cross-validation and
    per-trust bookkeeping.
    """

    def __init__(
        self,
        X: np.ndarray,
        labels: list[str],
        *,
        unpenalized: np.ndarray | list[int],
        groups: tuple[PenaltyGroup, ...] | list[PenaltyGroup] = (),
        lasso: np.ndarray | list[int] = (),
        offset: np.ndarray | None = None,
        row_dates: list[dt.date] | None = None,
        row_ids: list[str] | None = None,
    ):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValidationError("design must be 2-dimensional")
        n, p = X.shape
        if len(labels) != p:
            raise ValidationError("one label per column required")
        if len(set(labels)) != p:
            dupes = sorted({l for l in labels if labels.count(l) > 1})
            raise ValidationError(f"duplicate column labels: {dupes}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("design contains non-finite entries")
        zero = np.where(~X.any(axis=0))[0]
        if zero.size:
            raise ValidationError(
                f"all-zero design columns: {[labels[i] for i in zero]}"
            )
        self.X = X
        self.labels = list(labels)
        self.unpenalized = np.asarray(sorted(unpenalized), dtype=int)
        self.lasso = np.asarray(sorted(lasso), dtype=int)
        self.groups = tuple(groups)
        claimed = list(self.unpenalized) + list(self.lasso)
        for g in self.groups:
            claimed.extend(g.cols)
        if sorted(claimed) != list(range(p)):
            raise ValidationError("columns must partition into penalty tags exactly")
        if offset is not None:
            offset = np.asarray(offset, dtype=float)
            if offset.shape != (n,):
                raise ValidationError("offset length mismatch")
        self.offset = offset
        if row_dates is not None and len(row_dates) != n:
            raise ValidationError("row_dates length mismatch")
        if row_ids is not None and len(row_ids) != n:
            raise ValidationError("row_ids length mismatch")
        self.row_dates = row_dates
        self.row_ids = row_ids

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_columns(self) -> int:
        return self.X.shape[1]

    def col(self, label: str) -> int:
        return self.labels.index(label)

    def penalty_total(self, lambdas: dict[str, float]) -> np.ndarray:
        """Full penalty matrix sum_g lambda_g * S_g embedded at full width."""
        p = self.n_columns
        S = np.zeros((p, p))
        for g in self.groups:
            S[np.ix_(g.cols, g.cols)] += lambdas[g.name] * g.matrix
        return S

    def subset_rows(self, mask: np.ndarray) -> "DesignMatrix":
        """Row subset preserving the column/penalty structure.

        Used by cross-validation; skips the all-zero-column check since a
        fold may lose support for some dummy columns.
        """
        out = object.__new__(DesignMatrix)
        out.X = self.X[mask]
        out.labels = self.labels
        out.unpenalized = self.unpenalized
        out.lasso = self.lasso
        out.groups = self.groups
        out.offset = None if self.offset is None else self.offset[mask]
        out.row_dates = (
            None
            if self.row_dates is None
            else [d for d, m in zip(self.row_dates, mask) if m]
        )
        out.row_ids = (
            None
            if self.row_ids is None
            else [r for r, m in zip(self.row_ids, mask) if m]
        )
        return out
