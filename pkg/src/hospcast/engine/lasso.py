"""L1-penalized log-link regression by cyclic coordinate descent.

The response is a smoothed positive trend, so the likelihood is a
quasi-Poisson working approximation: an outer IRLS loop re-linearizes the
log link, and an inner soft-threshold loop solves the weighted LASSO.
Unpenalized columns (intercepts) are partialled out of the working
problem with the weighted projector, which keeps descent stable when
indicator columns correlate heavily with intercept structure or with one
another; an optional offset column enters with coefficient fixed at 1.
Lambda runs over a fixed log-spaced path and is chosen by time-blocked
K-fold cross-validated deviance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.special import xlogy

from ..errors import NumericalError, ValidationError
from .design import DesignMatrix

N_LAMBDA = 50
LAMBDA_MIN_RATIO = 1e-3
ETA_CLIP = 30.0


@dataclass
class LassoFit:
    """Coordinate-descent fit at the CV-selected lambda."""

    labels: list[str]
    coefficients: np.ndarray              # original column scale
    selected_lambda: float
    lambda_path: np.ndarray
    cv_deviance: np.ndarray               # mean held-out deviance per lambda
    n_nonzero: int
    kkt_zero_violation: float             # max |subgradient| - lambda over zero coefs
    kkt_active_violation: float           # max | |subgradient| - lambda | over active coefs
    all_zero_path: bool = False

    def linear_predictor(self, X: np.ndarray, offset: np.ndarray | None = None) -> np.ndarray:
        eta = X @ self.coefficients
        if offset is not None:
            eta = eta + offset
        return eta


def quasipoisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    mu = np.maximum(mu, 1e-10)
    return float(2.0 * np.sum(xlogy(y, y / mu) - (y - mu)))


class _InnerProblem:
    """One IRLS linearization with the unpenalized block partialled out.

    Minimizes (1/2n) sum w (z - U gamma - L b)^2 + lambda |b|_1. For any
    b the optimal gamma is linear in b, so descent runs on the
    residualized lasso block alone and gamma is recovered afterwards.
    """

    def __init__(self, U, L, w, z, n):
        self.n = n
        wU = U * w[:, None]
        try:
            chol = cho_factor(U.T @ wU)
        except LinAlgError:
            raise NumericalError("singular unpenalized block in lasso design") from None
        self._on_U = cho_solve(chol, wU.T @ L)  # regression of L on U
        self._z_on_U = cho_solve(chol, wU.T @ z)
        Lr = L - U @ self._on_U
        zr = z - U @ self._z_on_U
        wLr = Lr * w[:, None]
        self.G = (Lr.T @ wLr) / n
        self.q = (wLr.T @ zr) / n  # gradient at b = 0
        self.gdiag = np.maximum(np.diag(self.G), 1e-12)

    def gradient(self, b):
        """(1/n) L~'W(z~ - L~ b), the KKT subgradient vector."""
        return self.q - self.G @ b

    def gamma(self, b):
        return self._z_on_U - self._on_U @ b

    def _sweep(self, b, r, lam, order):
        max_energy = 0.0
        G, gdiag = self.G, self.gdiag
        for j in order:
            gj = gdiag[j]
            rho = r[j] + gj * b[j]
            if rho > lam:
                new = (rho - lam) / gj
            elif rho < -lam:
                new = (rho + lam) / gj
            else:
                new = 0.0
            delta = new - b[j]
            if delta != 0.0:
                r -= G[:, j] * delta
                b[j] = new
                max_energy = max(max_energy, gj * delta * delta)
        return max_energy

    def kkt_violation(self, b, lam, r=None):
        """Worst optimality violation: |grad| - lam on zeros, ||grad| - lam|
        on active coordinates."""
        if r is None:
            r = self.gradient(b)
        zero = b == 0.0
        v = 0.0
        if zero.any():
            v = max(v, float(np.max(np.abs(r[zero]) - lam)))
        if (~zero).any():
            v = max(v, float(np.max(np.abs(np.abs(r[~zero]) - lam))))
        return v

    def descend(self, b, lam, tol, max_rounds=40):
        """Active-set coordinate descent to a KKT tolerance.

        Near-duplicate columns leave the coefficient split on a flat ridge
        where coordinate movement never settles, but the gradient does, so
        termination tests optimality rather than coefficient change. The
        gradient is recomputed each round to shed incremental drift.
        """
        everything = np.arange(len(b))
        # One coordinate move shifts the gradient by about gdiag * delta.
        energy_floor = tol * tol / float(self.gdiag.max())
        for _ in range(max_rounds):
            r = self.gradient(b)
            if self.kkt_violation(b, lam, r) <= tol:
                break
            self._sweep(b, r, lam, everything)
            for _ in range(50):
                active = np.flatnonzero(b)
                if active.size == 0:
                    break
                if self._sweep(b, r, lam, active) < energy_floor:
                    break
        return b

    def polish(self, b, lam, tol=1e-10, max_iters=60):
        """Solve the KKT equality system on the active set directly.

        Coordinate descent stalls on the ridge spanned by near-duplicate
        columns; the minimum-norm solve of G_AA b_A = q_A - lam * sign
        lands on an exact stationary point regardless, with active-set
        adjustments when signs flip or excluded coordinates violate.
        """
        b = b.copy()
        active = np.flatnonzero(b)
        signs = np.sign(b[active])
        for _ in range(max_iters):
            if active.size:
                G_AA = self.G[np.ix_(active, active)]
                rhs = self.q[active] - lam * signs
                sol = np.linalg.pinv(G_AA, rcond=1e-12) @ rhs
                flipped = np.sign(sol) * signs < 0
                if flipped.any() and np.max(np.abs(sol[flipped])) > tol:
                    keep = ~flipped
                    active, signs = active[keep], signs[keep]
                    continue
                sol[flipped] = 0.0
                b = np.zeros_like(b)
                b[active] = sol
            else:
                b = np.zeros_like(b)
            r = self.gradient(b)
            outside = np.setdiff1d(np.arange(len(b)), active)
            if outside.size and np.max(np.abs(r[outside])) > lam + tol:
                j = outside[int(np.argmax(np.abs(r[outside])))]
                active = np.append(active, j)
                signs = np.append(signs, np.sign(r[j]))
                order = np.argsort(active)
                active, signs = active[order], signs[order]
                continue
            return b
        return b


def _irls_lasso_path(
    design: DesignMatrix,
    y: np.ndarray,
    scales: np.ndarray,
    lambda_path: np.ndarray,
    *,
    cd_rel: float = 1e-5,
    cd_abs: float = 1e-8,
    irls_tol: float = 1e-9,
    max_irls: int = 30,
):
    """Fit the whole lambda path with warm starts.

    Returns (gammas, bs): per-lambda unpenalized and scaled-lasso
    coefficients.
    """
    U = design.X[:, design.unpenalized]
    L = design.X[:, design.lasso] / scales[None, :]
    offset = design.offset if design.offset is not None else 0.0
    n = design.n_rows

    gammas = np.zeros((len(lambda_path), U.shape[1]))
    bs = np.zeros((len(lambda_path), L.shape[1]))
    b = np.zeros(L.shape[1])
    gamma = None
    eta = np.log(np.maximum(y, 1e-2))

    for k, lam in enumerate(lambda_path):
        if gamma is None:
            mu = np.exp(np.clip(eta, -ETA_CLIP, ETA_CLIP))
            prob = _InnerProblem(U, L, np.maximum(mu, 1e-10), (eta - offset) + (y - mu) / mu, n)
            gamma = prob.gamma(b)
        dev = np.inf
        for _ in range(max_irls):
            eta = np.clip(U @ gamma + L @ b + offset, -ETA_CLIP, ETA_CLIP)
            mu = np.exp(eta)
            w = np.maximum(mu, 1e-10)
            z = (eta - offset) + (y - mu) / mu
            prob = _InnerProblem(U, L, w, z, n)
            b = prob.descend(b.copy(), lam, max(cd_rel * lam, cd_abs))
            gamma = prob.gamma(b)
            dev_new = quasipoisson_deviance(
                y, np.exp(np.clip(U @ gamma + L @ b + offset, -ETA_CLIP, ETA_CLIP))
            )
            if abs(dev - dev_new) <= irls_tol * (abs(dev_new) + 0.1):
                dev = dev_new
                break
            dev = dev_new
        gammas[k] = gamma
        bs[k] = b
    return gammas, bs


def _blocked_folds(row_dates, n_folds: int):
    """Contiguous time-ordered fold masks over the row dates."""
    dates = sorted(set(row_dates))
    if len(dates) < n_folds:
        raise ValidationError(
            f"{len(dates)} distinct dates cannot form {n_folds} blocked folds"
        )
    blocks = np.array_split(np.array(dates), n_folds)
    masks = []
    arr = np.array([d.toordinal() for d in row_dates])
    for block in blocks:
        lo, hi = block[0].toordinal(), block[-1].toordinal()
        masks.append((arr >= lo) & (arr <= hi))
    return masks


def fit_lasso(
    design: DesignMatrix,
    y: np.ndarray,
    lambda_path: np.ndarray | None = None,
    n_folds: int = 4,
) -> LassoFit:
    """LASSO over a 50-value log-spaced path, lambda picked by blocked CV.

    Lasso-tagged columns are scaled to unit variance internally; reported
    coefficients are on the original column scale.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (design.n_rows,):
        raise ValidationError("response length does not match design rows")
    if np.any(y <= 0):
        raise ValidationError("lasso response must be positive (smoothed and floored)")
    if design.lasso.size == 0:
        raise ValidationError("design has no lasso-tagged columns")
    if design.row_dates is None:
        raise ValidationError("design needs row dates for blocked cross-validation")

    L_raw = design.X[:, design.lasso]
    scales = L_raw.std(axis=0)
    if np.any(scales <= 0):
        bad = [design.labels[j] for j, s in zip(design.lasso, scales) if s <= 0]
        raise ValidationError(f"constant lasso columns cannot be standardized: {bad}")

    U = design.X[:, design.unpenalized]
    Ls = L_raw / scales[None, :]
    offset = design.offset if design.offset is not None else 0.0
    n = design.n_rows

    def inner_at(b, gamma):
        eta = np.clip(U @ gamma + Ls @ b + offset, -ETA_CLIP, ETA_CLIP)
        mu = np.exp(eta)
        w = np.maximum(mu, 1e-10)
        z = (eta - offset) + (y - mu) / mu
        return _InnerProblem(U, Ls, w, z, n)

    if lambda_path is None:
        # Null model (unpenalized columns only) sets the entry of the path.
        b0 = np.zeros(Ls.shape[1])
        eta = np.log(np.maximum(y, 1e-2))
        mu = np.exp(eta)
        prob = _InnerProblem(U, Ls, np.maximum(mu, 1e-10), (eta - offset) + (y - mu) / mu, n)
        gamma = prob.gamma(b0)
        for _ in range(25):
            prob = inner_at(b0, gamma)
            gamma_new = prob.gamma(b0)
            if np.max(np.abs(gamma_new - gamma)) < 1e-10:
                gamma = gamma_new
                break
            gamma = gamma_new
        lam_max = max(float(np.max(np.abs(inner_at(b0, gamma).q))), 1e-10) * 1.001
        lambda_path = np.logspace(
            np.log10(lam_max), np.log10(lam_max * LAMBDA_MIN_RATIO), N_LAMBDA
        )
    else:
        lambda_path = np.sort(np.asarray(lambda_path, dtype=float))[::-1]

    # Cross-validate over contiguous time blocks with the shared path.
    masks = _blocked_folds(design.row_dates, n_folds)
    cv = np.zeros((len(masks), len(lambda_path)))
    for i, held in enumerate(masks):
        train = ~held
        sub = design.subset_rows(train)
        sub_scales = sub.X[:, sub.lasso].std(axis=0)
        sub_scales = np.where(sub_scales <= 0, 1.0, sub_scales)
        gammas, bs = _irls_lasso_path(
            sub, y[train], sub_scales, lambda_path, cd_rel=1e-5, irls_tol=1e-8
        )
        U_t = design.X[held][:, design.unpenalized]
        L_t = design.X[held][:, design.lasso] / sub_scales[None, :]
        off_t = design.offset[held] if design.offset is not None else 0.0
        for k in range(len(lambda_path)):
            eta = np.clip(U_t @ gammas[k] + L_t @ bs[k] + off_t, -ETA_CLIP, ETA_CLIP)
            cv[i, k] = quasipoisson_deviance(y[held], np.exp(eta))
    cv_mean = cv.mean(axis=0)
    best_k = int(np.argmin(cv_mean))

    # Final fit on all rows at and above the selected lambda.
    gammas, bs = _irls_lasso_path(
        design, y, scales, lambda_path[: best_k + 1], irls_tol=1e-11
    )
    gamma, b = gammas[best_k], bs[best_k]
    lam = float(lambda_path[best_k])

    all_zero_path = not np.any(bs)
    if all_zero_path:
        warnings.warn(
            "all lasso coefficients are zero at every lambda; "
            "falling back to the intercept-only model",
            stacklevel=2,
        )

    # Active-set polish to exact stationarity, re-linearizing until the
    # working problem is self-consistent; KKT is reported on the final one.
    for _ in range(8):
        prob = inner_at(b, gamma)
        b_new = prob.polish(b, lam)
        gamma = prob.gamma(b_new)
        if np.max(np.abs(b_new - b)) < 1e-11:
            b = b_new
            break
        b = b_new
    prob = inner_at(b, gamma)
    grad = prob.gradient(b)
    zero = b == 0.0
    kkt_zero = float(np.max(np.abs(grad[zero]) - lam)) if zero.any() else -np.inf
    kkt_active = (
        float(np.max(np.abs(np.abs(grad[~zero]) - lam))) if (~zero).any() else 0.0
    )

    coefficients = np.zeros(design.n_columns)
    coefficients[design.unpenalized] = gamma
    coefficients[design.lasso] = b / scales

    return LassoFit(
        labels=design.labels,
        coefficients=coefficients,
        selected_lambda=lam,
        lambda_path=np.asarray(lambda_path),
        cv_deviance=cv_mean,
        n_nonzero=int(np.count_nonzero(b)),
        kkt_zero_violation=kkt_zero,
        kkt_active_violation=kkt_active,
        all_zero_path=all_zero_path,
    )
