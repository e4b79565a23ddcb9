"""Least-squares fits of the three closed forms used to summarise SRE curves.

    saturation:  y = ln2 - a0 exp(-b0 x)          (symmetry-broken branch)
    lorentzian:  y = a0 + b0 / (c0 + x^2)         (symmetric branch, long times)
    boundary:    y = a0 + b0 / (c0 + x^2)         (x = J t*, y = beta J)

``x`` is always the dimensionless time ``J t``. The optimiser is scipy's
trust-region reflective least squares with analytic Jacobians and parameter
scaling by the initial magnitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import least_squares

from .thermal import ConvergenceError

LN2 = math.log(2.0)


class FitError(ValueError):
    """Input that cannot determine the requested model."""


@dataclass(frozen=True)
class FitModel:
    model_id: str
    param_names: tuple[str, ...]
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray, np.ndarray], np.ndarray]
    min_points: int


@dataclass
class FitResult:
    model_id: str
    params: dict[str, float]
    covariance: np.ndarray
    r_squared: float
    residuals: np.ndarray
    unidentifiable: list[str] = field(default_factory=list)
    n_points: int = 0
    iterations: int = 0
    optimality: float = 0.0

    def predict(self, x) -> np.ndarray:
        model = MODELS[self.model_id]
        return model.func(np.asarray(self.param_vector()), np.asarray(x, dtype=float))

    def param_vector(self) -> np.ndarray:
        return np.array(list(self.params.values()))

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "params": dict(self.params),
            "covariance": np.asarray(self.covariance).tolist(),
            "r_squared": self.r_squared,
            "residuals": np.asarray(self.residuals).tolist(),
            "unidentifiable": list(self.unidentifiable),
            "n_points": self.n_points,
        }


def _sat(p, x):
    return LN2 - p[0] * np.exp(-p[1] * x)


def _sat_jac(p, x):
    e = np.exp(-p[1] * x)
    return np.column_stack([-e, p[0] * x * e])


def _lor(p, x):
    return p[0] + p[1] / (p[2] + x**2)


def _lor_jac(p, x):
    d = p[2] + x**2
    return np.column_stack([np.ones_like(x), 1.0 / d, -p[1] / d**2])


MODELS: dict[str, FitModel] = {
    "saturation": FitModel("saturation", ("a0", "b0"), _sat, _sat_jac, 4),
    "lorentzian": FitModel("lorentzian", ("a0", "b0", "c0"), _lor, _lor_jac, 4),
    "boundary": FitModel("boundary", ("a0", "b0", "c0"), _lor, _lor_jac, 3),
}


def _as_xy(points, j_coupling: float):
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FitError("points must be a sequence of (x, y) pairs")
    if not np.all(np.isfinite(arr)):
        raise FitError("points contain non-finite values")
    order = np.argsort(arr[:, 0], kind="stable")
    return arr[order, 0] * j_coupling, arr[order, 1]


def fit_model(
    model: FitModel,
    x,
    y,
    p0,
    sigma=None,
    max_iter: int = 500,
    rank_tol: float = 1e-8,
) -> FitResult:
    """Fit ``model`` to ``(x, y)``; the generic entry point behind the three forms.

    ``sigma`` (standard errors) switches on weighting. Parameters whose
    direction is (numerically) absent from the Jacobian at the optimum are
    reported in ``unidentifiable`` and get infinite variance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n_par = len(model.param_names)
    if n_par > 4:
        raise FitError("closed forms are limited to 4 parameters")
    if len(x) < max(model.min_points, n_par):
        raise FitError(f"{model.model_id} fit needs at least {max(model.min_points, n_par)} points, got {len(x)}")
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    scale = np.where(np.abs(p0) > 0, np.abs(p0), 1.0)

    def resid(p):
        return w * (model.func(p, x) - y)

    def jac(p):
        return w[:, None] * model.jac(p, x)

    sol = least_squares(
        resid, p0, jac=jac, method="trf", x_scale=scale, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_iter
    )
    if sol.status == 0:
        raise ConvergenceError(f"{model.model_id} fit did not converge in {max_iter} evaluations")
    p = sol.x
    if not np.all(np.isfinite(p)):
        raise ConvergenceError(f"{model.model_id} fit produced non-finite parameters")

    jm = jac(p)
    # unidentifiable directions: right singular vectors of tiny singular values
    _, sv, vt = np.linalg.svd(jm * scale, full_matrices=False)
    null = sv <= rank_tol * max(sv.max(initial=0.0), 1e-300)
    flagged = set()
    for k in np.nonzero(null)[0]:
        flagged.update(int(i) for i in np.nonzero(np.abs(vt[k]) > 0.1)[0])
    resid_raw = model.func(p, x) - y
    dof = len(x) - n_par
    s2 = float(np.sum((w * resid_raw) ** 2) / dof) if dof > 0 else float("nan")
    if sigma is not None:
        s2 = 1.0
    cov = np.full((n_par, n_par), np.inf)
    if not flagged:
        cov = s2 * np.linalg.inv(jm.T @ jm)
    ss_res = float(np.sum(resid_raw**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res <= 1e-24 else -math.inf
    return FitResult(
        model_id=model.model_id,
        params={name: float(v) for name, v in zip(model.param_names, p)},
        covariance=cov,
        r_squared=r2,
        residuals=resid_raw,
        unidentifiable=[model.param_names[i] for i in sorted(flagged)],
        n_points=len(x),
        iterations=int(sol.nfev),
        optimality=float(sol.optimality),
    )


def fit_saturation(points, j_coupling: float = 1.0, p0=None, sigma=None, max_iter: int = 500) -> FitResult:
    """``M2/N = ln2 - a0 exp(-b0 J t)`` on symmetry-broken-branch points ``(t, M2/N)``."""
    x, y = _as_xy(points, j_coupling)
    if p0 is None:
        p0 = (LN2 - y[0], 1.0)
    return fit_model(MODELS["saturation"], x, y, p0, sigma=sigma, max_iter=max_iter)


def _lorentz_guess(x, y):
    c = max(float(np.median(x**2)), 1.0)
    a = y[-1]
    b = (y[0] - a) * (c + x[0] ** 2)
    return a, b, c


def fit_lorentzian(points, j_coupling: float = 1.0, p0=None, sigma=None, max_iter: int = 500) -> FitResult:
    """``M2/N = a0 + b0 / (c0 + J^2 t^2)`` on ``(t, M2/N)`` points."""
    x, y = _as_xy(points, j_coupling)
    return fit_model(MODELS["lorentzian"], x, y, p0 or _lorentz_guess(x, y), sigma=sigma, max_iter=max_iter)


def fit_boundary(points, j_coupling: float = 1.0, p0=None, max_iter: int = 500) -> FitResult:
    """Phase boundary ``beta J = a0 + b0 / (c0 + J^2 t*^2)`` on ``(t*, beta J)`` points."""
    x, y = _as_xy(points, j_coupling)
    return fit_model(MODELS["boundary"], x, y, p0 or _lorentz_guess(x, y), max_iter=max_iter)


def jacobian_check(model_id: str, params, x, step: float = 1e-6) -> float:
    """Max relative deviation of the analytic Jacobian from central differences."""
    model = MODELS[model_id]
    p = np.asarray(params, dtype=float)
    x = np.asarray(x, dtype=float)
    analytic = model.jac(p, x)
    numeric = np.empty_like(analytic)
    for k in range(len(p)):
        h = step * max(abs(p[k]), 1.0)
        dp = np.zeros_like(p)
        dp[k] = h
        numeric[:, k] = (model.func(p + dp, x) - model.func(p - dp, x)) / (2 * h)
    denom = np.maximum(np.abs(analytic), 1e-12)
    return float(np.max(np.abs(analytic - numeric) / denom))
