"""Random-effects meta-regression of context estimates on mean exposure.

The model is

    estimate_k = intercept + slope * mean_k + u_k + e_k,
    Var(e_k) = v_k (known),  Var(u_k) = tau2 (estimated),

fit by weighted least squares with weights 1 / (v_k + tau2). The slope
p-value is the two-sided z-test 2 * normal_sf(|slope / se|). Three
between-context variance estimators are available:

* ``reml``: restricted maximum likelihood by Fisher scoring (the default,
  matching standard meta-regression software);
* ``dl``: the DerSimonian-Laird moment estimator generalized to a
  regression design, max(0, (Q_res - (K - 2)) / tr(P));
* ``fixed``: tau2 = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConvergenceError, DomainError
from .heterogeneity import MODIFIED_SECOND_ORDER, q_modified_second_order
from .numerics import normal_sf, wls_solve

# Tighter than strictly needed for the tau2 estimate itself so that the
# fitted slope is stable to ~1e-10 under reparameterizations of the design.
_REML_TOL = 1e-12
_REML_MAX_ITER = 200

TAU2_METHODS = ("reml", "dl", "fixed")


@dataclass(frozen=True)
class MetaRegResult:
    intercept: float
    slope: float
    slope_se: float
    tau2: float
    slope_p: float
    tau2_method: str
    k: int
    iterations: int = 0


def _validate(estimates, variances, means):
    y = np.asarray(estimates, dtype=float)
    v = np.asarray(variances, dtype=float)
    x = np.asarray(means, dtype=float)
    if not (y.shape == v.shape == x.shape) or y.ndim != 1:
        raise DomainError("estimates, variances and means must be equal-length vectors")
    k = y.size
    if k < 3:
        raise ConfigError(
            f"meta-regression needs >= 3 contexts (two coefficients plus a "
            f"residual degree of freedom), got {k}"
        )
    if not np.isfinite(y).all() or not np.isfinite(x).all():
        raise DomainError("estimates and means must be finite")
    if not np.isfinite(v).all() or (v <= 0).any():
        raise DomainError("variances must be finite and > 0")
    if np.ptp(x) == 0.0:
        raise ConfigError("all context means are equal; the trend design is collinear")
    return y, v, x, k


def _gls(X, y, w):
    coef, cov = wls_solve(X, y, w)
    resid = y - X @ coef
    return coef, cov, resid


def _restricted_ll(tau2, X, y, v):
    w = 1.0 / (v + tau2)
    coef, _, resid = _gls(X, y, w)
    xtwx = X.T @ (X * w[:, None])
    sign, logdet = np.linalg.slogdet(xtwx)
    if sign <= 0:
        raise ConfigError("meta-regression design is singular")
    return -0.5 * (np.log(v + tau2).sum() + logdet + float(w @ resid**2))


def _dl_tau2(X, y, v, k, p):
    w0 = 1.0 / v
    _, cov, resid = _gls(X, y, w0)
    q_res = float(w0 @ resid**2)
    a2 = X.T @ (X * (w0**2)[:, None])
    tr_p = float(w0.sum() - np.trace(cov @ a2))
    return max(0.0, (q_res - (k - p)) / tr_p)


def _reml_tau2(X, y, v, k):
    """Fisher scoring on the restricted likelihood, clamped at zero.

    Score and information use the standard projection identities: with
    P = W - WX(X'WX)^{-1}X'W one has Py = W r, so

        score = -tr(P)/2 + ||W r||^2 / 2,    info = tr(P^2) / 2,

    and tr(P^m) reduces to traces of small p x p products.
    """
    tau2 = _dl_tau2(X, y, v, k, X.shape[1])
    ll = _restricted_ll(tau2, X, y, v)
    trace = [tau2]
    for iteration in range(1, _REML_MAX_ITER + 1):
        w = 1.0 / (v + tau2)
        _, cov, resid = _gls(X, y, w)
        wr = w * resid
        a2 = X.T @ (X * (w**2)[:, None])
        a3 = X.T @ (X * (w**3)[:, None])
        m = cov @ a2
        tr_p = float(w.sum() - np.trace(m))
        tr_p2 = float((w**2).sum() - 2.0 * np.trace(cov @ a3) + np.trace(m @ m))
        score = -0.5 * tr_p + 0.5 * float(wr @ wr)
        if tau2 == 0.0 and score <= 0.0:
            return tau2, iteration
        info = 0.5 * tr_p2
        candidate = max(0.0, tau2 + score / info)
        new_ll = _restricted_ll(candidate, X, y, v)
        halvings = 0
        while new_ll < ll - 1e-13 and halvings < 30:
            candidate = 0.5 * (candidate + tau2)
            new_ll = _restricted_ll(candidate, X, y, v)
            halvings += 1
        moved = abs(candidate - tau2)
        tau2, ll = candidate, new_ll
        trace.append(tau2)
        if moved < _REML_TOL:
            return tau2, iteration
    raise ConvergenceError(
        f"REML scoring did not converge in {_REML_MAX_ITER} iterations",
        trace=tuple(trace),
    )


def meta_regress(estimates, variances, means, method: str = "reml") -> MetaRegResult:
    """Weighted regression of context estimates on context mean exposure.

    ``variances`` are the within-context sampling variances of the
    estimates (first-order, unless the caller chose otherwise). The
    returned covariance of the coefficients is the GLS one, (X'WX)^{-1},
    with no residual rescaling.
    """
    if method not in TAU2_METHODS:
        raise ConfigError(f"unknown tau2 method {method!r}; choose from {TAU2_METHODS}")
    y, v, x, k = _validate(estimates, variances, means)
    # Center the regressor: the slope is unchanged and the fit stays well
    # conditioned however large the mean exposure is relative to its spread.
    center = float(x.mean())
    X = np.column_stack([np.ones(k), x - center])
    iterations = 0
    if method == "fixed":
        tau2 = 0.0
    elif method == "dl":
        tau2 = _dl_tau2(X, y, v, k, X.shape[1])
        iterations = 1
    else:
        tau2, iterations = _reml_tau2(X, y, v, k)
    coef, cov, _ = _gls(X, y, 1.0 / (v + tau2))
    slope = float(coef[1])
    slope_se = float(np.sqrt(cov[1, 1]))
    return MetaRegResult(
        intercept=float(coef[0]) - slope * center,
        slope=slope,
        slope_se=slope_se,
        tau2=float(tau2),
        slope_p=2.0 * normal_sf(abs(slope) / slope_se),
        tau2_method=method,
        k=k,
        iterations=iterations,
    )


def trend_test(
    results,
    method: str = "reml",
    variance_scheme: str = "first_order",
) -> MetaRegResult:
    """Meta-regression of the per-context ratio estimates on mean exposure.

    ``variance_scheme`` selects the within-context variances: first-order
    (the default, matching the pooled IVW weighting) or modified
    second-order evaluated at that scheme's pooled value.
    """
    results = list(results)
    estimates = [r.ratio for r in results]
    means = [r.summary.exposure_mean for r in results]
    if variance_scheme == "first_order":
        variances = [r.ratio_se_first_order**2 for r in results]
    elif variance_scheme == MODIFIED_SECOND_ORDER:
        b = q_modified_second_order(results).pooled_beta
        variances = [
            (r.by.se**2 + b * b * r.bx.se**2) / r.bx.beta**2 for r in results
        ]
    else:
        raise ConfigError(f"unknown variance scheme {variance_scheme!r}")
    return meta_regress(estimates, variances, means, method=method)
