"""Special functions and small dense weighted least squares.

The rest of the package needs exactly three numerical primitives: the
chi-square survival function (for heterogeneity p-values), the normal
survival function (for two-sided z-tests), and a weighted least-squares
solver (the backbone of the linear, logistic and meta-regression fits).
All functions here are pure and reentrant.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, RankDeficiencyError

# Iteration cap for the incomplete-gamma series and continued fraction.
# Both converge in a few dozen terms for the (q, df) ranges seen here.
_MAX_TERMS = 500

# A pivot below this fraction of the largest pivot marks the design as
# rank deficient: deterministic, documented failure instead of silent
# garbage from a nearly singular triangular solve.
_PIVOT_RTOL = 1e-12


def _lower_gamma_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by power series.

    P(a, x) = x^a e^{-x} / Gamma(a) * sum_{n>=0} x^n / (a (a+1) ... (a+n)),
    which converges fast for x < a + 1.
    """
    term = 1.0 / a
    total = term
    denom = a
    for _ in range(_MAX_TERMS):
        denom += 1.0
        term *= x / denom
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_cf(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by continued fraction.

    Modified Lentz evaluation of the classical continued fraction
    Q(a, x) = x^a e^{-x} / Gamma(a) * 1 / (x + 1 - a - 1(1-a)/(x + 3 - a - ...)),
    stable for x >= a + 1.
    """
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi_square_sf(q: float, df: int) -> float:
    """Upper-tail probability P(X > q) for X ~ chi-square with ``df`` df.

    Equals the regularized upper incomplete gamma function Q(df/2, q/2).
    The computation splits at x = a + 1 between the series and the
    continued fraction, the standard stable arrangement; absolute error
    is well below 1e-12 in the ranges exercised by the test suite.
    """
    q = float(q)
    if not math.isfinite(q) or q < 0.0:
        raise DomainError(f"chi-square statistic must be finite and >= 0, got {q}")
    if int(df) != df or df < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {df}")
    a = df / 2.0
    x = q / 2.0
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        p = 1.0 - _lower_gamma_series(a, x)
    else:
        p = _upper_gamma_cf(a, x)
    # Roundoff can push the complement a few ulp outside [0, 1].
    return min(max(p, 0.0), 1.0)


def normal_sf(z: float) -> float:
    """Upper-tail probability P(Z > z) for a standard normal Z.

    Computed as erfc(z / sqrt(2)) / 2, accurate to a few ulp, and
    satisfying normal_sf(z) + normal_sf(-z) = 1.
    """
    z = float(z)
    if not math.isfinite(z):
        raise DomainError(f"z must be finite, got {z}")
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wls_solve(
    X: np.ndarray, y: np.ndarray, w: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted least squares via QR of the row-scaled design.

    Minimizes sum_i w_i (y_i - X_i . coef)^2 and returns
    ``(coef, cov)`` where ``cov = (X' W X)^{-1}``. Callers rescale
    ``cov`` according to their own error model (e.g. by the residual
    variance for ordinary regression; not at all for generalized least
    squares with known variances).

    The solve goes through a Householder QR of sqrt(w) * X rather than
    the normal equations, so conditioning is that of the design itself.
    Rank deficiency is detected from the R diagonal and reported with
    the offending column index.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise DomainError(f"design must be 2-dimensional, got shape {X.shape}")
    n, p = X.shape
    if y.shape != (n,):
        raise DomainError(f"response has shape {y.shape}, expected ({n},)")
    if n < p:
        raise DomainError(f"need at least as many rows as columns, got {n} < {p}")
    if not np.isfinite(X).all():
        raise DomainError("design matrix contains non-finite entries")
    if not np.isfinite(y).all():
        raise DomainError("response contains non-finite entries")
    if w is None:
        Xw, yw = X, y
    else:
        w = np.asarray(w, dtype=float)
        if w.shape != (n,):
            raise DomainError(f"weights have shape {w.shape}, expected ({n},)")
        if not np.isfinite(w).all() or (w < 0).any():
            raise DomainError("weights must be finite and non-negative")
        sw = np.sqrt(w)
        Xw = X * sw[:, None]
        yw = y * sw

    Q, R = np.linalg.qr(Xw)
    pivots = np.abs(np.diag(R))
    bad = np.flatnonzero(pivots <= _PIVOT_RTOL * pivots.max())
    if bad.size:
        raise RankDeficiencyError(column=int(bad[0]))
    coef = np.linalg.solve(R, Q.T @ yw)
    r_inv = np.linalg.solve(R, np.eye(p))
    cov = r_inv @ r_inv.T
    return coef, cov
