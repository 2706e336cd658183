"""Independent reference implementations used to check the package.

Everything here deliberately avoids the code paths under test: the
chi-square tail comes from adaptive quadrature of the density, the normal
tail from a power series for erf, and the modified-weights heterogeneity
statistic from a brute-force grid minimization.
"""

from __future__ import annotations

import math

import numpy as np


def _adaptive_simpson(f, a, b, tol, depth=60):
    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm = f(lm)
        frm = f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + recurse(
            m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
        )

    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, depth)


def chi_square_sf_quadrature(q: float, df: int, tol: float = 1e-12) -> float:
    """P(X > q) for X ~ chi-square(df), by integrating the density.

    For df = 1 the density is singular at zero, so the integral is taken
    in the substituted variable t = s^2, which turns it into a smooth
    half-normal integrand.
    """
    if q == 0.0:
        return 1.0
    a = df / 2.0
    if df == 1:
        c = 2.0 / math.sqrt(2.0 * math.pi)
        cdf = _adaptive_simpson(lambda s: c * math.exp(-0.5 * s * s), 0.0, math.sqrt(q), tol)
    else:
        lognorm = a * math.log(2.0) + math.lgamma(a)

        def density(t):
            if t <= 0.0:
                return 0.0
            return math.exp((a - 1.0) * math.log(t) - 0.5 * t - lognorm)

        cdf = _adaptive_simpson(density, 0.0, q, tol)
    return min(max(1.0 - cdf, 0.0), 1.0)


def _erf_series(x: float) -> float:
    # Alternating Maclaurin series; plenty accurate for |x| <= 4.
    total = 0.0
    term = x
    n = 0
    while abs(term) > 1e-18 * max(abs(total), 1e-300) and n < 300:
        total += term / (2 * n + 1)
        n += 1
        term *= -x * x / n
    return 2.0 / math.sqrt(math.pi) * total


def normal_sf_series(z: float) -> float:
    """P(Z > z) from the erf Maclaurin series (|z| up to ~5)."""
    return 0.5 * (1.0 - _erf_series(z / math.sqrt(2.0)))


def modified_q_grid_min(bx, bx_se, by, by_se, lo, hi, steps=400_001):
    """Brute-force minimum over beta of the modified-weights Q function.

    Q(beta) = sum_k (by_k - beta bx_k)^2 / (by_se_k^2 + beta^2 bx_se_k^2),
    scanned on a uniform grid over [lo, hi].
    """
    bx = np.asarray(bx, dtype=float)
    bx_se = np.asarray(bx_se, dtype=float)
    by = np.asarray(by, dtype=float)
    by_se = np.asarray(by_se, dtype=float)
    grid = np.linspace(lo, hi, steps)
    resid = by[None, :] - grid[:, None] * bx[None, :]
    var = by_se[None, :] ** 2 + grid[:, None] ** 2 * bx_se[None, :] ** 2
    qvals = (resid**2 / var).sum(axis=1)
    i = int(np.argmin(qvals))
    return float(grid[i]), float(qvals[i])


def reml_loglik(tau2, estimates, variances, means):
    """Restricted log-likelihood of the mean-exposure meta-regression.

    Up to an additive constant:
    -0.5 [ sum log(v_k + tau2) + log det(X' W X) + sum w_k r_k^2 ].
    """
    y = np.asarray(estimates, dtype=float)
    v = np.asarray(variances, dtype=float)
    x = np.asarray(means, dtype=float)
    X = np.column_stack([np.ones_like(x), x])
    w = 1.0 / (v + tau2)
    xtwx = X.T @ (X * w[:, None])
    coef = np.linalg.solve(xtwx, X.T @ (w * y))
    r = y - X @ coef
    return -0.5 * (
        np.log(v + tau2).sum() + math.log(np.linalg.det(xtwx)) + float(w @ r**2)
    )


def reml_profile_grid(estimates, variances, means, hi, step=1e-4):
    """Grid search of the restricted likelihood over tau2 in [0, hi].

    Returns (tau2_hat, slope_at_tau2_hat). The coarse scan uses the
    requested resolution and is then refined twice around the maximum,
    still by pure grid evaluation.
    """
    y = np.asarray(estimates, dtype=float)
    v = np.asarray(variances, dtype=float)
    x = np.asarray(means, dtype=float)

    def scan(lo_, hi_, n_):
        grid = np.linspace(lo_, hi_, n_)
        vals = [reml_loglik(t, y, v, x) for t in grid]
        i = int(np.argmax(vals))
        return grid, i

    n = max(int(round(hi / step)) + 1, 11)
    grid, i = scan(0.0, hi, n)
    width = grid[1] - grid[0]
    for _ in range(2):
        lo_ = max(0.0, grid[i] - width)
        hi_ = grid[i] + width
        grid, i = scan(lo_, hi_, 2001)
        width = grid[1] - grid[0]
    tau2 = float(grid[i])

    X = np.column_stack([np.ones_like(x), x])
    w = 1.0 / (v + tau2)
    xtwx = X.T @ (X * w[:, None])
    coef = np.linalg.solve(xtwx, X.T @ (w * y))
    return tau2, float(coef[1])


def ks_uniform_pvalue(samples) -> float:
    """Two-sided Kolmogorov-Smirnov p-value against Uniform(0, 1).

    Uses the Stephens small-sample correction of the asymptotic
    Kolmogorov distribution, accurate enough for n >= 50.
    """
    u = np.sort(np.asarray(samples, dtype=float))
    n = u.size
    i = np.arange(1, n + 1)
    d = max(np.max(i / n - u), np.max(u - (i - 1) / n))
    lam = (math.sqrt(n) + 0.12 + 0.11 / math.sqrt(n)) * d
    total = 0.0
    for j in range(1, 101):
        term = 2.0 * (-1.0) ** (j - 1) * math.exp(-2.0 * j * j * lam * lam)
        total += term
        if abs(term) < 1e-12:
            break
    return min(max(total, 0.0), 1.0)
