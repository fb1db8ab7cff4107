"""Monte Carlo estimates and goodness-of-fit tests."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats as sps

__all__ = ["McEstimate", "mc_mean", "ratio_estimate", "through_origin_slope",
           "ks_two_sample", "weighted_ks_two_sample", "chi_square", "ks_statistic"]


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n: int
    bias_note: Optional[float] = None

    def __post_init__(self):
        if self.std_error < 0 or self.n < 1:
            raise ValueError("need std_error >= 0 and n >= 1")

    def scaled(self, k: float) -> "McEstimate":
        return McEstimate(self.mean * k, self.std_error * abs(k), self.n, self.bias_note)

    def __str__(self):
        return f"{self.mean:.6g} ± {self.std_error:.3g} (n={self.n})"


def mc_mean(x, bias_note: Optional[float] = None) -> McEstimate:
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return McEstimate(float(x.mean()), se, n, bias_note)


def ratio_estimate(num, den) -> McEstimate:
    """``sum(num) / sum(den)`` with a delta-method standard error."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    n = num.size
    r = num.sum() / den.sum()
    resid = num - r * den
    se = math.sqrt(n * (resid ** 2).sum() / (n - 1)) / den.sum()
    return McEstimate(float(r), float(se), n)


def through_origin_slope(x, y) -> McEstimate:
    """Least-squares slope of ``y`` on ``x`` without intercept, heteroscedastic-robust SE."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sxx = (x * x).sum()
    b = (x * y).sum() / sxx
    se = math.sqrt(((x * (y - b * x)) ** 2).sum()) / sxx
    return McEstimate(float(b), float(se), x.size)


def ks_statistic(xs, ys, wx=None, wy=None) -> float:
    """Sup distance between two (weighted) empirical distribution functions."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    wx = np.ones(xs.size) if wx is None else np.asarray(wx, dtype=float)
    wy = np.ones(ys.size) if wy is None else np.asarray(wy, dtype=float)
    ox, oy = np.argsort(xs), np.argsort(ys)
    xs, wx, ys, wy = xs[ox], wx[ox], ys[oy], wy[oy]
    cx = np.concatenate([[0.0], np.cumsum(wx) / wx.sum()])
    cy = np.concatenate([[0.0], np.cumsum(wy) / wy.sum()])
    grid = np.concatenate([xs, ys])
    fx = cx[np.searchsorted(xs, grid, side="right")]
    fy = cy[np.searchsorted(ys, grid, side="right")]
    return float(np.max(np.abs(fx - fy)))


def ks_two_sample(xs, ys) -> float:
    """Two-sample KS p-value (exact for small samples, asymptotic otherwise)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size == 0 or ys.size == 0:
        raise ValueError("empty sample")
    method = "exact" if max(xs.size, ys.size) < 100 else "asymp"
    return float(sps.ks_2samp(xs, ys, method=method).pvalue)


def weighted_ks_two_sample(xs, ys, wx=None, wy=None) -> tuple[float, float, float]:
    """Weighted two-sample KS test.

    Uses Kish effective sample sizes ``(sum w)^2 / sum w^2`` in the
    asymptotic Kolmogorov distribution. Returns ``(statistic, p, n_eff)``
    where ``n_eff`` is the combined effective size.
    """
    d = ks_statistic(xs, ys, wx, wy)

    def kish(w, n):
        if w is None:
            return float(n)
        w = np.asarray(w, dtype=float)
        return float(w.sum() ** 2 / (w ** 2).sum())

    nx, ny = kish(wx, np.size(xs)), kish(wy, np.size(ys))
    ne = nx * ny / (nx + ny)
    p = float(sps.kstwobign.sf(d * math.sqrt(ne)))
    return d, p, ne


def chi_square(hist, expected, ddof: int = 0, normalize: bool = True) -> tuple[float, float]:
    """Pearson chi-square of observed counts against expected counts.

    With ``normalize`` the expected vector is rescaled to the observed total
    and one degree of freedom is removed. Returns ``(statistic, p)``.
    """
    obs = np.asarray(hist, dtype=float)
    exp = np.asarray(expected, dtype=float)
    if obs.shape != exp.shape:
        raise ValueError("shape mismatch")
    if normalize:
        exp = exp * obs.sum() / exp.sum()
        ddof += 1
    if np.any(exp <= 0):
        raise ValueError("expected counts must be positive")
    stat = float(((obs - exp) ** 2 / exp).sum())
    df = obs.size - ddof
    return stat, float(sps.chi2.sf(stat, df))
