"""Adaptive Gauss-Legendre quadrature on logarithmic panels.

Lévy densities have power-law behaviour at 0 and at infinity, so all
integrals are computed in the variable ``u = log(x)``. The half line is
cut into one panel per e-fold (plus any caller breakpoints, e.g. the nodes
of a tabulated density); every panel is refined by bisection until a
16-point rule and its two-halves refinement agree. Infinite or zero
endpoints are handled by extending e-fold panels outward until the panel
contributions decay geometrically, then adding the geometric remainder.
"""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(16)

U_MIN = -690.0  # exp(-690) ~ 1e-300
U_MAX = 690.0


class NumericError(ArithmeticError):
    """Raised when a numerical procedure fails to reach its tolerance."""

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


def _panel_rule(F, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    u = mid[:, None] + half[:, None] * _NODES[None, :]
    return half * (F(u) @ _WEIGHTS)


def _adaptive(F, a: np.ndarray, b: np.ndarray, rtol: float, atol: float,
              max_rounds: int = 40, ref: float = 0.0) -> tuple[float, float]:
    """Integrate ``F`` over the union of panels ``[a_i, b_i]``.

    ``ref`` is an outside magnitude the error may be measured against
    (used for tail panels that are tiny compared with the full integral).
    Returns ``(value, error_estimate)``.
    """
    coarse = _panel_rule(F, a, b)
    total = 0.0
    err_total = 0.0
    scale = max(abs(float(coarse.sum())), atol, ref)
    width = float((b - a).sum()) or 1.0
    for _ in range(max_rounds):
        m = 0.5 * (a + b)
        left = _panel_rule(F, a, m)
        right = _panel_rule(F, m, b)
        fine = left + right
        err = np.abs(fine - coarse)
        allowed = np.maximum(rtol * np.abs(fine), rtol * scale * (b - a) / width)
        allowed = np.maximum(allowed, atol * (b - a) / width)
        ok = err <= allowed
        total += float(fine[ok].sum())
        err_total += float(err[ok].sum())
        if ok.all():
            return total, err_total
        bad = ~ok
        a, b = np.concatenate([a[bad], m[bad]]), np.concatenate([m[bad], b[bad]])
        coarse = np.concatenate([left[bad], right[bad]])
    total += float(coarse.sum())
    err_total += float(np.abs(coarse).sum())
    raise NumericError(
        f"quadrature did not converge (error estimate {err_total:.3g})",
        achieved=err_total / max(abs(total), 1e-300),
    )


def _tail(F, u_start: float, direction: int, scale: float, rtol: float,
          atol: float) -> tuple[float, float]:
    """Sum e-fold panels from ``u_start`` outward until the rest is negligible."""
    total = 0.0
    err = 0.0
    last: list[float] = []
    u = u_start
    chunk = 8
    while True:
        if direction < 0:
            edges = u - np.arange(chunk + 1, dtype=float)
            a, b = edges[1:], edges[:-1]
        else:
            edges = u + np.arange(chunk + 1, dtype=float)
            a, b = edges[:-1], edges[1:]
        ref = 1e-2 * max(abs(scale + total), atol)
        vals = np.array([_adaptive(F, a[i:i + 1], b[i:i + 1], rtol, atol * 1e-3,
                                   ref=ref)[0]
                         for i in range(chunk)])
        total += float(vals.sum())
        last.extend(vals.tolist())
        u = float(edges[-1])
        ref = max(abs(scale + total), atol)
        if len(last) >= 2:
            q1, q2 = last[-1], last[-2]
            if q2 != 0.0 and 0.0 <= q1 / q2 < 0.98:
                q = q1 / q2
                rest = q1 * q / (1.0 - q)
                if abs(rest) <= 0.1 * rtol * ref or (rest == 0.0):
                    return total + rest, err + abs(rest) * 0.1
            elif q1 == 0.0 and q2 == 0.0:
                return total, err
        if u <= U_MIN or u >= U_MAX:
            if abs(last[-1]) <= rtol * ref:
                return total, err + abs(last[-1])
            raise NumericError("integrand tail does not decay (divergent integral?)",
                               achieved=abs(last[-1]) / ref)
        chunk = min(chunk * 2, 64)


def phi2(z: np.ndarray) -> np.ndarray:
    """``exp(-z) - 1 + z`` without cancellation for small ``z >= 0``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < 1e-3
    zs = z[small]
    out[small] = zs * zs * (0.5 - zs * (1.0 / 6.0 - zs * (1.0 / 24.0 - zs / 120.0)))
    zl = z[~small]
    out[~small] = np.expm1(-zl) + zl
    return out


def one_minus_exp(z: np.ndarray) -> np.ndarray:
    """``1 - exp(-z)`` accurate for small ``z``."""
    return -np.expm1(-np.asarray(z, dtype=float))


def integrate_log(f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                  breakpoints: Iterable[float] = (), rtol: float = 1e-9,
                  atol: float = 0.0) -> float:
    """Return ``∫_lo^hi f(x) dx`` for ``0 <= lo < hi <= inf``.

    ``f`` must accept an ndarray of positive abscissae. Raises
    :class:`NumericError` if the tolerance cannot be met.
    """
    if not (lo >= 0.0 and hi > lo):
        raise ValueError(f"need 0 <= lo < hi, got [{lo}, {hi}]")

    def F(u):
        x = np.exp(u)
        return f(x) * x

    bps = sorted(float(p) for p in breakpoints if lo < p < hi and np.isfinite(p))
    u_lo = np.log(lo) if lo > 0 else None
    u_hi = np.log(hi) if np.isfinite(hi) else None
    # core interval: where the caller's points are, or around x = 1
    core_lo = u_lo if u_lo is not None else min([np.log(bps[0])] if bps else [0.0]) - 1.0
    core_hi = u_hi if u_hi is not None else max([np.log(bps[-1])] if bps else [0.0]) + 1.0
    if u_lo is None and u_hi is not None:
        core_lo = min(core_lo, u_hi - 1.0)
    if u_hi is None and u_lo is not None:
        core_hi = max(core_hi, u_lo + 1.0)
    n_core = max(1, int(np.ceil(core_hi - core_lo)))
    edges = np.linspace(core_lo, core_hi, n_core + 1)
    edges = np.unique(np.concatenate([edges, np.log(bps)]) if bps else edges)
    core, core_err = _adaptive(F, edges[:-1], edges[1:], rtol, atol)
    total, err = core, core_err
    if u_lo is None:
        t, e = _tail(F, core_lo, -1, total, rtol, atol)
        total += t
        err += e
    if u_hi is None:
        t, e = _tail(F, core_hi, +1, total, rtol, atol)
        total += t
        err += e
    return total
