"""Seedable random sampling for trees, clocks and stable subordinators.

Streams are numpy ``Generator`` objects seeded by mixing ``(root_seed,
stream_id)`` through splitmix64, so replicate ``k`` of a run can be
regenerated on its own.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from .exponent import Stable, TruncatedMechanism, pi_star_tail_stable
from .quadrature import _panel_rule, integrate_log

__all__ = [
    "RngStream", "splitmix64", "SubordinatorSample", "sample_jump", "sample_jumps",
    "sample_cut_clock", "sample_poisson", "sample_uniform",
    "sample_subordinator_jumps", "subordinator_small_jump_bias", "JumpTable",
]

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One round of the splitmix64 output function (64-bit finaliser)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


class RngStream:
    """Random stream identified by ``(root_seed, stream_id)``.

    The numpy seed is ``splitmix64(splitmix64(root_seed) ^ stream_id)``.
    A stream must be used by one worker at a time.
    """

    def __init__(self, root_seed: int, stream_id: int = 0):
        if not (0 <= root_seed <= _MASK and 0 <= stream_id <= _MASK):
            raise ValueError("seed and stream id must be 64-bit unsigned integers")
        self.root_seed = int(root_seed)
        self.stream_id = int(stream_id)
        self.seed = splitmix64(splitmix64(self.root_seed) ^ self.stream_id)
        self.gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, stream_id: int) -> "RngStream":
        """Independent stream derived from this stream's seed."""
        return RngStream(self.seed, stream_id)

    def __repr__(self):
        return f"RngStream(root_seed={self.root_seed}, stream_id={self.stream_id})"


def _gen(rng) -> np.random.Generator:
    return rng.gen if isinstance(rng, RngStream) else rng


def sample_uniform(rng, size=None):
    """Uniform variates on ``(0, 1]``."""
    return 1.0 - _gen(rng).random(size)


def sample_poisson(rate, rng, size=None):
    rate_arr = np.asarray(rate, dtype=float)
    if np.any(rate_arr < 0) or np.any(np.isnan(rate_arr)):
        raise ValueError("Poisson rate must be >= 0")
    return _gen(rng).poisson(rate_arr, size)


def sample_cut_clock(delta, rng, size=None):
    """Exponential clock with rate ``delta``: ``E / delta`` with ``E ~ Exp(1)``.

    Scaling ``delta`` by a power of two scales the clock exactly.
    """
    d = np.asarray(delta, dtype=float)
    if np.any(d <= 0) or np.any(np.isnan(d)):
        raise ValueError("clock rate must be > 0")
    if size is None:
        size = d.shape if d.ndim else None
    e = _gen(rng).standard_exponential(size)
    out = e / d
    return float(out) if np.ndim(out) == 0 else out


class JumpTable:
    """Inverse tail function of a truncated jump law, for inverse-CDF sampling.

    The tail ``T(x) = ∫_(x,∞) w`` is tabulated on a log grid and inverted
    by piecewise power-law (log-log linear) interpolation.
    """

    def __init__(self, trunc: TruncatedMechanism, n_grid: int = 2048, span: float = 1e12):
        eps = trunc.epsilon
        grid = eps * np.geomspace(1.0, span, n_grid)
        u = np.log(grid)
        # segments are ~0.01 e-folds wide: one 16-point rule each is exact to rounding
        seg = _panel_rule(lambda t: trunc.weight(np.exp(t)) * np.exp(t), u[:-1], u[1:])
        tail_beyond = integrate_log(trunc.weight, grid[-1], math.inf, rtol=1e-8)
        tails = np.concatenate([np.cumsum(seg[::-1])[::-1] + tail_beyond, [tail_beyond]])
        self.total = float(tails[0])
        self.log_x = np.log(grid)
        self.log_tail = np.log(np.maximum(tails / self.total, 1e-300))

    def __call__(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms on ``(0, 1]`` to jump sizes with ``P(D > x) = T(x)/T(eps)``."""
        lu = np.log(u)
        # log_tail is decreasing; interp needs increasing abscissae
        return np.exp(np.interp(-lu, -self.log_tail, self.log_x))


def _jump_table(trunc: TruncatedMechanism) -> JumpTable:
    # cached on the (frozen) instance; mechanisms holding arrays are unhashable
    table = trunc.__dict__.get("_jump_table")
    if table is None:
        table = JumpTable(trunc)
        object.__setattr__(trunc, "_jump_table", table)
    return table


def sample_jumps(trunc: TruncatedMechanism, rng, n: int) -> np.ndarray:
    """``n`` i.i.d. jump sizes with law ``w`` restricted to ``(eps, ∞)``, normalised."""
    gen = _gen(rng)
    eps = trunc.epsilon
    if isinstance(trunc.base, Stable):
        a = trunc.base.alpha
        if trunc.tilt == 0.0:
            return eps * (1.0 - gen.random(n)) ** (-1.0 / a)
        # Pareto proposal thinned by exp(-tilt (x - eps))
        out = np.empty(n)
        filled = 0
        accept = max(trunc.jump_rate / (trunc.base.c_alpha * eps ** (-a) / a)
                     * math.exp(trunc.tilt * eps), 1e-3)
        while filled < n:
            m = int((n - filled) / accept * 1.1) + 16
            x = eps * (1.0 - gen.random(m)) ** (-1.0 / a)
            keep = x[gen.random(m) < np.exp(-trunc.tilt * (x - eps))]
            take = min(keep.size, n - filled)
            out[filled:filled + take] = keep[:take]
            filled += take
        return out
    table = _jump_table(trunc)
    return np.maximum(table(1.0 - gen.random(n)), eps)


def sample_jump(trunc: TruncatedMechanism, rng) -> float:
    return float(sample_jumps(trunc, rng, 1)[0])


def subordinator_small_jump_bias(alpha: float, v: float, delta: float) -> float:
    """Expected mass of jumps below ``delta`` up to time ``v``: ``v ∫_(0,δ) r pi_*(dr)``."""
    return v * delta ** (1.0 - 1.0 / alpha) / ((alpha - 1.0) * gamma_fn((alpha - 1.0) / alpha))


@dataclass(frozen=True)
class SubordinatorSample:
    v: float
    delta: float
    jumps: np.ndarray  # descending, all > delta
    small_jump_bias: float
    total: float


def sample_subordinator_jumps(alpha: float, v: float, delta: float, rng) -> SubordinatorSample:
    """Jumps above ``delta`` of the stable subordinator with exponent ``lam**(1/alpha)`` on ``[0, v]``.

    Jumps are generated in decreasing order as ``T^{-1}(G_i)`` where ``G_i``
    are the arrival times of a unit Poisson process and ``T(x) = v pi_*((x,∞))``.
    Arrivals are drawn in chunks of fixed sizes, so a smaller ``delta`` only
    appends jumps to the list obtained with a larger one.
    """
    if not (1.0 < alpha < 2.0):
        raise ValueError(f"stable index must satisfy 1 < alpha < 2, got {alpha}")
    if not (v > 0 and delta > 0):
        raise ValueError("v and delta must be > 0")
    gen = _gen(rng)
    scale = v * pi_star_tail_stable(alpha, 1.0)  # T(x) = scale * x**(-1/alpha)
    g_max = scale * delta ** (-1.0 / alpha) if math.isfinite(delta) else 0.0
    bias = subordinator_small_jump_bias(alpha, v, delta) if math.isfinite(delta) else math.inf
    arrivals = []
    last = 0.0
    chunk = 16
    while last < g_max:
        g = last + np.cumsum(gen.standard_exponential(chunk))
        arrivals.append(g)
        last = float(g[-1])
        chunk = min(chunk * 2, 1 << 16)
    if arrivals:
        g = np.concatenate(arrivals)
        g = g[g < g_max]
        jumps = (g / scale) ** (-alpha)
    else:
        jumps = np.empty(0)
    return SubordinatorSample(float(v), float(delta), jumps, float(bias),
                              float(jumps.sum() + bias))
