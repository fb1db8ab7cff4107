"""Branching mechanisms: evaluation, inversion, tilting and truncation.

A branching mechanism is the Laplace exponent of a spectrally positive
Lévy process without Brownian part,

    psi(lam) = a0 * lam + ∫ (exp(-lam*l) - 1 + lam*l) pi(dl),

described by a drift ``a0 >= 0`` and a Lévy measure ``pi``. Three concrete
kinds exist: :class:`Stable` (``psi(lam) = lam**alpha``), :class:`General`
(tabulated density) and :class:`Tilted` (``psi(lam + theta) - psi(theta)``).
:class:`TruncatedMechanism` is the compound-Poisson approximation that keeps
only jumps above a cutoff ``eps`` and is what the simulators run on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn

from .quadrature import NumericError, integrate_log, one_minus_exp, phi2

__all__ = [
    "BranchingMechanism", "Stable", "General", "Tilted", "LevyMeasureSpec",
    "TruncatedMechanism", "AdmissibilityReport", "NumericError",
    "eval_psi", "eval_psi_prime", "psi_inverse", "tilt", "truncate",
    "mark_intensity", "pi_star_tail_stable", "stable_levy_constant",
    "nu1_constant", "check_admissible",
]


def stable_levy_constant(alpha: float) -> float:
    """``c_alpha`` such that ``c_alpha * l**(-1-alpha)`` has exponent ``lam**alpha``."""
    return alpha * (alpha - 1.0) / gamma_fn(2.0 - alpha)


def nu1_constant(alpha: float) -> float:
    """Normalising constant of the unit-mass stable dislocation measure."""
    return alpha * (alpha - 1.0) * gamma_fn((alpha - 1.0) / alpha) / gamma_fn(2.0 - alpha)


def _check_alpha(alpha: float) -> None:
    if not (1.0 < alpha < 2.0):
        raise ValueError(f"stable index must satisfy 1 < alpha < 2, got {alpha}")


def _check_nonneg(name: str, x: float) -> None:
    if not (x >= 0.0):  # also rejects NaN
        raise ValueError(f"{name} must be >= 0, got {x}")


class BranchingMechanism:
    """Common interface. Subclasses are immutable."""

    drift: float
    rtol: float = 1e-9

    def levy_density(self, ell: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def breakpoints(self) -> Sequence[float]:
        return ()

    def psi(self, lam: float) -> float:
        dens = self.levy_density
        if lam == 0.0:
            return 0.0
        integral = integrate_log(lambda x: phi2(lam * x) * dens(x), 0.0, math.inf,
                                 self.breakpoints(), rtol=self.rtol)
        return self.drift * lam + integral

    def psi_prime(self, lam: float) -> float:
        if lam == 0.0:
            return self.drift
        dens = self.levy_density
        integral = integrate_log(lambda x: x * one_minus_exp(lam * x) * dens(x), 0.0,
                                 math.inf, self.breakpoints(), rtol=self.rtol)
        return self.drift + integral

    def psi_quadrature(self, lam: float) -> float:
        """``psi`` from drift and Lévy density by quadrature, bypassing closed forms."""
        return BranchingMechanism.psi(self, lam)


@dataclass(frozen=True)
class Stable(BranchingMechanism):
    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)

    @property
    def drift(self) -> float:  # type: ignore[override]
        return 0.0

    @property
    def c_alpha(self) -> float:
        return stable_levy_constant(self.alpha)

    def levy_density(self, ell):
        ell = np.asarray(ell, dtype=float)
        return self.c_alpha * ell ** (-1.0 - self.alpha)

    def psi(self, lam):
        return float(lam) ** self.alpha

    def psi_prime(self, lam):
        if lam == 0.0:
            return 0.0
        return self.alpha * float(lam) ** (self.alpha - 1.0)


@dataclass(frozen=True)
class LevyMeasureSpec:
    """Tabulated Lévy density on a log-spaced grid.

    Between grid points the density is interpolated linearly in log-log
    coordinates. Below the first and above the last grid point it is
    extended by power laws ``l**(-tail_low)`` and ``l**(-tail_high)``.
    """

    ell: np.ndarray
    density: np.ndarray
    tail_low: float
    tail_high: float
    rtol: float = 1e-9

    def __post_init__(self):
        ell = np.asarray(self.ell, dtype=float)
        dens = np.asarray(self.density, dtype=float)
        object.__setattr__(self, "ell", ell)
        object.__setattr__(self, "density", dens)
        if ell.ndim != 1 or ell.shape != dens.shape or ell.size < 2:
            raise ValueError("need matching 1-d arrays with at least two points")
        if not np.all(ell > 0) or not np.all(np.diff(ell) > 0):
            raise ValueError("grid must be positive and strictly increasing")
        if not np.all(dens > 0):
            raise ValueError("density must be strictly positive on its support")
        if not self.tail_high > 2.0:
            raise ValueError("tail_high must exceed 2 so that ∫_1^∞ l pi(dl) < ∞")
        if not (self.rtol > 0):
            raise ValueError("rtol must be positive")

    @cached_property
    def _log_ell(self):
        return np.log(self.ell)

    @cached_property
    def _log_dens(self):
        return np.log(self.density)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lx = np.log(x)
        le, ld = self._log_ell, self._log_dens
        out = np.interp(lx, le, ld)
        lo = lx < le[0]
        hi = lx > le[-1]
        out = np.where(lo, ld[0] - self.tail_low * (lx - le[0]), out)
        out = np.where(hi, ld[-1] - self.tail_high * (lx - le[-1]), out)
        return np.exp(out)

    @property
    def floor(self) -> float:
        return float(self.ell[0])


@dataclass(frozen=True)
class General(BranchingMechanism):
    drift: float
    measure: LevyMeasureSpec

    def __post_init__(self):
        _check_nonneg("drift", self.drift)

    @property
    def rtol(self) -> float:  # type: ignore[override]
        return self.measure.rtol

    def levy_density(self, ell):
        return self.measure(ell)

    def breakpoints(self):
        return tuple(self.measure.ell[:: max(1, self.measure.ell.size // 64)])


@dataclass(frozen=True)
class Tilted(BranchingMechanism):
    """``psi(lam + theta) - psi(theta)``: drift ``psi'(theta)``, measure ``exp(-theta l) pi``."""

    base: BranchingMechanism
    theta: float
    _drift: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        if not (self.theta > 0):
            raise ValueError(f"theta must be > 0, got {self.theta}")
        object.__setattr__(self, "_drift", self.base.psi_prime(self.theta))
        # the tilted drift/measure pair must reproduce the shifted exponent
        for lam in (0.0, 1.0, 5.0):
            direct = self.psi(lam)
            via_measure = self.psi_quadrature(lam)
            if abs(direct - via_measure) > 1e-8 * max(1.0, abs(direct)):
                raise NumericError(
                    f"tilted drift check failed at lam={lam}: {direct} vs {via_measure}",
                    achieved=abs(direct - via_measure) / max(1.0, abs(direct)))

    @property
    def drift(self) -> float:  # type: ignore[override]
        return self._drift

    @property
    def rtol(self) -> float:  # type: ignore[override]
        return self.base.rtol

    def levy_density(self, ell):
        ell = np.asarray(ell, dtype=float)
        return np.exp(-self.theta * ell) * self.base.levy_density(ell)

    def breakpoints(self):
        return self.base.breakpoints()

    def psi(self, lam):
        if lam == 0.0:
            return 0.0
        return self.base.psi(lam + self.theta) - self.base.psi(self.theta)

    def psi_prime(self, lam):
        return self.base.psi_prime(lam + self.theta)


def eval_psi(mech, lam: float) -> float:
    """``psi(lam)`` for a mechanism or truncated mechanism."""
    _check_nonneg("lambda", lam)
    return float(mech.psi(float(lam)))


def eval_psi_prime(mech, lam: float) -> float:
    _check_nonneg("lambda", lam)
    return float(mech.psi_prime(float(lam)))


def psi_inverse(mech, y: float) -> float:
    """Unique ``lam >= 0`` with ``psi(lam) = y``.

    Bisection until the bracket is narrower than 1e-6, then Newton steps
    safeguarded to stay inside the bracket.
    """
    _check_nonneg("y", y)
    y = float(y)
    if y == 0.0:
        return 0.0
    if isinstance(mech, Stable):
        return y ** (1.0 / mech.alpha)
    tol = max(1e-12, 1e-10 * y)
    lo, hi = 0.0, 1.0
    while mech.psi(hi) < y:
        lo, hi = hi, 2.0 * hi
        if hi > 1e18:
            raise NumericError(f"psi_inverse bracket exceeded 1e18 for y={y}")
    while hi - lo > 1e-6 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if mech.psi(mid) < y:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(50):
        f = mech.psi(x) - y
        if abs(f) <= tol:
            return x
        if f < 0:
            lo = x
        else:
            hi = x
        d = mech.psi_prime(x)
        step = x - f / d if d > 0 else 0.5 * (lo + hi)
        x = step if lo < step < hi else 0.5 * (lo + hi)
    f = mech.psi(x) - y
    if abs(f) > tol:
        raise NumericError(f"psi_inverse did not converge (residual {f:.3g})",
                           achieved=abs(f) / y)
    return x


def tilt(mech: BranchingMechanism, theta: float) -> Tilted:
    if not (theta > 0):
        raise ValueError(f"theta must be > 0, got {theta}")
    if isinstance(mech, Tilted):
        return Tilted(mech.base, mech.theta + theta)
    return Tilted(mech, float(theta))


@dataclass(frozen=True)
class TruncatedMechanism:
    """Compound-Poisson approximation keeping jumps above ``epsilon``.

    With weight ``w(l) = exp(-tilt*l) pi(dl)`` on ``(epsilon, ∞)``:

    * ``jump_rate = ∫ w``, ``mean_jump_mass = ∫ l w``,
    * ``drift`` is the linear coefficient of ``psi_eps``,
    * ``drain_rate = drift + mean_jump_mass`` is the slope of the process
      between jumps, so ``psi_eps(v) = c v - ∫ (1 - exp(-v l)) w``.

    ``tilt_by(theta)`` returns ``psi_eps(. + theta) - psi_eps(theta)``; it
    keeps ``drain_rate`` and multiplies the jump weight by ``exp(-theta l)``.
    """

    base: BranchingMechanism
    epsilon: float
    tilt: float = 0.0
    drift: float = field(default=math.nan)
    jump_rate: float = field(default=math.nan)
    mean_jump_mass: float = field(default=math.nan)
    drain_rate: float = field(default=math.nan)

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        _check_nonneg("tilt", self.tilt)
        if math.isnan(self.jump_rate):
            object.__setattr__(self, "jump_rate", self._integrate(lambda x: np.ones_like(x)))
        if math.isnan(self.mean_jump_mass):
            object.__setattr__(self, "mean_jump_mass", self._integrate(lambda x: x))
        if math.isnan(self.drift):
            if self.tilt != 0.0:
                raise ValueError("tilted truncations are built with tilt_by()")
            object.__setattr__(self, "drift", float(self.base.drift))
        if math.isnan(self.drain_rate):
            object.__setattr__(self, "drain_rate", self.drift + self.mean_jump_mass)
        if not (self.jump_rate >= 0 and self.mean_jump_mass >= 0 and self.drain_rate > 0):
            raise ValueError("truncated mechanism has non-positive rates")

    def weight(self, ell):
        """Jump intensity density ``exp(-tilt l) pi(l)`` (not restricted to ``l > eps``)."""
        ell = np.asarray(ell, dtype=float)
        w = self.base.levy_density(ell)
        if self.tilt:
            w = w * np.exp(-self.tilt * ell)
        return w

    def _integrate(self, g: Callable[[np.ndarray], np.ndarray], lo: float | None = None) -> float:
        lo = self.epsilon if lo is None else lo
        return integrate_log(lambda x: g(x) * self.weight(x), lo, math.inf,
                             self.base.breakpoints(), rtol=self.base.rtol)

    @property
    def offspring_rate(self) -> float:
        """Expected number of children per unit of node mass."""
        return self.jump_rate / self.drain_rate

    @property
    def excursion_rate(self) -> float:
        """Total mass of the excursion measure: ``jump_rate / drain_rate``."""
        return self.jump_rate / self.drain_rate

    def psi(self, v: float) -> float:
        if v == 0.0:
            return 0.0
        return self.drift * v + self._integrate(lambda x: phi2(v * x))

    def psi_prime(self, v: float) -> float:
        if v == 0.0:
            return self.drift
        return self.drift + self._integrate(lambda x: x * one_minus_exp(v * x))

    def tilt_by(self, theta: float) -> "TruncatedMechanism":
        if not (theta > 0):
            raise ValueError(f"theta must be > 0, got {theta}")
        total = self.tilt + theta
        proto = TruncatedMechanism(self.base, self.epsilon, tilt=total, drift=0.0,
                                   drain_rate=self.drain_rate)
        return TruncatedMechanism(self.base, self.epsilon, tilt=total,
                                  drift=self.drain_rate - proto.mean_jump_mass,
                                  jump_rate=proto.jump_rate,
                                  mean_jump_mass=proto.mean_jump_mass,
                                  drain_rate=self.drain_rate)

    def with_jump_rate(self, rate: float) -> "TruncatedMechanism":
        """Copy with an overridden jump rate (diagnostics, e.g. rate 0)."""
        return TruncatedMechanism(self.base, self.epsilon, tilt=self.tilt,
                                  drift=self.drift, jump_rate=rate,
                                  mean_jump_mass=self.mean_jump_mass,
                                  drain_rate=self.drain_rate)


def truncate(mech: BranchingMechanism, epsilon: float) -> TruncatedMechanism:
    if not (epsilon > 0):
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if isinstance(mech, Stable):
        a, ca = mech.alpha, mech.c_alpha
        lam = ca * epsilon ** (-a) / a
        m = ca * epsilon ** (1.0 - a) / (a - 1.0)
        return TruncatedMechanism(mech, float(epsilon), jump_rate=lam, mean_jump_mass=m)
    return TruncatedMechanism(mech, float(epsilon))


def mark_intensity(mech: BranchingMechanism, theta: float, a: float) -> float:
    """``∫_(a,∞) (1 - exp(-theta l)) pi(dl)``."""
    _check_nonneg("theta", theta)
    if not (a > 0):
        raise ValueError(f"a must be > 0, got {a}")
    if theta == 0.0:
        return 0.0
    return integrate_log(lambda x: one_minus_exp(theta * x) * mech.levy_density(x),
                         a, math.inf, mech.breakpoints(), rtol=mech.rtol)


def pi_star_tail_stable(alpha: float, x: float) -> float:
    """Tail ``pi_*((x, ∞))`` of the Lévy measure of the stable subordinator with exponent ``lam**(1/alpha)``."""
    _check_alpha(alpha)
    if not (x > 0):
        raise ValueError(f"x must be > 0, got {x}")
    if math.isinf(x):
        return 0.0
    return x ** (-1.0 / alpha) / gamma_fn((alpha - 1.0) / alpha)


@dataclass(frozen=True)
class AdmissibilityReport:
    moment: float  # ∫ (l ∧ l²) pi(dl)
    partial_sums: tuple  # ∫_(2^-k, 1) l pi(dl), k = 1..K
    divergence_verified_to: float
    divergence_assumed_below: bool
    ok: bool
    message: str


def check_admissible(mech: BranchingMechanism) -> AdmissibilityReport:
    """Check finiteness of ``∫(l ∧ l²)pi`` and divergence of ``∫_(0,1) l pi``.

    A table cannot certify divergence: partial integrals are checked to grow
    down to the tabulation floor, and below it the low-end tail exponent
    decides (it must be >= 2), reported as assumed.
    """
    if isinstance(mech, Stable):
        return AdmissibilityReport(
            moment=mech.c_alpha * (1.0 / (2.0 - mech.alpha) + 1.0 / mech.alpha),
            partial_sums=(), divergence_verified_to=0.0,
            divergence_assumed_below=False, ok=True, message="stable: closed form")
    dens = mech.levy_density
    bps = mech.breakpoints()
    try:
        moment = (integrate_log(lambda x: x * x * dens(x), 0.0, 1.0, bps, rtol=mech.rtol)
                  + integrate_log(lambda x: x * dens(x), 1.0, math.inf, bps, rtol=mech.rtol))
    except NumericError as exc:
        return AdmissibilityReport(math.inf, (), 0.0, False, False,
                                   f"∫(l ∧ l²)pi(dl) does not converge: {exc}")
    if isinstance(mech, General):
        floor, tail_low = mech.measure.floor, mech.measure.tail_low
    elif isinstance(mech, Tilted) and isinstance(mech.base, General):
        floor, tail_low = mech.base.measure.floor, mech.base.measure.tail_low
    else:
        floor, tail_low = 1e-12, math.nan
    k_max = max(1, int(math.floor(-math.log2(floor))))
    sums = []
    for k in range(1, k_max + 1):
        sums.append(integrate_log(lambda x: x * dens(x), 2.0 ** -k, 1.0, bps, rtol=mech.rtol))
    growing = all(b > a for a, b in zip(sums, sums[1:])) if len(sums) > 1 else True
    # per-halving increments that do not shrink mean a density at least as
    # steep as l**-2 near the floor, hence a non-summable series
    increments = np.diff([0.0] + sums)
    not_summable = len(increments) < 2 or increments[-1] >= 0.97 * increments[-2]
    tail_ok = not math.isnan(tail_low) and tail_low >= 2.0 and tail_low < 3.0
    ok = bool(np.isfinite(moment) and growing and not_summable and tail_ok)
    if not tail_ok:
        msg = f"low-end tail exponent {tail_low} outside [2, 3)"
    elif not (growing and not_summable):
        msg = "partial integrals of l pi(dl) do not diverge towards 0"
    else:
        msg = "admissible (divergence verified to the tabulation floor, assumed below)"
    return AdmissibilityReport(float(moment), tuple(sums), 2.0 ** -k_max, True, ok, msg)
