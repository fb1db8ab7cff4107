"""Subordinator-side description of dislocations.

A node of mass ``v`` that is cut splits its fragment into pieces whose
law is given by the jumps of the first-passage subordinator over the time
interval ``[0, v]``, size-biased by its value ``S_v``. Two versions exist:

* the stable subordinator with exponent ``lam**(1/alpha)`` (continuum
  object, :func:`sample_mu_truncated`);
* the subordinator of the truncated mechanism (:func:`sample_mu_discrete`):
  drift ``1/c`` and jumps distributed as excursion lengths of independent
  jump trees at rate ``jump_rate / c``. With this one the identity with
  tree-side dislocations holds exactly at fixed ``eps``; the drift part is
  the cut node's dust and carries no piece.

Also here: the unit-mass stable dislocation functional and the node
functional ``A`` (Monte Carlo over trees and closed form).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exponent import (Stable, TruncatedMechanism, nu1_constant, psi_inverse,
                       truncate)
from .quadrature import integrate_log
from .sampler import (SubordinatorSample, _gen, sample_jumps,
                      sample_subordinator_jumps)
from .stats import McEstimate, mc_mean
from .tree import Forest, grow_forest, subtree_spans

__all__ = [
    "DislocationDraw", "DiscreteDraws", "sample_mu_truncated", "sample_mu_discrete",
    "nu1_functional_stable", "node_functional_A", "node_functional_A_closed",
    "node_functional_A_continuum", "node_split_pieces",
]


@dataclass(frozen=True)
class DislocationDraw:
    v: float
    sample: SubordinatorSample
    weight: float


def sample_mu_truncated(mech: Stable, epsilon: float, delta: float, rng) -> DislocationDraw:
    """``v ~ pi`` restricted to ``(eps, ∞)`` (normalised), then the stable subordinator up to ``v``.

    Functionals of ``mu`` restricted to ``v > eps`` are ``jump_rate *`` the
    sample mean.
    """
    if not isinstance(mech, Stable):
        raise TypeError("the subordinator side is only available for stable mechanisms")
    trunc = truncate(mech, epsilon)
    gen = _gen(rng)
    v = float(sample_jumps(trunc, gen, 1)[0])
    s = sample_subordinator_jumps(mech.alpha, v, delta, gen)
    return DislocationDraw(v, s, s.total)


@dataclass(frozen=True)
class DiscreteDraws:
    """Batch of draws from the truncated mechanism's subordinator.

    Draw ``i`` has node mass ``v[i]``, value ``total[i] = v/c + sum(jumps)``
    and jumps ``jumps[ptr[i]:ptr[i+1]]`` (descending).
    """

    v: np.ndarray
    total: np.ndarray
    ptr: np.ndarray
    jumps: np.ndarray
    oversize_rejected: int

    @property
    def n(self) -> int:
        return int(self.v.size)

    def _kth(self, k: int) -> np.ndarray:
        cnt = np.diff(self.ptr)
        out = np.zeros(self.n)
        has = cnt >= k
        out[has] = self.jumps[self.ptr[:-1][has] + k - 1]
        return out

    def largest(self) -> np.ndarray:
        return self._kth(1)

    def second(self) -> np.ndarray:
        return self._kth(2)

    def count_above(self, thresholds: np.ndarray) -> np.ndarray:
        ev = np.repeat(np.arange(self.n), np.diff(self.ptr))
        big = self.jumps > thresholds[ev]
        return np.bincount(ev[big], minlength=self.n)


def sample_mu_discrete(trunc: TruncatedMechanism, rng, n: int,
                       node_cap: int = 1_000_000) -> DiscreteDraws:
    """``n`` draws of ``(v, S_v, jumps)`` for the truncated mechanism.

    Jump sizes are excursion lengths of freshly grown trees; no clocks or
    fragmentation are involved.
    """
    gen = _gen(rng)
    c = trunc.drain_rate
    v = sample_jumps(trunc, gen, n)
    k = gen.poisson(v * trunc.excursion_rate)
    forest = grow_forest(trunc, gen, int(k.sum()), node_cap)
    sig = forest.sigmas
    owner = np.repeat(np.arange(n), k)
    o = np.lexsort((-sig, owner))
    jumps = sig[o]
    total = v / c + np.bincount(owner, weights=sig, minlength=n)
    ptr = np.concatenate([[0], np.cumsum(k)])
    return DiscreteDraws(v, total, ptr, jumps, forest.oversize_rejected)


def nu1_functional_stable(alpha: float, F: Callable[[np.ndarray], float], n: int, rng,
                          delta: float = 1e-6, trim_quantile: Optional[float] = None
                          ) -> McEstimate:
    """Estimate ``∫ F dnu_1 = const(alpha) E[S_1 F(ranked jumps / S_1)]``.

    ``E[S_1]`` is infinite, so ``F`` must vanish on the single-atom
    configuration ``(1,)`` (the heavy-tail regime where one jump carries
    everything); otherwise pass ``trim_quantile`` to drop the largest
    ``S_1`` values. The trimmed fraction is reported in ``bias_note``.
    """
    if trim_quantile is None and F(np.array([1.0])) != 0:
        raise ValueError("F does not vanish at (1,): the S_1-weighted estimator has "
                         "infinite mean; supply trim_quantile")
    gen = _gen(rng)
    vals = np.empty(n)
    s1 = np.empty(n)
    for i in range(n):
        s = sample_subordinator_jumps(alpha, 1.0, delta, gen)
        s1[i] = s.total
        vals[i] = s.total * F(s.jumps / s.total)
    trimmed = 0.0
    if trim_quantile is not None:
        cut = np.quantile(s1, trim_quantile)
        keep = s1 <= cut
        trimmed = 1.0 - keep.mean()
        vals = np.where(keep, vals, 0.0)
    est = mc_mean(vals).scaled(nu1_constant(alpha))
    return McEstimate(est.mean, est.std_error, est.n, trimmed if trim_quantile is not None else None)


def node_split_pieces(f: Forest) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Largest and second-largest piece left by removing each node.

    Removing node ``v`` from its (uncut) tree leaves the subtrees of its
    children plus the root side ``sigma - span_v``. Returns
    ``(largest, second, span)`` in time units, where ``span`` is the
    subtree mass of every node.
    """
    c = f.trunc.drain_rate
    span = subtree_spans(f) / c
    rem = f.sigmas[f.tree] - span
    nr = np.flatnonzero(f.parent >= 0)
    o = np.lexsort((-span[nr], f.parent[nr]))
    nr = nr[o]
    p = f.parent[nr]
    top1 = np.zeros(f.size)
    top2 = np.zeros(f.size)
    if nr.size:
        first = np.concatenate([[True], p[1:] != p[:-1]])
        top1[p[first]] = span[nr[first]]
        second = np.concatenate([[False], (p[1:] == p[:-1]) & first[:-1]])
        top2[p[second]] = span[nr[second]]
    stacked = np.sort(np.stack([top1, top2, rem], axis=1), axis=1)
    return stacked[:, 2], stacked[:, 1], span


def _functional_A_terms(f: Forest, lam: float, p: float, p2: float) -> np.ndarray:
    c = f.trunc.drain_rate
    span = subtree_spans(f) / c
    sigma = f.sigmas
    nonroot = f.parent >= 0
    child_term = np.bincount(f.parent[nonroot],
                             weights=span[nonroot] * np.exp(-p2 * span[nonroot]),
                             minlength=f.size)
    node_term = f.delta * np.exp(-p * (sigma[f.tree] - span)) * (child_term + f.delta / c)
    per_tree = np.bincount(f.tree, weights=node_term, minlength=f.n_trees)
    return np.exp(-lam * sigma) * per_tree


def node_functional_A(forest: Forest, lam: float, p: float, p2: float) -> McEstimate:
    """Monte Carlo value of ``A`` from a forest of unconditioned trees.

    Per tree: ``exp(-lam sigma) sum_v delta_v exp(-p (sigma - span_v))
    (sum_{w child of v} span_w exp(-p2 span_w) + delta_v / c)``, averaged
    and multiplied by the excursion rate ``jump_rate / c``.
    """
    _check_A_args(lam, p, p2)
    vals = _functional_A_terms(forest, lam, p, p2)
    return mc_mean(vals).scaled(forest.trunc.excursion_rate)


def _check_A_args(lam, p, p2):
    if not (lam >= 0 and p > 0 and p2 > 0):
        raise ValueError("need lam >= 0, p > 0, p2 > 0")


def node_functional_A_closed(trunc: TruncatedMechanism, lam: float, p: float, p2: float) -> float:
    """Closed form of ``A`` in truncated quantities (exact at fixed ``eps``)."""
    _check_A_args(lam, p, p2)
    u = psi_inverse(trunc, lam)
    num = trunc._integrate(lambda x: x * x * np.exp(-u * x))
    d1 = trunc.psi_prime(psi_inverse(trunc, p + lam))
    d2 = trunc.psi_prime(psi_inverse(trunc, p2 + lam))
    return num / (d1 * d2)


def node_functional_A_continuum(mech, lam: float, p: float, p2: float) -> float:
    """Continuum limit of :func:`node_functional_A_closed` (no cutoff)."""
    _check_A_args(lam, p, p2)
    u = psi_inverse(mech, lam)
    num = integrate_log(lambda x: x * x * np.exp(-u * x) * mech.levy_density(x), 0.0,
                        math.inf, mech.breakpoints(), rtol=mech.rtol)
    d1 = mech.psi_prime(psi_inverse(mech, p + lam))
    d2 = mech.psi_prime(psi_inverse(mech, p2 + lam))
    return num / (d1 * d2)
