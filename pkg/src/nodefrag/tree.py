"""Discrete jump trees approximating the excursions of a truncated mechanism.

A jump tree is the genealogy of the LIFO excursion of the compound-Poisson
process with drain rate ``c``: the root is the jump that starts the
excursion, and a node of mass ``D`` drains for ``D / c`` units of time,
during which it receives ``Poisson(D * jump_rate / c)`` children (the jumps
arriving while it is being served). The excursion length is
``sigma = sum(D) / c``.

Many trees are grown at once in a :class:`Forest`: a flat arena where every
parent id is smaller than its children's ids and the children of a node
are contiguous. Per-depth index arrays (``levels``) let tree algorithms run
as a few numpy operations per generation instead of a Python loop per node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exponent import TruncatedMechanism
from .sampler import _gen, sample_jumps

__all__ = [
    "Forest", "JumpTree", "OversizeTreeError", "ConditioningError", "ExcursionProfile",
    "grow_forest", "grow_conditioned_forest", "build_excursion_tree",
    "build_conditioned", "excursion_path", "dump", "subtree_spans",
]

DEFAULT_NODE_CAP = 1_000_000


class OversizeTreeError(RuntimeError):
    """A build exceeded ``node_cap``; the tree is rejected, not truncated."""

    def __init__(self, node_cap: int, attempts: int = 1):
        super().__init__(f"tree exceeded node_cap={node_cap}")
        self.node_cap = node_cap
        self.attempts = attempts


class ConditioningError(RuntimeError):
    """``max_attempts`` exhausted before enough trees landed in the mass window."""

    def __init__(self, attempts: int, accepted: int, needed: int):
        rate = accepted / attempts if attempts else 0.0
        super().__init__(f"conditioning failed: {accepted}/{needed} trees after "
                         f"{attempts} attempts (acceptance rate {rate:.3g})")
        self.attempts = attempts
        self.accepted = accepted
        self.acceptance_rate = rate


@dataclass
class Forest:
    """Arena of nodes for ``n_trees`` jump trees.

    Node arrays: ``delta``, ``parent`` (-1 at roots), ``tree`` (tree index),
    ``depth`` (0 at roots), ``child_start``/``n_children`` (children of a
    node are ``child_start .. child_start + n_children - 1``), optional
    ``cut_time``. Tree arrays: ``root``, ``n_nodes``.
    """

    trunc: TruncatedMechanism
    delta: np.ndarray
    parent: np.ndarray
    tree: np.ndarray
    depth: np.ndarray
    child_start: np.ndarray
    n_children: np.ndarray
    root: np.ndarray
    n_nodes: np.ndarray
    profile_seed: np.ndarray
    oversize_rejected: int = 0
    window_rejected: int = 0
    cut_time: Optional[np.ndarray] = None
    _levels: Optional[list] = field(default=None, repr=False)

    @classmethod
    def from_parents(cls, trunc: TruncatedMechanism, delta, parent, cut_time=None,
                     profile_seed: int = 0) -> "Forest":
        """Build a forest from explicit arrays.

        Parents must precede their children and the children of each node
        must be listed consecutively; roots have parent -1.
        """
        delta = np.asarray(delta, dtype=float)
        parent = np.asarray(parent, dtype=np.int64)
        n = delta.size
        if parent.shape != (n,) or n == 0:
            raise ValueError("delta and parent must be non-empty and of equal length")
        if np.any(delta <= 0):
            raise ValueError("node masses must be positive")
        ids = np.arange(n)
        nonroot = parent >= 0
        if np.any(parent[nonroot] >= ids[nonroot]):
            raise ValueError("every parent must precede its children")
        pr = parent[nonroot]
        if pr.size and np.any(np.diff(pr) < 0):
            raise ValueError("children of a node must be consecutive")
        roots = np.flatnonzero(~nonroot)
        tree = np.zeros(n, dtype=np.int64)
        depth = np.zeros(n, dtype=np.int64)
        tree[roots] = np.arange(roots.size)
        for v in np.flatnonzero(nonroot):
            tree[v] = tree[parent[v]]
            depth[v] = depth[parent[v]] + 1
        nch = np.bincount(pr, minlength=n)
        first = np.zeros(n, dtype=np.int64)
        if pr.size:
            kids = np.flatnonzero(nonroot)
            starts = np.concatenate([[True], pr[1:] != pr[:-1]])
            first[pr[starts]] = kids[starts]
        ct = None if cut_time is None else np.asarray(cut_time, dtype=float)
        return cls(trunc=trunc, delta=delta, parent=parent, tree=tree, depth=depth,
                   child_start=first, n_children=nch, root=roots,
                   n_nodes=np.bincount(tree, minlength=roots.size),
                   profile_seed=np.full(roots.size, profile_seed, dtype=np.int64),
                   cut_time=ct)

    @property
    def n_trees(self) -> int:
        return int(self.root.size)

    @property
    def size(self) -> int:
        return int(self.delta.size)

    @property
    def attempts(self) -> int:
        return self.n_trees + self.oversize_rejected + self.window_rejected

    @property
    def sigmas(self) -> np.ndarray:
        """Excursion lengths ``sum(delta) / c`` per tree."""
        return np.bincount(self.tree, weights=self.delta, minlength=self.n_trees) / self.trunc.drain_rate

    @property
    def max_delta(self) -> np.ndarray:
        out = np.zeros(self.n_trees)
        np.maximum.at(out, self.tree, self.delta)
        return out

    @property
    def levels(self) -> list:
        """Node ids grouped by depth, each group sorted by id (hence by parent)."""
        if self._levels is None:
            order = np.argsort(self.depth, kind="stable")
            counts = np.bincount(self.depth) if self.size else np.zeros(0, dtype=np.int64)
            bounds = np.concatenate([[0], np.cumsum(counts)])
            self._levels = [order[bounds[i]:bounds[i + 1]] for i in range(counts.size)]
        return self._levels

    def children(self, v: int) -> np.ndarray:
        s = int(self.child_start[v])
        return np.arange(s, s + int(self.n_children[v]))

    def tree_nodes(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.tree == i)

    def subset(self, tree_mask: np.ndarray) -> "Forest":
        """Forest restricted to the trees selected by ``tree_mask`` (ids renumbered)."""
        tree_mask = np.asarray(tree_mask, dtype=bool)
        keep = tree_mask[self.tree]
        return _compact(self, keep, tree_mask)

    def tree_at(self, i: int) -> "JumpTree":
        mask = np.zeros(self.n_trees, dtype=bool)
        mask[i] = True
        f = self.subset(mask)
        return JumpTree(**{k: getattr(f, k) for k in _FIELDS})


_FIELDS = ("trunc", "delta", "parent", "tree", "depth", "child_start", "n_children",
           "root", "n_nodes", "profile_seed", "oversize_rejected", "window_rejected",
           "cut_time")


class JumpTree(Forest):
    """A forest holding exactly one tree, rooted at node 0."""

    @property
    def sigma(self) -> float:
        return float(self.delta.sum() / self.trunc.drain_rate)

    @property
    def rejected_attempts(self) -> int:
        return self.oversize_rejected + self.window_rejected


def _compact(f: Forest, keep: np.ndarray, tree_mask: np.ndarray) -> Forest:
    new_id = np.cumsum(keep) - 1
    new_tree = np.cumsum(tree_mask) - 1
    par = f.parent[keep]
    par = np.where(par >= 0, new_id[np.maximum(par, 0)], -1)
    nc = f.n_children[keep]
    cs = f.child_start[keep]
    # children of kept nodes are kept (same tree), remap their start
    cs = np.where(nc > 0, new_id[np.minimum(cs, max(f.size - 1, 0))], 0)
    return Forest(
        trunc=f.trunc, delta=f.delta[keep], parent=par, tree=new_tree[f.tree[keep]],
        depth=f.depth[keep], child_start=cs, n_children=nc,
        root=new_id[f.root[tree_mask]], n_nodes=f.n_nodes[tree_mask],
        profile_seed=f.profile_seed[tree_mask],
        oversize_rejected=f.oversize_rejected, window_rejected=f.window_rejected,
        cut_time=None if f.cut_time is None else f.cut_time[keep],
    )


def _grow(trunc: TruncatedMechanism, gen: np.random.Generator, n: int, node_cap: int,
          mass_cap: float = math.inf, max_depth: Optional[int] = None
          ) -> tuple[Forest, np.ndarray, np.ndarray]:
    """Grow ``n`` trees breadth-first; return the raw forest and per-tree abort flags.

    A tree stops growing (and is flagged) once it holds more than
    ``node_cap`` nodes, or once its accumulated mass exceeds ``mass_cap``.
    With ``max_depth`` growth stops after that generation (nodes at the
    last depth get no children drawn; ``n_children`` is 0 there).
    """
    rate = trunc.offspring_rate
    deltas = [sample_jumps(trunc, gen, n)]
    parents = [np.full(n, -1, dtype=np.int64)]
    trees = [np.arange(n, dtype=np.int64)]
    n_children = []
    counts = np.ones(n, dtype=np.int64)
    mass = deltas[0].copy()
    oversize = counts > node_cap
    heavy = mass > mass_cap
    offset = 0
    cur_d, cur_t = deltas[0], trees[0]
    while cur_d.size:
        if max_depth is not None and len(deltas) > max_depth:
            n_children.append(np.zeros(cur_d.size, dtype=np.int64))
            break
        k = gen.poisson(cur_d * rate) if rate > 0 else np.zeros(cur_d.size, dtype=np.int64)
        k[oversize[cur_t] | heavy[cur_t]] = 0
        n_children.append(k)
        total = int(k.sum())
        ids = np.arange(offset, offset + cur_d.size)
        offset += cur_d.size
        if total == 0:
            break
        par = np.repeat(ids, k)
        tr = np.repeat(cur_t, k)
        d = sample_jumps(trunc, gen, total)
        counts += np.bincount(tr, minlength=n)
        mass += np.bincount(tr, weights=d, minlength=n)
        oversize |= counts > node_cap
        heavy |= mass > mass_cap
        deltas.append(d)
        parents.append(par)
        trees.append(tr)
        cur_d, cur_t = d, tr
    if len(n_children) < len(deltas):
        n_children.append(np.zeros(deltas[-1].size, dtype=np.int64))
    delta = np.concatenate(deltas)
    parent = np.concatenate(parents)
    tree = np.concatenate(trees)
    nch = np.concatenate(n_children)
    depth = np.concatenate([np.full(x.size, i, dtype=np.int64) for i, x in enumerate(deltas)])
    # children are laid out in parent order one generation later
    first_child = np.cumsum(nch) - nch + n
    profile_seed = gen.integers(0, 2**63 - 1, size=n, dtype=np.int64)
    f = Forest(trunc=trunc, delta=delta, parent=parent, tree=tree, depth=depth,
               child_start=np.where(nch > 0, first_child, 0), n_children=nch,
               root=np.arange(n, dtype=np.int64), n_nodes=counts, profile_seed=profile_seed)
    return f, oversize, heavy


def _concat(forests: list[Forest]) -> Forest:
    if len(forests) == 1:
        return forests[0]
    offs = np.cumsum([0] + [f.size for f in forests])
    toffs = np.cumsum([0] + [f.n_trees for f in forests])
    cat = np.concatenate

    def shift(arr, o, neg_keep=False):
        return np.where(arr >= 0, arr + o, arr) if neg_keep else arr + o

    return Forest(
        trunc=forests[0].trunc,
        delta=cat([f.delta for f in forests]),
        parent=cat([shift(f.parent, o, True) for f, o in zip(forests, offs)]),
        tree=cat([f.tree + t for f, t in zip(forests, toffs)]),
        depth=cat([f.depth for f in forests]),
        child_start=cat([np.where(f.n_children > 0, f.child_start + o, 0)
                         for f, o in zip(forests, offs)]),
        n_children=cat([f.n_children for f in forests]),
        root=cat([f.root + o for f, o in zip(forests, offs)]),
        n_nodes=cat([f.n_nodes for f in forests]),
        profile_seed=cat([f.profile_seed for f in forests]),
        oversize_rejected=sum(f.oversize_rejected for f in forests),
        window_rejected=sum(f.window_rejected for f in forests),
        cut_time=None if any(f.cut_time is None for f in forests)
        else cat([f.cut_time for f in forests]),
    )


def grow_forest(trunc: TruncatedMechanism, rng, n: int, node_cap: int = DEFAULT_NODE_CAP,
                batch: int = 20_000, max_depth: Optional[int] = None) -> Forest:
    """Grow ``n`` accepted trees; oversize trees are rejected and replaced.

    ``forest.oversize_rejected`` counts the rejections. Trees are grown in
    batches of at most ``batch`` to bound memory. ``max_depth`` keeps only
    the first generations (no rejection can then depend on deeper nodes).
    """
    if node_cap < 1:
        raise ValueError("node_cap must be >= 1")
    if n < 0:
        raise ValueError("n must be >= 0")
    gen = _gen(rng)
    parts = []
    rejected = 0
    remaining = n
    while remaining > 0:
        m = min(remaining, batch)
        f, oversize, _ = _grow(trunc, gen, m, node_cap, max_depth=max_depth)
        rejected += int(oversize.sum())
        if oversize.any():
            f = f.subset(~oversize)
        parts.append(f)
        remaining -= f.n_trees
    if not parts:
        return _empty_forest(trunc)
    out = _concat(parts)
    out.oversize_rejected = rejected
    return out


def _empty_forest(trunc) -> Forest:
    z = np.zeros(0, dtype=np.int64)
    return Forest(trunc, np.zeros(0), z, z, z, z, z, z, z, z)


def build_excursion_tree(trunc: TruncatedMechanism, rng, node_cap: int = DEFAULT_NODE_CAP) -> JumpTree:
    """One tree; raises :class:`OversizeTreeError` instead of truncating."""
    if node_cap < 1:
        raise ValueError("node_cap must be >= 1")
    f, oversize, _ = _grow(trunc, _gen(rng), 1, node_cap)
    if oversize[0]:
        raise OversizeTreeError(node_cap)
    return f.tree_at(0)


def grow_conditioned_forest(trunc: TruncatedMechanism, rng, n: int, r: float,
                            rel_window: float, node_cap: int = DEFAULT_NODE_CAP,
                            max_attempts: int = 10_000_000, batch: int = 20_000) -> Forest:
    """``n`` trees with ``sigma`` in ``[r(1 - w), r(1 + w)]`` by rejection.

    Growth of a candidate stops as soon as its mass passes the upper end of
    the window. Rejections are counted in ``window_rejected`` and
    ``oversize_rejected``.
    """
    if not (r > 0):
        raise ValueError("r must be > 0")
    if not (0 < rel_window <= 1):
        raise ValueError("rel_window must be in (0, 1]")
    gen = _gen(rng)
    c = trunc.drain_rate
    lo, hi = r * (1 - rel_window), r * (1 + rel_window)
    parts, accepted, attempts = [], 0, 0
    win_rej = over_rej = 0
    rate_est = None
    while accepted < n:
        if attempts >= max_attempts:
            raise ConditioningError(attempts, accepted, n)
        need = n - accepted
        m = batch if rate_est is None else int(min(batch, max(64, 1.2 * need / max(rate_est, 1e-6))))
        m = min(m, max_attempts - attempts)
        f, oversize, heavy = _grow(trunc, gen, m, node_cap, mass_cap=hi * c)
        attempts += m
        sig = f.sigmas
        ok = ~oversize & ~heavy & (sig >= lo) & (sig <= hi)
        over_rej += int((oversize & ~heavy).sum())
        win_rej += int(m - ok.sum() - (oversize & ~heavy).sum())
        if ok.sum() > need:
            idx = np.flatnonzero(ok)[need:]
            ok[idx] = False
        accepted += int(ok.sum())
        rate_est = max(accepted, 1) / attempts
        if ok.any():
            parts.append(f.subset(ok))
    out = _concat(parts) if parts else _empty_forest(trunc)
    out.window_rejected = win_rej
    out.oversize_rejected = over_rej
    return out


def build_conditioned(trunc: TruncatedMechanism, rng, r: float, rel_window: float,
                      node_cap: int = DEFAULT_NODE_CAP, max_attempts: int = 1_000_000) -> JumpTree:
    f = grow_conditioned_forest(trunc, rng, 1, r, rel_window, node_cap, max_attempts,
                                batch=256)
    t = f.tree_at(0)
    t.window_rejected, t.oversize_rejected = f.window_rejected, f.oversize_rejected
    return t


def subtree_spans(f: Forest) -> np.ndarray:
    """Total ``delta`` of the subtree below (and including) every node."""
    acc = f.delta.astype(float).copy()
    for idx in reversed(f.levels[1:]):
        _add_to_parents(acc, f.parent[idx], acc[idx])
    return acc


def _add_to_parents(acc: np.ndarray, par: np.ndarray, vals: np.ndarray) -> None:
    """``acc[par] += vals`` for ``par`` sorted (children grouped by parent)."""
    if par.size == 0:
        return
    starts = np.flatnonzero(np.concatenate([[True], par[1:] != par[:-1]]))
    acc[par[starts]] += np.add.reduceat(vals, starts)


@dataclass(frozen=True)
class ExcursionProfile:
    """Piecewise-constant height profile.

    ``times[i]`` is where height ``heights[i]`` starts; the last entry is
    ``(sigma, 0)``. Height is the number of strict ancestors plus one.
    """

    times: np.ndarray
    heights: np.ndarray

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @property
    def breakpoints(self) -> list:
        return list(zip(self.times.tolist(), self.heights.tolist()))


def excursion_path(tree: Forest, index: int = 0) -> ExcursionProfile:
    """Depth-first (LIFO) contour of one tree.

    Node ``v`` is served for ``delta_v / c``; its children arrive at
    uniform positions of that service interval (drawn from the tree's own
    profile seed) and each child's subtree is explored before ``v`` resumes.
    """
    if tree.n_trees != 1:
        tree = tree.tree_at(index)
    c = tree.trunc.drain_rate
    gen = np.random.Generator(np.random.PCG64(int(tree.profile_seed[0])))
    times, heights = [], []
    t = 0.0
    # frame: [node, sorted arrival offsets, next child index, served so far]
    root = int(tree.root[0])
    stack = [[root, _arrivals(tree, root, gen, c), 0, 0.0]]
    times.append(0.0)
    heights.append(1)
    while stack:
        frame = stack[-1]
        v, arr, k, served = frame
        h = len(stack)
        if k < arr.size:
            t += arr[k] - served
            frame[2] += 1
            frame[3] = arr[k]
            child = int(tree.child_start[v]) + k
            stack.append([child, _arrivals(tree, child, gen, c), 0, 0.0])
            times.append(t)
            heights.append(h + 1)
        else:
            t += tree.delta[v] / c - served
            stack.pop()
            times.append(t)
            heights.append(len(stack))
    return ExcursionProfile(np.array(times), np.array(heights))


def _arrivals(tree, v, gen, c):
    k = int(tree.n_children[v])
    return np.sort(gen.random(k)) * (tree.delta[v] / c)


def dump(tree: Forest, fh) -> None:
    """Write ``node_id parent_id delta cut_time`` lines (``nan`` if no clock)."""
    ct = tree.cut_time
    fh.write("# node_id parent_id delta cut_time\n")
    for i in range(tree.size):
        t = float(ct[i]) if ct is not None else math.nan
        fh.write(f"{i} {int(tree.parent[i])} {float(tree.delta[i])!r} {t!r}\n")
