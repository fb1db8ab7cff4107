"""Fragmentation of jump trees at nodes.

Every node ``v`` carries an exponential clock ``T_v`` of rate ``delta_v``.
At time ``theta`` the nodes with ``T_v <= theta`` are cut. Fragments are
the connected components of uncut nodes; a component's mass is its total
``delta / c``. The drain mass ``delta_v / c`` of a cut node belongs to no
fragment and is booked as dust, so ``sum(fragments) + dust = sigma``.

All routines work on a whole :class:`~nodefrag.tree.Forest` at once by
propagating labels from parents to children one depth level at a time.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .sampler import _gen
from .tree import Forest, JumpTree

__all__ = [
    "FragmentSnapshot", "ForestSnapshot", "DislocationEvent", "Timeline",
    "MissingClocksError", "assign_cut_times", "fragments_at", "forest_fragments_at",
    "tagged_mass_at", "root_component", "forest_tagged_mass", "dislocation_timeline",
    "forest_timeline", "prune", "prune_forest", "boundary_excursion_count",
    "forest_boundary_counts", "fragment_forest",
]


class MissingClocksError(RuntimeError):
    """Raised when a fragmentation query is made on a tree without clocks."""


def _clocks(f: Forest) -> np.ndarray:
    if f.cut_time is None:
        raise MissingClocksError("cut times not assigned; call assign_cut_times first")
    return f.cut_time


def assign_cut_times(f: Forest, rng) -> Forest:
    """Copy of ``f`` with ``T_v = E_v / delta_v``, ``E_v ~ Exp(1)`` i.i.d."""
    e = _gen(rng).standard_exponential(f.size)
    return dataclasses.replace(f, cut_time=e / f.delta)


@dataclass(frozen=True)
class FragmentSnapshot:
    theta: float
    masses: np.ndarray  # descending
    dust: float
    tagged_mass: float

    @property
    def total(self) -> float:
        return float(self.masses.sum() + self.dust)


@dataclass(frozen=True)
class ForestSnapshot:
    """Fragments of all trees of a forest at one ``theta``.

    ``masses[i]`` belongs to tree ``frag_tree[i]`` and has top node
    ``top[i]``; ``label`` maps every node to the id of its component's top
    node (-1 for cut nodes). The tagged fragment is the one whose top is the root.
    """

    theta: float
    masses: np.ndarray
    frag_tree: np.ndarray
    dust: np.ndarray
    tagged: np.ndarray
    sigma: np.ndarray
    label: np.ndarray
    top: np.ndarray

    def tree_snapshot(self, i: int) -> FragmentSnapshot:
        m = np.sort(self.masses[self.frag_tree == i])[::-1]
        return FragmentSnapshot(self.theta, m, float(self.dust[i]), float(self.tagged[i]))

    def largest(self) -> np.ndarray:
        out = np.zeros(self.dust.size)
        np.maximum.at(out, self.frag_tree, self.masses)
        return out


def _component_labels(f: Forest, uncut: np.ndarray) -> np.ndarray:
    label = np.where(uncut, np.arange(f.size), -1)
    for idx in f.levels[1:]:
        p = f.parent[idx]
        join = uncut[idx] & uncut[p]
        label[idx[join]] = label[p[join]]
    return label


def forest_fragments_at(f: Forest, theta: float) -> ForestSnapshot:
    if theta < 0:
        raise ValueError("theta must be >= 0")
    t = _clocks(f)
    c = f.trunc.drain_rate
    uncut = t > theta
    label = _component_labels(f, uncut)
    comp_mass = np.bincount(label[uncut], weights=f.delta[uncut], minlength=f.size)
    tops = np.flatnonzero(uncut & ((f.parent < 0) | ~uncut[np.maximum(f.parent, 0)]))
    masses = comp_mass[tops] / c
    dust = np.bincount(f.tree[~uncut], weights=f.delta[~uncut], minlength=f.n_trees) / c
    root_up = uncut[f.root]
    tagged = np.where(root_up, comp_mass[f.root] / c, 0.0)
    return ForestSnapshot(float(theta), masses, f.tree[tops], dust, tagged, f.sigmas, label, tops)


def fragments_at(tree: Forest, theta: float) -> FragmentSnapshot:
    """Ranked fragment masses, dust and tagged mass of a single tree."""
    if tree.n_trees != 1:
        raise ValueError("fragments_at expects a single tree; use forest_fragments_at")
    return forest_fragments_at(tree, theta).tree_snapshot(0)


def root_component(f: Forest, theta: float) -> np.ndarray:
    """Boolean mask of nodes whose whole ancestral line (self included) is uncut."""
    t = _clocks(f)
    alive = t > theta
    for idx in f.levels[1:]:
        alive[idx] &= alive[f.parent[idx]]
    return alive


def forest_tagged_mass(f: Forest, theta: float) -> np.ndarray:
    alive = root_component(f, theta)
    return np.bincount(f.tree[alive], weights=f.delta[alive], minlength=f.n_trees) / f.trunc.drain_rate


def tagged_mass_at(tree: Forest, theta: float) -> float:
    if tree.n_trees != 1:
        raise ValueError("tagged_mass_at expects a single tree")
    return float(forest_tagged_mass(tree, theta)[0])


def forest_boundary_counts(f: Forest, theta: float, a: float) -> np.ndarray:
    """Per tree: cut nodes with ``delta > a`` whose parent is in the root component."""
    if not (a > f.trunc.epsilon):
        raise ValueError("threshold a must exceed the jump cutoff epsilon")
    t = _clocks(f)
    alive = root_component(f, theta)
    nonroot = f.parent >= 0
    hit = nonroot & (t <= theta) & (f.delta > a)
    hit[nonroot] &= alive[f.parent[nonroot]]
    return np.bincount(f.tree[hit], minlength=f.n_trees)


def boundary_excursion_count(tree: Forest, theta: float, a: float) -> int:
    return int(forest_boundary_counts(tree, theta, a)[0])


def prune_forest(f: Forest, theta: float) -> Forest:
    """Forest of root components; trees whose root is cut are dropped.

    ``rejected`` bookkeeping is carried over; ``window_rejected`` is
    incremented by the number of dropped trees.
    """
    alive = root_component(f, theta)
    tree_mask = alive[f.root]
    keep = alive
    c_ids = np.cumsum(keep) - 1
    par = f.parent[keep]
    par = np.where(par >= 0, c_ids[np.maximum(par, 0)], -1)
    new_tree = np.cumsum(tree_mask) - 1
    # surviving children of a node remain contiguous; recount them
    nch = np.bincount(par[par >= 0], minlength=int(keep.sum()))
    kept_ids = np.flatnonzero(keep)
    first = np.full(kept_ids.size, 0, dtype=np.int64)
    nonroot = np.flatnonzero(par >= 0)
    if nonroot.size:
        pr = par[nonroot]
        starts = np.concatenate([[True], pr[1:] != pr[:-1]])
        first[pr[starts]] = nonroot[starts]
    counts = np.bincount(new_tree[f.tree[keep]], minlength=int(tree_mask.sum()))
    out = Forest(
        trunc=f.trunc, delta=f.delta[keep], parent=par, tree=new_tree[f.tree[keep]],
        depth=f.depth[keep], child_start=first, n_children=nch,
        root=c_ids[f.root[tree_mask]], n_nodes=counts,
        profile_seed=f.profile_seed[tree_mask],
        oversize_rejected=f.oversize_rejected,
        window_rejected=f.window_rejected + int((~tree_mask).sum()),
        cut_time=f.cut_time[keep],
    )
    return out


def fragment_forest(f: Forest, theta: float, tops: np.ndarray | None = None) -> Forest:
    """Fragments present at ``theta`` as a forest, clocks restarted at ``theta``.

    Tree ``i`` of the result is the fragment whose top node is ``tops[i]``
    (default: all fragments, ordered by top node id). Remaining clocks are
    ``T - theta``, which are again Exp(delta) by memorylessness.
    """
    snap = forest_fragments_at(f, theta)
    tops = snap.top if tops is None else np.asarray(tops, dtype=np.int64)
    slot = np.full(f.size, -1, dtype=np.int64)
    slot[tops] = np.arange(tops.size)
    keep = snap.label >= 0
    keep[keep] = slot[snap.label[keep]] >= 0
    new_id = np.cumsum(keep) - 1
    kept = np.flatnonzero(keep)
    par = f.parent[kept]
    inside = (par >= 0) & keep[np.maximum(par, 0)]
    par = np.where(inside, new_id[np.maximum(par, 0)], -1)
    nch = np.bincount(par[par >= 0], minlength=kept.size)
    first = np.zeros(kept.size, dtype=np.int64)
    nonroot = np.flatnonzero(par >= 0)
    if nonroot.size:
        pr = par[nonroot]
        starts = np.concatenate([[True], pr[1:] != pr[:-1]])
        first[pr[starts]] = nonroot[starts]
    tree = slot[snap.label[kept]]
    depth = f.depth[kept] - f.depth[tops][tree]
    return Forest(
        trunc=f.trunc, delta=f.delta[kept], parent=par, tree=tree, depth=depth,
        child_start=first, n_children=nch, root=new_id[tops],
        n_nodes=np.bincount(tree, minlength=tops.size),
        profile_seed=f.profile_seed[f.tree[tops]] ^ tops,
        cut_time=f.cut_time[kept] - theta,
    )


def prune(tree: Forest, theta: float) -> JumpTree | None:
    """The root component as a tree, or ``None`` when the root is cut."""
    if tree.n_trees != 1:
        raise ValueError("prune expects a single tree; use prune_forest")
    f = prune_forest(tree, theta)
    if f.n_trees == 0:
        return None
    return f.tree_at(0)


@dataclass(frozen=True)
class DislocationEvent:
    theta: float
    parent_mass: float
    children: np.ndarray  # descending
    cut_node_delta: float
    cut_node: int = -1


@dataclass(frozen=True)
class Timeline:
    """All dislocation events of the tagged fragments of a forest.

    Events are sorted by (tree, time, node id). Pieces of event ``k`` are
    ``piece_mass[piece_ptr[k]:piece_ptr[k+1]]`` (descending); the root-side
    remainder is included as a piece when positive.
    """

    tree: np.ndarray
    node: np.ndarray
    time: np.ndarray
    parent_mass: np.ndarray
    cut_delta: np.ndarray
    remainder: np.ndarray
    piece_ptr: np.ndarray
    piece_mass: np.ndarray
    ties: int

    @property
    def n_events(self) -> int:
        return int(self.time.size)

    def pieces(self, k: int) -> np.ndarray:
        return self.piece_mass[self.piece_ptr[k]:self.piece_ptr[k + 1]]

    def event(self, k: int) -> DislocationEvent:
        return DislocationEvent(float(self.time[k]), float(self.parent_mass[k]),
                                self.pieces(k), float(self.cut_delta[k]), int(self.node[k]))

    def largest(self) -> np.ndarray:
        """Largest piece per event (0 if none)."""
        return self._kth(1)

    def second(self) -> np.ndarray:
        return self._kth(2)

    def _kth(self, k: int) -> np.ndarray:
        n = np.diff(self.piece_ptr)
        out = np.zeros(self.n_events)
        has = n >= k
        out[has] = self.piece_mass[self.piece_ptr[:-1][has] + k - 1]
        return out

    def count_above(self, thresholds: np.ndarray) -> np.ndarray:
        """Number of pieces of each event exceeding ``thresholds[event]``."""
        ev = np.repeat(np.arange(self.n_events), np.diff(self.piece_ptr))
        big = self.piece_mass > thresholds[ev]
        return np.bincount(ev[big], minlength=self.n_events)


def forest_timeline(f: Forest) -> Timeline:
    """Dislocation events of the root-containing fragment of every tree.

    Node ``u`` triggers an event iff its clock beats every strict ancestor's
    clock; the event removes from the tagged fragment exactly the nodes
    whose earliest ancestral clock (self included) is ``T_u``. Ties between
    equal clocks are resolved by node id.
    """
    t = _clocks(f)
    c = f.trunc.drain_rate
    n = f.size
    pmin = t.copy()  # min clock over ancestors-or-self
    ev = np.arange(n)  # event node that removes u
    br = np.full(n, -1, dtype=np.int64)  # child of the event node on the path to u
    is_event = np.ones(n, dtype=bool)
    ties = 0
    for idx in f.levels[1:]:
        p = f.parent[idx]
        tu, tp = t[idx], pmin[p]
        ties += int(np.count_nonzero(tu == tp))
        new = (tu < tp) | ((tu == tp) & (idx < ev[p]))
        is_event[idx] = new
        pmin[idx] = np.where(new, tu, tp)
        ev[idx] = np.where(new, idx, ev[p])
        old = ~new
        direct = old & (p == ev[p])
        br[idx[direct]] = idx[direct]
        inherit = old & ~direct
        br[idx[inherit]] = br[p[inherit]]
    events = np.flatnonzero(is_event)
    order = np.lexsort((events, t[events], f.tree[events]))
    events = events[order]
    removed = np.bincount(ev, weights=f.delta, minlength=n)[events] / c
    etree = f.tree[events]
    # tagged mass before an event = removed mass of this and all later events of its tree
    rev = np.concatenate([np.cumsum(removed[::-1])[::-1], [0.0]])
    last_of_tree = np.concatenate([etree[1:] != etree[:-1], [True]]) if events.size else np.zeros(0, bool)
    ends = np.flatnonzero(last_of_tree) + 1
    group = np.concatenate([[0], np.cumsum(last_of_tree[:-1])]).astype(np.int64) if events.size else np.zeros(0, np.int64)
    later = rev[ends[group]] if events.size else np.zeros(0)
    parent_mass = rev[:-1] - later
    remainder = rev[1:] - later  # exactly 0 at a tree's last event
    # pieces hanging from each event node's children
    sub = br >= 0
    piece_mass_by_child = np.bincount(br[sub], weights=f.delta[sub], minlength=n) / c
    pos = np.full(n, -1, dtype=np.int64)
    pos[events] = np.arange(events.size)
    kids = np.flatnonzero(piece_mass_by_child > 0)
    kid_event = pos[ev[kids]]
    pm = np.concatenate([piece_mass_by_child[kids], remainder[remainder > 0]])
    pe = np.concatenate([kid_event, np.flatnonzero(remainder > 0)])
    o = np.lexsort((-pm, pe))
    pm, pe = pm[o], pe[o]
    ptr = np.concatenate([[0], np.cumsum(np.bincount(pe, minlength=events.size))])
    return Timeline(tree=etree, node=events, time=t[events], parent_mass=parent_mass,
                    cut_delta=f.delta[events], remainder=remainder, piece_ptr=ptr,
                    piece_mass=pm, ties=ties)


def dislocation_timeline(tree: Forest) -> list[DislocationEvent]:
    """Ordered dislocation events of the tagged fragment of a single tree."""
    if tree.n_trees != 1:
        raise ValueError("dislocation_timeline expects a single tree; use forest_timeline")
    tl = forest_timeline(tree)
    return [tl.event(k) for k in range(tl.n_events)]
