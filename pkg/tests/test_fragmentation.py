import numpy as np
import pytest

from nodefrag.fragmentation import (MissingClocksError, assign_cut_times,
                                    boundary_excursion_count, dislocation_timeline,
                                    forest_boundary_counts, forest_fragments_at,
                                    forest_tagged_mass, forest_timeline, fragment_forest,
                                    fragments_at, prune, prune_forest, tagged_mass_at)
from nodefrag.sampler import RngStream
from nodefrag.stats import ks_two_sample, mc_mean
from nodefrag.tree import Forest, JumpTree, grow_conditioned_forest, grow_forest
from conftest import hand_mechanism, within_se


@pytest.fixture
def three_node():
    return JumpTree.from_parents(hand_mechanism(4.0), [2.0, 1.0, 1.0], [-1, 0, 0],
                                 [0.5, 2.0, 3.0])


@pytest.fixture(scope="module")
def forest():
    from nodefrag.exponent import Stable, truncate
    trunc = truncate(Stable(1.5), 1e-2)
    st = RngStream(21)
    return assign_cut_times(grow_forest(trunc, st.child(0), 20_000), st.child(1))


@pytest.mark.parametrize("theta,masses,dust,tagged", [
    (1.0, [0.25, 0.25], 0.5, 0.0), (0.4, [1.0], 0.0, 1.0), (10.0, [], 1.0, 0.0)])
def test_hand_snapshots(three_node, theta, masses, dust, tagged):
    s = fragments_at(three_node, theta)
    assert np.allclose(s.masses, masses) and s.masses.size == len(masses)
    assert s.dust == pytest.approx(dust) and s.tagged_mass == pytest.approx(tagged)
    assert tagged_mass_at(three_node, theta) == pytest.approx(tagged)


def test_missing_clocks():
    t = JumpTree.from_parents(hand_mechanism(4.0), [1.0], [-1])
    with pytest.raises(MissingClocksError):
        fragments_at(t, 1.0)


def test_clock_mean_and_scaling():
    trunc = hand_mechanism(1.0)
    f = Forest.from_parents(trunc, np.full(1_000_000, 2.0), np.full(1_000_000, -1))
    t = assign_cut_times(f, RngStream(1)).cut_time
    assert within_se(mc_mean(t), 0.5)
    g = Forest.from_parents(trunc, np.full(1_000_000, 4.0), np.full(1_000_000, -1))
    assert np.array_equal(assign_cut_times(g, RngStream(1)).cut_time, t / 2)


def test_clocks_independent_parent_child(forest):
    nr = np.flatnonzero(forest.parent >= 0)[:200_000]
    e_child = forest.cut_time[nr] * forest.delta[nr]
    e_par = forest.cut_time[forest.parent[nr]] * forest.delta[forest.parent[nr]]
    # parents repeat across siblings: use one child per parent
    _, first = np.unique(forest.parent[nr], return_index=True)
    x, y = e_par[first] - 1, e_child[first] - 1
    assert within_se(mc_mean(x * y), 0.0)


def test_mass_conservation(forest):
    for theta in (0.0, 0.3, 1.0, 5.0, 1e3):
        s = forest_fragments_at(forest, theta)
        tot = np.bincount(s.frag_tree, weights=s.masses, minlength=forest.n_trees) + s.dust
        assert np.max(np.abs(tot - s.sigma) / s.sigma) <= 1e-9
    assert np.allclose(forest_fragments_at(forest, 0.0).dust, 0.0)


def test_tagged_fragment_is_root_component(forest):
    s = forest_fragments_at(forest, 1.0)
    tagged = np.zeros(forest.n_trees)
    is_root = s.top == forest.root[s.frag_tree]
    tagged[s.frag_tree[is_root]] = s.masses[is_root]
    assert np.allclose(tagged, s.tagged)
    assert np.allclose(s.tagged, forest_tagged_mass(forest, 1.0))


def test_hand_timeline(three_node):
    (ev,) = dislocation_timeline(three_node)
    assert ev.theta == 0.5 and ev.parent_mass == pytest.approx(1.0)
    assert np.allclose(ev.children, [0.25, 0.25])


def test_timeline_invariants(forest):
    tl = forest_timeline(forest)
    c = forest.trunc.drain_rate
    sums = np.add.reduceat(np.concatenate([tl.piece_mass, [0.0]]), tl.piece_ptr[:-1])
    sums[np.diff(tl.piece_ptr) == 0] = 0.0
    assert np.allclose(sums, tl.parent_mass - tl.cut_delta / c,
                       rtol=0, atol=1e-9 * tl.parent_mass.max())
    same = tl.tree[1:] == tl.tree[:-1]
    assert np.all(np.diff(tl.time)[same] > 0)
    # each later event of a tree acts on a piece of the previous one
    nxt = np.flatnonzero(same) + 1
    assert np.all(tl.parent_mass[nxt] <= tl.parent_mass[nxt - 1] * (1 + 1e-12))
    for k in range(min(tl.n_events, 200)):
        p = tl.pieces(k)
        assert np.all(np.diff(p) <= 0)


def test_prune(three_node, forest):
    same = prune(three_node, 0.0)
    assert np.array_equal(same.delta, three_node.delta)
    assert prune(three_node, 1.0) is None
    pf = prune_forest(forest, 1.0)
    tag = forest_tagged_mass(forest, 1.0)
    assert np.allclose(np.sort(pf.sigmas), np.sort(tag[tag > 0]))
    assert np.all(pf.cut_time > 1.0)


def test_boundary_counts(three_node, forest):
    assert boundary_excursion_count(three_node, 0.0, 0.5) == 0
    assert np.all(forest_boundary_counts(forest, 0.0, 0.1) == 0)
    with pytest.raises(ValueError):
        forest_boundary_counts(forest, 1.0, forest.trunc.epsilon / 2)


def test_fragment_forest_masses(forest):
    s = forest_fragments_at(forest, 0.5)
    g = fragment_forest(forest, 0.5)
    assert np.allclose(g.sigmas, s.masses, rtol=1e-12)
    assert np.all(g.cut_time > 0) and np.all(g.depth[g.root] == 0)


def _first_significant(f, eta=0.1):
    tl = forest_timeline(f)
    sig = tl.second() > eta * tl.parent_mass
    x = (tl.largest() / tl.parent_mass)[sig]
    _, first = np.unique(tl.tree[sig], return_index=True)
    return x[first]


def test_fragmentation_property(forest):
    # fragments of mass ~ m at theta=0.5 evolve like fresh trees of mass ~ m
    m, w, n = 0.02, 0.1, 2000
    s = forest_fragments_at(forest, 0.5)
    tops = s.top[np.abs(s.masses / m - 1) <= w]
    xa = _first_significant(fragment_forest(forest, 0.5, tops))
    st = RngStream(22)
    fresh = grow_conditioned_forest(forest.trunc, st.child(0), tops.size, m, w)
    xb = _first_significant(assign_cut_times(fresh, st.child(1)))
    assert min(xa.size, xb.size) >= n
    assert ks_two_sample(xa[:n], xb[:n]) > 0.01
