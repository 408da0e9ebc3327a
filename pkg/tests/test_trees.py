import math

import numpy as np
import pytest

from vrjp.igmath import ig_sample
from vrjp.trees import (
    OffspringLaw,
    ResourceLimitError,
    additive_sum,
    min_ancestral_max,
    sample_tree,
    walk_fields,
)

import _builders
import _frozen

WC2 = float(_frozen.CRITICAL_WEIGHT["2"])
TILT = float(_frozen.TILT_M2_HALF)
RATE = float(_frozen.RATE_M2_HALF)


def test_law_validation():
    with pytest.raises(ValueError):
        OffspringLaw({2: 0.5, 3: 0.6})
    with pytest.raises(ValueError):
        OffspringLaw({-1: 1.0})
    with pytest.raises(ValueError):
        OffspringLaw({})


def test_law_flags_and_mean():
    law = OffspringLaw({2: 0.5, 3: 0.5})
    assert law.mean == pytest.approx(2.5)
    assert law.always_branches and law.never_single_child
    assert not OffspringLaw({0: 0.1, 3: 0.9}).always_branches
    assert not OffspringLaw({1: 0.5, 3: 0.5}).never_single_child


def test_law_from_json_roundtrip():
    law = OffspringLaw.from_json({"pmf": {"2": 0.5, "3": 0.5}})
    assert law.pmf == {2: 0.5, 3: 0.5}
    with pytest.raises(ValueError):
        OffspringLaw.from_json({"nope": 1})


def test_deterministic_generation_sizes():
    tree = sample_tree(OffspringLaw.deterministic(2), 10, np.random.default_rng(0))
    for n in range(11):
        assert tree.generation_size(n) == 2**n
    assert tree.n_nodes == 2**11 - 1
    assert tree.height == 10


def test_mean_generation_size():
    law = OffspringLaw({2: 0.5, 3: 0.5})
    rng = np.random.default_rng(1)
    sizes = np.array([sample_tree(law, 5, rng).generation_size(5) for _ in range(10**4)])
    se = sizes.std(ddof=1) / math.sqrt(len(sizes))
    assert abs(sizes.mean() - 2.5**5) < 4 * se


def test_node_cap():
    with pytest.raises(ResourceLimitError):
        sample_tree(OffspringLaw.deterministic(2), 25, np.random.default_rng(0))
    with pytest.raises(ResourceLimitError):
        sample_tree(OffspringLaw.deterministic(3), 4, np.random.default_rng(0), node_cap=100)


def test_law_preconditions_for_sampling():
    with pytest.raises(ValueError):
        sample_tree(OffspringLaw({0: 0.5, 4: 0.5}), 3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_tree(OffspringLaw.deterministic(2), -1, np.random.default_rng(0))


def test_arena_parent_walk_reaches_root():
    law = OffspringLaw({1: 0.3, 2: 0.4, 3: 0.3})
    tree = sample_tree(law, 7, np.random.default_rng(2))
    rng = np.random.default_rng(3)
    for i in rng.integers(0, tree.n_nodes, size=50):
        steps, j = 0, int(i)
        while j != 0:
            j = int(tree.parent[j])
            steps += 1
        assert steps == tree.depth[i]
    # children ranges are consistent with parents
    for i in rng.integers(0, tree.n_nodes, size=20):
        lo = int(tree.child_start[i])
        for c in range(lo, lo + int(tree.child_count[i])):
            assert tree.parent[c] == i


def test_walk_fields_unit_weights():
    tree = sample_tree(OffspringLaw.deterministic(2), 4, np.random.default_rng(0))
    w = walk_fields(tree, np.ones(tree.n_nodes), tilt=0.4, rate=0.3)
    assert np.all(w.position == 0)
    assert w.recentred == pytest.approx(-0.4 * 0.3 * tree.depth)


def test_walk_fields_single_path():
    tree = _builders.path_arena(2)
    a = np.array([np.nan, 0.7, 1.9])
    w = walk_fields(tree, a, tilt=1.0, rate=0.0)
    assert w.position[2] == pytest.approx(-math.log(0.7) - math.log(1.9))
    assert min_ancestral_max(w, 2) == pytest.approx(w.running_max[2])


def _brute_running_max(tree, recentred, i):
    best = -np.inf
    j = int(i)
    while j != 0:
        best = max(best, recentred[j])
        j = int(tree.parent[j])
    return best if best > -np.inf else 0.0


def test_running_max_brute_force():
    law = OffspringLaw({1: 0.4, 2: 0.6})
    tree = sample_tree(law, 8, np.random.default_rng(4))
    assert 50 < tree.n_nodes < 500
    rng = np.random.default_rng(5)
    a = ig_sample(rng, 1.0, 0.5, size=tree.n_nodes)
    w = walk_fields(tree, a, tilt=TILT, rate=RATE)
    for i in range(tree.n_nodes):
        assert w.running_max[i] == pytest.approx(_brute_running_max(tree, w.recentred, i))
    assert np.all(w.running_max >= w.recentred - 1e-12)


def test_min_ancestral_max_brute_force():
    law = OffspringLaw({2: 0.7, 3: 0.3})
    tree = sample_tree(law, 7, np.random.default_rng(6))
    rng = np.random.default_rng(7)
    a = ig_sample(rng, 1.0, 0.5 * WC2, size=tree.n_nodes)
    w = walk_fields(tree, a, tilt=TILT, rate=RATE)
    n = 7
    gen = tree.generation(n)
    brute = min(_brute_running_max(tree, w.recentred, i) for i in range(gen.start, gen.stop))
    assert min_ancestral_max(w, n) == pytest.approx(brute)
    assert min_ancestral_max(w, n) <= w.recentred[gen].max() + 1e-12


def test_additive_sum_basics():
    tree = sample_tree(OffspringLaw({2: 0.5, 3: 0.5}), 6, np.random.default_rng(8))
    rng = np.random.default_rng(9)
    a = ig_sample(rng, 1.0, 0.5 * WC2, size=tree.n_nodes)
    w = walk_fields(tree, a, tilt=TILT, rate=RATE)
    assert additive_sum(w, 0, beta=1.0) == 1.0
    assert additive_sum(w, 6, beta=0.0) == tree.generation_size(6)
    # naive per-leaf oracle
    gen = tree.generation(6)
    naive = sum(math.exp(-1.3 * w.recentred[i]) for i in range(gen.start, gen.stop))
    assert additive_sum(w, 6, beta=1.3) == pytest.approx(naive, rel=1e-12)


def test_additive_sum_decreasing_in_beta():
    tree = sample_tree(OffspringLaw.deterministic(2), 6, np.random.default_rng(10))
    a = ig_sample(np.random.default_rng(11), 1.0, 0.5 * WC2, size=tree.n_nodes)
    w = walk_fields(tree, a, tilt=TILT, rate=RATE)
    assert w.recentred[tree.generation(6)].max() > 0  # premise for strict decrease
    vals = [additive_sum(w, 6, beta=b) for b in (0.0, 0.5, 1.0, 2.0)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


def test_additive_martingale_unit_mean():
    # E[sum exp(-recentred)] = 1 at the correctly recentred tilt/rate pair
    law = OffspringLaw.deterministic(2)
    rng = np.random.default_rng(12)
    w = 0.5 * WC2
    vals = []
    for _ in range(10**4):
        tree = sample_tree(law, 5, rng)
        a = ig_sample(rng, 1.0, w, size=tree.n_nodes)
        f = walk_fields(tree, a, tilt=TILT, rate=RATE)
        vals.append(additive_sum(f, 5, beta=1.0))
    vals = np.array(vals)
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean() - 1.0) < 4 * se
