"""Instance-tree enumeration: counts, caps, and invariants."""

from itertools import combinations

import pytest

from righttrain.model import CapExceededError
from righttrain.presets import random_scenario
from righttrain.trees import cut_tree, enumerate_instance_trees, source_subsets

from conftest import make_scenario


def scenario_with(n_sources, n_layers):
    return make_scenario(
        layer_specs=[(1.0, 1.0)] * n_layers,
        node_specs=[{"id": "n0", "compute": 100.0}],
        link_matrix=[[0]],
        source_specs=[(f"d{k}", 10.0 + k, "n0") for k in range(n_sources)])


def brute_force_tree_count(n_sources, n_layers):
    """Independent count: distinct (subset, depth) shapes, single-source
    subsets collapsing to one chain."""
    ids = list(range(n_sources))
    total = 0
    for k in range(1, n_sources + 1):
        for _ in combinations(ids, k):
            total += 1 if k == 1 else n_layers
    return total


def test_single_source_single_chain():
    scenario = scenario_with(1, 3)
    trees = enumerate_instance_trees(scenario)
    assert len(trees) == 1
    assert trees[0].n_instances == 3


def test_two_sources_three_layers_counts():
    scenario = scenario_with(2, 3)
    trees = enumerate_instance_trees(scenario)
    assert len(trees) == 5
    assert len(trees) == brute_force_tree_count(2, 3)


@pytest.mark.parametrize("n_sources,n_layers", [(2, 2), (3, 3), (4, 2), (3, 4)])
def test_counts_match_oracle(n_sources, n_layers):
    scenario = scenario_with(n_sources, n_layers)
    trees = enumerate_instance_trees(scenario)
    assert len(trees) == brute_force_tree_count(n_sources, n_layers)


def test_subset_cap_and_order():
    scenario = scenario_with(4, 2)
    subs = source_subsets(scenario, max_subsets=15, allow_truncation=False)
    assert len(subs) == 15
    volumes = [sum(scenario.source(s).volume for s in sub) for sub in subs]
    assert volumes == sorted(volumes, reverse=True)
    trees = enumerate_instance_trees(scenario, max_subsets=15)
    assert len(trees) <= 15 * scenario.n_layers


def test_cap_exceeded_without_permission():
    scenario = scenario_with(4, 2)
    with pytest.raises(CapExceededError):
        enumerate_instance_trees(scenario, max_subsets=3)
    trees = enumerate_instance_trees(scenario, max_subsets=3,
                                     allow_truncation=True)
    ids = {tuple(t.used_sources) for t in trees}
    assert len(ids) == 3  # the three largest-volume subsets survive


def test_cut_tree_shape():
    scenario = scenario_with(2, 3)
    tree = cut_tree(scenario, ["d0", "d1"], 2)
    assert sorted(tree.instances) == [(1, 1), (1, 2), (2, 1), (2, 2), (3, 1)]
    parents = tree.parent_map()
    assert parents["d0"] == (1, 1)
    assert parents["d1"] == (1, 2)
    assert parents[(2, 1)] == (3, 1) and parents[(2, 2)] == (3, 1)


def test_enumerated_trees_pass_invariants_on_random_scenarios():
    for seed in range(25):
        scenario = random_scenario(seed)
        for tree in enumerate_instance_trees(scenario, max_subsets=16,
                                             allow_truncation=True):
            tree.validate(scenario)  # raises on violation
