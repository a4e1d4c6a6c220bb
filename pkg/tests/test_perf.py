"""Epoch time/energy model against closed-form hand computations."""

import math

import numpy as np
import pytest

from righttrain.constraints import compute_flows, node_pair_flows
from righttrain.model import (Allocation, Deployment, DomainError,
                              KModelParams, NoLinkError, Solution,
                              ZeroAllocationError)
from righttrain.perf import (compute_time, data_fraction_of, epoch_metrics,
                             epochs_needed, epochs_unrounded, evaluate,
                             instance_compute_time, link_transfer_time,
                             processing_load, proportional_allocation)

from conftest import chain_tree, make_scenario


def test_compute_time_direct():
    assert compute_time(10.0, 4.0, 20.0) == pytest.approx(2.0)
    assert compute_time(10.0, 0.0, 20.0) == 0.0
    assert compute_time(6.771, 1.0, 6.771) == pytest.approx(1.0)
    with pytest.raises(ZeroAllocationError):
        compute_time(10.0, 4.0, 0.0)


def test_instance_compute_time_via_tree(two_node_chain):
    scenario, tree = two_node_chain
    alloc = Allocation(rho={(1, 1): 20.0, (2, 1): 40.0}, x={"d1": 8.0})
    assert instance_compute_time((1, 1), tree, alloc, scenario) == pytest.approx(4.0)
    assert instance_compute_time((2, 1), tree, alloc, scenario) == pytest.approx(2.0)


def test_link_transfer_time():
    scenario = make_scenario(
        layer_specs=[(1.0, 1.0), (1.0, 1.0)],
        node_specs=[{"id": "n0", "compute": 10.0}, {"id": "n1", "compute": 10.0}],
        link_matrix=[[0, 4.0], [4.0, 0]],
        source_specs=[("d1", 8.0, "n0")])
    assert link_transfer_time("n0", "n1", {("n0", "n1"): 8.0}, scenario) == 2.0
    assert link_transfer_time("n0", "n0", {("n0", "n0"): 8.0}, scenario) == 0.0
    assert link_transfer_time("n0", "n1", {}, scenario) == 0.0
    bad = make_scenario(
        layer_specs=[(1.0, 1.0)],
        node_specs=[{"id": "n0", "compute": 10.0}, {"id": "n1", "compute": 10.0}],
        link_matrix=[[0, 0], [0, 0]],
        source_specs=[("d1", 8.0, "n0")])
    with pytest.raises(NoLinkError):
        link_transfer_time("n0", "n1", {("n0", "n1"): 1.0}, bad)


def test_two_node_chain_closed_form(two_node_chain):
    """Machine-precision check of the full per-epoch pipeline."""
    scenario, tree = two_node_chain
    sol = Solution(tree=tree,
                   deployment=Deployment({(1, 1): "nA", (2, 1): "nB"}),
                   allocation=Allocation(rho={(1, 1): 20.0, (2, 1): 40.0},
                                         x={"d1": 8.0}))
    m = epoch_metrics(sol, scenario)
    assert m.t_comp[(1, 1)] == 4.0
    assert m.t_comp[(2, 1)] == 2.0
    assert m.t_net[("nA", "nB")] == 1.0
    assert m.t_begin[(2, 1)] == 5.0
    assert m.epoch_time == 7.0
    assert m.e_comp[(1, 1)] == 48.0   # 4 * (0.5*20 + 2)
    assert m.e_comp[(2, 1)] == 16.0   # 2 * (0.1*40 + 4)
    assert m.e_net[(1, 1)] == 1.0     # 0.25 J/Mbit * 4 Mbit
    assert m.e_net[(2, 1)] == 0.0
    assert m.epoch_energy == 65.0

    out = evaluate(sol, scenario)
    assert out.metrics.epochs == 5
    assert out.metrics.objective == 325.0
    assert out.metrics.total_time == 35.0
    assert out.metrics.data_fraction == 1.0


def test_epoch_time_max_rule():
    # two layer-1 replicas finishing at 3 s and 5 s feed a 1 s parent
    scenario = make_scenario(
        layer_specs=[(1.0, 1.0), (1.0, 1.0)],
        node_specs=[{"id": "n0", "compute": 10.0}, {"id": "n1", "compute": 10.0},
                    {"id": "n2", "compute": 10.0}],
        link_matrix=[[0, 1e9, 1e9], [1e9, 0, 1e9], [1e9, 1e9, 0]],
        source_specs=[("a", 30.0, "n0"), ("b", 50.0, "n1")])
    tree = type(chain_tree(2, ["a"]))(
        instances=[(1, 1), (1, 2), (2, 1)],
        edges=[("a", (1, 1)), ("b", (1, 2)), ((1, 1), (2, 1)), ((1, 2), (2, 1))],
        used_sources=["a", "b"])
    tree.validate(scenario)
    sol = Solution(tree=tree,
                   deployment=Deployment({(1, 1): "n0", (1, 2): "n1", (2, 1): "n2"}),
                   allocation=Allocation(rho={(1, 1): 10.0, (1, 2): 10.0,
                                              (2, 1): 80.0},
                                         x={"a": 30.0, "b": 50.0}))
    m = epoch_metrics(sol, scenario)
    assert m.t_end[(1, 1)] == pytest.approx(3.0)
    assert m.t_end[(1, 2)] == pytest.approx(5.0)
    assert m.epoch_time == pytest.approx(5.0 + 50.0 / 1e9 + 1.0)


def test_zero_data_zero_cost(two_node_chain):
    scenario, tree = two_node_chain
    sol = Solution(tree=tree,
                   deployment=Deployment({(1, 1): "nA", (2, 1): "nB"}),
                   allocation=Allocation(rho={(1, 1): 20.0, (2, 1): 40.0},
                                         x={"d1": 0.0}))
    out = evaluate(sol, scenario)
    assert out.metrics.epoch_time == 0.0
    assert out.metrics.epoch_energy == 0.0
    assert out.metrics.objective == 0.0


def test_energy_linear_in_data(two_node_chain):
    scenario, tree = two_node_chain
    deployment = Deployment({(1, 1): "nA", (2, 1): "nB"})
    rho = {(1, 1): 20.0, (2, 1): 40.0}
    base = epoch_metrics(Solution(tree=tree, deployment=deployment,
                                  allocation=Allocation(rho=rho, x={"d1": 4.0})),
                         scenario).epoch_energy
    double = epoch_metrics(Solution(tree=tree, deployment=deployment,
                                    allocation=Allocation(rho=rho, x={"d1": 8.0})),
                           scenario).epoch_energy
    assert double == pytest.approx(2.0 * base, rel=1e-12)


def test_epoch_time_chain_closed_form_random():
    """On a pure chain, epoch time is the sum of compute and transfer times."""
    rng = np.random.default_rng(3)
    for _ in range(20):
        L = int(rng.integers(2, 5))
        scenario = make_scenario(
            layer_specs=[(float(rng.uniform(1, 20)), float(rng.uniform(0.3, 1.5)))
                         for _ in range(L)],
            node_specs=[{"id": f"n{i}", "compute": float(rng.uniform(10, 100))}
                        for i in range(L)],
            link_matrix=(np.full((L, L), float(rng.uniform(10, 100)))).tolist(),
            source_specs=[("d1", float(rng.uniform(1, 20)), "n0")])
        tree = chain_tree(L, ["d1"])
        mapping = {(l, 1): f"n{l - 1}" for l in range(1, L + 1)}
        deployment = Deployment(mapping)
        alloc = proportional_allocation(tree, deployment, scenario)
        sol = Solution(tree=tree, deployment=deployment, allocation=alloc)
        m = epoch_metrics(sol, scenario)
        expected = sum(m.t_comp.values()) + sum(m.t_net.values())
        assert m.epoch_time == pytest.approx(expected, rel=1e-12)


def test_processing_load_examples():
    scenario = make_scenario(
        layer_specs=[(2.0, 0.5), (4.0, 1.0)],
        node_specs=[{"id": "n0", "compute": 100.0}],
        link_matrix=[[0]],
        source_specs=[("d1", 10.0, "n0")],
        k_model=KModelParams(k0=3.0, kappa_d=0.0, kappa_i=0.0))
    tree = chain_tree(2, ["d1"])
    assert processing_load(tree, scenario) == pytest.approx(3 * (2 * 10 + 4 * 5))

    single = make_scenario(
        layer_specs=[(1.0, 1.0)],
        node_specs=[{"id": "n0", "compute": 100.0}],
        link_matrix=[[0]],
        source_specs=[("d1", 7.0, "n0")],
        k_model=KModelParams(k0=1.0, kappa_d=0.0, kappa_i=0.0))
    assert processing_load(chain_tree(1, ["d1"]), single) == pytest.approx(7.0)


def test_processing_load_matches_path_walker(small_preset):
    """Ranking matches an independent per-source path-product recomputation."""
    from righttrain.trees import enumerate_instance_trees
    from righttrain.perf import epochs_needed

    def walker_load(tree, scenario):
        parents = tree.parent_map()
        total = 0.0
        for src in tree.used_sources:
            vol = scenario.source(src).volume
            cur = parents[src]
            carried = vol
            while True:
                total += scenario.layer(cur[0]).compute_req * carried
                nxt = parents.get(cur)
                if nxt is None:
                    break
                carried *= scenario.layer(cur[0]).data_ratio
                cur = nxt
        return epochs_needed(tree, 1.0, scenario.k_model) * total

    trees = enumerate_instance_trees(small_preset)
    ours = [processing_load(t, small_preset) for t in trees]
    independent = [walker_load(t, small_preset) for t in trees]
    np.testing.assert_allclose(ours, independent, rtol=1e-12)
    assert np.argsort(ours, kind="stable").tolist() == \
        np.argsort(independent, kind="stable").tolist()


def test_epochs_needed_examples():
    tree3 = chain_tree(3, ["d1"])
    km = KModelParams(k0=10.0, kappa_d=5.0, kappa_i=0.0)
    assert epochs_needed(tree3, 1.0, km) == 10
    assert epochs_needed(tree3, math.exp(-1.0), km) == 15
    km2 = KModelParams(k0=10.0, kappa_d=5.0, kappa_i=0.2)
    bigger = type(tree3)(instances=tree3.instances + [(1, 2), (2, 2)],
                         edges=tree3.edges, used_sources=tree3.used_sources)
    assert epochs_needed(bigger, math.exp(-1.0), km2) == math.ceil(15 * 1.4)
    with pytest.raises(DomainError):
        epochs_needed(tree3, 0.001, km)
    with pytest.raises(DomainError):
        epochs_needed(tree3, 1.2, km)


def test_epochs_monotonicity_random():
    rng = np.random.default_rng(11)
    for _ in range(200):
        km = KModelParams(k0=float(rng.uniform(1, 20)),
                          kappa_d=float(rng.uniform(0, 10)),
                          kappa_i=float(rng.uniform(0, 0.5)))
        L = int(rng.integers(1, 5))
        base = chain_tree(L, ["d1"])
        phi1, phi2 = sorted(rng.uniform(0.01, 1.0, size=2))
        assert epochs_needed(base, phi1, km) >= epochs_needed(base, phi2, km)
        grown = type(base)(instances=base.instances + [(1, 2)],
                           edges=base.edges, used_sources=base.used_sources)
        assert epochs_needed(grown, phi1, km) >= epochs_needed(base, phi1, km)


def test_objective_is_exactly_k_times_e(two_node_chain):
    scenario, tree = two_node_chain
    sol = Solution(tree=tree,
                   deployment=Deployment({(1, 1): "nA", (2, 1): "nB"}),
                   allocation=Allocation(rho={(1, 1): 11.0, (2, 1): 17.0},
                                         x={"d1": 6.5}))
    out = evaluate(sol, scenario)
    m = epoch_metrics(sol, scenario)
    phi = data_fraction_of(tree, sol.allocation.x, scenario)
    k = epochs_needed(tree, phi, scenario.k_model)
    assert out.metrics.objective == k * m.epoch_energy
    assert out.metrics.total_time == k * m.epoch_time


def test_compute_time_midpoint_convex_in_rho():
    """Compute time is midpoint convex in the compute share (1000 samples)."""
    rng = np.random.default_rng(5)
    for _ in range(1000):
        r = float(rng.uniform(0.1, 50))
        vol = float(rng.uniform(0.1, 100))
        a, b = rng.uniform(0.5, 200, size=2)
        mid = compute_time(r, vol, (a + b) / 2)
        chord = 0.5 * (compute_time(r, vol, a) + compute_time(r, vol, b))
        assert mid <= chord + 1e-9


def test_proportional_allocation_shares(two_node_chain):
    scenario, tree = two_node_chain
    deployment = Deployment({(1, 1): "nA", (2, 1): "nA"})
    alloc = proportional_allocation(tree, deployment, scenario)
    # loads: layer1 10*8 = 80 MOPs, layer2 20*4 = 80 MOPs -> equal split of 20
    assert alloc.rho[(1, 1)] == pytest.approx(10.0)
    assert alloc.rho[(2, 1)] == pytest.approx(10.0)
    assert sum(alloc.rho.values()) == pytest.approx(20.0)
