"""Flow derivation and the constraint checker."""

import numpy as np
import pytest

from righttrain.constraints import check_constraints, compute_flows
from righttrain.model import Allocation, Deployment, InstanceTree, Solution

from conftest import chain_tree, make_scenario


@pytest.fixture()
def chain3():
    scenario = make_scenario(
        layer_specs=[(1.0, 0.5), (1.0, 2.0), (1.0, 1.0)],
        node_specs=[{"id": "n0", "compute": 100.0}],
        link_matrix=[[0]],
        source_specs=[("d1", 10.0, "n0")])
    return scenario, chain_tree(3, ["d1"])


def test_flows_chain(chain3):
    scenario, tree = chain3
    flows = compute_flows(tree, {"d1": 10.0}, scenario)
    assert flows[("d1", (1, 1))] == 10.0
    assert flows[((1, 1), (2, 1))] == 5.0
    assert flows[((2, 1), (3, 1))] == 10.0


def test_flows_merge():
    scenario = make_scenario(
        layer_specs=[(1.0, 0.5), (1.0, 1.0)],
        node_specs=[{"id": "n0", "compute": 100.0}],
        link_matrix=[[0]],
        source_specs=[("a", 4.0, "n0"), ("b", 6.0, "n0")])
    tree = chain_tree(2, ["a", "b"])
    flows = compute_flows(tree, {"a": 4.0, "b": 6.0}, scenario)
    assert flows[((1, 1), (2, 1))] == pytest.approx(5.0)


def test_flows_zero(chain3):
    scenario, tree = chain3
    flows = compute_flows(tree, {"d1": 0.0}, scenario)
    assert all(v == 0.0 for v in flows.values())


def test_flows_monotone_in_x():
    rng = np.random.default_rng(7)
    scenario = make_scenario(
        layer_specs=[(1.0, 0.7), (1.0, 1.3), (1.0, 0.4)],
        node_specs=[{"id": "n0", "compute": 100.0}],
        link_matrix=[[0]],
        source_specs=[("a", 50.0, "n0"), ("b", 50.0, "n0")])
    tree = chain_tree(3, ["a", "b"])
    for _ in range(50):
        x = {"a": float(rng.uniform(0, 50)), "b": float(rng.uniform(0, 50))}
        bumped = dict(x)
        bumped["a"] = min(50.0, bumped["a"] + float(rng.uniform(0, 5)))
        f0 = compute_flows(tree, x, scenario)
        f1 = compute_flows(tree, bumped, scenario)
        assert all(f1[e] >= f0[e] - 1e-12 for e in f0)


def _solution(scenario, tree, mapping, rho, x):
    return Solution(tree=tree, deployment=Deployment(mapping),
                    allocation=Allocation(rho=rho, x=x))


def test_capacity_violation_named():
    scenario = make_scenario(
        layer_specs=[(1.0, 1.0), (1.0, 1.0)],
        node_specs=[{"id": "n0", "compute": 10.0}],
        link_matrix=[[0]],
        source_specs=[("d1", 5.0, "n0")])
    tree = chain_tree(2, ["d1"])
    sol = _solution(scenario, tree, {(1, 1): "n0", (2, 1): "n0"},
                    {(1, 1): 6.0, (2, 1): 5.0}, {"d1": 5.0})
    report = check_constraints(sol, scenario)
    fail = report.first_failure()
    assert not report.ok
    assert fail.name == "node-capacity"
    assert fail.entity == "n0"
    assert fail.slack == pytest.approx(-1.0)


def test_memory_violation_detected():
    scenario = make_scenario(
        layer_specs=[(1.0, 1.0), (1.0, 1.0)],
        node_specs=[{"id": "n0", "compute": 10.0},
                    {"id": "n1", "compute": 10.0, "mu": [1, 0]}],
        link_matrix=[[0, 100], [100, 0]],
        source_specs=[("d1", 5.0, "n0")])
    tree = chain_tree(2, ["d1"])
    sol = _solution(scenario, tree, {(1, 1): "n0", (2, 1): "n1"},
                    {(1, 1): 5.0, (2, 1): 5.0}, {"d1": 5.0})
    report = check_constraints(sol, scenario)
    assert not report.ok
    assert any(c.name == "memory-feasible" and not c.passed for c in report.checks)


def test_link_capacity_violation():
    scenario = make_scenario(
        layer_specs=[(1.0, 1.0), (1.0, 1.0)],
        node_specs=[{"id": "n0", "compute": 10.0},
                    {"id": "n1", "compute": 10.0}],
        link_matrix=[[0, 3.0], [3.0, 0]],
        source_specs=[("d1", 5.0, "n0")])
    tree = chain_tree(2, ["d1"])
    sol = _solution(scenario, tree, {(1, 1): "n0", (2, 1): "n1"},
                    {(1, 1): 5.0, (2, 1): 5.0}, {"d1": 5.0})
    report = check_constraints(sol, scenario)
    bad = [c for c in report.checks if not c.passed]
    assert len(bad) == 1
    assert bad[0].name == "link-capacity"
    assert bad[0].entity == "n0->n1"


def test_pipeline_output_passes(small_preset):
    from righttrain.solve import righttrain_solve
    sol = righttrain_solve(small_preset, t_max=5.0)
    report = check_constraints(sol, small_preset)
    assert report.ok, str(report)
