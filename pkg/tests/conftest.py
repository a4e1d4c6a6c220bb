"""Shared fixtures: hand-built miniature scenarios with closed-form numbers."""

import math

import numpy as np
import pytest

from righttrain.model import (DataSource, InstanceTree, KModelParams, LayerSpec,
                              PhysNode, Scenario)


def make_scenario(layer_specs, node_specs, link_matrix, source_specs,
                  k_model=None, alpha=1.0, name="test"):
    """Build a scenario from raw per-unit quantities (no sample conversion).

    layer_specs: list of (r_mops_per_mbit, q)
    node_specs: list of dicts with id, compute (MOPS), e_p (W/MOPS), e_f
        (scalar or per-layer list, W), e_net (J/Mbit), mu (list of 0/1),
        and optional tier/cls
    source_specs: list of (id, volume_mbit, host)
    """
    layers = [LayerSpec(id=i + 1, name=f"l{i + 1}", compute_req=r, data_ratio=q)
              for i, (r, q) in enumerate(layer_specs)]
    nodes = []
    for spec in node_specs:
        e_f = spec.get("e_f", 0.0)
        if not isinstance(e_f, (list, tuple)):
            e_f = [e_f] * len(layers)
        mu = spec.get("mu", [1] * len(layers))
        nodes.append(PhysNode(
            id=spec["id"], tier=spec.get("tier", "edge"),
            node_class=spec.get("cls", "silver"),
            compute=float(spec["compute"]), e_p=float(spec.get("e_p", 0.0)),
            e_f=tuple(float(v) for v in e_f),
            e_net=float(spec.get("e_net", 0.0)),
            memory_ok=tuple(bool(v) for v in mu)))
    links = np.array(link_matrix, dtype=float)
    np.fill_diagonal(links, math.inf)
    sources = [DataSource(id=s, volume=float(v), host=h)
               for s, v, h in source_specs]
    scenario = Scenario(layers=layers, nodes=nodes, sources=sources,
                        links=links, k_model=k_model or KModelParams(),
                        alpha=alpha, name=name)
    scenario.validate()
    return scenario


def chain_tree(n_layers, sources):
    """Single chain, all sources feeding the first layer instance."""
    instances = [(l, 1) for l in range(1, n_layers + 1)]
    edges = [(s, (1, 1)) for s in sorted(sources)]
    edges += [((l, 1), (l + 1, 1)) for l in range(1, n_layers)]
    return InstanceTree(instances=instances, edges=edges,
                        used_sources=sorted(sources))


@pytest.fixture(scope="session")
def two_node_chain():
    """Two layers on two nodes with clean closed-form epoch numbers.

    t_comp = (4 s, 2 s), transfer 1 s, T = 7 s; energies 48 + 16 + 1 = 65 J;
    K = 5 at full data, objective 325 J, total time 35 s.
    """
    scenario = make_scenario(
        layer_specs=[(10.0, 0.5), (20.0, 2.0)],
        node_specs=[
            {"id": "nA", "compute": 20.0, "e_p": 0.5, "e_f": [2.0, 0.0],
             "e_net": 0.25, "tier": "edge"},
            {"id": "nB", "compute": 40.0, "e_p": 0.1, "e_f": [0.0, 4.0],
             "e_net": 0.125, "tier": "cloud", "cls": "gold"},
        ],
        link_matrix=[[0.0, 4.0], [4.0, 0.0]],
        source_specs=[("d1", 8.0, "nA")],
        k_model=KModelParams(k0=5.0, kappa_d=0.0, kappa_i=0.0),
    )
    tree = chain_tree(2, ["d1"])
    tree.validate(scenario)
    return scenario, tree


@pytest.fixture(scope="session")
def small_preset():
    from righttrain.presets import gen_scenario
    return gen_scenario("small", 42)
