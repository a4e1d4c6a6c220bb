"""Scenario presets and the random-scenario generator used by the test suite.

The AlexNet layer complexities (MOPs per sample) and the gold/silver/bronze
capability/power figures are published hardware and model numbers.  Link
capacities, per-layer data ratios, static powers, transmission energies, the
iron-class figures, and the sample size are project defaults, versioned here
and tagged non-authoritative: they were chosen once so that the small preset
exercises every trade-off (tier crossing forced by memory limits, efficient
nodes slower than powerful ones) and then frozen.
"""

from __future__ import annotations

import math

import numpy as np

from .baselines import gap_scenario
from .model import (DataSource, KModelParams, LayerSpec, PhysNode, Scenario,
                    ValidationError)

PRESET_VERSION = "1"

# (name, mops_per_sample) for the 8-layer chain; complexities per sample
ALEXNET_LAYERS = [
    ("conv1", 0.043), ("conv2", 6.771), ("conv3", 10.145), ("conv4", 13.523),
    ("conv5", 9.017), ("fc1", 4.001), ("fc2", 16.027), ("fc3", 0.039),
]

# outgoing/incoming data volume per layer (default, non-authoritative)
ALEXNET_Q = [1.5, 0.8, 0.5, 0.5, 0.3, 0.05, 0.25, 0.02]

# class -> (TOPS, W); gold/silver/bronze from published accelerator figures,
# iron an intermediate default
NODE_CLASSES = {
    "gold": (312.0, 400.0),
    "silver": (153.4, 140.0),
    "bronze": (11.0, 6.0),
    "iron": (40.0, 26.0),
}

SAMPLE_MBIT = 0.025


def _node(node_id, tier, node_class, mu, e_f_w, e_net, n_layers):
    tops, watts = NODE_CLASSES[node_class]
    return PhysNode(id=node_id, tier=tier, node_class=node_class,
                    compute=tops * 1e6, e_p=(watts / tops) / 1e6,
                    e_f=tuple([e_f_w] * n_layers), e_net=e_net,
                    memory_ok=tuple(mu))


def _layers():
    return [LayerSpec(id=i + 1, name=name,
                      compute_req=mops / SAMPLE_MBIT, data_ratio=ALEXNET_Q[i])
            for i, (name, mops) in enumerate(ALEXNET_LAYERS)]


def _small_scenario() -> Scenario:
    layers = _layers()
    L = len(layers)
    # memory pattern: convolutions fit only on the first edge server, the
    # mid-size fully-connected layers need cloud memory
    mu_e1 = [1, 1, 1, 1, 1, 1, 0, 1]
    mu_data = [0] * L                  # pure data-host edge servers
    mu_gold = [0, 0, 0, 0, 0, 1, 1, 1]
    nodes = [
        _node("edge1", "edge", "silver", mu_e1, 2.0, 1.0e-3, L),
        _node("edge2", "edge", "silver", mu_data, 2.0, 1.0e-3, L),
        _node("edge3", "edge", "silver", mu_data, 2.0, 1.0e-3, L),
        _node("cloud1", "cloud", "gold", mu_gold, 5.0, 5.0e-4, L),
        _node("cloud2", "cloud", "gold", mu_gold, 5.0, 5.0e-4, L),
    ]
    ids = [n.id for n in nodes]
    cap = {("edge", "edge"): 400.0, ("cloud", "edge"): 800.0,
           ("cloud", "cloud"): 2000.0}
    links = np.zeros((5, 5))
    for i, a in enumerate(nodes):
        for j, b in enumerate(nodes):
            if i == j:
                links[i, j] = math.inf
            else:
                key = tuple(sorted((a.tier, b.tier)))
                links[i, j] = cap[key]
    sources = [DataSource("d1", 30.0, "edge2"),
               DataSource("d2", 45.0, "edge3"),
               DataSource("d3", 60.0, "edge2"),
               DataSource("d4", 25.0, "edge1")]
    return Scenario(layers=layers, nodes=nodes, sources=sources, links=links,
                    k_model=KModelParams(k0=10.0, kappa_d=8.0, kappa_i=0.15,
                                         eps_max=0.05),
                    alpha=1.0, sample_mbit=SAMPLE_MBIT, name="small")


def _large_scenario(seed: int) -> Scenario:
    rng = np.random.default_rng(seed)
    layers = _layers()
    L = len(layers)
    mu_bronze = [1, 1, 0, 0, 0, 0, 0, 1]
    mu_iron = [1, 1, 1, 1, 1, 0, 0, 1]
    mu_silver = [1, 1, 1, 1, 1, 1, 0, 1]
    mu_gold = [1] * L
    nodes = []
    for i in range(6):
        nodes.append(_node(f"ue{i + 1}", "mobile", "bronze", mu_bronze,
                           0.5, 2.0e-3, L))
    for i in range(4):
        nodes.append(_node(f"iron{i + 1}", "edge", "iron", mu_iron,
                           1.0, 1.5e-3, L))
    for i in range(6):
        nodes.append(_node(f"edge{i + 1}", "edge", "silver", mu_silver,
                           2.0, 1.0e-3, L))
    for i in range(4):
        nodes.append(_node(f"cloud{i + 1}", "cloud", "gold", mu_gold,
                           5.0, 5.0e-4, L))
    n = len(nodes)
    base = {("mobile", "mobile"): 0.0, ("edge", "mobile"): 150.0,
            ("cloud", "mobile"): 0.0, ("edge", "edge"): 400.0,
            ("cloud", "edge"): 800.0, ("cloud", "cloud"): 2000.0}
    links = np.zeros((n, n))
    for i in range(n):
        links[i, i] = math.inf
        for j in range(i + 1, n):
            key = tuple(sorted((nodes[i].tier, nodes[j].tier)))
            capacity = base[key]
            if capacity > 0:
                capacity *= 1.0 + 0.2 * (rng.random() - 0.5)  # topology jitter
            links[i, j] = links[j, i] = capacity
    sources = []
    for i in range(15):
        host = f"ue{i % 6 + 1}"
        vol = float(np.round(15.0 + 20.0 * rng.random(), 3))
        sources.append(DataSource(f"d{i + 1}", vol, host))
    return Scenario(layers=layers, nodes=nodes, sources=sources, links=links,
                    k_model=KModelParams(k0=10.0, kappa_d=8.0, kappa_i=0.15,
                                         eps_max=0.05),
                    alpha=1.0, sample_mbit=SAMPLE_MBIT, name="large")


def gen_scenario(preset: str, seed: int = 0) -> Scenario:
    """Named scenario presets: small (4 sources, 5 nodes), large (15 sources,
    20 nodes with the iron class), gap (random assignment stress instance)."""
    if preset == "small":
        scenario = _small_scenario()
    elif preset == "large":
        scenario = _large_scenario(seed)
    elif preset == "gap":
        rng = np.random.default_rng(seed)
        costs = np.round(5.0 + 5.0 * rng.random((4, 4)), 4)
        scenario = gap_scenario(costs)
    else:
        raise ValidationError(f"unknown preset {preset!r}")
    return scenario.validate()


def random_scenario(seed: int, n_layers=(2, 4), n_sources=(1, 3),
                    n_nodes=(2, 4)) -> Scenario:
    """Small solvable random scenario for property tests.

    The first node is feasible for every layer and linked to everything, so
    a fallback placement always exists; the rest is randomized.
    """
    rng = np.random.default_rng(seed)
    L = int(rng.integers(n_layers[0], n_layers[1] + 1))
    ns = int(rng.integers(n_sources[0], n_sources[1] + 1))
    nn = int(rng.integers(n_nodes[0], n_nodes[1] + 1))

    layers = [LayerSpec(id=l + 1, name=f"layer{l + 1}",
                        compute_req=float(rng.uniform(1.0, 50.0)),
                        data_ratio=float(rng.uniform(0.3, 1.5)))
              for l in range(L)]
    nodes = []
    for i in range(nn):
        mu = [True] * L if i == 0 else [bool(rng.random() < 0.7) for _ in range(L)]
        nodes.append(PhysNode(
            id=f"n{i}", tier=("edge", "cloud", "mobile")[i % 3],
            node_class=("silver", "gold", "bronze", "iron")[i % 4],
            compute=float(rng.uniform(1e4, 1e6)),
            e_p=float(rng.uniform(0.5, 2.0)) * 1e-6,
            e_f=tuple(float(rng.uniform(0.5, 3.0)) for _ in range(L)),
            e_net=float(rng.uniform(1e-4, 2e-3)),
            memory_ok=tuple(mu)))
    links = np.zeros((nn, nn))
    for i in range(nn):
        links[i, i] = math.inf
        for j in range(i + 1, nn):
            if i == 0 or rng.random() < 0.7:
                links[i, j] = links[j, i] = float(rng.uniform(100.0, 1000.0))
    sources = [DataSource(f"d{k}", float(rng.uniform(5.0, 50.0)),
                          f"n{int(rng.integers(0, nn))}")
               for k in range(ns)]
    scenario = Scenario(layers=layers, nodes=nodes, sources=sources,
                        links=links,
                        k_model=KModelParams(k0=10.0, kappa_d=8.0, kappa_i=0.15),
                        alpha=1.0, sample_mbit=SAMPLE_MBIT,
                        name=f"random-{seed}")
    return scenario.validate()
