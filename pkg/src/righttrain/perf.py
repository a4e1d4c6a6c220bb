"""Epoch time and energy evaluation, processing load, and the epoch-count model.

All functions here are pure: they never mutate their inputs, so they are safe
to call from any number of workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .constraints import compute_flows, incoming_volumes, node_pair_flows
from .model import (Allocation, DomainError, InstanceTree, KModelParams, Metrics,
                    NoLinkError, Scenario, Solution, ZeroAllocationError)


def instance_compute_time(instance, tree: InstanceTree, allocation: Allocation,
                          scenario: Scenario) -> float:
    """Seconds instance (l,i) computes per epoch: work / compute share."""
    flows = compute_flows(tree, allocation.x, scenario)
    incoming = incoming_volumes(tree, flows)[tuple(instance)]
    rho = allocation.rho.get(tuple(instance), 0.0)
    return compute_time(scenario.layer(instance[0]).compute_req, incoming, rho)


def compute_time(compute_req: float, incoming_mbit: float, rho: float) -> float:
    if incoming_mbit == 0:
        return 0.0
    if rho <= 0:
        raise ZeroAllocationError("compute share must be > 0 to process data")
    return compute_req * incoming_mbit / rho


def link_transfer_time(node_a: str, node_b: str, pair_flows: dict,
                       scenario: Scenario) -> float:
    """Seconds to move one epoch's data from node_a to node_b.

    pair_flows aggregates Mbit per ordered node pair (see
    constraints.node_pair_flows).  Intra-node transfers are free.
    """
    if node_a == node_b:
        return 0.0
    vol = pair_flows.get((node_a, node_b), 0.0)
    if vol == 0:
        return 0.0
    cap = scenario.link(node_a, node_b)
    if cap <= 0:
        raise NoLinkError(f"{vol:.6g} Mbit routed over missing link {node_a}->{node_b}")
    return vol / cap


@dataclass
class EpochMetrics:
    """Per-epoch timing and energy broken down by instance and link."""

    t_comp: dict = field(default_factory=dict)    # instance -> s
    t_net: dict = field(default_factory=dict)     # (node, node) -> s
    t_begin: dict = field(default_factory=dict)   # instance -> s
    t_end: dict = field(default_factory=dict)     # instance -> s
    epoch_time: float = 0.0
    e_comp: dict = field(default_factory=dict)    # instance -> J
    e_net: dict = field(default_factory=dict)     # instance -> J
    epoch_energy: float = 0.0


def epoch_metrics(solution: Solution, scenario: Scenario) -> EpochMetrics:
    """One leaf-to-root pass computing all per-epoch time and energy fields."""
    tree, deployment, alloc = solution.tree, solution.deployment, solution.allocation
    flows = compute_flows(tree, alloc.x, scenario)
    incoming = incoming_volumes(tree, flows)
    pair = node_pair_flows(tree, deployment, flows, scenario)

    m = EpochMetrics()
    m.t_net = {p: link_transfer_time(p[0], p[1], pair, scenario) for p in sorted(pair)}

    children = tree.children_map()
    parents = tree.parent_map()
    order = sorted(tree.instances)  # layer-ascending = topological for chains
    for inst in order:
        layer = scenario.layer(inst[0])
        node = deployment.node_of(inst)
        phys = scenario.node(node)
        m.t_comp[inst] = compute_time(layer.compute_req, incoming[inst],
                                      alloc.rho[inst])
        begin = 0.0
        for child in children[inst]:
            child_node = deployment.placement_node(child, scenario)
            child_end = 0.0 if isinstance(child, str) else m.t_end[child]
            net = m.t_net.get((child_node, node), 0.0) if child_node != node else 0.0
            begin = max(begin, child_end + net)
        m.t_begin[inst] = begin
        m.t_end[inst] = begin + m.t_comp[inst]

        m.e_comp[inst] = m.t_comp[inst] * (phys.e_p * alloc.rho[inst]
                                           + phys.e_f[inst[0] - 1])
        out = 0.0
        parent = parents.get(inst)
        if parent is not None and deployment.node_of(parent) != node:
            out = flows[(inst, parent)]
        m.e_net[inst] = phys.e_net * out

    last = tree.depth()
    m.epoch_time = max(m.t_end[inst] for inst in tree.instances if inst[0] == last)
    m.epoch_energy = sum(m.e_comp.values()) + sum(m.e_net.values())
    return m


def epoch_time(solution: Solution, scenario: Scenario) -> EpochMetrics:
    return epoch_metrics(solution, scenario)


def epoch_energy(solution: Solution, scenario: Scenario) -> EpochMetrics:
    return epoch_metrics(solution, scenario)


def epochs_unrounded(tree: InstanceTree, data_fraction: float,
                     k_model: KModelParams) -> float:
    """Continuous epoch-count estimate; see KModelParams for the form."""
    if data_fraction < k_model.phi_min - 1e-12:
        raise DomainError(
            f"data fraction {data_fraction:.6g} below floor {k_model.phi_min}")
    if data_fraction > 1 + 1e-12:
        raise DomainError(f"data fraction {data_fraction:.6g} exceeds 1")
    phi = min(data_fraction, 1.0)
    extra = tree.n_instances - tree.depth()
    return (k_model.k0 + k_model.kappa_d * (-math.log(phi))) \
        * (1.0 + k_model.kappa_i * extra)


def epochs_needed(tree: InstanceTree, data_fraction: float,
                  k_model: KModelParams) -> int:
    return math.ceil(epochs_unrounded(tree, data_fraction, k_model) - 1e-12)


def processing_load(tree: InstanceTree, scenario: Scenario,
                    k_model: KModelParams | None = None) -> float:
    """Epoch-count-weighted total MOPs implied by a tree at full data.

    Each instance is charged its layer's compute requirement on the data of
    every source below it, scaled by the data ratios of the layers strictly
    between source and instance (incoming-data convention).
    """
    k_model = k_model or scenario.k_model
    x = {s: scenario.source(s).volume for s in tree.used_sources}
    incoming = incoming_volumes(tree, compute_flows(tree, x, scenario))
    per_epoch = sum(scenario.layer(inst[0]).compute_req * incoming[inst]
                    for inst in tree.instances)
    return epochs_needed(tree, 1.0, k_model) * per_epoch


def data_fraction_of(tree: InstanceTree, x: dict, scenario: Scenario) -> float:
    """Used data over available data, across the tree's used sources."""
    avail = sum(scenario.source(s).volume for s in tree.used_sources)
    used = sum(x.get(s, 0.0) for s in tree.used_sources)
    return used / avail if avail > 0 else 0.0


def evaluate(solution: Solution, scenario: Scenario) -> Solution:
    """Return a copy of the solution with metrics recomputed from scratch."""
    m = epoch_metrics(solution, scenario)
    phi = data_fraction_of(solution.tree, solution.allocation.x, scenario)
    if phi <= 0:
        k = 0  # degenerate zero-data point; constraint checks flag it
    else:
        k = epochs_needed(solution.tree, phi, scenario.k_model)
    metrics = Metrics(epoch_time=m.epoch_time, epoch_energy=m.epoch_energy,
                      epochs=k, objective=k * m.epoch_energy,
                      total_time=k * m.epoch_time, data_fraction=phi)
    return solution.with_metrics(metrics)


def proportional_allocation(tree: InstanceTree, deployment, scenario: Scenario,
                            x: dict | None = None) -> Allocation:
    """Full-capacity allocation: each node's compute is split among its
    co-located instances proportionally to their workload, which equalizes
    their finish times.  x defaults to the full volume of the used sources."""
    if x is None:
        x = {s: scenario.source(s).volume for s in tree.used_sources}
    incoming = incoming_volumes(tree, compute_flows(tree, x, scenario))
    load = {inst: scenario.layer(inst[0]).compute_req * incoming[inst]
            for inst in tree.instances}
    by_node = {}
    for inst in tree.instances:
        by_node.setdefault(deployment.node_of(inst), []).append(inst)
    rho = {}
    for node_id, insts in by_node.items():
        cap = scenario.node(node_id).compute
        total = sum(load[i] for i in insts)
        for inst in insts:
            share = cap * load[inst] / total if total > 0 else cap / len(insts)
            rho[inst] = max(share, cap * 1e-12)  # keep shares strictly positive
    return Allocation(rho=rho, x=dict(x))
