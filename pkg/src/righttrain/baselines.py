"""Baselines: best split-learning plan, exhaustive optimum, and the
assignment-problem scenario family used for hardness-style stress tests."""

from __future__ import annotations

import math
from itertools import product

import numpy as np

from .constraints import compute_flows, node_pair_flows
from .model import (Allocation, CapExceededError, DataSource, Deployment,
                    InfeasibleError, InstanceTree, KModelParams, LayerSpec,
                    PhysNode, Scenario, Solution)
from .perf import evaluate, proportional_allocation
from .refine import RefineConfig, refine
from .trees import cut_tree

_REL_TOL = 1e-9


def sl_candidate_splits(n_layers: int, mobile_feasible: bool):
    """Cut positions (c1, c2) assigning layers 1..c1 / c1+1..c2 / c2+1..L to
    the mobile / edge / cloud tiers.  The mobile part may be empty only when
    no mobile node can host layer 1."""
    splits = []
    c1_range = range(1, n_layers - 1) if mobile_feasible else [0]
    for c1 in c1_range:
        for c2 in range(c1 + 1, n_layers):
            splits.append((c1, c2))
    return splits


def _placement_feasible(tree, deployment, scenario):
    """Links exist and can carry the full-data flows."""
    x = {s: scenario.source(s).volume for s in tree.used_sources}
    flows = compute_flows(tree, x, scenario)
    for (a, b), vol in node_pair_flows(tree, deployment, flows, scenario).items():
        if vol > scenario.link(a, b) * (1 + _REL_TOL):
            return False
    return True


def split_learning_plan(scenario: Scenario, t_max: float) -> Solution:
    """Best three-part split of the chain onto mobile/edge/cloud tiers.

    Split learning always uses every source at full volume and builds a
    single chain; for each cut pair, every tier-respecting node combination
    is costed and the cheapest deadline-feasible plan wins.
    """
    n_layers = scenario.n_layers
    tree = cut_tree(scenario, [s.id for s in scenario.sources], 0)
    mobile_feasible = any(n.tier == "mobile" and n.memory_ok[0]
                          for n in scenario.nodes)
    tier_nodes = {tier: [n for n in scenario.nodes if n.tier == tier]
                  for tier in ("mobile", "edge", "cloud")}

    best = None
    any_split = False
    for c1, c2 in sl_candidate_splits(n_layers, mobile_feasible):
        parts = [(range(1, c1 + 1), "mobile"),
                 (range(c1 + 1, c2 + 1), "edge"),
                 (range(c2 + 1, n_layers + 1), "cloud")]
        parts = [(list(layers), tier) for layers, tier in parts if layers]
        options = []
        for layers, tier in parts:
            nodes = [n.id for n in tier_nodes[tier]
                     if all(n.memory_ok[l - 1] for l in layers)]
            options.append(sorted(nodes))
        if any(not opt for opt in options):
            continue
        any_split = True
        for combo in product(*options):
            mapping = {}
            for (layers, _), node_id in zip(parts, combo):
                for l in layers:
                    mapping[(l, 1)] = node_id
            deployment = Deployment(mapping=mapping)
            if not _placement_feasible(tree, deployment, scenario):
                continue
            alloc = proportional_allocation(tree, deployment, scenario)
            sol = evaluate(Solution(tree=tree, deployment=deployment,
                                    allocation=alloc, strategy="sl"), scenario)
            if sol.metrics.total_time > t_max * (1 + _REL_TOL):
                continue
            key = (sol.metrics.objective, (c1, c2), combo)
            if best is None or key < best[0]:
                best = (key, sol)
    if best is None:
        reason = "no split meets the deadline" if any_split \
            else "no tier-feasible split exists"
        raise InfeasibleError(f"split learning: {reason} (t_max={t_max:.6g}s)")
    return best[1]


def count_brute_force_candidates(scenario: Scenario, trees) -> int:
    total = 0
    for tree in trees:
        combos = 1
        for inst in tree.instances:
            combos *= len(scenario.feasible_nodes(inst[0]))
        total += combos
    return total


def brute_force_optimum(scenario: Scenario, trees, t_max: float,
                        cap: int = 10 ** 6,
                        refine_cfg: RefineConfig | None = None) -> Solution:
    """Exact optimum over (tree, deployment) pairs, each refined.

    Candidates that cannot reach the deadline at full data are skipped, which
    mirrors the refiner's full-data starting point.  A provable lower bound
    (the refined objective is at least phi_min times the full-data objective)
    prunes candidates that cannot beat the incumbent without evaluating them.
    """
    n_candidates = count_brute_force_candidates(scenario, trees)
    if n_candidates > cap:
        raise CapExceededError(
            f"{n_candidates} (tree, deployment) candidates exceed the cap of {cap}; "
            "computing the optimum is not feasible at this scale")

    phi_min = scenario.k_model.phi_min
    best = None
    reasons = []
    for t_idx, tree in enumerate(trees):
        insts = sorted(tree.instances)
        options = [sorted(scenario.feasible_nodes(l)) for l, _ in insts]
        # cheap full-data pass first so pruning sees good incumbents early
        evaluated = []
        for combo in product(*options):
            deployment = Deployment(mapping=dict(zip(insts, combo)))
            if not _placement_feasible(tree, deployment, scenario):
                continue
            alloc = proportional_allocation(tree, deployment, scenario)
            sol = evaluate(Solution(tree=tree, deployment=deployment,
                                    allocation=alloc, strategy="optimum"), scenario)
            if sol.metrics.total_time > t_max * (1 + _REL_TOL):
                continue
            evaluated.append((sol.metrics.objective, combo, sol))
        if not evaluated:
            reasons.append(f"tree {t_idx}: no deadline-feasible full-data deployment")
            continue
        evaluated.sort(key=lambda e: (e[0], e[1]))
        for full_obj, combo, sol in evaluated:
            if best is not None and phi_min * full_obj >= best[0][0]:
                break  # sorted, so every later candidate prunes too
            res = refine(sol, scenario, t_max, refine_cfg)
            key = ((res.solution.metrics.objective), t_idx, combo)
            if best is None or key < best[0]:
                best = (key, res.solution)
    if best is None:
        raise InfeasibleError(
            "brute force found no feasible candidate: " + "; ".join(reasons[:5]))
    return best[1]


def gap_scenario(costs) -> Scenario:
    """Degenerate scenario whose optimal mapping is a pure assignment.

    One unit-volume source feeds a chain with one layer per task row; one
    node per agent column; unit compute requirement and data ratios;
    unconstrained links; all energy sits in the per-layer static term, set to
    the cost matrix.  Non-finite costs mark a (task, agent) pair infeasible.
    With unit node capacity, spreading layers across nodes makes each
    instance's compute time exactly one second, so the objective of a spread
    mapping is the plain sum of its assignment costs.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 2 or costs.size == 0:
        raise ValueError("cost matrix must be 2-D and non-empty")
    if np.any(costs[np.isfinite(costs)] < 0):
        raise ValueError("costs must be non-negative")
    n_tasks, n_agents = costs.shape
    layers = [LayerSpec(id=l + 1, name=f"task{l + 1}", compute_req=1.0,
                        data_ratio=1.0) for l in range(n_tasks)]
    nodes = []
    for a in range(n_agents):
        col = costs[:, a]
        nodes.append(PhysNode(
            id=f"agent{a + 1}", tier="edge", node_class="silver",
            compute=1.0, e_p=0.0,
            e_f=tuple(float(c) if math.isfinite(c) else 0.0 for c in col),
            e_net=0.0,
            memory_ok=tuple(bool(math.isfinite(c)) for c in col)))
    links = np.full((n_agents, n_agents), math.inf)
    sources = [DataSource(id="d1", volume=1.0, host="agent1")]
    # kappa_d > k0 keeps full data optimal, so the objective of a mapping is
    # exactly its (sharing-weighted) assignment cost
    k_model = KModelParams(k0=1.0, kappa_d=2.0, kappa_i=0.0)
    scenario = Scenario(layers=layers, nodes=nodes, sources=sources,
                        links=links, k_model=k_model, alpha=1.0,
                        sample_mbit=1.0, name="gap")
    scenario.validate()
    return scenario
