"""The end-to-end solve loop and the deadline-sweep harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .baselines import brute_force_optimum, split_learning_plan
from .constraints import compute_flows, incoming_volumes
from .mapper import build_expanded_graph, da_steiner_tree
from .model import (CapExceededError, EmptyGraphError, InfeasibleError,
                    Scenario, Solution)
from .perf import epochs_needed, evaluate, processing_load, proportional_allocation
from .refine import RefineConfig, refine
from .trees import enumerate_instance_trees


def righttrain_solve(scenario: Scenario, t_max: float, eps: float = 0.1,
                     max_subsets: int = 64,
                     refine_cfg: RefineConfig | None = None) -> Solution:
    """Full pipeline: walk candidate trees by ascending processing load, map
    each on the expanded graph under the deadline, refine the first success.

    Raises InfeasibleError with per-tree reasons when every candidate fails.
    """
    trees = enumerate_instance_trees(scenario, max_subsets=max_subsets,
                                     allow_truncation=True)
    ranked = sorted(trees, key=lambda t: (processing_load(t, scenario), str(t.key())))
    failures = []
    for tree in ranked:
        epochs = epochs_needed(tree, 1.0, scenario.k_model)
        try:
            graph = build_expanded_graph(tree, scenario, epochs)
            deployment = da_steiner_tree(graph, scenario, tree, t_max, eps)
        except (EmptyGraphError, InfeasibleError) as exc:
            failures.append(f"tree over {sorted(tree.used_sources)} "
                            f"(depth split {tree.n_instances - tree.depth()}): {exc}")
            continue
        alloc = proportional_allocation(tree, deployment, scenario)
        full = evaluate(Solution(tree=tree, deployment=deployment,
                                 allocation=alloc, strategy="righttrain"),
                        scenario)
        result = refine(full, scenario, t_max, refine_cfg)
        solution = result.solution
        solution.strategy = "righttrain"
        return solution
    raise InfeasibleError(
        f"no instance tree admits a deployment within {t_max:.6g}s; "
        + " | ".join(failures[:8]))


@dataclass
class SweepRow:
    t_max: float
    strategy: str
    objective_j: float = math.nan
    total_time_s: float = math.nan
    epochs: int = 0
    data_fraction: float = math.nan
    mbit_mobile: float = math.nan
    mbit_edge: float = math.nan
    mbit_cloud: float = math.nan
    status: str = "ok"
    class_mbit: dict = field(default_factory=dict)

    def to_dict(self):
        return {"t_max": self.t_max, "strategy": self.strategy,
                "objective_j": self.objective_j,
                "total_time_s": self.total_time_s, "epochs": self.epochs,
                "data_fraction": self.data_fraction,
                "mbit_mobile": self.mbit_mobile, "mbit_edge": self.mbit_edge,
                "mbit_cloud": self.mbit_cloud, "status": self.status,
                "class_mbit": dict(self.class_mbit)}


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    def for_strategy(self, strategy):
        return [r for r in self.rows if r.strategy == strategy]


def tier_processed_mbit(solution: Solution, scenario: Scenario) -> dict:
    """Mbit entering instances per node tier, at the solution's data volumes."""
    flows = compute_flows(solution.tree, solution.allocation.x, scenario)
    incoming = incoming_volumes(solution.tree, flows)
    out = {"mobile": 0.0, "edge": 0.0, "cloud": 0.0}
    for inst, vol in incoming.items():
        tier = scenario.node(solution.deployment.node_of(inst)).tier
        out[tier] += vol
    return out


def class_processed_mbit(solution: Solution, scenario: Scenario) -> dict:
    flows = compute_flows(solution.tree, solution.allocation.x, scenario)
    incoming = incoming_volumes(solution.tree, flows)
    out: dict = {}
    for inst, vol in incoming.items():
        cls = scenario.node(solution.deployment.node_of(inst)).node_class
        out[cls] = out.get(cls, 0.0) + vol
    return out


STRATEGIES = ("righttrain", "sl", "optimum")


def sweep(scenario: Scenario, t_max_list, strategies=STRATEGIES,
          eps: float = 0.1, max_subsets: int = 64,
          brute_force_cap: int = 10 ** 6,
          refine_cfg: RefineConfig | None = None) -> SweepResult:
    """Run the requested strategies at each deadline.

    Infeasible or capped points become status entries instead of being
    dropped; rows come back sorted by (strategy, t_max).
    """
    if not list(t_max_list):
        raise ValueError("t_max list must be non-empty")
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
    trees = None
    if "optimum" in strategies:
        trees = enumerate_instance_trees(scenario, max_subsets=max_subsets,
                                         allow_truncation=True)
    rows = []
    for strategy in strategies:
        for t_max in t_max_list:
            row = SweepRow(t_max=float(t_max), strategy=strategy)
            try:
                if strategy == "righttrain":
                    sol = righttrain_solve(scenario, t_max, eps=eps,
                                           max_subsets=max_subsets,
                                           refine_cfg=refine_cfg)
                elif strategy == "sl":
                    sol = split_learning_plan(scenario, t_max)
                else:
                    sol = brute_force_optimum(scenario, trees, t_max,
                                              cap=brute_force_cap,
                                              refine_cfg=refine_cfg)
            except InfeasibleError:
                row.status = "infeasible"
                rows.append(row)
                continue
            except CapExceededError:
                row.status = "size_cap"
                rows.append(row)
                continue
            m = sol.metrics
            tiers = tier_processed_mbit(sol, scenario)
            row.objective_j = m.objective
            row.total_time_s = m.total_time
            row.epochs = m.epochs
            row.data_fraction = m.data_fraction
            row.mbit_mobile = tiers["mobile"]
            row.mbit_edge = tiers["edge"]
            row.mbit_cloud = tiers["cloud"]
            row.class_mbit = class_processed_mbit(sol, scenario)
            rows.append(row)
    rows.sort(key=lambda r: (r.strategy, r.t_max))
    return SweepResult(rows=rows)
