"""Data-flow computation and the full constraint checker.

Flows are derived bottom-up: a source edge carries the data the source
contributes, an instance edge carries the instance's incoming volume scaled
by its layer's data ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import InstanceTree, Scenario, Solution, ValidationError

TOL = 1e-9


def compute_flows(tree: InstanceTree, x: dict, scenario: Scenario) -> dict:
    """Mbit per epoch on every tree edge, keyed by (child, parent).

    x maps source ids to the data volume they contribute; sources missing
    from x contribute nothing.
    """
    incoming = {inst: 0.0 for inst in tree.instances}
    flows = {}
    for child, parent in tree.edges:
        if isinstance(child, str):
            vol = float(x.get(child, 0.0))
            flows[(child, parent)] = vol
            incoming[parent] += vol
    for layer_id in range(1, tree.depth()):
        q = scenario.layer(layer_id).data_ratio
        for child, parent in tree.edges:
            if not isinstance(child, str) and child[0] == layer_id:
                out = q * incoming[child]
                flows[(child, parent)] = out
                incoming[parent] += out
    return flows


def incoming_volumes(tree: InstanceTree, flows: dict) -> dict:
    """Mbit per epoch entering each instance."""
    incoming = {inst: 0.0 for inst in tree.instances}
    for (_, parent), vol in flows.items():
        incoming[parent] += vol
    return incoming


def node_pair_flows(tree: InstanceTree, deployment, flows: dict,
                    scenario: Scenario) -> dict:
    """Aggregate Mbit per epoch routed over each ordered node pair (n, n')."""
    pair = {}
    for (child, parent), vol in flows.items():
        a = deployment.placement_node(child, scenario)
        b = deployment.placement_node(parent, scenario)
        if a != b:
            pair[(a, b)] = pair.get((a, b), 0.0) + vol
    return pair


@dataclass
class ConstraintCheck:
    name: str
    passed: bool
    entity: str = ""
    slack: float = math.nan
    detail: str = ""

    def __str__(self):
        status = "ok  " if self.passed else "FAIL"
        loc = f" [{self.entity}]" if self.entity else ""
        return f"{status} {self.name}{loc} {self.detail}".rstrip()


@dataclass
class ConstraintReport:
    checks: list[ConstraintCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def first_failure(self):
        bad = self.failures()
        return bad[0] if bad else None

    def __str__(self):
        return "\n".join(str(c) for c in self.checks)


def _structural(report, name, fn):
    try:
        fn()
        report.checks.append(ConstraintCheck(name, True))
    except ValidationError as exc:
        report.checks.append(ConstraintCheck(name, False, detail=str(exc)))


def check_constraints(solution: Solution, scenario: Scenario,
                      tol: float = TOL) -> ConstraintReport:
    """Verify every structural and resource constraint of a solution.

    Violations become report entries, never exceptions.  Continuous
    constraints are checked with absolute tolerance `tol`.
    """
    tree, deployment, alloc = solution.tree, solution.deployment, solution.allocation
    report = ConstraintReport()

    _structural(report, "layer-coverage",
                lambda: _check_layer_coverage(tree, scenario))
    _structural(report, "edge-adjacency",
                lambda: _check_edges(tree, scenario))
    _structural(report, "single-deployment",
                lambda: deployment.validate(tree, scenario))

    # memory feasibility, one entry per offending instance
    mem_bad = [(inst, n) for inst, n in sorted(deployment.mapping.items())
               if n in scenario._node_index and not scenario.memory_ok(inst[0], n)]
    if mem_bad:
        inst, n = mem_bad[0]
        report.checks.append(ConstraintCheck(
            "memory-feasible", False, entity=n,
            detail=f"instance {inst} on {n} lacks memory for layer {inst[0]}"))
    else:
        report.checks.append(ConstraintCheck("memory-feasible", True))

    # node compute capacity
    per_node = {}
    for inst, r in alloc.rho.items():
        n = deployment.mapping.get(inst)
        if n is not None:
            per_node[n] = per_node.get(n, 0.0) + r
    cap_ok = True
    for n in sorted(per_node):
        slack = scenario.node(n).compute - per_node[n]
        if slack < -tol:
            report.checks.append(ConstraintCheck(
                "node-capacity", False, entity=n, slack=slack,
                detail=f"allocated {per_node[n]:.6g} MOPS > {scenario.node(n).compute:.6g}"))
            cap_ok = False
            break
    if cap_ok:
        worst = min((scenario.node(n).compute - v for n, v in per_node.items()),
                    default=math.inf)
        report.checks.append(ConstraintCheck("node-capacity", True, slack=worst))

    flows = compute_flows(tree, alloc.x, scenario)

    # link capacity per ordered node pair
    link_ok = True
    for (a, b), vol in sorted(node_pair_flows(tree, deployment, flows, scenario).items()):
        cap = scenario.link(a, b)
        if vol > cap + tol:
            report.checks.append(ConstraintCheck(
                "link-capacity", False, entity=f"{a}->{b}", slack=cap - vol,
                detail=f"flow {vol:.6g} Mbit > capacity {cap:.6g}"))
            link_ok = False
            break
    if link_ok:
        report.checks.append(ConstraintCheck("link-capacity", True))

    # generalized flow conservation: outgoing = q * incoming on every instance
    incoming = incoming_volumes(tree, flows)
    cons_ok = True
    for child, parent in sorted(tree.edges, key=str):
        if isinstance(child, str):
            continue
        q = scenario.layer(child[0]).data_ratio
        excess = flows[(child, parent)] - q * incoming[child]
        if abs(excess) > tol:
            report.checks.append(ConstraintCheck(
                "flow-conservation", False, entity=str(child), slack=-abs(excess),
                detail=f"outgoing {flows[(child, parent)]:.6g} vs "
                       f"q*incoming {q * incoming[child]:.6g}"))
            cons_ok = False
            break
    if cons_ok:
        report.checks.append(ConstraintCheck("flow-conservation", True))

    # source volume budget
    vol_ok = True
    for s in sorted(tree.used_sources):
        used = alloc.x.get(s, 0.0)
        avail = scenario.source(s).volume
        if used > avail + tol:
            report.checks.append(ConstraintCheck(
                "source-volume", False, entity=s, slack=avail - used,
                detail=f"uses {used:.6g} of {avail:.6g} Mbit"))
            vol_ok = False
            break
    if vol_ok:
        report.checks.append(ConstraintCheck("source-volume", True))

    return report


def _check_layer_coverage(tree, scenario):
    for l in range(1, scenario.n_layers + 1):
        if not any(inst[0] == l for inst in tree.instances):
            raise ValidationError(f"layer {l} has no instance")


def _check_edges(tree, scenario):
    tree.validate(scenario)
